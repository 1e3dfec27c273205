#include "dhen/data.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace dhen {

using nlohmann::json;

const char* seq_kind_name(SeqKind k) {
    switch (k) {
        case SeqKind::Search: return "search";
        case SeqKind::Org: return "org";
        case SeqKind::Ads: return "ads";
        case SeqKind::Match: return "match";
        case SeqKind::Conv: return "conv";
    }
    throw std::invalid_argument("bad sequence kind");
}

SeqKind seq_kind_from_name(const std::string& name) {
    for (int k = 0; k < kNumSeqKinds; ++k) {
        if (name == seq_kind_name(static_cast<SeqKind>(k))) return static_cast<SeqKind>(k);
    }
    throw std::invalid_argument("unknown sequence kind '" + name + "'");
}

bool seq_kind_has_advertiser(SeqKind k) { return k == SeqKind::Match || k == SeqKind::Conv; }

void enforce_sequence_cap(BehaviorSequence& seq) {
    for (size_t i = 1; i < seq.items.size(); ++i) {
        if (seq.items[i].timestamp < seq.items[i - 1].timestamp) {
            throw std::invalid_argument(std::string("sequence '") + seq_kind_name(seq.kind) +
                                        "' has decreasing timestamps");
        }
    }
    if (static_cast<int64_t>(seq.items.size()) > kSequenceCap) {
        seq.items.erase(seq.items.begin(), seq.items.end() - kSequenceCap);
    }
}

void FeatureSchema::validate() const {
    for (const auto& c : continuous) {
        if (c.fitted && c.fit_min > c.fit_max)
            throw std::invalid_argument("continuous feature '" + c.name + "' has min > max");
    }
    for (const auto& c : categorical) {
        if (c.vocab_size < 1 || c.embedding_dim < 1)
            throw std::invalid_argument("categorical feature '" + c.name + "' has invalid vocab/dim");
    }
    for (const auto& p : pretrained) {
        if (p.dim < 1) throw std::invalid_argument("pretrained feature '" + p.name + "' has invalid dim");
    }
    std::set<std::string> names;
    for (const auto& c : continuous) names.insert(c.name);
    for (const auto& c : categorical) names.insert(c.name);
    for (const auto& p : pretrained) names.insert(p.name);
    if (names.size() != continuous.size() + categorical.size() + pretrained.size())
        throw std::invalid_argument("duplicate feature names in schema");
    if (item_embedding_dim < 1) throw std::invalid_argument("item embedding dim must be >= 1");
}

ExampleBatch make_batch(const std::vector<const Example*>& examples, const FeatureSchema& schema) {
    ExampleBatch batch;
    batch.batch_size = static_cast<int64_t>(examples.size());
    std::vector<std::string> missing;
    for (const auto& feat : schema.continuous) {
        auto& col = batch.dense[feat.name];
        col.reserve(examples.size());
        for (const Example* ex : examples) {
            auto it = ex->dense.find(feat.name);
            if (it == ex->dense.end()) {
                missing.push_back(feat.name);
                col.push_back(0.0);
            } else {
                col.push_back(it->second);
            }
        }
    }
    for (const auto& feat : schema.categorical) {
        auto& col = batch.categorical[feat.name];
        for (const Example* ex : examples) {
            auto it = ex->categorical.find(feat.name);
            if (it == ex->categorical.end()) {
                missing.push_back(feat.name);
                col.push_back(0);
            } else {
                // raw id; the embedding step maps out-of-range ids to row 0
                col.push_back(it->second);
            }
        }
    }
    for (const auto& feat : schema.pretrained) {
        auto& col = batch.pretrained[feat.name];
        for (const Example* ex : examples) {
            auto it = ex->pretrained.find(feat.name);
            if (it == ex->pretrained.end() || static_cast<int64_t>(it->second.size()) != feat.dim) {
                missing.push_back(feat.name);
                col.insert(col.end(), static_cast<size_t>(feat.dim), 0.0);
            } else {
                col.insert(col.end(), it->second.begin(), it->second.end());
            }
        }
    }
    if (!missing.empty()) {
        std::string msg = "batch is missing features required by schema:";
        std::set<std::string> uniq(missing.begin(), missing.end());
        for (const auto& n : uniq) msg += " " + n;
        throw std::invalid_argument(msg);
    }
    for (SeqKind kind : schema.sequence_kinds) {
        auto& col = batch.sequences[static_cast<size_t>(kind)];
        for (const Example* ex : examples) col.push_back(&ex->sequences[static_cast<size_t>(kind)]);
    }
    for (const Example* ex : examples) {
        for (const auto& [name, v] : ex->labels) batch.labels[name];  // establish columns
        for (const auto& [name, v] : ex->masks) batch.masks[name];
    }
    for (auto& [name, col] : batch.labels) {
        for (const Example* ex : examples) {
            auto it = ex->labels.find(name);
            col.push_back(it == ex->labels.end() ? 0.0 : it->second);
        }
    }
    for (auto& [name, col] : batch.masks) {
        for (const Example* ex : examples) {
            auto it = ex->masks.find(name);
            col.push_back(it == ex->masks.end() ? 1.0 : it->second);
        }
    }
    return batch;
}

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw std::invalid_argument("unknown field '" + key + "' in " + where);
    }
}

json item_to_json(const SequenceItem& item, bool with_adv) {
    json j{{"id", item.item_id}, {"action", item.action_type}, {"ts", item.timestamp}, {"emb", item.embedding}};
    if (with_adv) j["adv"] = item.advertiser_id;
    return j;
}

SequenceItem item_from_json(const json& j, bool with_adv) {
    reject_unknown_keys(j, {"id", "action", "ts", "emb", "adv"}, "sequence item");
    SequenceItem item;
    item.item_id = j.at("id").get<int64_t>();
    item.action_type = j.at("action").get<int>();
    item.timestamp = j.at("ts").get<double>();
    item.embedding = j.at("emb").get<std::vector<double>>();
    if (with_adv || j.contains("adv")) item.advertiser_id = j.at("adv").get<int64_t>();
    return item;
}

}  // namespace

std::string serialize_example(const Example& ex) {
    json j;
    j["user_id"] = ex.user_id;
    j["ad_id"] = ex.ad_id;
    j["dense"] = ex.dense;
    j["categorical"] = ex.categorical;
    j["pretrained"] = ex.pretrained;
    json seqs = json::object();
    for (int k = 0; k < kNumSeqKinds; ++k) {
        const auto& seq = ex.sequences[static_cast<size_t>(k)];
        json arr = json::array();
        for (const auto& item : seq.items)
            arr.push_back(item_to_json(item, seq_kind_has_advertiser(static_cast<SeqKind>(k))));
        seqs[seq_kind_name(static_cast<SeqKind>(k))] = std::move(arr);
    }
    j["sequences"] = std::move(seqs);
    j["labels"] = ex.labels;
    if (!ex.masks.empty()) j["masks"] = ex.masks;
    return j.dump();
}

Example deserialize_example(const std::string& line) {
    json j = json::parse(line);
    reject_unknown_keys(j, {"user_id", "ad_id", "dense", "categorical", "pretrained", "sequences", "labels", "masks"},
                        "example record");
    Example ex;
    ex.user_id = j.at("user_id").get<int64_t>();
    ex.ad_id = j.at("ad_id").get<int64_t>();
    ex.dense = j.at("dense").get<std::map<std::string, double>>();
    ex.categorical = j.at("categorical").get<std::map<std::string, int64_t>>();
    ex.pretrained = j.at("pretrained").get<std::map<std::string, std::vector<double>>>();
    const json& seqs = j.at("sequences");
    for (const auto& [name, arr] : seqs.items()) {
        SeqKind kind = seq_kind_from_name(name);
        auto& seq = ex.sequences[static_cast<size_t>(kind)];
        seq.kind = kind;
        for (const auto& item : arr) seq.items.push_back(item_from_json(item, seq_kind_has_advertiser(kind)));
        enforce_sequence_cap(seq);
    }
    for (int k = 0; k < kNumSeqKinds; ++k) ex.sequences[static_cast<size_t>(k)].kind = static_cast<SeqKind>(k);
    ex.labels = j.at("labels").get<std::map<std::string, double>>();
    if (j.contains("masks")) ex.masks = j.at("masks").get<std::map<std::string, double>>();
    return ex;
}

void write_partition(const std::string& path, const std::vector<Example>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const auto& ex : examples) out << serialize_example(ex) << "\n";
}

std::vector<Example> read_partition(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::vector<Example> out;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(deserialize_example(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace dhen
