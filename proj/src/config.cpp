#include "dhen/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dhen {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::invalid_argument("config field '" + path + "': " + what);
}

// Every object parser first rejects keys outside its allowed set, so a
// typo reports the exact field path instead of being ignored.
void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) fail(path.empty() ? key : path + "." + key, "unknown key");
    }
}

template <typename T>
void get_to(const json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        obj.at(key).get_to(out);
    } catch (const json::exception& e) {
        fail(path + "." + key, e.what());
    }
}

void parse_world(const json& j, WorldConfig& w) {
    check_keys(j, "world",
               {"num_users", "num_ads", "num_advertisers", "latent_dim", "pretrained_dim", "click_scale",
                "conv_bias", "affinity_coef", "cross_coef", "sequence_coef", "noise_std", "keep_negative",
                "initial_conv_events", "seed"});
    get_to(j, "world", "num_users", w.num_users);
    get_to(j, "world", "num_ads", w.num_ads);
    get_to(j, "world", "num_advertisers", w.num_advertisers);
    get_to(j, "world", "latent_dim", w.latent_dim);
    get_to(j, "world", "pretrained_dim", w.pretrained_dim);
    get_to(j, "world", "click_scale", w.click_scale);
    get_to(j, "world", "conv_bias", w.conv_bias);
    get_to(j, "world", "affinity_coef", w.affinity_coef);
    get_to(j, "world", "cross_coef", w.cross_coef);
    get_to(j, "world", "sequence_coef", w.sequence_coef);
    get_to(j, "world", "noise_std", w.noise_std);
    get_to(j, "world", "keep_negative", w.keep_negative);
    get_to(j, "world", "initial_conv_events", w.initial_conv_events);
    get_to(j, "world", "seed", w.seed);
}

void parse_schema(const json& j, FeatureSchema& s) {
    check_keys(j, "schema",
               {"continuous", "categorical", "pretrained", "sequence_kinds", "item_embedding_dim",
                "advertiser_vocab"});
    if (j.contains("continuous")) {
        s.continuous.clear();
        for (const auto& f : j.at("continuous")) {
            check_keys(f, "schema.continuous[]", {"name"});
            s.continuous.push_back({f.at("name").get<std::string>(), 0.0, 1.0, false});
        }
    }
    if (j.contains("categorical")) {
        s.categorical.clear();
        for (const auto& f : j.at("categorical")) {
            check_keys(f, "schema.categorical[]", {"name", "vocab_size", "embedding_dim"});
            CategoricalFeature c;
            c.name = f.at("name").get<std::string>();
            get_to(f, "schema.categorical[]", "vocab_size", c.vocab_size);
            get_to(f, "schema.categorical[]", "embedding_dim", c.embedding_dim);
            s.categorical.push_back(c);
        }
    }
    if (j.contains("pretrained")) {
        s.pretrained.clear();
        for (const auto& f : j.at("pretrained")) {
            check_keys(f, "schema.pretrained[]", {"name", "dim"});
            PretrainedFeature p;
            p.name = f.at("name").get<std::string>();
            get_to(f, "schema.pretrained[]", "dim", p.dim);
            s.pretrained.push_back(p);
        }
    }
    if (j.contains("sequence_kinds")) {
        s.sequence_kinds.clear();
        for (const auto& k : j.at("sequence_kinds")) {
            try {
                s.sequence_kinds.push_back(seq_kind_from_name(k.get<std::string>()));
            } catch (const std::exception& e) {
                fail("schema.sequence_kinds", e.what());
            }
        }
    }
    get_to(j, "schema", "item_embedding_dim", s.item_embedding_dim);
    get_to(j, "schema", "advertiser_vocab", s.advertiser_vocab);
}

ModuleConfig parse_module(const json& j, const std::string& path, const ModelConfig& base) {
    check_keys(j, path,
               {"kind", "mlp_hidden", "dcn_layers", "dcn_rank", "masknet_blocks", "masknet_hidden",
                "masknet_bottleneck", "masknet_dropout", "tf_layers", "tf_heads", "tf_hidden", "tf_ff",
                "tf_dropout"});
    ModuleConfig m;
    // inherit the per-kind defaults from the deployed configuration
    for (const auto& layer : base.dhen.layers) {
        for (const auto& mod : layer.modules) {
            if (j.contains("kind") && mod.kind == module_kind_from_name(j.at("kind").get<std::string>())) m = mod;
        }
    }
    if (j.contains("kind")) {
        try {
            m.kind = module_kind_from_name(j.at("kind").get<std::string>());
        } catch (const std::exception& e) {
            fail(path + ".kind", e.what());
        }
    }
    get_to(j, path, "mlp_hidden", m.mlp_hidden);
    get_to(j, path, "dcn_layers", m.dcn_layers);
    get_to(j, path, "dcn_rank", m.dcn_rank);
    get_to(j, path, "masknet_blocks", m.masknet.num_blocks);
    get_to(j, path, "masknet_hidden", m.masknet.hidden);
    get_to(j, path, "masknet_bottleneck", m.masknet.mask_bottleneck);
    get_to(j, path, "masknet_dropout", m.masknet.dropout);
    get_to(j, path, "tf_layers", m.transformer.num_layers);
    get_to(j, path, "tf_heads", m.transformer.num_heads);
    get_to(j, path, "tf_hidden", m.transformer.hidden);
    get_to(j, path, "tf_ff", m.transformer.ff);
    get_to(j, path, "tf_dropout", m.transformer.dropout);
    return m;
}

void parse_model(const json& j, ModelConfig& m) {
    check_keys(j, "model",
               {"token_dim", "layer_width", "reshape_dim", "residual", "layers", "heads", "sequence", "ssl",
                "ssl_enabled"});
    const ModelConfig base = m;
    get_to(j, "model", "token_dim", m.dhen.token_dim);
    get_to(j, "model", "layer_width", m.dhen.layer_width);
    get_to(j, "model", "reshape_dim", m.dhen.reshape_dim);
    get_to(j, "model", "residual", m.dhen.residual);
    get_to(j, "model", "ssl_enabled", m.ssl_enabled);
    if (j.contains("layers")) {
        m.dhen.layers.clear();
        size_t li = 0;
        for (const auto& layer : j.at("layers")) {
            if (!layer.is_array()) fail("model.layers[" + std::to_string(li) + "]", "expected an array of modules");
            LayerConfig lc;
            for (const auto& mod : layer) {
                lc.modules.push_back(parse_module(mod, "model.layers[" + std::to_string(li) + "][]", base));
            }
            m.dhen.layers.push_back(lc);
            ++li;
        }
    }
    if (j.contains("heads")) {
        m.dhen.heads.clear();
        for (const auto& h : j.at("heads")) {
            check_keys(h, "model.heads[]", {"name", "tower", "train_only", "weight"});
            HeadConfig hc;
            hc.name = h.at("name").get<std::string>();
            get_to(h, "model.heads[]", "tower", hc.tower);
            get_to(h, "model.heads[]", "train_only", hc.train_only);
            get_to(h, "model.heads[]", "weight", hc.weight);
            m.dhen.heads.push_back(hc);
        }
    }
    if (j.contains("sequence")) {
        const auto& s = j.at("sequence");
        check_keys(s, "model.sequence",
                   {"hidden", "num_layers", "num_heads", "ff", "action_dim", "advertiser_dim", "shared_weights"});
        get_to(s, "model.sequence", "hidden", m.sequence.hidden);
        get_to(s, "model.sequence", "num_layers", m.sequence.num_layers);
        get_to(s, "model.sequence", "num_heads", m.sequence.num_heads);
        get_to(s, "model.sequence", "ff", m.sequence.ff);
        get_to(s, "model.sequence", "action_dim", m.sequence.action_dim);
        get_to(s, "model.sequence", "advertiser_dim", m.sequence.advertiser_dim);
        get_to(s, "model.sequence", "shared_weights", m.sequence.shared_weights);
    }
    if (j.contains("ssl")) {
        const auto& s = j.at("ssl");
        check_keys(s, "model.ssl", {"objective", "num_positives", "num_negatives", "org_weight", "ads_weight"});
        if (s.contains("objective")) {
            try {
                m.ssl.objective = ssl_objective_from_name(s.at("objective").get<std::string>());
            } catch (const std::exception& e) {
                fail("model.ssl.objective", e.what());
            }
        }
        get_to(s, "model.ssl", "num_positives", m.ssl.num_positives);
        get_to(s, "model.ssl", "num_negatives", m.ssl.num_negatives);
        get_to(s, "model.ssl", "org_weight", m.ssl.org_weight);
        get_to(s, "model.ssl", "ads_weight", m.ssl.ads_weight);
    }
}

void parse_training(const json& j, TrainConfig& t) {
    check_keys(j, "training",
               {"lr", "beta1", "beta2", "adam_eps", "batch_size", "seed", "shuffle", "log_every"});
    get_to(j, "training", "lr", t.lr);
    get_to(j, "training", "beta1", t.beta1);
    get_to(j, "training", "beta2", t.beta2);
    get_to(j, "training", "adam_eps", t.adam_eps);
    get_to(j, "training", "batch_size", t.batch_size);
    get_to(j, "training", "seed", t.seed);
    get_to(j, "training", "shuffle", t.shuffle);
    get_to(j, "training", "log_every", t.log_every);
}

void parse_search(const json& j, RunConfig& cfg) {
    check_keys(j, "search",
               {"candidates", "predict_samples", "lambda", "dimensions", "train_partitions", "eval_partitions",
                "examples_per_partition"});
    get_to(j, "search", "candidates", cfg.search_candidates);
    get_to(j, "search", "predict_samples", cfg.search_predict_samples);
    get_to(j, "search", "lambda", cfg.search_lambda);
    get_to(j, "search", "train_partitions", cfg.search_budget.train_partitions);
    get_to(j, "search", "eval_partitions", cfg.search_budget.eval_partitions);
    get_to(j, "search", "examples_per_partition", cfg.search_budget.examples_per_partition);
    if (j.contains("dimensions")) {
        cfg.search_space.dimensions.clear();
        for (const auto& d : j.at("dimensions")) {
            check_keys(d, "search.dimensions[]", {"name", "kind", "lo", "hi", "categories"});
            SearchDimension dim;
            dim.name = d.at("name").get<std::string>();
            std::string kind = d.at("kind").get<std::string>();
            if (kind == "int") {
                dim.kind = SearchDimension::Kind::IntegerRange;
                dim.int_lo = d.at("lo").get<int64_t>();
                dim.int_hi = d.at("hi").get<int64_t>();
            } else if (kind == "categorical") {
                dim.kind = SearchDimension::Kind::Categorical;
                d.at("categories").get_to(dim.categories);
            } else if (kind == "log_uniform") {
                dim.kind = SearchDimension::Kind::LogUniformFloat;
                dim.float_lo = d.at("lo").get<double>();
                dim.float_hi = d.at("hi").get<double>();
            } else {
                fail("search.dimensions[].kind", "expected int, categorical, or log_uniform");
            }
            cfg.search_space.dimensions.push_back(dim);
        }
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    cfg.schema = default_production_schema();
    cfg.model = default_production_config();
    cfg.search_space = default_search_space();
    check_keys(j, "", {"world", "schema", "model", "training", "data", "search", "eval"});
    if (j.contains("world")) parse_world(j.at("world"), cfg.world);
    if (j.contains("schema")) parse_schema(j.at("schema"), cfg.schema);
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("training")) parse_training(j.at("training"), cfg.training);
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, "data", {"train_days", "eval_days", "examples_per_day"});
        get_to(d, "data", "train_days", cfg.train_days);
        get_to(d, "data", "eval_days", cfg.eval_days);
        get_to(d, "data", "examples_per_day", cfg.examples_per_day);
    }
    if (j.contains("search")) parse_search(j.at("search"), cfg);
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        check_keys(e, "eval", {"plan"});
        get_to(e, "eval", "plan", cfg.ablation_plan);
    }
    cfg.schema.validate();
    cfg.model.dhen.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string fitted_stats_json(const FeatureSchema& schema) {
    json j = json::object();
    for (const auto& f : schema.continuous) {
        if (f.fitted) j[f.name] = {f.fit_min, f.fit_max};
    }
    return j.dump();
}

void apply_fitted_stats(FeatureSchema& schema, const std::string& json_text) {
    json j = json::parse(json_text);
    for (auto& f : schema.continuous) {
        if (j.contains(f.name)) {
            f.fit_min = j.at(f.name).at(0).get<double>();
            f.fit_max = j.at(f.name).at(1).get<double>();
            f.fitted = true;
        }
    }
}

}  // namespace dhen
