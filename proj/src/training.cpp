#include "dhen/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "dhen/hash.hpp"
#include "dhen/ops.hpp"
#include "dhen/rng.hpp"

namespace dhen {

Tensor multitask_loss(Tape* tape, Model& model, const ExampleBatch& batch, bool train, uint64_t seed,
                      LossReport* report) {
    auto logits = model.forward(tape, batch, train, seed, /*include_train_only=*/true);
    Tensor total;
    LossReport rep;
    for (const auto& head : model.config().dhen.heads) {
        auto lab = batch.labels.find(head.name);
        if (lab == batch.labels.end()) {
            throw std::runtime_error("batch is missing labels for head '" + head.name + "'");
        }
        std::vector<double> mask;
        auto mk = batch.masks.find(head.name);
        if (mk != batch.masks.end()) {
            mask = mk->second;
        } else {
            mask.assign(lab->second.size(), 1.0);
        }
        Tensor bce = ops::bce_with_logits_mean(tape, logits.at(head.name), lab->second, mask);
        rep.head_bce[head.name] = bce.item();
        Tensor weighted = ops::scale(tape, bce, head.weight);
        total = total.defined() ? ops::add(tape, total, weighted) : weighted;
    }
    Tensor ssl = model.ssl_loss(tape, batch, train, seed);
    rep.ssl = ssl.item();
    total = ops::add(tape, total, ssl);
    rep.total = total.item();
    if (report) *report = rep;
    return total;
}

TrainResult train(Model& model, AdamOptimizer& opt, const std::vector<std::vector<Example>>& partitions,
                  const TrainConfig& cfg, int64_t start_partition) {
    if (cfg.batch_size < 1) throw std::runtime_error("batch_size must be positive");
    TrainResult result;
    for (size_t p = static_cast<size_t>(start_partition); p < partitions.size(); ++p) {
        const auto& part = partitions[p];
        std::vector<int64_t> order(part.size());
        for (size_t i = 0; i < part.size(); ++i) order[i] = static_cast<int64_t>(i);
        if (cfg.shuffle) {
            Rng rng(mix_keys(cfg.seed, 0x73687566666c65ULL, static_cast<uint64_t>(p)));
            rng.shuffle(order);
        }
        int64_t n = static_cast<int64_t>(part.size());
        int64_t step_in_part = 0;
        for (int64_t start = 0; start < n; start += cfg.batch_size, ++step_in_part) {
            int64_t end = std::min(n, start + cfg.batch_size);
            std::vector<const Example*> ptrs;
            ptrs.reserve(static_cast<size_t>(end - start));
            for (int64_t i = start; i < end; ++i) ptrs.push_back(&part[static_cast<size_t>(order[static_cast<size_t>(i)])]);
            ExampleBatch batch = make_batch(ptrs, model.schema());

            uint64_t step_seed = mix_keys(cfg.seed, static_cast<uint64_t>(p), static_cast<uint64_t>(step_in_part));
            Tape tape;
            LossReport rep;
            try {
                Tensor loss = multitask_loss(&tape, model, batch, /*train=*/true, step_seed, &rep);
                if (!std::isfinite(rep.total)) throw std::runtime_error("loss is not finite");
                model.params().zero_grad();
                tape.backward(loss);
                opt.step(model.params());
            } catch (const std::exception& e) {
                result.status = TrainStatus::Diverged;
                result.message = "training diverged at partition " + std::to_string(p) + " step " +
                                 std::to_string(step_in_part) + ": " + e.what();
                return result;
            }
            ++result.steps;
            if (cfg.log_every > 0 && (result.steps - 1) % cfg.log_every == 0) {
                std::ostringstream line;
                line << "{\"partition\":" << p << ",\"step\":" << opt.step_count() << ",\"loss\":" << rep.total
                     << ",\"ssl\":" << rep.ssl;
                for (const auto& [name, v] : rep.head_bce) line << ",\"bce_" << name << "\":" << v;
                line << "}";
                result.trace.push_back(line.str());
            }
        }
    }
    return result;
}

namespace {

constexpr char kMagic[8] = {'D', 'H', 'E', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::string& out, const void* p, size_t n) { out.append(static_cast<const char*>(p), n); }
void put_u32(std::string& out, uint32_t v) { put_bytes(out, &v, 4); }
void put_u64(std::string& out, uint64_t v) { put_bytes(out, &v, 8); }
void put_i64(std::string& out, int64_t v) { put_bytes(out, &v, 8); }
void put_f64v(std::string& out, const std::vector<double>& v) { put_bytes(out, v.data(), v.size() * 8); }
void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.append(s);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    void read(void* p, size_t n) {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint truncated");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    uint32_t u32() { uint32_t v; read(&v, 4); return v; }
    uint64_t u64() { uint64_t v; read(&v, 8); return v; }
    int64_t i64() { int64_t v; read(&v, 8); return v; }
    std::string str() {
        uint32_t n = u32();
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint truncated");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    std::vector<double> f64v(size_t n) {
        std::vector<double> v(n);
        read(v.data(), n * 8);
        return v;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const AdamOptimizer& opt,
                     const std::string& config_text, uint64_t train_seed, int64_t next_partition) {
    std::string out;
    put_bytes(out, kMagic, 8);
    put_u32(out, kVersion);
    put_u64(out, model.params().init_seed());
    put_u64(out, train_seed);
    put_i64(out, next_partition);
    put_i64(out, opt.step_count());
    put_str(out, config_text);

    const auto& params = model.params().all();  // std::map: sorted by name
    put_u64(out, params.size());
    for (const auto& [name, t] : params) {
        put_str(out, name);
        out.push_back(t.requires_grad() ? 1 : 0);
        put_u32(out, static_cast<uint32_t>(t.ndim()));
        for (int64_t d : t.shape()) put_i64(out, d);
        put_f64v(out, t.data());
    }

    const auto& moments = opt.moments();
    put_u64(out, moments.size());
    for (const auto& [name, mv] : moments) {
        put_str(out, name);
        put_u64(out, mv.first.size());
        put_f64v(out, mv.first);
        put_f64v(out, mv.second);
    }

    put_u64(out, fnv1a(out.data(), out.size()));

    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    size_t written = std::fwrite(out.data(), 1, out.size(), f);
    std::fclose(f);
    if (written != out.size()) throw std::runtime_error("short write: " + path);
}

namespace {

std::string read_verified(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string buf;
    char chunk[65536];
    size_t n;
    while ((n = std::fread(chunk, 1, sizeof(chunk), f)) > 0) buf.append(chunk, n);
    std::fclose(f);

    if (buf.size() < 24 || std::memcmp(buf.data(), kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint integrity check failed: bad magic in " + path);
    }
    uint64_t stored_sum;
    std::memcpy(&stored_sum, buf.data() + buf.size() - 8, 8);
    if (fnv1a(buf.data(), buf.size() - 8) != stored_sum) {
        throw std::runtime_error("checkpoint integrity check failed: checksum mismatch in " + path);
    }
    return buf;
}

CheckpointInfo read_header(Reader& r) {
    r.pos = 8;
    uint32_t version = r.u32();
    if (version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    CheckpointInfo info;
    info.init_seed = r.u64();
    info.train_seed = r.u64();
    info.next_partition = r.i64();
    info.step_count = r.i64();
    info.config_text = r.str();
    return info;
}

}  // namespace

CheckpointInfo read_checkpoint_info(const std::string& path) {
    std::string buf = read_verified(path);
    Reader r{buf};
    return read_header(r);
}

CheckpointInfo load_checkpoint(const std::string& path, Model& model, AdamOptimizer& opt) {
    std::string buf = read_verified(path);
    Reader r{buf};
    CheckpointInfo info = read_header(r);
    // restore the init stream so a re-save is byte-identical and any
    // parameter materialized later draws from the original sequence
    model.params().set_init_seed(info.init_seed);

    uint64_t num_params = r.u64();
    std::vector<std::string> mismatched;
    for (uint64_t i = 0; i < num_params; ++i) {
        std::string name = r.str();
        char rg;
        r.read(&rg, 1);
        uint32_t ndim = r.u32();
        Shape shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = r.i64();
        auto values = r.f64v(static_cast<size_t>(numel(shape)));
        if (model.params().contains(name)) {
            Tensor existing = model.params().get(name);
            if (existing.shape() != shape) {
                mismatched.push_back(name + ": checkpoint " + shape_str(shape) + " vs model " +
                                     shape_str(existing.shape()));
                continue;
            }
            existing.data() = values;
        } else {
            Tensor t = model.params().get_or_create(name, shape, Init::Zeros, rg != 0);
            t.data() = values;
        }
    }
    if (!mismatched.empty()) {
        std::string msg = "checkpoint is incompatible with the model; mismatched parameters:";
        for (const auto& m : mismatched) msg += "\n  " + m;
        throw std::runtime_error(msg);
    }

    opt.moments().clear();
    uint64_t num_moments = r.u64();
    for (uint64_t i = 0; i < num_moments; ++i) {
        std::string name = r.str();
        size_t len = static_cast<size_t>(r.u64());
        auto first = r.f64v(len);
        auto second = r.f64v(len);
        opt.moments()[name] = {std::move(first), std::move(second)};
    }
    opt.set_step_count(info.step_count);
    return info;
}

uint64_t dataset_hash(const std::vector<std::vector<Example>>& partitions) {
    uint64_t h = 0;
    for (const auto& part : partitions) {
        for (const auto& ex : part) h ^= splitmix64(fnv1a(serialize_example(ex)));
    }
    return h;
}

}  // namespace dhen
