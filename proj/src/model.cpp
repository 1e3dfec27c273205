#include "dhen/model.hpp"

#include <set>
#include <stdexcept>

#include "dhen/ops.hpp"
#include "dhen/pipeline.hpp"
#include "dhen/rng.hpp"

namespace dhen {

const char* module_kind_name(ModuleKind k) {
    switch (k) {
        case ModuleKind::Mlp: return "mlp";
        case ModuleKind::DcnV2: return "dcn_v2";
        case ModuleKind::MaskNet: return "masknet";
        case ModuleKind::Transformer: return "transformer";
    }
    throw std::invalid_argument("bad module kind");
}

ModuleKind module_kind_from_name(const std::string& name) {
    if (name == "mlp") return ModuleKind::Mlp;
    if (name == "dcn_v2") return ModuleKind::DcnV2;
    if (name == "masknet") return ModuleKind::MaskNet;
    if (name == "transformer") return ModuleKind::Transformer;
    throw std::invalid_argument("unknown module kind '" + name + "'");
}

void DhenConfig::validate() const {
    if (token_dim < 1 || layer_width < 1 || reshape_dim < 1) throw std::invalid_argument("dhen config: bad dims");
    if (layers.empty()) throw std::invalid_argument("dhen config: needs at least one layer");
    if (layer_width % reshape_dim != 0)
        throw std::invalid_argument("dhen config: layer width must be divisible by reshape dim");
    for (const auto& layer : layers)
        if (layer.modules.empty()) throw std::invalid_argument("dhen config: empty ensemble layer");
    if (heads.empty()) throw std::invalid_argument("dhen config: needs at least one head");
    std::set<std::string> names;
    for (const auto& h : heads) {
        if (h.name.empty() || !names.insert(h.name).second)
            throw std::invalid_argument("dhen config: head names must be unique and non-empty");
        if (h.weight < 0.0) throw std::invalid_argument("dhen config: negative head weight");
    }
}

namespace {

Tensor module_forward(Tape* tape, ParamStore& params, const std::string& prefix, const ModuleConfig& m,
                      const Tensor& tokens, const Tensor& flat, int64_t out_width, bool train, uint64_t seed) {
    switch (m.kind) {
        case ModuleKind::Mlp:
            return mlp_forward(tape, params, prefix, flat, m.mlp_hidden, out_width);
        case ModuleKind::DcnV2:
            return dcn_v2_forward(tape, params, prefix, flat, m.dcn_layers, m.dcn_rank, out_width);
        case ModuleKind::MaskNet:
            return masknet_forward(tape, params, prefix, flat, m.masknet, out_width, train, seed);
        case ModuleKind::Transformer:
            return transformer_forward(tape, params, prefix, tokens, m.transformer, out_width, train, seed);
    }
    throw std::invalid_argument("bad module kind");
}

Tensor affine_named(Tape* tape, ParamStore& params, const std::string& name, const Tensor& x, int64_t out) {
    Tensor w = params.get_or_create(name + ".w", {x.dim(-1), out}, Init::Xavier);
    Tensor b = params.get_or_create(name + ".b", {out}, Init::Zeros);
    return ops::add(tape, ops::matmul(tape, x, w), b);
}

}  // namespace

Tensor dhen_forward(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& tokens,
                    const DhenConfig& cfg, bool train, uint64_t seed) {
    cfg.validate();
    if (tokens.ndim() != 3) throw std::invalid_argument("dhen_forward: tokens must be B x L x D");
    int64_t B = tokens.dim(0);
    Tensor cur = tokens;
    Tensor acc;
    for (size_t k = 0; k < cfg.layers.size(); ++k) {
        Tensor flat = ops::reshape(tape, cur, {B, cur.dim(1) * cur.dim(2)});
        acc = Tensor();
        for (size_t m = 0; m < cfg.layers[k].modules.size(); ++m) {
            std::string mp = prefix + "layer" + std::to_string(k) + ".mod" + std::to_string(m) + ".";
            Tensor out = module_forward(tape, params, mp, cfg.layers[k].modules[m], cur, flat, cfg.layer_width, train,
                                        mix_keys(seed, static_cast<uint64_t>(k), static_cast<uint64_t>(m)));
            acc = acc.defined() ? ops::add(tape, acc, out) : out;
        }
        if (cfg.residual)
            acc = ops::add(tape, acc,
                           affine_named(tape, params, prefix + "layer" + std::to_string(k) + ".residual", flat,
                                        cfg.layer_width));
        if (k + 1 < cfg.layers.size())
            cur = ops::reshape(tape, acc, {B, cfg.layer_width / cfg.reshape_dim, cfg.reshape_dim});
    }
    return acc;
}

Tensor head_forward(Tape* tape, ParamStore& params, const HeadConfig& head, const Tensor& hidden) {
    return mlp_forward(tape, params, "head." + head.name + ".", hidden, head.tower, 1);
}

Model::Model(FeatureSchema schema, ModelConfig config, uint64_t init_seed)
    : schema_(std::move(schema)), config_(std::move(config)), params_(init_seed) {
    schema_.validate();
    config_.dhen.validate();
}

std::map<std::string, Tensor> Model::forward(Tape* tape, const ExampleBatch& batch, bool train, uint64_t seed,
                                             bool include_train_only) {
    auto summaries = encode_sequences(tape, params_, "", schema_, batch, config_.sequence, train, mix_keys(seed, 1));
    Tensor tokens = project_to_tokens(tape, params_, schema_, batch, summaries, config_.dhen.token_dim, train,
                                      nullptr, &oov_count_);
    Tensor hidden = dhen_forward(tape, params_, "dhen.", tokens, config_.dhen, train, mix_keys(seed, 2));
    std::map<std::string, Tensor> logits;
    for (const auto& head : config_.dhen.heads) {
        if (head.train_only && !include_train_only) continue;
        logits[head.name] = head_forward(tape, params_, head, hidden);
    }
    return logits;
}

Tensor Model::ssl_loss(Tape* tape, const ExampleBatch& batch, bool train, uint64_t seed) {
    if (config_.ssl_enabled == 0.0) return Tensor::scalar(0.0);
    return ssl_total(tape, params_, "", schema_, batch, config_.sequence, config_.ssl, train, mix_keys(seed, 3));
}

std::map<std::string, std::vector<double>> Model::predict(const ExampleBatch& batch) {
    auto logits = forward(nullptr, batch, false, 0, false);
    std::map<std::string, std::vector<double>> out;
    for (auto& [name, t] : logits) {
        Tensor p = ops::sigmoid(nullptr, t);
        out[name] = p.data();
    }
    return out;
}

namespace {

double affine_flops(double in, double out) { return 2.0 * in * out + out; }

double mlp_flops(double in, const std::vector<int64_t>& hidden, double out) {
    double f = 0.0, d = in;
    for (int64_t h : hidden) {
        f += affine_flops(d, static_cast<double>(h)) + static_cast<double>(h);
        d = static_cast<double>(h);
    }
    return f + affine_flops(d, out);
}

double transformer_flops(double L, double in, const TransformerConfig& cfg, double out) {
    double H = static_cast<double>(cfg.hidden);
    double f = L * affine_flops(in, H);
    for (int64_t l = 0; l < cfg.num_layers; ++l) {
        f += 4.0 * L * affine_flops(H, H);       // q, k, v, o
        f += 4.0 * L * L * H + 6.0 * L * L;      // scores, mix, softmax
        f += L * (affine_flops(H, static_cast<double>(cfg.ff)) + affine_flops(static_cast<double>(cfg.ff), H));
        f += 16.0 * L * H;                       // norms and residuals
    }
    if (out > 0.0) f += L * H + affine_flops(H, out);
    return f;
}

}  // namespace

double Model::flops_per_example() const {
    const DhenConfig& d = config_.dhen;
    double D = static_cast<double>(d.token_dim), W = static_cast<double>(d.layer_width);
    double f = 0.0;

    double seq_len = static_cast<double>(kSequenceCap);
    const auto& sc = config_.sequence;
    double item_in = static_cast<double>(schema_.item_embedding_dim + sc.action_dim + 1 + sc.advertiser_dim);
    TransformerConfig stf;
    stf.num_layers = sc.num_layers;
    stf.num_heads = sc.num_heads;
    stf.hidden = sc.hidden;
    stf.ff = sc.ff;
    for (size_t i = 0; i < schema_.sequence_kinds.size(); ++i)
        f += seq_len * affine_flops(item_in, static_cast<double>(sc.hidden)) +
             transformer_flops(seq_len, static_cast<double>(sc.hidden), stf, 0.0) +
             seq_len * static_cast<double>(sc.hidden);

    double n_tokens = 0.0;
    for (const auto& feat : schema_.continuous) {
        (void)feat;
        f += affine_flops(1, D);
        n_tokens += 1.0;
    }
    for (const auto& feat : schema_.categorical) {
        f += affine_flops(static_cast<double>(feat.embedding_dim), D);
        n_tokens += 1.0;
    }
    for (const auto& feat : schema_.pretrained) {
        f += 4.0 * static_cast<double>(feat.dim) + affine_flops(static_cast<double>(feat.dim), D);
        n_tokens += 1.0;
    }
    for (size_t i = 0; i < schema_.sequence_kinds.size(); ++i) {
        f += affine_flops(static_cast<double>(sc.hidden), D);
        n_tokens += 1.0;
    }

    double L = n_tokens, dim = D;
    for (const auto& layer : d.layers) {
        double flat = L * dim;
        for (const auto& m : layer.modules) {
            switch (m.kind) {
                case ModuleKind::Mlp:
                    f += mlp_flops(flat, m.mlp_hidden, W);
                    break;
                case ModuleKind::DcnV2:
                    f += static_cast<double>(m.dcn_layers) *
                             (affine_flops(flat, static_cast<double>(m.dcn_rank)) +
                              affine_flops(static_cast<double>(m.dcn_rank), flat) + 2.0 * flat) +
                         affine_flops(flat, W);
                    break;
                case ModuleKind::MaskNet: {
                    double bott = m.masknet.mask_bottleneck > 0 ? static_cast<double>(m.masknet.mask_bottleneck)
                                                                : 2.0 * flat;
                    double h = static_cast<double>(m.masknet.hidden);
                    f += static_cast<double>(m.masknet.num_blocks) *
                             (affine_flops(flat, bott) + affine_flops(bott, h) + 2.0 * flat * h + 8.0 * h) +
                         affine_flops(static_cast<double>(m.masknet.num_blocks) * h, W);
                    break;
                }
                case ModuleKind::Transformer:
                    f += transformer_flops(L, dim, m.transformer, W);
                    break;
            }
        }
        if (d.residual) f += affine_flops(flat, W);
        L = W / static_cast<double>(d.reshape_dim);
        dim = static_cast<double>(d.reshape_dim);
    }

    for (const auto& head : d.heads) {
        if (head.train_only) continue;
        f += mlp_flops(W, head.tower, 1.0);
    }
    return f;
}

ModelConfig default_production_config() {
    ModelConfig cfg;
    cfg.dhen.token_dim = 64;
    cfg.dhen.layer_width = 1024;
    cfg.dhen.reshape_dim = 64;

    ModuleConfig mlp;
    mlp.kind = ModuleKind::Mlp;
    mlp.mlp_hidden = {512};

    ModuleConfig tf;
    tf.kind = ModuleKind::Transformer;
    tf.transformer.num_layers = 2;
    tf.transformer.num_heads = 4;
    tf.transformer.hidden = 256;
    tf.transformer.ff = 512;
    tf.transformer.dropout = 0.0;

    ModuleConfig mask;
    mask.kind = ModuleKind::MaskNet;
    mask.masknet.num_blocks = 2;
    mask.masknet.hidden = 256;
    mask.masknet.dropout = 0.005;

    cfg.dhen.layers = {LayerConfig{{mlp, tf}}, LayerConfig{{mlp, mask}}};

    for (const char* name : {"checkout", "add_to_cart", "signup", "lead"})
        cfg.dhen.heads.push_back(HeadConfig{name, {128, 128, 128}, false, 1.0});
    cfg.dhen.heads.push_back(HeadConfig{"ctr", {128, 128, 128}, true, 1.0});

    cfg.sequence.hidden = 32;
    cfg.sequence.num_layers = 1;
    cfg.sequence.num_heads = 2;
    cfg.sequence.ff = 64;
    return cfg;
}

FeatureSchema default_production_schema() {
    FeatureSchema s;
    s.continuous = {{"f1", 0.0, 1.0, false}, {"f2", 0.0, 1.0, false}, {"user_activity", 0.0, 1.0, false}};
    s.categorical = {{"ad_category", 20, 8}, {"user_country", 10, 8}, {"user_interest", 15, 8}};
    s.pretrained = {{"user_embedding", 16}, {"ad_embedding", 8}};
    s.sequence_kinds = {SeqKind::Search, SeqKind::Org, SeqKind::Ads, SeqKind::Match, SeqKind::Conv};
    s.item_embedding_dim = 8;
    s.advertiser_vocab = 50;
    return s;
}

}  // namespace dhen
