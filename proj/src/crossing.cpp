#include "dhen/crossing.hpp"

#include <cmath>
#include <stdexcept>

#include "dhen/hash.hpp"
#include "dhen/ops.hpp"
#include "dhen/rng.hpp"

namespace dhen {

namespace {

Tensor affine(Tape* tape, ParamStore& params, const std::string& name, const Tensor& x, int64_t out) {
    Tensor w = params.get_or_create(name + ".w", {x.dim(-1), out}, Init::Xavier);
    Tensor b = params.get_or_create(name + ".b", {out}, Init::Zeros);
    return ops::add(tape, ops::matmul(tape, x, w), b);
}

Tensor scaled_layer_norm(Tape* tape, ParamStore& params, const std::string& name, const Tensor& x) {
    Tensor gamma = params.get_or_create(name + ".gamma", {x.dim(-1)}, Init::Ones);
    Tensor beta = params.get_or_create(name + ".beta", {x.dim(-1)}, Init::Zeros);
    return ops::add(tape, ops::mul(tape, ops::layer_norm(tape, x, 1e-5), gamma), beta);
}

}  // namespace

Tensor mlp_forward(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& flat,
                   const std::vector<int64_t>& hidden, int64_t out_width) {
    Tensor x = flat;
    for (size_t i = 0; i < hidden.size(); ++i) {
        if (hidden[i] < 1) throw std::invalid_argument("mlp_forward: hidden width must be positive");
        x = ops::relu(tape, affine(tape, params, prefix + "fc" + std::to_string(i), x, hidden[i]));
    }
    return affine(tape, params, prefix + "out", x, out_width);
}

Tensor dcn_v2_forward(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& flat,
                      int64_t num_layers, int64_t rank, int64_t out_width) {
    if (num_layers < 1 || rank < 1) throw std::invalid_argument("dcn_v2_forward: layers and rank must be positive");
    int64_t d = flat.dim(1);
    Tensor x = flat;
    for (int64_t l = 0; l < num_layers; ++l) {
        std::string name = prefix + "cross" + std::to_string(l);
        Tensor v = params.get_or_create(name + ".v", {d, rank}, Init::Xavier);
        Tensor u = params.get_or_create(name + ".u", {rank, d}, Init::Xavier);
        Tensor b = params.get_or_create(name + ".b", {d}, Init::Zeros);
        Tensor proj = ops::add(tape, ops::matmul(tape, ops::matmul(tape, x, v), u), b);
        x = ops::add(tape, ops::mul(tape, flat, proj), x);
    }
    return affine(tape, params, prefix + "out", x, out_width);
}

Tensor masknet_forward(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& flat,
                       const MaskNetConfig& cfg, int64_t out_width, bool train, uint64_t seed) {
    if (cfg.num_blocks < 1 || cfg.hidden < 1) throw std::invalid_argument("masknet_forward: invalid block config");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw std::invalid_argument("masknet_forward: invalid dropout rate");
    int64_t f = flat.dim(1);
    int64_t bottleneck = cfg.mask_bottleneck > 0 ? cfg.mask_bottleneck : 2 * f;
    std::vector<Tensor> blocks;
    for (int64_t i = 0; i < cfg.num_blocks; ++i) {
        std::string name = prefix + "block" + std::to_string(i);
        Tensor m = ops::relu(tape, affine(tape, params, name + ".mask1", flat, bottleneck));
        Tensor mask = affine(tape, params, name + ".mask2", m, cfg.hidden);
        // bias-free value projection so an all-zero V kills the block
        Tensor v = params.get_or_create(name + ".v", {f, cfg.hidden}, Init::Xavier);
        Tensor h = ops::relu(tape, ops::layer_norm(tape, ops::mul(tape, mask, ops::matmul(tape, flat, v)), 1e-5));
        h = ops::dropout(tape, h, cfg.dropout, train, mix_keys(seed, fnv1a(name), 0x6d61736bULL));
        blocks.push_back(h);
    }
    Tensor cat = blocks.size() == 1 ? blocks[0] : ops::concat(tape, blocks, 1);
    return affine(tape, params, prefix + "out", cat, out_width);
}

Tensor transformer_encode(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& tokens,
                          const TransformerConfig& cfg, const std::vector<int64_t>& valid_lens, bool causal,
                          bool train, uint64_t seed) {
    if (tokens.ndim() != 3) throw std::invalid_argument("transformer_encode: tokens must be B x L x D");
    if (cfg.num_heads < 1 || cfg.hidden % cfg.num_heads != 0)
        throw std::invalid_argument("transformer_encode: hidden must be divisible by heads");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw std::invalid_argument("transformer_encode: invalid dropout");
    int64_t B = tokens.dim(0), L = tokens.dim(1);
    if (L > cfg.max_positions)
        throw std::invalid_argument("transformer_encode: sequence longer than positional table");
    if (!valid_lens.empty() && static_cast<int64_t>(valid_lens.size()) != B)
        throw std::invalid_argument("transformer_encode: valid_lens size must match batch");
    int64_t H = cfg.hidden, dh = H / cfg.num_heads;

    Tensor x = affine(tape, params, prefix + "lift", tokens, H);

    Tensor pos_table = params.get_or_create(prefix + "pos", {cfg.max_positions, H}, Init::Gaussian);
    std::vector<int64_t> pos_ids(B * L);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l) pos_ids[b * L + l] = l;
    Tensor pos = ops::reshape(tape, ops::embedding_lookup(tape, pos_table, pos_ids), {B, L, H});
    x = ops::add(tape, x, pos);

    Tensor attn_mask;
    bool need_mask = causal || !valid_lens.empty();
    if (need_mask) {
        std::vector<double> m(B * L * L, 0.0);
        for (int64_t b = 0; b < B; ++b) {
            int64_t len = valid_lens.empty() ? L : valid_lens[b];
            for (int64_t i = 0; i < L; ++i)
                for (int64_t j = 0; j < L; ++j)
                    if (j >= len || (causal && j > i)) m[(b * L + i) * L + j] = -1e9;
        }
        attn_mask = Tensor({B, L, L}, std::move(m));
    }

    for (int64_t layer = 0; layer < cfg.num_layers; ++layer) {
        std::string lp = prefix + "layer" + std::to_string(layer) + ".";
        uint64_t ls = mix_keys(seed, fnv1a(lp));

        Tensor y = scaled_layer_norm(tape, params, lp + "ln1", x);
        Tensor q = affine(tape, params, lp + "q", y, H);
        Tensor k = affine(tape, params, lp + "k", y, H);
        Tensor v = affine(tape, params, lp + "v", y, H);
        std::vector<Tensor> heads;
        for (int64_t h = 0; h < cfg.num_heads; ++h) {
            Tensor qh = ops::slice(tape, q, 2, h * dh, dh);
            Tensor kh = ops::slice(tape, k, 2, h * dh, dh);
            Tensor vh = ops::slice(tape, v, 2, h * dh, dh);
            Tensor scores = ops::scale(tape, ops::matmul(tape, qh, ops::transpose_last2(tape, kh)),
                                       1.0 / std::sqrt(static_cast<double>(dh)));
            if (need_mask) scores = ops::add(tape, scores, attn_mask);
            Tensor probs = ops::softmax(tape, scores, 2);
            probs = ops::dropout(tape, probs, cfg.dropout, train, mix_keys(ls, 1, h));
            heads.push_back(ops::matmul(tape, probs, vh));
        }
        Tensor attn = heads.size() == 1 ? heads[0] : ops::concat(tape, heads, 2);
        attn = affine(tape, params, lp + "o", attn, H);
        attn = ops::dropout(tape, attn, cfg.dropout, train, mix_keys(ls, 2));
        x = ops::add(tape, x, attn);

        Tensor z = scaled_layer_norm(tape, params, lp + "ln2", x);
        Tensor ff = ops::relu(tape, affine(tape, params, lp + "ff1", z, cfg.ff));
        ff = affine(tape, params, lp + "ff2", ff, H);
        ff = ops::dropout(tape, ff, cfg.dropout, train, mix_keys(ls, 3));
        x = ops::add(tape, x, ff);
    }
    return x;
}

Tensor transformer_forward(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& tokens,
                           const TransformerConfig& cfg, int64_t out_width, bool train, uint64_t seed) {
    Tensor enc = transformer_encode(tape, params, prefix, tokens, cfg, {}, false, train, seed);
    Tensor pooled = ops::mean_pool(tape, enc, 1);
    return affine(tape, params, prefix + "out", pooled, out_width);
}

}  // namespace dhen
