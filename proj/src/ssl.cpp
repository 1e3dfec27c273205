#include "dhen/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dhen/hash.hpp"
#include "dhen/ops.hpp"

namespace dhen {

const char* ssl_objective_name(SslObjective o) {
    return o == SslObjective::NextAction ? "next_action" : "masked_item";
}

SslObjective ssl_objective_from_name(const std::string& name) {
    if (name == "next_action") return SslObjective::NextAction;
    if (name == "masked_item") return SslObjective::MaskedItem;
    throw std::invalid_argument("unknown ssl objective '" + name + "'");
}

double ssl_group_weight(const SslConfig& cfg, SeqKind kind) {
    return (kind == SeqKind::Search || kind == SeqKind::Org) ? cfg.org_weight : cfg.ads_weight;
}

std::vector<int64_t> ssl_target_positions(SslObjective objective, int64_t len, int64_t num_positives, Rng& rng) {
    if (num_positives < 1) throw std::invalid_argument("ssl_target_positions: num_positives must be positive");
    std::vector<int64_t> out;
    if (objective == SslObjective::NextAction) {
        int64_t n = std::min(num_positives, len - 1);
        for (int64_t t = len - n; t < len; ++t) out.push_back(t);
    } else {
        if (len <= 0) return out;
        std::vector<int64_t> all(len);
        std::iota(all.begin(), all.end(), 0);
        rng.shuffle(all);
        int64_t n = std::min(num_positives, len);
        out.assign(all.begin(), all.begin() + n);
        std::sort(out.begin(), out.end());
    }
    return out;
}

Tensor info_nce(Tape* tape, const Tensor& context, const Tensor& targets, const Tensor& negatives) {
    if (context.ndim() != 2 || targets.ndim() != 2 || negatives.ndim() != 3)
        throw std::invalid_argument("info_nce: context/targets are N x E, negatives N x K x E");
    int64_t N = context.dim(0), E = context.dim(1), K = negatives.dim(1);
    if (targets.dim(0) != N || targets.dim(1) != E || negatives.dim(0) != N || negatives.dim(2) != E)
        throw std::invalid_argument("info_nce: shape mismatch");

    Tensor pos = ops::sum_pool(tape, ops::mul(tape, context, targets), 1);  // {N}
    Tensor c3 = ops::reshape(tape, context, {N, E, 1});
    Tensor neg = ops::reshape(tape, ops::matmul(tape, negatives, c3), {N, K});
    Tensor all = ops::concat(tape, {ops::reshape(tape, pos, {N, 1}), neg}, 1);  // N x (K+1)

    // logsumexp with a constant per-row shift; the gradient is unaffected.
    // The shift is materialized at full shape so it cannot be mistaken for
    // a per-column bias when N == K + 1.
    std::vector<double> shift(N);
    std::vector<double> shift_full(N * (K + 1));
    for (int64_t i = 0; i < N; ++i) {
        double m = all.data()[i * (K + 1)];
        for (int64_t j = 1; j <= K; ++j) m = std::max(m, all.data()[i * (K + 1) + j]);
        shift[i] = m;
        for (int64_t j = 0; j <= K; ++j) shift_full[i * (K + 1) + j] = m;
    }
    Tensor mvec({N}, std::move(shift));
    Tensor mfull({N, K + 1}, std::move(shift_full));
    Tensor lse = ops::add(tape, ops::log(tape, ops::sum_pool(tape, ops::exp(tape, ops::sub(tape, all, mfull)), 1)), mvec);
    return ops::sub(tape, lse, pos);
}

Tensor ssl_total(Tape* tape, ParamStore& params, const std::string& model_prefix, const FeatureSchema& schema,
                 const ExampleBatch& batch, const SequenceEncoderConfig& enc_cfg, const SslConfig& cfg, bool train,
                 uint64_t seed) {
    int64_t B = batch.batch_size;
    Tensor total = Tensor::scalar(0.0);
    for (SeqKind kind : schema.sequence_kinds) {
        double w = ssl_group_weight(cfg, kind);
        if (w == 0.0) continue;
        const auto& col = batch.sequences[static_cast<int>(kind)];

        std::vector<std::vector<int64_t>> positions(B);
        int64_t n_targets = 0;
        for (int64_t b = 0; b < B; ++b) {
            Rng rng(mix_keys(seed, 0x73736cULL, static_cast<uint64_t>(kind), static_cast<uint64_t>(b)));
            positions[b] = ssl_target_positions(cfg.objective, static_cast<int64_t>(col[b]->items.size()),
                                                cfg.num_positives, rng);
            n_targets += static_cast<int64_t>(positions[b].size());
        }
        if (n_targets == 0) continue;

        bool causal = cfg.objective == SslObjective::NextAction;
        SeqEncodeResult enc = encode_kind(tape, params, model_prefix, schema, batch, kind, enc_cfg, causal, train,
                                          mix_keys(seed, static_cast<uint64_t>(kind)),
                                          causal ? nullptr : &positions);
        int64_t L = enc.max_len, E = enc_cfg.hidden;
        Tensor items2 = ops::reshape(tape, enc.items, {B * L, E});
        Tensor encoded2 = ops::reshape(tape, enc.encoded, {B * L, E});

        std::vector<int64_t> ctx_rows, tgt_rows, neg_rows;
        std::vector<double> row_weight;
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t t : positions[b]) {
                int64_t target_item = col[b]->items[static_cast<size_t>(t)].item_id;
                // in-batch pool of same-kind positions, different item id;
                // the causal objective also excludes this sequence's future
                std::vector<int64_t> pool;
                for (int64_t b2 = 0; b2 < B; ++b2) {
                    for (int64_t p = 0; p < enc.lengths[b2]; ++p) {
                        if (col[b2]->items[static_cast<size_t>(p)].item_id == target_item) continue;
                        if (b2 == b && (p == t || (causal && p > t))) continue;
                        pool.push_back(b2 * L + p);
                    }
                }
                if (pool.empty()) continue;
                Rng nrng(mix_keys(seed, 0x6e6567ULL, static_cast<uint64_t>(kind), static_cast<uint64_t>(b),
                                  static_cast<uint64_t>(t)));
                for (int64_t k = 0; k < cfg.num_negatives; ++k)
                    neg_rows.push_back(pool[static_cast<size_t>(nrng.uniform_int(static_cast<int64_t>(pool.size())))]);
                ctx_rows.push_back(b * L + (causal ? t - 1 : t));
                tgt_rows.push_back(b * L + t);
                row_weight.push_back(w / static_cast<double>(positions[b].size()));
            }
        }
        if (ctx_rows.empty()) continue;
        int64_t N = static_cast<int64_t>(ctx_rows.size());

        Tensor ctx = ops::gather_rows(tape, encoded2, ctx_rows);
        Tensor tgt = ops::gather_rows(tape, items2, tgt_rows);
        Tensor neg = ops::reshape(tape, ops::gather_rows(tape, items2, neg_rows), {N, cfg.num_negatives, E});
        Tensor losses = info_nce(tape, ctx, tgt, neg);
        total = ops::add(tape, total, ops::sum_all(tape, ops::mul(tape, losses, Tensor({N}, std::move(row_weight)))));
    }
    return total;
}

}  // namespace dhen
