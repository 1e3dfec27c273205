#include "dhen/sequence.hpp"

#include <algorithm>
#include <stdexcept>

#include "dhen/hash.hpp"
#include "dhen/ops.hpp"
#include "dhen/pipeline.hpp"
#include "dhen/rng.hpp"

namespace dhen {

namespace {

// Broadcasts a [dim] parameter to B rows.
Tensor tile_rows(Tape* tape, const Tensor& vec, int64_t rows) {
    Tensor as_row = ops::reshape(tape, vec, {1, vec.dim(0)});
    return ops::gather_rows(tape, as_row, std::vector<int64_t>(rows, 0));
}

}  // namespace

SeqEncodeResult encode_kind(Tape* tape, ParamStore& params, const std::string& model_prefix,
                            const FeatureSchema& schema, const ExampleBatch& batch, SeqKind kind,
                            const SequenceEncoderConfig& cfg, bool causal, bool train, uint64_t seed,
                            const std::vector<std::vector<int64_t>>* mask_positions) {
    const auto& col = batch.sequences[static_cast<int>(kind)];
    int64_t B = batch.batch_size;
    if (static_cast<int64_t>(col.size()) != B) throw std::invalid_argument("encode_kind: sequence column size");
    // With shared weights the encoder stack (transformer, action table,
    // null vector, mask token) is reused across kinds; the item projection
    // and advertiser table stay per kind since their widths differ.
    std::string kind_prefix = model_prefix + "seq." + seq_kind_name(kind) + ".";
    std::string enc_prefix = cfg.shared_weights ? model_prefix + "seq.shared." : kind_prefix;
    int64_t E = cfg.hidden;
    int64_t De = schema.item_embedding_dim;
    bool with_adv = seq_kind_has_advertiser(kind);

    SeqEncodeResult res;
    res.lengths.resize(B);
    for (int64_t b = 0; b < B; ++b) {
        res.lengths[b] = static_cast<int64_t>(col[b]->items.size());
        res.max_len = std::max(res.max_len, res.lengths[b]);
    }

    Tensor null_vec = params.get_or_create(enc_prefix + "null", {E}, Init::Gaussian);
    if (res.max_len == 0) {
        res.summary = tile_rows(tape, null_vec, B);
        return res;
    }
    int64_t L = res.max_len;

    std::vector<double> item_emb(B * L * De, 0.0);
    std::vector<int64_t> action_ids(B * L, 0);
    std::vector<double> ts_delta(B * L, 0.0);
    std::vector<int64_t> adv_ids(B * L, 0);
    for (int64_t b = 0; b < B; ++b) {
        const auto& items = col[b]->items;
        std::vector<double> ts(items.size());
        for (size_t i = 0; i < items.size(); ++i) ts[i] = items[i].timestamp;
        std::vector<double> logd = timestamp_transform(ts);
        for (size_t i = 0; i < items.size(); ++i) {
            const auto& it = items[i];
            if (static_cast<int64_t>(it.embedding.size()) != De)
                throw std::invalid_argument("encode_kind: item embedding dim mismatch");
            if (it.action_type < 0 || it.action_type >= kNumActionTypes)
                throw std::invalid_argument("encode_kind: invalid action type");
            int64_t p = b * L + static_cast<int64_t>(i);
            std::copy(it.embedding.begin(), it.embedding.end(), item_emb.begin() + p * De);
            action_ids[p] = it.action_type;
            ts_delta[p] = logd[i];
            if (with_adv && it.advertiser_id >= 0 && it.advertiser_id < schema.advertiser_vocab)
                adv_ids[p] = it.advertiser_id;
        }
    }

    std::vector<Tensor> parts;
    parts.emplace_back(Shape{B * L, De}, std::move(item_emb));
    Tensor action_table = params.get_or_create(enc_prefix + "action.table", {kNumActionTypes, cfg.action_dim},
                                               Init::Gaussian);
    parts.push_back(ops::embedding_lookup(tape, action_table, action_ids));
    parts.emplace_back(Shape{B * L, 1}, std::move(ts_delta));
    if (with_adv) {
        Tensor adv_table = params.get_or_create(kind_prefix + "advertiser.table", {schema.advertiser_vocab,
                                                cfg.advertiser_dim}, Init::Gaussian);
        parts.push_back(ops::embedding_lookup(tape, adv_table, adv_ids));
    }
    Tensor feat = ops::concat(tape, parts, 1);
    Tensor w = params.get_or_create(kind_prefix + "item.w", {feat.dim(1), E}, Init::Xavier);
    Tensor bias = params.get_or_create(kind_prefix + "item.b", {E}, Init::Zeros);
    Tensor items3 = ops::reshape(tape, ops::add(tape, ops::matmul(tape, feat, w), bias), {B, L, E});
    res.items = items3;

    Tensor enc_input = items3;
    if (mask_positions) {
        if (static_cast<int64_t>(mask_positions->size()) != B)
            throw std::invalid_argument("encode_kind: mask_positions size must match batch");
        std::vector<double> keep(B * L, 1.0), masked(B * L, 0.0);
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t p : (*mask_positions)[b]) {
                if (p < 0 || p >= res.lengths[b]) throw std::invalid_argument("encode_kind: mask position out of range");
                keep[b * L + p] = 0.0;
                masked[b * L + p] = 1.0;
            }
        }
        Tensor mask_tok = params.get_or_create(enc_prefix + "mask_token", {E}, Init::Gaussian);
        Tensor tok3 = ops::reshape(tape, tile_rows(tape, mask_tok, B * L), {B, L, E});
        enc_input = ops::add(tape, ops::mul(tape, items3, Tensor({B, L}, std::move(keep))),
                             ops::mul(tape, tok3, Tensor({B, L}, std::move(masked))));
    }

    TransformerConfig tf;
    tf.num_layers = cfg.num_layers;
    tf.num_heads = cfg.num_heads;
    tf.hidden = E;
    tf.ff = cfg.ff;
    tf.dropout = 0.0;
    tf.max_positions = kSequenceCap;
    res.encoded = transformer_encode(tape, params, enc_prefix + "tf.", enc_input, tf, res.lengths, causal, train,
                                     mix_keys(seed, fnv1a(kind_prefix)));

    // the empty-row indicator is materialized at full B x E shape to keep
    // the broadcast unambiguous when B happens to equal E
    std::vector<double> pool_w(B * L, 0.0), empty_ind(B * E, 0.0);
    for (int64_t b = 0; b < B; ++b) {
        if (res.lengths[b] == 0) {
            for (int64_t d = 0; d < E; ++d) empty_ind[b * E + d] = 1.0;
        } else {
            for (int64_t l = 0; l < res.lengths[b]; ++l) pool_w[b * L + l] = 1.0 / static_cast<double>(res.lengths[b]);
        }
    }
    Tensor pooled = ops::sum_pool(tape, ops::mul(tape, res.encoded, Tensor({B, L}, std::move(pool_w))), 1);
    res.summary =
        ops::add(tape, pooled, ops::mul(tape, tile_rows(tape, null_vec, B), Tensor({B, E}, std::move(empty_ind))));
    return res;
}

std::map<SeqKind, Tensor> encode_sequences(Tape* tape, ParamStore& params, const std::string& model_prefix,
                                           const FeatureSchema& schema, const ExampleBatch& batch,
                                           const SequenceEncoderConfig& cfg, bool train, uint64_t seed) {
    std::map<SeqKind, Tensor> out;
    for (SeqKind kind : schema.sequence_kinds) {
        out[kind] = encode_kind(tape, params, model_prefix, schema, batch, kind, cfg, false, train,
                                mix_keys(seed, static_cast<uint64_t>(kind)))
                        .summary;
    }
    return out;
}

}  // namespace dhen
