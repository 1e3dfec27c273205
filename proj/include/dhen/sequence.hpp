#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dhen/crossing.hpp"
#include "dhen/data.hpp"
#include "dhen/params.hpp"
#include "dhen/tensor.hpp"

namespace dhen {

struct SequenceEncoderConfig {
    int64_t hidden = 32;
    int64_t num_layers = 1;
    int64_t num_heads = 2;
    int64_t ff = 64;
    int64_t action_dim = 8;
    int64_t advertiser_dim = 8;
    bool shared_weights = false;  // one encoder reused across kinds
};

struct SeqEncodeResult {
    // Per-item encodings before positional embeddings; the target
    // representation for the self-supervised losses. B x Lmax x hidden.
    Tensor items;
    // Transformer output, undefined when the whole batch is empty.
    Tensor encoded;
    // Valid-position mean of `encoded`; empty rows get a learned null
    // vector. B x hidden.
    Tensor summary;
    std::vector<int64_t> lengths;
    int64_t max_len = 0;
};

// Encodes one behavior-sequence kind for a batch. `causal` restricts
// attention to previous positions. `mask_positions`, when given, replaces
// those item encodings with a learned mask token before the encoder (the
// `items` field stays unmasked).
SeqEncodeResult encode_kind(Tape* tape, ParamStore& params, const std::string& model_prefix,
                            const FeatureSchema& schema, const ExampleBatch& batch, SeqKind kind,
                            const SequenceEncoderConfig& cfg, bool causal, bool train, uint64_t seed,
                            const std::vector<std::vector<int64_t>>* mask_positions = nullptr);

// Summaries for every kind in the schema, keyed by kind.
std::map<SeqKind, Tensor> encode_sequences(Tape* tape, ParamStore& params, const std::string& model_prefix,
                                           const FeatureSchema& schema, const ExampleBatch& batch,
                                           const SequenceEncoderConfig& cfg, bool train, uint64_t seed);

}  // namespace dhen
