#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dhen/params.hpp"
#include "dhen/tensor.hpp"

namespace dhen {

// Plain feed-forward tower: affine + ReLU per hidden width, affine out.
Tensor mlp_forward(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& flat,
                   const std::vector<int64_t>& hidden, int64_t out_width);

// Low-rank cross layers x_{l+1} = x0 * (U V^T x_l + b) + x_l, then an
// affine map to the output width.
Tensor dcn_v2_forward(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& flat,
                      int64_t num_layers, int64_t rank, int64_t out_width);

struct MaskNetConfig {
    int64_t num_blocks = 2;
    int64_t hidden = 256;
    int64_t mask_bottleneck = 0;  // 0 means 2 * input width
    double dropout = 0.005;
};

// Parallel (horizontal) instance-guided mask blocks over the flat input;
// block outputs are concatenated and mapped to the output width.
Tensor masknet_forward(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& flat,
                       const MaskNetConfig& cfg, int64_t out_width, bool train, uint64_t seed);

struct TransformerConfig {
    int64_t num_layers = 2;
    int64_t num_heads = 4;
    int64_t hidden = 256;
    int64_t ff = 512;
    double dropout = 0.0;
    int64_t max_positions = 500;
};

// Pre-norm transformer encoder over tokens (B x L x D). Lifts tokens to
// `hidden`, adds learned absolute positional embeddings, then runs
// self-attention blocks. `valid_lens` (empty means every position valid)
// masks padded key positions; `causal` restricts attention to j <= i.
// Returns B x L x hidden.
Tensor transformer_encode(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& tokens,
                          const TransformerConfig& cfg, const std::vector<int64_t>& valid_lens, bool causal,
                          bool train, uint64_t seed);

// Encoder followed by a valid-position mean pool and an affine map to the
// output width; rows with zero valid positions pool to zero.
Tensor transformer_forward(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& tokens,
                           const TransformerConfig& cfg, int64_t out_width, bool train, uint64_t seed);

}  // namespace dhen
