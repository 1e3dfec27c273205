#pragma once

#include <cstdint>
#include <vector>

#include "dhen/tensor.hpp"

namespace dhen::ops {

// All ops: compute forward, verify the result is finite, and when `tape`
// is non-null and any input requires grad, record a backward closure.
// `tape == nullptr` runs pure inference.

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor transpose_last2(Tape* tape, const Tensor& a);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double c);

Tensor sigmoid(Tape* tape, const Tensor& a);
Tensor relu(Tape* tape, const Tensor& a);
Tensor log(Tape* tape, const Tensor& a);
Tensor exp(Tape* tape, const Tensor& a);

Tensor softmax(Tape* tape, const Tensor& a, int axis);
// Normalizes along the last axis with population variance.
Tensor layer_norm(Tape* tape, const Tensor& a, double eps);

// x: B x D. Unbiased variance in train mode; running stats are plain
// buffers updated in place (convention: new = (1-momentum)*old + momentum*batch).
Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor running_mean, Tensor running_var, bool train, double momentum, double eps);

// Inverted dropout: eval mode is the identity.
Tensor dropout(Tape* tape, const Tensor& x, double rate, bool train, uint64_t seed);

Tensor embedding_lookup(Tape* tape, const Tensor& table, const std::vector<int64_t>& ids);

Tensor concat(Tape* tape, const std::vector<Tensor>& parts, int axis);
Tensor slice(Tape* tape, const Tensor& x, int axis, int64_t start, int64_t len);
Tensor reshape(Tape* tape, const Tensor& x, Shape new_shape);

Tensor sum_pool(Tape* tape, const Tensor& x, int axis);
Tensor mean_pool(Tape* tape, const Tensor& x, int axis);
Tensor sum_all(Tape* tape, const Tensor& x);

// x treated as a matrix of rows (first axis); picks rows, duplicates allowed.
Tensor gather_rows(Tape* tape, const Tensor& x, const std::vector<int64_t>& rows);

// Masked mean of the numerically-stable per-element BCE over logits.
// labels/mask have one entry per logit element; zero total mask gives 0.
Tensor bce_with_logits_mean(Tape* tape, const Tensor& logits, const std::vector<double>& labels,
                            const std::vector<double>& mask);

}  // namespace dhen::ops
