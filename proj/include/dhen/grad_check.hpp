#pragma once

#include <functional>
#include <vector>

#include "dhen/tensor.hpp"

namespace dhen {

// Function under test: builds a scalar loss from the given inputs on the
// given tape. It must be deterministic; a value mismatch between two
// evaluations at the same point is reported as an error telling the
// caller to fix seeds.
using ScalarFn = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

// Compares analytic gradients against central differences
// (f(x+h) - f(x-h)) / 2h and returns
//   max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-8).
double grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, double step = 1e-5);

}  // namespace dhen
