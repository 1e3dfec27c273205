#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dhen/tensor.hpp"

namespace dhen {

enum class Init { Zeros, Ones, Xavier, Gaussian };

// Named parameter store. Names are dotted paths so checkpoints are
// order-independent; iteration is sorted by name. Buffers created with
// requires_grad=false (batch-norm running stats) are checkpointed but
// skipped by the optimizer.
class ParamStore {
public:
    explicit ParamStore(uint64_t init_seed = 0) : init_seed_(init_seed) {}

    // Creates the parameter on first use; later calls validate the shape.
    // Init values depend only on (init_seed, name), not creation order.
    Tensor get_or_create(const std::string& name, const Shape& shape, Init init = Init::Xavier,
                         bool requires_grad = true);

    Tensor get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    const std::map<std::string, Tensor>& all() const { return params_; }
    std::map<std::string, Tensor>& all() { return params_; }

    std::vector<std::string> names() const;
    void zero_grad();
    int64_t total_elements() const;
    uint64_t init_seed() const { return init_seed_; }
    void set_init_seed(uint64_t s) { init_seed_ = s; }

private:
    uint64_t init_seed_;
    std::map<std::string, Tensor> params_;
};

// Standard Adam with bias correction, applied in place over every
// requires_grad parameter in sorted-name order.
class AdamOptimizer {
public:
    AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(ParamStore& params);

    int64_t step_count() const { return step_count_; }
    void set_step_count(int64_t t) { step_count_ = t; }

    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>& moments() { return moments_; }
    const std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>& moments() const {
        return moments_;
    }
    double lr() const { return lr_; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }

private:
    double lr_, beta1_, beta2_, eps_;
    int64_t step_count_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;  // first, second
};

}  // namespace dhen
