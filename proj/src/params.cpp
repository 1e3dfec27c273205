#include "dhen/params.hpp"

#include <cmath>
#include <stdexcept>

#include "dhen/hash.hpp"
#include "dhen/rng.hpp"

namespace dhen {

Tensor ParamStore::get_or_create(const std::string& name, const Shape& shape, Init init, bool requires_grad) {
    auto it = params_.find(name);
    if (it != params_.end()) {
        if (it->second.shape() != shape) {
            throw std::invalid_argument("parameter '" + name + "' already exists with shape " +
                                        shape_str(it->second.shape()) + ", requested " + shape_str(shape));
        }
        return it->second;
    }
    int64_t n = numel(shape);
    std::vector<double> data(static_cast<size_t>(n), 0.0);
    Rng rng(mix_keys(init_seed_, fnv1a(name)));
    switch (init) {
        case Init::Zeros:
            break;
        case Init::Ones:
            data.assign(static_cast<size_t>(n), 1.0);
            break;
        case Init::Xavier: {
            int64_t fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : shape.back();
            int64_t fan_out = shape.back();
            double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (auto& v : data) v = rng.uniform(-a, a);
            break;
        }
        case Init::Gaussian:
            for (auto& v : data) v = 0.02 * rng.gaussian();
            break;
    }
    Tensor t(shape, std::move(data), requires_grad);
    params_.emplace(name, t);
    return t;
}

Tensor ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("missing parameter '" + name + "'");
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
}

void ParamStore::zero_grad() {
    for (auto& [k, v] : params_) v.zero_grad();
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [k, v] : params_) n += v.size();
    return n;
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr <= 0.0) throw std::invalid_argument("adam learning rate must be positive");
}

void AdamOptimizer::step(ParamStore& params) {
    ++step_count_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (auto& [name, p] : params.all()) {
        if (!p.requires_grad()) continue;
        auto& [m, v] = moments_[name];
        if (m.empty()) {
            m.assign(p.data().size(), 0.0);
            v.assign(p.data().size(), 0.0);
        }
        const auto& g = p.grad();  // sized (zero) even if backward never touched it
        auto& data = p.data();
        for (size_t i = 0; i < data.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace dhen
