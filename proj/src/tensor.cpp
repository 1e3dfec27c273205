#include "dhen/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dhen {

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    for (int64_t d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
    }
    if (numel(shape) != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument("tensor shape " + shape_str(shape) + " does not match buffer length " +
                                    std::to_string(data.size()));
    }
    impl_ = std::make_shared<TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = static_cast<size_t>(numel(shape));
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = static_cast<size_t>(numel(shape));
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

int64_t Tensor::dim(int i) const {
    if (i < 0) i += ndim();
    if (i < 0 || i >= ndim()) throw std::out_of_range("tensor dim index out of range");
    return impl_->shape[static_cast<size_t>(i)];
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() requires a scalar tensor, shape is " + shape_str(shape()));
    return impl_->data[0];
}

std::vector<double>& Tensor::grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
}

void Tape::backward(Tensor loss) {
    if (entries_.empty()) throw std::runtime_error("backward on an empty tape");
    if (loss.size() != 1) throw std::invalid_argument("backward requires a scalar loss, shape is " + shape_str(loss.shape()));
    for (auto& e : entries_) e.output.zero_grad();
    loss.grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
}

void check_finite(const Tensor& t, const char* op_name) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string("non-finite value produced by ") + op_name);
        }
    }
}

}  // namespace dhen
