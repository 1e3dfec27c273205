#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dhen {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // sized lazily, matches data when present
};

// Value-semantic handle over a shared buffer. Ops never mutate existing
// tensors except gradient accumulation and optimizer in-place updates.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t size() const { return static_cast<int64_t>(impl_->data.size()); }
    int64_t dim(int i) const;
    int ndim() const { return static_cast<int>(impl_->shape.size()); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    // Ensures the grad buffer exists (zero-filled) and returns it.
    std::vector<double>& grad();
    bool has_grad() const { return !impl_->grad.empty(); }
    void zero_grad();

    bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of primitive applications. Entry k only reads tensors
// produced at entries < k or leaves, so one reverse sweep suffices.
class Tape {
public:
    void record(Tensor output, std::function<void()> backward_fn) {
        entries_.push_back({std::move(output), std::move(backward_fn)});
    }
    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    // Resets the grads of recorded op outputs, seeds d(loss)/d(loss) = 1
    // and accumulates into every leaf. Leaf grads are never reset here, so
    // repeated backward calls add up.
    void backward(Tensor loss);

private:
    struct Entry {
        Tensor output;
        std::function<void()> fn;
    };
    std::vector<Entry> entries_;
};

void check_finite(const Tensor& t, const char* op_name);

}  // namespace dhen
