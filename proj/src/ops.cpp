#include "dhen/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "dhen/rng.hpp"

namespace dhen::ops {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

bool track(Tape* tape, std::initializer_list<const Tensor*> ins) {
    if (!tape) return false;
    for (const Tensor* t : ins)
        if (t->requires_grad()) return true;
    return false;
}

// C[M,N] += A[M,K] * B[K,N]
void mm_nn(double* c, const double* a, const double* b, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ar = a + i * k;
        double* cr = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = ar[p];
            const double* br = b + p * n;
            for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
void mm_nt(double* c, const double* a, const double* b, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ar = a + i * k;
        double* cr = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* br = b + j * k;
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) s += ar[p] * br[p];
            cr[j] += s;
        }
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
void mm_tn(double* c, const double* a, const double* b, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < k; ++p) {
        const double* ar = a + p * m;
        const double* br = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            double av = ar[i];
            double* cr = c + i * n;
            for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

struct AxisSplit {
    int64_t outer, axis, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
    require(axis >= 0 && axis < static_cast<int>(s.size()), "axis out of range for shape " + shape_str(s));
    AxisSplit r{1, s[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

Tensor unary(Tape* tape, const Tensor& a, const char* name, const std::function<double(double)>& f,
             const std::function<double(double, double)>& dfdx_from_xy) {
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i]);
    Tensor y(a.shape(), std::move(out), a.requires_grad());
    check_finite(y, name);
    if (track(tape, {&a})) {
        Tensor ax = a, yx = y;
        tape->record(yx, [ax, yx, dfdx_from_xy]() mutable {
            auto& g = ax.grad();
            const auto& og = yx.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += og[i] * dfdx_from_xy(ax.data()[i], yx.data()[i]);
        });
    }
    return y;
}

enum class Bcast { Same, LastVec, DropLast };

Bcast broadcast_mode(const Tensor& a, const Tensor& b, const char* name) {
    if (a.shape() == b.shape()) return Bcast::Same;
    if (b.ndim() == 1 && a.ndim() >= 2 && b.dim(0) == a.dim(-1)) return Bcast::LastVec;
    if (b.ndim() == a.ndim() - 1) {
        Shape prefix(a.shape().begin(), a.shape().end() - 1);
        if (prefix == b.shape()) return Bcast::DropLast;
    }
    throw std::invalid_argument(std::string(name) + ": incompatible shapes " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    require(a.ndim() >= 2 && b.ndim() >= 2, "matmul requires rank >= 2 operands");
    int64_t m, k, n, batches;
    bool b_broadcast = false;
    if (a.ndim() == 2 && b.ndim() == 2) {
        batches = 1;
        m = a.dim(0); k = a.dim(1); n = b.dim(1);
        require(b.dim(0) == k, "matmul inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    } else if (a.ndim() == 3 && b.ndim() == 3) {
        batches = a.dim(0);
        require(b.dim(0) == batches, "batched matmul batch dims differ");
        m = a.dim(1); k = a.dim(2); n = b.dim(2);
        require(b.dim(1) == k, "matmul inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    } else if (a.ndim() == 3 && b.ndim() == 2) {
        batches = a.dim(0);
        b_broadcast = true;
        m = a.dim(1); k = a.dim(2); n = b.dim(1);
        require(b.dim(0) == k, "matmul inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    } else {
        throw std::invalid_argument("matmul supports 2Dx2D, 3Dx3D, 3Dx2D; got " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    }
    Shape out_shape = (a.ndim() == 2) ? Shape{m, n} : Shape{batches, m, n};
    Tensor y = Tensor::zeros(out_shape, a.requires_grad() || b.requires_grad());
    for (int64_t bi = 0; bi < batches; ++bi) {
        const double* pb = b.data().data() + (b_broadcast ? 0 : bi * k * n);
        mm_nn(y.data().data() + bi * m * n, a.data().data() + bi * m * k, pb, m, k, n);
    }
    check_finite(y, "matmul");
    if (track(tape, {&a, &b})) {
        Tensor ax = a, bx = b, yx = y;
        tape->record(yx, [ax, bx, yx, m, k, n, batches, b_broadcast]() mutable {
            const auto& og = yx.grad();
            if (ax.requires_grad()) {
                auto& ga = ax.grad();
                for (int64_t bi = 0; bi < batches; ++bi) {
                    const double* pb = bx.data().data() + (b_broadcast ? 0 : bi * k * n);
                    mm_nt(ga.data() + bi * m * k, og.data() + bi * m * n, pb, m, n, k);
                }
            }
            if (bx.requires_grad()) {
                auto& gb = bx.grad();
                for (int64_t bi = 0; bi < batches; ++bi) {
                    double* pgb = gb.data() + (b_broadcast ? 0 : bi * k * n);
                    mm_tn(pgb, ax.data().data() + bi * m * k, og.data() + bi * m * n, k, m, n);
                }
            }
        });
    }
    return y;
}

Tensor transpose_last2(Tape* tape, const Tensor& a) {
    require(a.ndim() >= 2, "transpose_last2 requires rank >= 2");
    Shape s = a.shape();
    int64_t r = s[s.size() - 2], c = s[s.size() - 1];
    std::swap(s[s.size() - 2], s[s.size() - 1]);
    int64_t batches = numel(a.shape()) / (r * c);
    Tensor y = Tensor::zeros(s, a.requires_grad());
    for (int64_t bi = 0; bi < batches; ++bi) {
        const double* in = a.data().data() + bi * r * c;
        double* out = y.data().data() + bi * r * c;
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
    }
    if (track(tape, {&a})) {
        Tensor ax = a, yx = y;
        tape->record(yx, [ax, yx, r, c, batches]() mutable {
            auto& g = ax.grad();
            const auto& og = yx.grad();
            for (int64_t bi = 0; bi < batches; ++bi) {
                const double* in = og.data() + bi * r * c;
                double* out = g.data() + bi * r * c;
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j) out[i * c + j] += in[j * r + i];
            }
        });
    }
    return y;
}

namespace {

Tensor add_like(Tape* tape, const Tensor& a, const Tensor& b, double sign, const char* name) {
    Bcast mode = broadcast_mode(a, b, name);
    std::vector<double> out(a.data());
    int64_t last = (a.ndim() >= 1) ? a.dim(-1) : 1;
    if (mode == Bcast::Same) {
        for (size_t i = 0; i < out.size(); ++i) out[i] += sign * b.data()[i];
    } else if (mode == Bcast::LastVec) {
        for (size_t i = 0; i < out.size(); ++i) out[i] += sign * b.data()[i % static_cast<size_t>(last)];
    } else {
        for (size_t i = 0; i < out.size(); ++i) out[i] += sign * b.data()[i / static_cast<size_t>(last)];
    }
    Tensor y(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    check_finite(y, name);
    if (track(tape, {&a, &b})) {
        Tensor ax = a, bx = b, yx = y;
        tape->record(yx, [ax, bx, yx, sign, mode, last]() mutable {
            const auto& og = yx.grad();
            if (ax.requires_grad()) {
                auto& g = ax.grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += og[i];
            }
            if (bx.requires_grad()) {
                auto& g = bx.grad();
                if (mode == Bcast::Same) {
                    for (size_t i = 0; i < g.size(); ++i) g[i] += sign * og[i];
                } else if (mode == Bcast::LastVec) {
                    for (size_t i = 0; i < og.size(); ++i) g[i % static_cast<size_t>(last)] += sign * og[i];
                } else {
                    for (size_t i = 0; i < og.size(); ++i) g[i / static_cast<size_t>(last)] += sign * og[i];
                }
            }
        });
    }
    return y;
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) { return add_like(tape, a, b, 1.0, "add"); }
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) { return add_like(tape, a, b, -1.0, "sub"); }

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    Bcast mode = broadcast_mode(a, b, "mul");
    std::vector<double> out(a.data());
    int64_t last = a.dim(-1);
    auto bval = [&](size_t i) {
        if (mode == Bcast::Same) return b.data()[i];
        if (mode == Bcast::LastVec) return b.data()[i % static_cast<size_t>(last)];
        return b.data()[i / static_cast<size_t>(last)];
    };
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bval(i);
    Tensor y(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    check_finite(y, "mul");
    if (track(tape, {&a, &b})) {
        Tensor ax = a, bx = b, yx = y;
        tape->record(yx, [ax, bx, yx, mode, last]() mutable {
            const auto& og = yx.grad();
            auto bval = [&](size_t i) {
                if (mode == Bcast::Same) return bx.data()[i];
                if (mode == Bcast::LastVec) return bx.data()[i % static_cast<size_t>(last)];
                return bx.data()[i / static_cast<size_t>(last)];
            };
            if (ax.requires_grad()) {
                auto& g = ax.grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += og[i] * bval(i);
            }
            if (bx.requires_grad()) {
                auto& g = bx.grad();
                if (mode == Bcast::Same) {
                    for (size_t i = 0; i < g.size(); ++i) g[i] += og[i] * ax.data()[i];
                } else if (mode == Bcast::LastVec) {
                    for (size_t i = 0; i < og.size(); ++i) g[i % static_cast<size_t>(last)] += og[i] * ax.data()[i];
                } else {
                    for (size_t i = 0; i < og.size(); ++i) g[i / static_cast<size_t>(last)] += og[i] * ax.data()[i];
                }
            }
        });
    }
    return y;
}

Tensor scale(Tape* tape, const Tensor& a, double c) {
    return unary(tape, a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor sigmoid(Tape* tape, const Tensor& a) {
    return unary(
        tape, a, "sigmoid",
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(Tape* tape, const Tensor& a) {
    return unary(tape, a, "relu", [](double x) { return x > 0 ? x : 0.0; },
                 [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor log(Tape* tape, const Tensor& a) {
    return unary(tape, a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(Tape* tape, const Tensor& a) {
    return unary(tape, a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor softmax(Tape* tape, const Tensor& a, int axis) {
    if (axis < 0) axis += a.ndim();
    auto sp = split_axis(a.shape(), axis);
    require(sp.axis >= 1, "softmax on empty axis");
    std::vector<double> out(a.data().size());
    for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
            const int64_t base = o * sp.axis * sp.inner + in;
            double mx = -HUGE_VAL;
            for (int64_t t = 0; t < sp.axis; ++t) mx = std::max(mx, a.data()[base + t * sp.inner]);
            double z = 0.0;
            for (int64_t t = 0; t < sp.axis; ++t) {
                double e = std::exp(a.data()[base + t * sp.inner] - mx);
                out[static_cast<size_t>(base + t * sp.inner)] = e;
                z += e;
            }
            for (int64_t t = 0; t < sp.axis; ++t) out[static_cast<size_t>(base + t * sp.inner)] /= z;
        }
    }
    Tensor y(a.shape(), std::move(out), a.requires_grad());
    check_finite(y, "softmax");
    if (track(tape, {&a})) {
        Tensor ax = a, yx = y;
        tape->record(yx, [ax, yx, sp]() mutable {
            auto& g = ax.grad();
            const auto& og = yx.grad();
            const auto& s = yx.data();
            for (int64_t o = 0; o < sp.outer; ++o) {
                for (int64_t in = 0; in < sp.inner; ++in) {
                    const int64_t base = o * sp.axis * sp.inner + in;
                    double dot = 0.0;
                    for (int64_t t = 0; t < sp.axis; ++t) {
                        size_t i = static_cast<size_t>(base + t * sp.inner);
                        dot += og[i] * s[i];
                    }
                    for (int64_t t = 0; t < sp.axis; ++t) {
                        size_t i = static_cast<size_t>(base + t * sp.inner);
                        g[i] += s[i] * (og[i] - dot);
                    }
                }
            }
        });
    }
    return y;
}

Tensor layer_norm(Tape* tape, const Tensor& a, double eps) {
    require(a.ndim() >= 1, "layer_norm requires rank >= 1");
    int64_t d = a.dim(-1);
    require(d >= 1, "layer_norm on empty axis");
    int64_t rows = a.size() / d;
    std::vector<double> out(a.data().size());
    std::vector<double> inv_sigma(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = a.data().data() + r * d;
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += x[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<double>(d);
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<size_t>(r)] = is;
        for (int64_t j = 0; j < d; ++j) out[static_cast<size_t>(r * d + j)] = (x[j] - mu) * is;
    }
    Tensor y(a.shape(), std::move(out), a.requires_grad());
    check_finite(y, "layer_norm");
    if (track(tape, {&a})) {
        Tensor ax = a, yx = y;
        tape->record(yx, [ax, yx, rows, d, inv_sigma = std::move(inv_sigma)]() mutable {
            auto& g = ax.grad();
            const auto& og = yx.grad();
            const auto& xh = yx.data();
            for (int64_t r = 0; r < rows; ++r) {
                double gm = 0.0, gx = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    gm += og[static_cast<size_t>(r * d + j)];
                    gx += og[static_cast<size_t>(r * d + j)] * xh[static_cast<size_t>(r * d + j)];
                }
                gm /= static_cast<double>(d);
                gx /= static_cast<double>(d);
                double is = inv_sigma[static_cast<size_t>(r)];
                for (int64_t j = 0; j < d; ++j) {
                    size_t i = static_cast<size_t>(r * d + j);
                    g[i] += is * (og[i] - gm - xh[i] * gx);
                }
            }
        });
    }
    return y;
}

Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor running_mean,
                  Tensor running_var, bool train, double momentum, double eps) {
    require(x.ndim() == 2, "batch_norm expects a B x D input, got " + shape_str(x.shape()));
    int64_t n = x.dim(0), d = x.dim(1);
    require(gamma.size() == d && beta.size() == d, "batch_norm scale/shift size mismatch");
    require(running_mean.size() == d && running_var.size() == d, "batch_norm running stat size mismatch");
    if (train) require(n >= 2, "batch_norm in train mode needs batch size >= 2 (unbiased variance)");

    std::vector<double> mean(static_cast<size_t>(d), 0.0), var(static_cast<size_t>(d), 0.0);
    if (train) {
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += x.data()[static_cast<size_t>(i * d + j)];
        for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] /= static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < d; ++j) {
                double c = x.data()[static_cast<size_t>(i * d + j)] - mean[static_cast<size_t>(j)];
                var[static_cast<size_t>(j)] += c * c;
            }
        for (int64_t j = 0; j < d; ++j) var[static_cast<size_t>(j)] /= static_cast<double>(n - 1);
        for (int64_t j = 0; j < d; ++j) {
            running_mean.data()[static_cast<size_t>(j)] =
                (1.0 - momentum) * running_mean.data()[static_cast<size_t>(j)] + momentum * mean[static_cast<size_t>(j)];
            running_var.data()[static_cast<size_t>(j)] =
                (1.0 - momentum) * running_var.data()[static_cast<size_t>(j)] + momentum * var[static_cast<size_t>(j)];
        }
    } else {
        mean.assign(running_mean.data().begin(), running_mean.data().end());
        var.assign(running_var.data().begin(), running_var.data().end());
    }

    std::vector<double> xhat(x.data().size());
    std::vector<double> inv_s(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j) inv_s[static_cast<size_t>(j)] = 1.0 / std::sqrt(var[static_cast<size_t>(j)] + eps);
    std::vector<double> out(x.data().size());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) {
            size_t ix = static_cast<size_t>(i * d + j);
            xhat[ix] = (x.data()[ix] - mean[static_cast<size_t>(j)]) * inv_s[static_cast<size_t>(j)];
            out[ix] = gamma.data()[static_cast<size_t>(j)] * xhat[ix] + beta.data()[static_cast<size_t>(j)];
        }
    Tensor y(x.shape(), std::move(out), x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    check_finite(y, "batch_norm");
    if (track(tape, {&x, &gamma, &beta})) {
        Tensor xx = x, gx = gamma, bx = beta, yx = y;
        tape->record(yx, [xx, gx, bx, yx, n, d, train, xhat = std::move(xhat), inv_s = std::move(inv_s)]() mutable {
            const auto& og = yx.grad();
            for (int64_t j = 0; j < d; ++j) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (int64_t i = 0; i < n; ++i) {
                    size_t ix = static_cast<size_t>(i * d + j);
                    sum_g += og[ix];
                    sum_gx += og[ix] * xhat[ix];
                }
                if (gx.requires_grad()) gx.grad()[static_cast<size_t>(j)] += sum_gx;
                if (bx.requires_grad()) bx.grad()[static_cast<size_t>(j)] += sum_g;
                if (xx.requires_grad()) {
                    double gam = gx.data()[static_cast<size_t>(j)];
                    double is = inv_s[static_cast<size_t>(j)];
                    for (int64_t i = 0; i < n; ++i) {
                        size_t ix = static_cast<size_t>(i * d + j);
                        if (train) {
                            xx.grad()[ix] += gam * is *
                                             (og[ix] - sum_g / static_cast<double>(n) -
                                              xhat[ix] * sum_gx / static_cast<double>(n - 1));
                        } else {
                            xx.grad()[ix] += gam * is * og[ix];
                        }
                    }
                }
            }
        });
    }
    return y;
}

Tensor dropout(Tape* tape, const Tensor& x, double rate, bool train, uint64_t seed) {
    require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0, 1)");
    if (!train || rate == 0.0) return x;
    Rng rng(mix_keys(seed, 0x64726f70ULL));
    double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.data().size());
    for (auto& m : mask) m = rng.uniform() >= rate ? keep_scale : 0.0;
    std::vector<double> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (track(tape, {&x})) {
        Tensor xx = x, yx = y;
        tape->record(yx, [xx, yx, mask = std::move(mask)]() mutable {
            auto& g = xx.grad();
            const auto& og = yx.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += og[i] * mask[i];
        });
    }
    return y;
}

Tensor embedding_lookup(Tape* tape, const Tensor& table, const std::vector<int64_t>& ids) {
    require(table.ndim() == 2, "embedding table must be 2D");
    int64_t v = table.dim(0), e = table.dim(1);
    for (int64_t id : ids) require(id >= 0 && id < v, "embedding id " + std::to_string(id) + " out of range");
    int64_t n = static_cast<int64_t>(ids.size());
    Tensor y = Tensor::zeros({n, e}, table.requires_grad());
    for (int64_t i = 0; i < n; ++i)
        std::copy_n(table.data().data() + ids[static_cast<size_t>(i)] * e, e, y.data().data() + i * e);
    if (track(tape, {&table})) {
        Tensor tx = table, yx = y;
        tape->record(yx, [tx, yx, ids, e]() mutable {
            auto& g = tx.grad();
            const auto& og = yx.grad();
            for (size_t i = 0; i < ids.size(); ++i)
                for (int64_t j = 0; j < e; ++j)
                    g[static_cast<size_t>(ids[i] * e + j)] += og[i * static_cast<size_t>(e) + static_cast<size_t>(j)];
        });
    }
    return y;
}

Tensor concat(Tape* tape, const std::vector<Tensor>& parts, int axis) {
    require(!parts.empty(), "concat of zero tensors");
    const Tensor& first = parts.front();
    if (axis < 0) axis += first.ndim();
    Shape out_shape = first.shape();
    bool needs_grad = false;
    for (const Tensor& p : parts) {
        require(p.ndim() == first.ndim(), "concat rank mismatch");
        for (int i = 0; i < first.ndim(); ++i)
            if (i != axis) require(p.dim(i) == first.dim(i), "concat non-axis extent mismatch");
        needs_grad = needs_grad || p.requires_grad();
    }
    out_shape[static_cast<size_t>(axis)] = 0;
    for (const Tensor& p : parts) out_shape[static_cast<size_t>(axis)] += p.dim(axis);
    auto osp = split_axis(out_shape, axis);
    Tensor y = Tensor::zeros(out_shape, needs_grad);
    int64_t offset = 0;
    for (const Tensor& p : parts) {
        int64_t pa = p.dim(axis);
        for (int64_t o = 0; o < osp.outer; ++o) {
            std::copy_n(p.data().data() + o * pa * osp.inner, pa * osp.inner,
                        y.data().data() + (o * osp.axis + offset) * osp.inner);
        }
        offset += pa;
    }
    bool any_grad = false;
    for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
    if (tape && any_grad) {
        std::vector<Tensor> px = parts;
        Tensor yx = y;
        tape->record(yx, [px, yx, osp, axis]() mutable {
            const auto& og = yx.grad();
            int64_t offset = 0;
            for (Tensor& p : px) {
                int64_t pa = p.dim(axis);
                if (p.requires_grad()) {
                    auto& g = p.grad();
                    for (int64_t o = 0; o < osp.outer; ++o) {
                        const double* src = og.data() + (o * osp.axis + offset) * osp.inner;
                        double* dst = g.data() + o * pa * osp.inner;
                        for (int64_t i = 0; i < pa * osp.inner; ++i) dst[i] += src[i];
                    }
                }
                offset += pa;
            }
        });
    }
    return y;
}

Tensor slice(Tape* tape, const Tensor& x, int axis, int64_t start, int64_t len) {
    if (axis < 0) axis += x.ndim();
    auto sp = split_axis(x.shape(), axis);
    require(start >= 0 && len >= 1 && start + len <= sp.axis, "slice range out of bounds");
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    Tensor y = Tensor::zeros(out_shape, x.requires_grad());
    for (int64_t o = 0; o < sp.outer; ++o)
        std::copy_n(x.data().data() + (o * sp.axis + start) * sp.inner, len * sp.inner,
                    y.data().data() + o * len * sp.inner);
    if (track(tape, {&x})) {
        Tensor xx = x, yx = y;
        tape->record(yx, [xx, yx, sp, start, len]() mutable {
            auto& g = xx.grad();
            const auto& og = yx.grad();
            for (int64_t o = 0; o < sp.outer; ++o) {
                const double* src = og.data() + o * len * sp.inner;
                double* dst = g.data() + (o * sp.axis + start) * sp.inner;
                for (int64_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
            }
        });
    }
    return y;
}

Tensor reshape(Tape* tape, const Tensor& x, Shape new_shape) {
    require(numel(new_shape) == x.size(),
            "reshape to " + shape_str(new_shape) + " changes element count from " + shape_str(x.shape()));
    Tensor y(new_shape, x.data(), x.requires_grad());
    if (track(tape, {&x})) {
        Tensor xx = x, yx = y;
        tape->record(yx, [xx, yx]() mutable {
            auto& g = xx.grad();
            const auto& og = yx.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += og[i];
        });
    }
    return y;
}

Tensor sum_pool(Tape* tape, const Tensor& x, int axis) {
    if (axis < 0) axis += x.ndim();
    auto sp = split_axis(x.shape(), axis);
    Shape out_shape;
    for (int i = 0; i < x.ndim(); ++i)
        if (i != axis) out_shape.push_back(x.dim(i));
    if (out_shape.empty()) out_shape = {1};
    Tensor y = Tensor::zeros(out_shape, x.requires_grad());
    for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t t = 0; t < sp.axis; ++t)
            for (int64_t in = 0; in < sp.inner; ++in)
                y.data()[static_cast<size_t>(o * sp.inner + in)] +=
                    x.data()[static_cast<size_t>((o * sp.axis + t) * sp.inner + in)];
    check_finite(y, "sum_pool");
    if (track(tape, {&x})) {
        Tensor xx = x, yx = y;
        tape->record(yx, [xx, yx, sp]() mutable {
            auto& g = xx.grad();
            const auto& og = yx.grad();
            for (int64_t o = 0; o < sp.outer; ++o)
                for (int64_t t = 0; t < sp.axis; ++t)
                    for (int64_t in = 0; in < sp.inner; ++in)
                        g[static_cast<size_t>((o * sp.axis + t) * sp.inner + in)] +=
                            og[static_cast<size_t>(o * sp.inner + in)];
        });
    }
    return y;
}

Tensor mean_pool(Tape* tape, const Tensor& x, int axis) {
    if (axis < 0) axis += x.ndim();
    return scale(tape, sum_pool(tape, x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor sum_all(Tape* tape, const Tensor& x) {
    Tensor flat = reshape(tape, x, {x.size()});
    return sum_pool(tape, flat, 0);
}

Tensor gather_rows(Tape* tape, const Tensor& x, const std::vector<int64_t>& rows) {
    require(x.ndim() >= 2, "gather_rows needs rank >= 2");
    int64_t nrows = x.dim(0);
    int64_t stride = x.size() / nrows;
    for (int64_t r : rows) require(r >= 0 && r < nrows, "gather_rows index out of range");
    Shape out_shape = x.shape();
    out_shape[0] = static_cast<int64_t>(rows.size());
    Tensor y = Tensor::zeros(out_shape, x.requires_grad());
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy_n(x.data().data() + rows[i] * stride, stride, y.data().data() + static_cast<int64_t>(i) * stride);
    if (track(tape, {&x})) {
        Tensor xx = x, yx = y;
        tape->record(yx, [xx, yx, rows, stride]() mutable {
            auto& g = xx.grad();
            const auto& og = yx.grad();
            for (size_t i = 0; i < rows.size(); ++i)
                for (int64_t j = 0; j < stride; ++j)
                    g[static_cast<size_t>(rows[i] * stride + j)] += og[i * static_cast<size_t>(stride) + static_cast<size_t>(j)];
        });
    }
    return y;
}

Tensor bce_with_logits_mean(Tape* tape, const Tensor& logits, const std::vector<double>& labels,
                            const std::vector<double>& mask) {
    size_t n = logits.data().size();
    require(labels.size() == n && mask.size() == n, "bce labels/mask length mismatch");
    double total_mask = 0.0;
    for (double m : mask) total_mask += m;
    if (total_mask == 0.0) return Tensor::scalar(0.0);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double z = logits.data()[i], y = labels[i];
        double l = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        acc += mask[i] * l;
    }
    Tensor out = Tensor::scalar(acc / total_mask, logits.requires_grad());
    check_finite(out, "bce_with_logits");
    if (track(tape, {&logits})) {
        Tensor lx = logits, ox = out;
        tape->record(ox, [lx, ox, labels, mask, total_mask]() mutable {
            auto& g = lx.grad();
            double og = ox.grad()[0];
            for (size_t i = 0; i < g.size(); ++i) {
                double z = lx.data()[i];
                double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
                g[i] += og * mask[i] * (p - labels[i]) / total_mask;
            }
        });
    }
    return out;
}

}  // namespace dhen::ops
