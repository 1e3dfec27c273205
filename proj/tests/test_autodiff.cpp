#include <cmath>

#include "doctest.h"
#include "dhen/grad_check.hpp"
#include "dhen/ops.hpp"
#include "dhen/params.hpp"
#include "dhen/rng.hpp"

using namespace dhen;

namespace {
Tensor random_tensor(Shape shape, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> data(static_cast<size_t>(numel(shape)));
    for (auto& v : data) v = rng.gaussian();
    return Tensor(std::move(shape), std::move(data));
}
}  // namespace

TEST_CASE("backward of sum of squares gives 2w") {
    Tensor w({2}, {3.0, -2.0}, true);
    Tape tape;
    Tensor loss = ops::sum_all(&tape, ops::mul(&tape, w, w));
    tape.backward(loss);
    CHECK(w.grad()[0] == doctest::Approx(6.0).epsilon(1e-15));
    CHECK(w.grad()[1] == doctest::Approx(-4.0).epsilon(1e-15));
}

TEST_CASE("backward of sigmoid at zero gives a quarter") {
    Tensor w = Tensor::scalar(0.0, true);
    Tape tape;
    Tensor loss = ops::sum_all(&tape, ops::sigmoid(&tape, w));
    tape.backward(loss);
    CHECK(w.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("repeated backward without zero_grad accumulates") {
    Tensor w({2}, {3.0, -2.0}, true);
    Tape tape;
    Tensor loss = ops::sum_all(&tape, ops::mul(&tape, w, w));
    tape.backward(loss);
    std::vector<double> once = w.grad();
    tape.backward(loss);
    for (size_t i = 0; i < once.size(); ++i) CHECK(w.grad()[i] == 2.0 * once[i]);
}

TEST_CASE("backward twice with zero_grad in between is bit-identical") {
    Tensor x = random_tensor({3, 4}, 5);
    x.set_requires_grad(true);
    auto run = [&]() {
        x.zero_grad();
        Tape tape;
        Tensor h = ops::relu(&tape, ops::matmul(&tape, x, random_tensor({4, 2}, 6)));
        Tensor loss = ops::sum_all(&tape, ops::sigmoid(&tape, h));
        tape.backward(loss);
        return x.grad();
    };
    CHECK(run() == run());
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor w({2}, {1.0, 2.0}, true);
    Tape tape;
    Tensor y = ops::mul(&tape, w, w);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("grad_check on a quadratic is near machine precision") {
    auto fn = [](Tape& tape, std::vector<Tensor>& in) {
        return ops::sum_all(&tape, ops::mul(&tape, in[0], in[0]));
    };
    CHECK(grad_check(fn, {random_tensor({3, 4}, 1)}, 1e-5) < 1e-9);
}

TEST_CASE("grad_check flags an intentionally wrong gradient") {
    // Forward is sum(x), analytic gradient recorded with flipped sign.
    auto fn = [](Tape& tape, std::vector<Tensor>& in) {
        Tensor x = in[0];
        Tensor y(x.shape(), x.data(), true);
        tape.record(y, [x, y]() mutable {
            auto& g = x.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] -= y.grad()[i];  // wrong sign
        });
        return ops::sum_all(&tape, y);
    };
    double err = grad_check(fn, {random_tensor({4}, 2)}, 1e-5);
    CHECK(err == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("grad_check rejects a non-deterministic function") {
    int calls = 0;
    auto fn = [&calls](Tape& tape, std::vector<Tensor>& in) {
        ++calls;
        return ops::sum_all(&tape, ops::dropout(&tape, in[0], 0.5, true, static_cast<uint64_t>(calls)));
    };
    CHECK_THROWS_WITH_AS(grad_check(fn, {random_tensor({64}, 3)}, 1e-5),
                         doctest::Contains("fix all seeds"), std::runtime_error);
}

TEST_CASE("every primitive passes grad_check on random small shapes") {
    auto check = [](const ScalarFn& fn, std::vector<Tensor> inputs, double tol = 1e-6) {
        CHECK(grad_check(fn, std::move(inputs), 1e-5) < tol);
    };

    check([](Tape& t, std::vector<Tensor>& in) { return ops::sum_all(&t, ops::matmul(&t, in[0], in[1])); },
          {random_tensor({3, 5}, 10), random_tensor({5, 4}, 11)});
    check([](Tape& t, std::vector<Tensor>& in) { return ops::sum_all(&t, ops::matmul(&t, in[0], in[1])); },
          {random_tensor({2, 3, 5}, 12), random_tensor({2, 5, 4}, 13)});
    check([](Tape& t, std::vector<Tensor>& in) { return ops::sum_all(&t, ops::matmul(&t, in[0], in[1])); },
          {random_tensor({2, 3, 5}, 14), random_tensor({5, 4}, 15)});
    check([](Tape& t, std::vector<Tensor>& in) {
        return ops::sum_all(&t, ops::sigmoid(&t, ops::add(&t, in[0], in[1])));
    },
          {random_tensor({4, 3}, 16), random_tensor({3}, 17)});
    check([](Tape& t, std::vector<Tensor>& in) {
        return ops::sum_all(&t, ops::exp(&t, ops::sub(&t, in[0], in[1])));
    },
          {random_tensor({4, 3}, 18), random_tensor({4, 3}, 19)});
    check([](Tape& t, std::vector<Tensor>& in) { return ops::sum_all(&t, ops::mul(&t, in[0], in[1])); },
          {random_tensor({2, 4, 3}, 20), random_tensor({2, 4}, 21)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor sm = ops::softmax(&t, in[0], 1);
        return ops::sum_all(&t, ops::mul(&t, sm, in[1]));
    },
          {random_tensor({3, 6}, 22), random_tensor({3, 6}, 23)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor ln = ops::layer_norm(&t, in[0], 1e-5);
        return ops::sum_all(&t, ops::mul(&t, ln, in[1]));
    },
          {random_tensor({4, 5}, 24), random_tensor({4, 5}, 25)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
        Tensor y = ops::batch_norm(&t, in[0], in[1], in[2], rm, rv, true, 0.1, 1e-5);
        return ops::sum_all(&t, ops::sigmoid(&t, y));
    },
          {random_tensor({6, 3}, 26), random_tensor({3}, 27), random_tensor({3}, 28)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor y = ops::dropout(&t, in[0], 0.4, true, 77);
        return ops::sum_all(&t, ops::mul(&t, y, y));
    },
          {random_tensor({5, 5}, 29)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor y = ops::embedding_lookup(&t, in[0], {1, 3, 1});
        return ops::sum_all(&t, ops::mul(&t, y, y));
    },
          {random_tensor({5, 4}, 30)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor y = ops::concat(&t, {in[0], in[1]}, 1);
        return ops::sum_all(&t, ops::mul(&t, y, y));
    },
          {random_tensor({3, 2}, 31), random_tensor({3, 4}, 32)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor y = ops::slice(&t, in[0], 1, 1, 3);
        return ops::sum_all(&t, ops::mul(&t, y, y));
    },
          {random_tensor({3, 6}, 33)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor y = ops::reshape(&t, in[0], {6, 2});
        return ops::sum_all(&t, ops::mul(&t, y, y));
    },
          {random_tensor({3, 4}, 34)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor y = ops::mean_pool(&t, in[0], 1);
        return ops::sum_all(&t, ops::mul(&t, y, y));
    },
          {random_tensor({3, 4, 2}, 35)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor y = ops::sum_pool(&t, in[0], 0);
        return ops::sum_all(&t, ops::sigmoid(&t, y));
    },
          {random_tensor({3, 4}, 36)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor y = ops::gather_rows(&t, in[0], {2, 0, 2});
        return ops::sum_all(&t, ops::mul(&t, y, y));
    },
          {random_tensor({4, 3}, 37)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor y = ops::transpose_last2(&t, in[0]);
        return ops::sum_all(&t, ops::matmul(&t, in[0], y));
    },
          {random_tensor({2, 3, 4}, 38)});
    check([](Tape& t, std::vector<Tensor>& in) {
        return ops::bce_with_logits_mean(&t, in[0], {1, 0, 1, 0}, {1, 1, 0, 1});
    },
          {random_tensor({4}, 39)});
    check([](Tape& t, std::vector<Tensor>& in) {
        Tensor y = ops::relu(&t, ops::scale(&t, in[0], 1.7));
        return ops::sum_all(&t, ops::mul(&t, y, in[0]));
    },
          {random_tensor({4, 4}, 40)});
}

TEST_CASE("gradient of embedding lookup touches only looked-up rows") {
    Tensor table = random_tensor({6, 3}, 50);
    table.set_requires_grad(true);
    Tape tape;
    Tensor y = ops::embedding_lookup(&tape, table, {2});
    tape.backward(ops::sum_all(&tape, y));
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(table.grad()[static_cast<size_t>(r * 3 + c)] == (r == 2 ? 1.0 : 0.0));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    ParamStore params(1);
    Tensor w = params.get_or_create("w", {4});
    std::vector<double> before = w.data();
    w.grad();  // sized zeros
    AdamOptimizer opt(0.1);
    opt.step(params);
    CHECK(w.data() == before);
}

TEST_CASE("adam single step with unit gradient moves by about lr") {
    ParamStore params(1);
    Tensor w = params.get_or_create("w", {1}, Init::Ones);
    w.grad()[0] = 1.0;
    AdamOptimizer opt(0.1);
    opt.step(params);
    // bias-corrected mhat = 1, vhat = 1 so delta = lr / (1 + eps)
    CHECK(w.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam trajectories mirror from symmetric starts") {
    ParamStore pa(1), pb(1);
    Tensor wa = pa.get_or_create("w", {1}, Init::Zeros);
    Tensor wb = pb.get_or_create("w", {1}, Init::Zeros);
    wa.data()[0] = 2.0;
    wb.data()[0] = -2.0;
    AdamOptimizer oa(0.05), ob(0.05);
    for (int i = 0; i < 2; ++i) {
        wa.zero_grad();
        wb.zero_grad();
        wa.grad()[0] = 2.0 * wa.data()[0];  // d/dw w^2
        wb.grad()[0] = 2.0 * wb.data()[0];
        oa.step(pa);
        ob.step(pb);
        CHECK(wa.data()[0] == -wb.data()[0]);
    }
}

TEST_CASE("adam rejects non-positive learning rate") {
    CHECK_THROWS_AS(AdamOptimizer(0.0), std::invalid_argument);
}
