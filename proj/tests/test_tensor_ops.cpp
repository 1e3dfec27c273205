#include <cmath>

#include "doctest.h"
#include "dhen/ops.hpp"
#include "dhen/rng.hpp"

using namespace dhen;

namespace {
Tensor random_tensor(Shape shape, uint64_t seed, bool requires_grad = false) {
    Rng rng(seed);
    std::vector<double> data(static_cast<size_t>(numel(shape)));
    for (auto& v : data) v = rng.gaussian();
    return Tensor(std::move(shape), std::move(data), requires_grad);
}
}  // namespace

TEST_CASE("sigmoid at zero is one half") {
    Tensor y = ops::sigmoid(nullptr, Tensor::scalar(0.0));
    CHECK(y.item() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("matmul by identity reproduces the input") {
    Tensor a = random_tensor({3, 3}, 7);
    Tensor eye = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye.data()[static_cast<size_t>(i * 3 + i)] = 1.0;
    Tensor y = ops::matmul(nullptr, eye, a);
    for (size_t i = 0; i < 9; ++i) CHECK(y.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-15));
}

TEST_CASE("matmul rejects mismatched inner dims") {
    CHECK_THROWS_AS(ops::matmul(nullptr, Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), std::invalid_argument);
}

TEST_CASE("softmax of a constant row is uniform and sums to one") {
    Tensor y = ops::softmax(nullptr, Tensor::full({4}, 1.0), 0);
    double sum = 0.0;
    for (double v : y.data()) {
        CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
        sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("softmax rows sum to one on random input") {
    Tensor x = random_tensor({5, 7}, 3);
    Tensor y = ops::softmax(nullptr, x, 1);
    for (int r = 0; r < 5; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 7; ++c) sum += y.data()[static_cast<size_t>(r * 7 + c)];
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("layer_norm matches hand-computed values") {
    // (x - mu) / sigma with mu = 4, sigma = sqrt(8/3)
    Tensor y = ops::layer_norm(nullptr, Tensor({3}, {2.0, 4.0, 6.0}), 0.0);
    CHECK(y.data()[0] == doctest::Approx(-1.224744871391589).epsilon(1e-12));
    CHECK(y.data()[1] == doctest::Approx(0.0));
    CHECK(y.data()[2] == doctest::Approx(1.224744871391589).epsilon(1e-12));
}

TEST_CASE("reshape/slice/concat round-trips are bit-exact") {
    Tensor x = random_tensor({4, 6}, 11);
    Tensor r = ops::reshape(nullptr, ops::reshape(nullptr, x, {2, 12}), {4, 6});
    CHECK(r.data() == x.data());

    Tensor left = ops::slice(nullptr, x, 1, 0, 2);
    Tensor right = ops::slice(nullptr, x, 1, 2, 4);
    Tensor back = ops::concat(nullptr, {left, right}, 1);
    CHECK(back.data() == x.data());

    Tensor top = ops::slice(nullptr, x, 0, 0, 1);
    Tensor bottom = ops::slice(nullptr, x, 0, 1, 3);
    CHECK(ops::concat(nullptr, {top, bottom}, 0).data() == x.data());
}

TEST_CASE("dropout eval mode is the identity") {
    Tensor x = random_tensor({10, 10}, 5);
    Tensor y = ops::dropout(nullptr, x, 0.5, /*train=*/false, 99);
    CHECK(y.data() == x.data());
}

TEST_CASE("dropout train mode is seed-deterministic with binomial-consistent zero count") {
    Tensor x = Tensor::full({10000}, 1.0);
    Tensor y1 = ops::dropout(nullptr, x, 0.3, true, 42);
    Tensor y2 = ops::dropout(nullptr, x, 0.3, true, 42);
    CHECK(y1.data() == y2.data());
    int zeros = 0;
    for (double v : y1.data()) {
        if (v == 0.0)
            ++zeros;
        else
            CHECK(v == doctest::Approx(1.0 / 0.7).epsilon(1e-12));
    }
    // 3 sigma around np with n=1e4, p=0.3
    CHECK(zeros > 3000 - 3 * 46);
    CHECK(zeros < 3000 + 3 * 46);
    Tensor y3 = ops::dropout(nullptr, x, 0.3, true, 43);
    CHECK(y1.data() != y3.data());
}

TEST_CASE("batch_norm train mode normalizes per dimension") {
    Tensor x = random_tensor({64, 3}, 21);
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({3});
    Tensor rm = Tensor::zeros({3});
    Tensor rv = Tensor::full({3}, 1.0);
    Tensor y = ops::batch_norm(nullptr, x, gamma, beta, rm, rv, true, 0.1, 1e-5);
    for (int j = 0; j < 3; ++j) {
        double mean = 0.0, var = 0.0;
        for (int i = 0; i < 64; ++i) mean += y.data()[static_cast<size_t>(i * 3 + j)];
        mean /= 64.0;
        for (int i = 0; i < 64; ++i) {
            double c = y.data()[static_cast<size_t>(i * 3 + j)] - mean;
            var += c * c;
        }
        var /= 63.0;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("batch_norm train mode rejects batch size one") {
    Tensor x = Tensor::zeros({1, 3});
    Tensor g = Tensor::full({3}, 1.0), b = Tensor::zeros({3});
    Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
    CHECK_THROWS_AS(ops::batch_norm(nullptr, x, g, b, rm, rv, true, 0.1, 1e-5), std::invalid_argument);
}

TEST_CASE("log of a non-positive value is surfaced as an error") {
    CHECK_THROWS_AS(ops::log(nullptr, Tensor::scalar(0.0)), std::runtime_error);
}

TEST_CASE("sigmoid output stays in the open unit interval") {
    Tensor x = random_tensor({1000}, 17);
    Tensor y = ops::sigmoid(nullptr, ops::scale(nullptr, x, 8.0));
    for (double v : y.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("embedding_lookup copies rows and validates ids") {
    Tensor table = random_tensor({5, 4}, 9);
    Tensor y = ops::embedding_lookup(nullptr, table, {2, 2, 0});
    for (int j = 0; j < 4; ++j) {
        CHECK(y.data()[static_cast<size_t>(j)] == table.data()[static_cast<size_t>(2 * 4 + j)]);
        CHECK(y.data()[static_cast<size_t>(4 + j)] == table.data()[static_cast<size_t>(2 * 4 + j)]);
        CHECK(y.data()[static_cast<size_t>(8 + j)] == table.data()[static_cast<size_t>(j)]);
    }
    CHECK_THROWS_AS(ops::embedding_lookup(nullptr, table, {5}), std::invalid_argument);
}

TEST_CASE("transpose_last2 round-trips") {
    Tensor x = random_tensor({2, 3, 4}, 31);
    Tensor y = ops::transpose_last2(nullptr, ops::transpose_last2(nullptr, x));
    CHECK(y.data() == x.data());
}

TEST_CASE("add broadcasts a bias vector over the last axis") {
    Tensor x = Tensor::zeros({2, 3});
    Tensor b({3}, {1.0, 2.0, 3.0});
    Tensor y = ops::add(nullptr, x, b);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c) CHECK(y.data()[static_cast<size_t>(r * 3 + c)] == doctest::Approx(c + 1.0));
    CHECK_THROWS_AS(ops::add(nullptr, x, Tensor::zeros({4})), std::invalid_argument);
}
