#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "dhen/pareto.hpp"
#include "dhen/rng.hpp"

using namespace dhen;

namespace {

// O(n^2) dominance oracle.
std::set<size_t> front_brute(const std::vector<std::pair<double, double>>& pts) {
    std::set<size_t> out;
    for (size_t p = 0; p < pts.size(); ++p) {
        bool dominated = false;
        for (size_t q = 0; q < pts.size() && !dominated; ++q) {
            if (q == p) continue;
            bool geq = pts[q].first >= pts[p].first && pts[q].second >= pts[p].second;
            bool strict = pts[q].first > pts[p].first || pts[q].second > pts[p].second;
            dominated = geq && strict;
        }
        if (!dominated) out.insert(p);
    }
    return out;
}

SearchSpace toy_space() {
    SearchSpace space;
    space.dimensions = {
        {.name = "depth", .kind = SearchDimension::Kind::IntegerRange, .int_lo = 1, .int_hi = 3},
        {.name = "module", .kind = SearchDimension::Kind::Categorical, .categories = {"mlp", "transformer"}},
        {.name = "lr", .kind = SearchDimension::Kind::LogUniformFloat, .float_lo = 1e-4, .float_hi = 1e-1},
    };
    return space;
}

}  // namespace

TEST_CASE("pareto_front worked example") {
    std::vector<std::pair<double, double>> pts{{1, 1}, {2, 3}, {3, 2}, {0, 4}};
    auto front = pareto_front(pts);
    std::set<size_t> got(front.begin(), front.end());
    CHECK(got == std::set<size_t>{1, 2, 3});
    // sorted by first objective descending
    CHECK(front == std::vector<size_t>{2, 1, 3});
}

TEST_CASE("pareto_front single point and duplicates") {
    CHECK(pareto_front({{0.5, 2.0}}) == std::vector<size_t>{0});
    auto front = pareto_front({{1.0, 1.0}, {1.0, 1.0}, {0.5, 0.5}});
    CHECK(std::set<size_t>(front.begin(), front.end()) == std::set<size_t>{0, 1});
    CHECK(pareto_front({}).empty());
}

TEST_CASE("pareto_front matches brute force on random sets") {
    Rng rng(31415);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + static_cast<int>(rng.uniform_int(500));
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i < n; ++i) {
            // quantized to create ties and duplicates
            pts.emplace_back(std::floor(rng.uniform() * 20.0), std::floor(rng.uniform() * 20.0));
        }
        auto got = pareto_front(pts);
        CHECK(std::set<size_t>(got.begin(), got.end()) == front_brute(pts));
    }
}

TEST_CASE("pareto_front is invariant under monotone transforms of each objective") {
    Rng rng(99);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 100; ++i) pts.emplace_back(rng.uniform(), rng.uniform());
    auto base = pareto_front(pts);
    std::vector<std::pair<double, double>> warped;
    for (auto [a, b] : pts) warped.emplace_back(std::exp(a), std::log1p(b) * 7.0);
    auto got = pareto_front(warped);
    CHECK(std::set<size_t>(base.begin(), base.end()) == std::set<size_t>(got.begin(), got.end()));
}

TEST_CASE("adding a dominated point never changes the front") {
    std::vector<std::pair<double, double>> pts{{2, 3}, {3, 2}, {0, 4}};
    auto base = front_brute(pts);
    pts.emplace_back(1.0, 1.0);
    auto got = pareto_front(pts);
    CHECK(std::set<size_t>(got.begin(), got.end()) == base);
}

TEST_CASE("a dominating point evicts exactly the dominated members") {
    std::vector<std::pair<double, double>> pts{{2, 3}, {3, 2}, {0, 4}, {3.5, 2.5}};  // dominates (3,2) only
    auto got = pareto_front(pts);
    CHECK(std::set<size_t>(got.begin(), got.end()) == std::set<size_t>{0, 2, 3});
}

TEST_CASE("sampling is deterministic, uniform, and respects categories") {
    SearchSpace space = toy_space();
    auto a = sample_assignments(space, 50, 7);
    auto b = sample_assignments(space, 50, 7);
    CHECK(a.size() == 50);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    auto big = sample_assignments(space, 30000, 11);
    std::map<int64_t, int64_t> depth_counts;
    for (const auto& s : big) depth_counts[std::get<int64_t>(s.at("depth"))]++;
    for (auto [v, c] : depth_counts) {
        CHECK(static_cast<double>(c) / 30000.0 == doctest::Approx(1.0 / 3.0).epsilon(0.06));
    }
    for (const auto& s : big) {
        double lr = std::get<double>(s.at("lr"));
        CHECK(lr >= 1e-4);
        CHECK(lr <= 1e-1);
    }

    SearchSpace single;
    single.dimensions = {{.name = "m", .kind = SearchDimension::Kind::Categorical, .categories = {"a"}}};
    for (const auto& s : sample_assignments(single, 10, 1)) CHECK(std::get<std::string>(s.at("m")) == "a");
}

TEST_CASE("impossible constraints are reported") {
    SearchSpace space = toy_space();
    space.constraint = [](const Assignment&) { return false; };
    CHECK_THROWS_AS(sample_assignments(space, 5, 3), std::runtime_error);
}

TEST_CASE("surrogate recovers a planted linear function") {
    SearchSpace space = toy_space();
    auto samples = sample_assignments(space, 60, 5);
    std::vector<CandidateResult> results;
    uint64_t i = 0;
    for (const auto& a : samples) {
        double depth = static_cast<double>(std::get<int64_t>(a.at("depth")));
        double is_tf = std::get<std::string>(a.at("module")) == "transformer" ? 1.0 : 0.0;
        double loglr = std::log(std::get<double>(a.at("lr")));
        CandidateResult r;
        r.assignment = a;
        r.auc = 0.5 + 0.03 * depth + 0.02 * is_tf + 0.004 * loglr + 0.1;
        r.throughput = std::exp(8.0 - 0.9 * depth - 0.5 * is_tf);
        r.seed = i++;
        results.push_back(r);
    }
    Surrogate s = Surrogate::fit(space, results, 1e-8);
    CHECK(s.r2_auc() > 0.999);
    CHECK(s.r2_log_throughput() > 0.999);

    // out-of-sample exactness on fresh draws
    auto fresh = sample_assignments(space, 20, 123);
    auto preds = s.predict(fresh);
    for (size_t k = 0; k < fresh.size(); ++k) {
        double depth = static_cast<double>(std::get<int64_t>(fresh[k].at("depth")));
        double is_tf = std::get<std::string>(fresh[k].at("module")) == "transformer" ? 1.0 : 0.0;
        double loglr = std::log(std::get<double>(fresh[k].at("lr")));
        CHECK(preds[k].first == doctest::Approx(0.6 + 0.03 * depth + 0.02 * is_tf + 0.004 * loglr).epsilon(1e-4));
        CHECK(preds[k].second == doctest::Approx(std::exp(8.0 - 0.9 * depth - 0.5 * is_tf)).epsilon(1e-3));
    }
}

TEST_CASE("surrogate handles constant targets and duplicate rows") {
    SearchSpace space = toy_space();
    auto samples = sample_assignments(space, 10, 9);
    samples.push_back(samples.front());
    samples.push_back(samples.front());
    std::vector<CandidateResult> results;
    for (const auto& a : samples) {
        CandidateResult r;
        r.assignment = a;
        r.auc = 0.7;
        r.throughput = 100.0;
        results.push_back(r);
    }
    Surrogate s = Surrogate::fit(space, results, 1e-3);
    auto preds = s.predict({samples.front()});
    CHECK(preds[0].first == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(preds[0].second == doctest::Approx(100.0).epsilon(1e-4));
}

TEST_CASE("surrogate prediction is deterministic and rejects unseen levels") {
    SearchSpace space = toy_space();
    auto samples = sample_assignments(space, 20, 2);
    std::vector<CandidateResult> results;
    for (const auto& a : samples) {
        CandidateResult r;
        r.assignment = a;
        r.auc = 0.5 + 0.1 * std::get<double>(a.at("lr"));
        r.throughput = 10.0;
        results.push_back(r);
    }
    Surrogate s = Surrogate::fit(space, results, 1e-3);
    auto p1 = s.predict(samples);
    auto p2 = s.predict(samples);
    CHECK(p1 == p2);

    Assignment bad = samples.front();
    bad["module"] = std::string("masknet");
    CHECK_THROWS_WITH_AS(s.predict({bad}), doctest::Contains("module"), std::invalid_argument);
}

TEST_CASE("surrogate requires dims+1 ok results and ignores failed candidates") {
    SearchSpace space = toy_space();
    auto samples = sample_assignments(space, 10, 14);
    std::vector<CandidateResult> results;
    for (const auto& a : samples) {
        CandidateResult r;
        r.assignment = a;
        r.status = CandidateStatus::Failed;
        results.push_back(r);
    }
    CHECK_THROWS_AS(Surrogate::fit(space, results, 1e-3), std::invalid_argument);
}
