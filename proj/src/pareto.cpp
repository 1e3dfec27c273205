#include "dhen/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dhen/rng.hpp"

namespace dhen {

void SearchSpace::validate() const {
    if (dimensions.empty()) throw std::invalid_argument("search space has no dimensions");
    for (const auto& d : dimensions) {
        switch (d.kind) {
            case SearchDimension::Kind::IntegerRange:
                if (d.int_hi < d.int_lo) throw std::invalid_argument("dimension '" + d.name + "' has empty range");
                break;
            case SearchDimension::Kind::Categorical:
                if (d.categories.empty()) throw std::invalid_argument("dimension '" + d.name + "' has no categories");
                break;
            case SearchDimension::Kind::LogUniformFloat:
                if (!(d.float_lo > 0.0) || d.float_hi < d.float_lo)
                    throw std::invalid_argument("dimension '" + d.name + "' needs 0 < lo <= hi");
                break;
        }
    }
}

std::vector<Assignment> sample_assignments(const SearchSpace& space, int64_t n, uint64_t seed) {
    space.validate();
    if (n < 1) throw std::invalid_argument("sample count must be >= 1");
    Rng rng(mix_keys(seed, 0x73616d70ULL));
    std::vector<Assignment> out;
    int64_t attempts = 0;
    while (static_cast<int64_t>(out.size()) < n) {
        ++attempts;
        if (attempts > 100 * n + 1000) {
            throw std::runtime_error("search-space constraint rejects > 99% of samples; revise the space");
        }
        Assignment a;
        for (const auto& d : space.dimensions) {
            switch (d.kind) {
                case SearchDimension::Kind::IntegerRange:
                    a[d.name] = d.int_lo + rng.uniform_int(d.int_hi - d.int_lo + 1);
                    break;
                case SearchDimension::Kind::Categorical:
                    a[d.name] = d.categories[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(d.categories.size())))];
                    break;
                case SearchDimension::Kind::LogUniformFloat:
                    a[d.name] = std::exp(rng.uniform(std::log(d.float_lo), std::log(d.float_hi)));
                    break;
            }
        }
        if (space.constraint && !space.constraint(a)) continue;
        out.push_back(std::move(a));
    }
    return out;
}

namespace {

// Solve (A + lambda*I) x = b in place; A is symmetric positive definite
// for lambda > 0. Gaussian elimination with partial pivoting.
std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
    size_t n = b.size();
    for (size_t col = 0; col < n; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        if (a[col][col] == 0.0) throw std::runtime_error("singular system in ridge solve; increase lambda");
        for (size_t r = col + 1; r < n; ++r) {
            double f = a[r][col] / a[col][col];
            for (size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (size_t i = n; i-- > 0;) {
        double s = b[i];
        for (size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
        x[i] = s / a[i][i];
    }
    return x;
}

std::vector<double> ridge_fit(const std::vector<std::vector<double>>& feats, const std::vector<double>& y,
                              double lambda) {
    size_t n = feats.size();
    size_t d = feats.front().size() + 1;  // + intercept
    std::vector<std::vector<double>> ata(d, std::vector<double>(d, 0.0));
    std::vector<double> aty(d, 0.0);
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> row = feats[i];
        row.push_back(1.0);
        for (size_t a = 0; a < d; ++a) {
            for (size_t b = 0; b < d; ++b) ata[a][b] += row[a] * row[b];
            aty[a] += row[a] * y[i];
        }
    }
    for (size_t a = 0; a + 1 < d; ++a) ata[a][a] += lambda;  // intercept unregularized
    return solve_linear(std::move(ata), std::move(aty));
}

double ridge_predict(const std::vector<double>& w, const std::vector<double>& feat) {
    double s = w.back();
    for (size_t i = 0; i < feat.size(); ++i) s += w[i] * feat[i];
    return s;
}

double r_squared(const std::vector<double>& y, const std::vector<double>& yhat) {
    double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double sse = 0.0, sst = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        sst += (y[i] - mean) * (y[i] - mean);
    }
    if (sst < 1e-12) return 1.0;  // constant target
    return 1.0 - sse / sst;
}

}  // namespace

std::vector<double> Surrogate::featurize(const Assignment& a) const {
    std::vector<double> raw;
    size_t ni = 0;
    for (const auto& name : numeric_dims_) {
        auto it = a.find(name);
        if (it == a.end()) throw std::invalid_argument("assignment missing dimension '" + name + "'");
        double v = std::holds_alternative<int64_t>(it->second) ? static_cast<double>(std::get<int64_t>(it->second))
                                                               : std::get<double>(it->second);
        if (log_dim_[ni]) v = std::log(v);
        raw.push_back(v);
        ++ni;
    }
    for (const auto& [name, levels] : categorical_levels_) {
        auto it = a.find(name);
        if (it == a.end()) throw std::invalid_argument("assignment missing dimension '" + name + "'");
        const std::string& level = std::get<std::string>(it->second);
        auto lit = std::find(levels.begin(), levels.end(), level);
        if (lit == levels.end())
            throw std::invalid_argument("unseen categorical level '" + level + "' for dimension '" + name + "'");
        for (size_t l = 0; l < levels.size(); ++l) raw.push_back(l == static_cast<size_t>(lit - levels.begin()) ? 1.0 : 0.0);
    }
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = (raw[i] - feat_mean_[i]) / feat_std_[i];
    return raw;
}

Surrogate Surrogate::fit(const SearchSpace& space, const std::vector<CandidateResult>& results, double lambda) {
    if (lambda <= 0.0) throw std::invalid_argument("ridge lambda must be > 0");
    Surrogate s;
    for (const auto& d : space.dimensions) {
        if (d.kind == SearchDimension::Kind::Categorical) {
            s.categorical_levels_[d.name] = d.categories;
        } else {
            s.numeric_dims_.push_back(d.name);
            s.log_dim_.push_back(d.kind == SearchDimension::Kind::LogUniformFloat);
        }
    }

    std::vector<const CandidateResult*> ok;
    for (const auto& r : results)
        if (r.status == CandidateStatus::Ok) ok.push_back(&r);
    if (ok.size() < space.dimensions.size() + 1)
        throw std::invalid_argument("surrogate needs at least dims+1 ok candidates, have " + std::to_string(ok.size()));

    // First pass with identity standardization to size the feature vector.
    size_t nfeat = s.numeric_dims_.size();
    for (const auto& [name, levels] : s.categorical_levels_) nfeat += levels.size();
    s.feat_mean_.assign(nfeat, 0.0);
    s.feat_std_.assign(nfeat, 1.0);

    std::vector<std::vector<double>> feats;
    for (const auto* r : ok) feats.push_back(s.featurize(r->assignment));
    for (size_t j = 0; j < nfeat; ++j) {
        double m = 0.0;
        for (const auto& f : feats) m += f[j];
        m /= static_cast<double>(feats.size());
        double v = 0.0;
        for (const auto& f : feats) v += (f[j] - m) * (f[j] - m);
        v /= static_cast<double>(feats.size());
        s.feat_mean_[j] = m;
        s.feat_std_[j] = v > 1e-12 ? std::sqrt(v) : 1.0;
    }
    for (auto& f : feats)
        for (size_t j = 0; j < nfeat; ++j) f[j] = (f[j] - s.feat_mean_[j]) / s.feat_std_[j];

    std::vector<double> y_auc, y_log_tp;
    for (const auto* r : ok) {
        if (r->auc < 0.0 || r->auc > 1.0) throw std::invalid_argument("candidate AUC outside [0,1]");
        y_auc.push_back(r->auc);
        y_log_tp.push_back(std::log(std::max(r->throughput, 1e-12)));
    }
    s.w_auc_ = ridge_fit(feats, y_auc, lambda);
    s.w_log_tp_ = ridge_fit(feats, y_log_tp, lambda);

    std::vector<double> pred_auc, pred_tp;
    for (const auto& f : feats) {
        pred_auc.push_back(ridge_predict(s.w_auc_, f));
        pred_tp.push_back(ridge_predict(s.w_log_tp_, f));
    }
    s.r2_auc_ = r_squared(y_auc, pred_auc);
    s.r2_log_tp_ = r_squared(y_log_tp, pred_tp);
    return s;
}

std::vector<std::pair<double, double>> Surrogate::predict(const std::vector<Assignment>& assignments) const {
    std::vector<std::pair<double, double>> out;
    out.reserve(assignments.size());
    for (const auto& a : assignments) {
        std::vector<double> f = featurize(a);
        out.emplace_back(ridge_predict(w_auc_, f), std::exp(ridge_predict(w_log_tp_, f)));
    }
    return out;
}

std::vector<size_t> pareto_front(const std::vector<std::pair<double, double>>& points) {
    std::vector<size_t> order(points.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (points[a].first != points[b].first) return points[a].first > points[b].first;
        return points[a].second > points[b].second;
    });
    std::vector<size_t> front;
    double best_second_above = -HUGE_VAL;  // max 2nd objective among strictly higher 1st
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && points[order[j]].first == points[order[i]].first) ++j;
        double group_max = -HUGE_VAL;
        for (size_t k = i; k < j; ++k) group_max = std::max(group_max, points[order[k]].second);
        for (size_t k = i; k < j; ++k) {
            double t = points[order[k]].second;
            bool dominated = (best_second_above >= t) || (group_max > t);
            if (!dominated) front.push_back(order[k]);
        }
        best_second_above = std::max(best_second_above, group_max);
        i = j;
    }
    return front;
}

}  // namespace dhen
