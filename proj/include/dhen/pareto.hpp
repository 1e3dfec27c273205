#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace dhen {

// One search dimension: a bounded integer, a categorical choice, or a
// log-uniform float.
struct SearchDimension {
    enum class Kind { IntegerRange, Categorical, LogUniformFloat };
    std::string name;
    Kind kind = Kind::IntegerRange;
    int64_t int_lo = 0, int_hi = 0;           // inclusive
    std::vector<std::string> categories;      // Categorical
    double float_lo = 0.0, float_hi = 0.0;    // LogUniformFloat, both > 0
};

using DimValue = std::variant<int64_t, std::string, double>;
using Assignment = std::map<std::string, DimValue>;

struct SearchSpace {
    std::vector<SearchDimension> dimensions;
    // Returns false for assignments violating a constraint (rejected and redrawn).
    std::function<bool(const Assignment&)> constraint;

    void validate() const;
};

std::vector<Assignment> sample_assignments(const SearchSpace& space, int64_t n, uint64_t seed);

enum class CandidateStatus { Ok, Failed, Invalid };

struct CandidateResult {
    Assignment assignment;
    double auc = 0.0;
    double throughput = 0.0;  // examples/sec proxy; > 0 for ok results
    double flops = 0.0;
    uint64_t seed = 0;
    CandidateStatus status = CandidateStatus::Ok;
    std::string note;
};

// Ridge regression over standardized numeric dims and one-hot categorical
// dims, with two targets: AUC and log-throughput.
class Surrogate {
public:
    static Surrogate fit(const SearchSpace& space, const std::vector<CandidateResult>& results, double lambda);

    // Returns (auc, throughput) predictions; throughput is de-logged.
    std::vector<std::pair<double, double>> predict(const std::vector<Assignment>& assignments) const;

    double r2_auc() const { return r2_auc_; }
    double r2_log_throughput() const { return r2_log_tp_; }

private:
    std::vector<std::string> numeric_dims_;
    std::map<std::string, std::vector<std::string>> categorical_levels_;
    std::vector<double> feat_mean_, feat_std_;
    std::vector<double> w_auc_, w_log_tp_;  // last entry is intercept
    double r2_auc_ = 0.0, r2_log_tp_ = 0.0;
    std::vector<bool> log_dim_;

    std::vector<double> featurize(const Assignment& a) const;
    friend class SurrogateBuilder;
};

// Indices of non-dominated points under joint maximization, sorted by the
// first objective descending; duplicated non-dominated points are all kept.
std::vector<size_t> pareto_front(const std::vector<std::pair<double, double>>& points);

}  // namespace dhen
