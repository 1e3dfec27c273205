#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace dhen {

// Mann-Whitney statistic with tie handling: P(s+ > s-) + 0.5 P(tie).
// Throws if either class is missing.
double roc_auc(const std::vector<double>& scores, const std::vector<double>& labels);

// Average precision (step interpolation) over a descending-threshold
// sweep; ties enter as one threshold group. Throws with zero positives.
double pr_auc(const std::vector<double>& scores, const std::vector<double>& labels);

// Cost per acquisition.
double cpa(double total_cost, int64_t conversions);

struct ThroughputReport {
    double examples_per_sec = 0.0;  // median over repetitions, first repetition discarded as warmup
    double sec_variance = 0.0;      // variance of per-repetition wall time
    double analytic_flops_per_example = 0.0;
};

// `run_batch` must process `batch_size` examples per call.
ThroughputReport measure_throughput(const std::function<void()>& run_batch, int64_t batch_size, int repetitions,
                                    double analytic_flops_per_example);

struct HeadMetrics {
    double roc_auc = 0.0;
    double pr_auc = 0.0;
    bool defined = false;  // false when the eval slice is single-class
    int64_t examples = 0;
    int64_t positives = 0;
};

struct EvalReport {
    std::map<std::string, HeadMetrics> heads;
    int64_t parameter_count = 0;
    double flops_per_example = 0.0;
};

std::string eval_report_csv(const EvalReport& report);

}  // namespace dhen
