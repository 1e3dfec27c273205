#include "dhen/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dhen {

namespace {
void check_binary_labels(const std::vector<double>& scores, const std::vector<double>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores/labels length mismatch");
    if (scores.empty()) throw std::invalid_argument("empty metric input");
    for (double y : labels)
        if (y != 0.0 && y != 1.0) throw std::invalid_argument("labels must be 0 or 1");
}
}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
    check_binary_labels(scores, labels);
    int64_t pos = 0, neg = 0;
    for (double y : labels) (y == 1.0 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc undefined for single-class input");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Rank-sum with midranks for tie groups.
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1.0) pos_rank_sum += midrank;
        i = j;
    }
    double u = pos_rank_sum - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double pr_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
    check_binary_labels(scores, labels);
    int64_t total_pos = 0;
    for (double y : labels) total_pos += (y == 1.0);
    if (total_pos == 0) throw std::invalid_argument("pr_auc undefined with zero positives");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    int64_t tp = 0, predicted = 0, prev_tp = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (size_t k = i; k < j; ++k) {
            ++predicted;
            if (labels[order[k]] == 1.0) ++tp;
        }
        double precision = static_cast<double>(tp) / static_cast<double>(predicted);
        double recall_gain = static_cast<double>(tp - prev_tp) / static_cast<double>(total_pos);
        ap += precision * recall_gain;
        prev_tp = tp;
        i = j;
    }
    return ap;
}

double cpa(double total_cost, int64_t conversions) {
    if (conversions < 1) throw std::invalid_argument("cpa undefined with zero conversions");
    return total_cost / static_cast<double>(conversions);
}

ThroughputReport measure_throughput(const std::function<void()>& run_batch, int64_t batch_size, int repetitions,
                                    double analytic_flops_per_example) {
    if (repetitions < 3) throw std::invalid_argument("throughput needs at least 3 repetitions");
    run_batch();  // warmup, excluded
    std::vector<double> secs;
    for (int r = 0; r < repetitions; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        run_batch();
        auto t1 = std::chrono::steady_clock::now();
        secs.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::vector<double> sorted = secs;
    std::sort(sorted.begin(), sorted.end());
    double median = sorted[sorted.size() / 2];
    double mean = std::accumulate(secs.begin(), secs.end(), 0.0) / static_cast<double>(secs.size());
    double var = 0.0;
    for (double s : secs) var += (s - mean) * (s - mean);
    var /= static_cast<double>(secs.size());
    ThroughputReport rep;
    rep.examples_per_sec = static_cast<double>(batch_size) / std::max(median, 1e-12);
    rep.sec_variance = var;
    rep.analytic_flops_per_example = analytic_flops_per_example;
    return rep;
}

std::string eval_report_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "head,roc_auc,pr_auc,defined,examples,positives,params,flops\n";
    os.precision(12);
    for (const auto& [name, m] : report.heads) {
        os << name << ",";
        if (m.defined)
            os << m.roc_auc << "," << m.pr_auc << ",1,";
        else
            os << "undefined,undefined,0,";
        os << m.examples << "," << m.positives << "," << report.parameter_count << "," << report.flops_per_example
           << "\n";
    }
    return os.str();
}

}  // namespace dhen
