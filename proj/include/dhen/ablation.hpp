#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dhen/metrics.hpp"
#include "dhen/model.hpp"
#include "dhen/pareto.hpp"
#include "dhen/synth.hpp"
#include "dhen/training.hpp"

namespace dhen {

// Serving-path metrics over held-out partitions; single-class heads are
// reported as undefined rather than failing the whole report.
EvalReport evaluate_model(Model& model, const std::vector<std::vector<Example>>& partitions,
                          int64_t batch_size = 256);

enum class AblationPlan { Crossing, DhenDepth, Ssl, FeatureCategory };
const char* ablation_plan_name(AblationPlan p);
AblationPlan ablation_plan_from_name(const std::string& name);

struct AblationArm {
    std::string name;
    ModelConfig config;
    FeatureSchema schema;
    bool baseline = false;
};

// The arm list for a plan, first entry is the plan's baseline.
std::vector<AblationArm> ablation_arms(AblationPlan plan, const ModelConfig& base, const FeatureSchema& schema);

struct AblationRow {
    std::string arm;
    std::string head;
    double roc_auc = 0.0;
    double pr_auc = 0.0;
    double lift = 0.0;  // roc_auc minus the baseline arm's, 0 when undefined
    bool defined = false;
    double flops = 0.0;
    int64_t params = 0;
};

struct AblationReport {
    std::string plan;
    uint64_t data_hash = 0;
    uint64_t seed = 0;
    std::vector<AblationRow> rows;
};

// Trains every arm of the plan on the identical dataset and seed; the
// last `eval_days` partitions are held out for metrics.
AblationReport run_ablation(AblationPlan plan, const ModelConfig& base, const FeatureSchema& schema,
                            const std::vector<std::vector<Example>>& partitions, int64_t eval_days,
                            const TrainConfig& tc);

std::string ablation_report_csv(const AblationReport& report);

// Architecture search support: a dimension assignment is translated into
// a model/train config, trained on a small budget, and scored.
struct SearchBudget {
    int64_t train_partitions = 2;
    int64_t eval_partitions = 1;
    int64_t examples_per_partition = 1000;
    TrainConfig train;
};

// Recognized dimensions: depth, module, layer_width, lr, ssl_enabled,
// ssl_pos, ssl_neg, ssl_org_weight, ssl_ads_weight, ssl_objective.
// Unknown names or invalid values throw.
ModelConfig config_from_assignment(const Assignment& a, const ModelConfig& base, TrainConfig* train);

CandidateResult evaluate_candidate(const Assignment& a, const ModelConfig& base, const FeatureSchema& schema,
                                   const std::vector<std::vector<Example>>& partitions, const SearchBudget& budget,
                                   uint64_t seed);

SearchSpace default_search_space();

}  // namespace dhen
