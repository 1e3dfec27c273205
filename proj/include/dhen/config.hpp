#pragma once

#include <cstdint>
#include <string>

#include "dhen/ablation.hpp"
#include "dhen/model.hpp"
#include "dhen/pareto.hpp"
#include "dhen/synth.hpp"
#include "dhen/training.hpp"

namespace dhen {

// One JSON document drives every command. Every field is optional and
// defaults to the deployed production value; unknown keys are rejected
// with their full path.
struct RunConfig {
    WorldConfig world;
    FeatureSchema schema;
    ModelConfig model;
    TrainConfig training;

    int64_t train_days = 4;
    int64_t eval_days = 1;
    int64_t examples_per_day = 2000;

    SearchSpace search_space;
    int64_t search_candidates = 16;
    int64_t search_predict_samples = 200;
    double search_lambda = 1e-3;
    SearchBudget search_budget;

    std::string ablation_plan = "crossing";
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Continuous-feature fit statistics travel inside checkpoints so eval
// reuses the exact training-time scaling.
std::string fitted_stats_json(const FeatureSchema& schema);
void apply_fitted_stats(FeatureSchema& schema, const std::string& json_text);

}  // namespace dhen
