#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dhen/data.hpp"
#include "dhen/model.hpp"
#include "dhen/params.hpp"
#include "dhen/tensor.hpp"

namespace dhen {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int64_t batch_size = 32;
    uint64_t seed = 0;
    bool shuffle = true;
    int64_t log_every = 1;
};

struct LossReport {
    double total = 0.0;
    std::map<std::string, double> head_bce;  // unweighted per-head means
    double ssl = 0.0;
};

// Weighted sum of per-head masked BCE plus the self-supervised loss.
// The report decomposition reconstructs the returned scalar:
// total = sum_h weight_h * head_bce[h] + ssl.
Tensor multitask_loss(Tape* tape, Model& model, const ExampleBatch& batch, bool train, uint64_t seed,
                      LossReport* report = nullptr);

enum class TrainStatus { Ok, Diverged };

struct TrainResult {
    TrainStatus status = TrainStatus::Ok;
    int64_t steps = 0;
    std::vector<std::string> trace;  // one JSON object per logged step
    std::string message;
};

// Runs Adam over time-ordered partitions starting at `start_partition`.
// Every random choice is keyed by (seed, partition, step), so resuming
// from a checkpoint reproduces the continuous run bit-exactly.
TrainResult train(Model& model, AdamOptimizer& opt, const std::vector<std::vector<Example>>& partitions,
                  const TrainConfig& cfg, int64_t start_partition = 0);

// Binary checkpoint: magic, version, config text, sorted named f64
// parameters, Adam moments, counters, and a trailing checksum. Any byte
// corruption fails the load.
void save_checkpoint(const std::string& path, const Model& model, const AdamOptimizer& opt,
                     const std::string& config_text, uint64_t train_seed, int64_t next_partition);

struct CheckpointInfo {
    std::string config_text;
    uint64_t init_seed = 0;
    uint64_t train_seed = 0;
    int64_t next_partition = 0;
    int64_t step_count = 0;
};

// Restores parameters and optimizer state. Parameters already
// materialized in the model must match the stored shapes; every
// mismatched path is listed in the error.
CheckpointInfo load_checkpoint(const std::string& path, Model& model, AdamOptimizer& opt);

// Header and config text only; still verifies the checksum.
CheckpointInfo read_checkpoint_info(const std::string& path);

// Order-independent content hash over serialized examples.
uint64_t dataset_hash(const std::vector<std::vector<Example>>& partitions);

}  // namespace dhen
