#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dhen/data.hpp"
#include "dhen/params.hpp"
#include "dhen/rng.hpp"
#include "dhen/sequence.hpp"
#include "dhen/tensor.hpp"

namespace dhen {

enum class SslObjective { NextAction, MaskedItem };
const char* ssl_objective_name(SslObjective o);
SslObjective ssl_objective_from_name(const std::string& name);

struct SslConfig {
    SslObjective objective = SslObjective::NextAction;
    int64_t num_positives = 90;
    int64_t num_negatives = 20;
    double org_weight = 2e-4;   // search and organic-engagement kinds
    double ads_weight = 1e-4;   // ads, match and conversion kinds
};

// The per-kind loss weight: org group = {search, org}, ads group =
// {ads, match, conv}.
double ssl_group_weight(const SslConfig& cfg, SeqKind kind);

// Target positions within one sequence. Next-action: the last
// min(num_positives, len - 1) positions (each needs a preceding context).
// Masked-item: min(num_positives, len) distinct positions drawn uniformly.
std::vector<int64_t> ssl_target_positions(SslObjective objective, int64_t len, int64_t num_positives, Rng& rng);

// InfoNCE at temperature 1 over one row per target:
// -log(exp(c.t) / (exp(c.t) + sum_k exp(c.n_k))). context/targets are
// N x E, negatives N x K x E; returns the per-row losses as a length-N
// tensor.
Tensor info_nce(Tape* tape, const Tensor& context, const Tensor& targets, const Tensor& negatives);

// Full self-supervised loss for a batch: for every kind with nonzero
// weight, per-target mean within each sequence, summed over sequences and
// scaled by the group weight. Negatives are drawn in-batch from the same
// kind, excluding the target item id (and, for the causal objective,
// later positions of the same sequence).
Tensor ssl_total(Tape* tape, ParamStore& params, const std::string& model_prefix, const FeatureSchema& schema,
                 const ExampleBatch& batch, const SequenceEncoderConfig& enc_cfg, const SslConfig& cfg, bool train,
                 uint64_t seed);

}  // namespace dhen
