#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dhen/data.hpp"

namespace dhen {

// Knobs for the planted-signal generator. The conversion score is
//   conv_bias + affinity_coef * <u, v> + cross_coef * f1 * f2
//             + sequence_coef * <mean conv-history embedding, v> + noise
// so the multiplicative f1*f2 term rewards explicit feature crossing and
// the history term rewards sequence modeling. Zeroing a coefficient
// removes that signal from the labels entirely.
struct WorldConfig {
    int64_t num_users = 500;
    int64_t num_ads = 100;
    int64_t num_advertisers = 49;  // advertiser ids 1..num_advertisers
    int64_t latent_dim = 8;        // matches the item embedding width
    int64_t pretrained_dim = 16;
    double click_scale = 2.0;
    double conv_bias = -1.5;
    double affinity_coef = 1.5;
    double cross_coef = 2.0;
    double sequence_coef = 1.5;
    double noise_std = 0.1;
    double keep_negative = 1.0;  // keep probability for all-negative examples
    int64_t initial_conv_events = 3;
    uint64_t seed = 0;
};

struct World {
    std::vector<std::vector<double>> user_latent;
    std::vector<std::vector<double>> ad_latent;
    std::vector<int64_t> ad_advertiser;
    std::vector<int64_t> ad_category;
    std::vector<int64_t> user_country;
    std::vector<int64_t> user_interest;
    std::vector<double> user_activity;
    std::vector<std::vector<double>> user_pretrained;  // noisy view of the latent
};

World generate_world(const WorldConfig& cfg);

// Streams one day of impressions at a time. User behavior histories are
// append-only, so a user's sequences on day d are a prefix of the same
// user's sequences on any later day (before cap truncation).
class SynthGenerator {
public:
    explicit SynthGenerator(const WorldConfig& cfg);

    std::vector<Example> next_day(int64_t num_examples);

    const World& world() const { return world_; }
    const WorldConfig& config() const { return cfg_; }
    int64_t day() const { return day_; }

private:
    void append_event(int64_t user, SeqKind kind, int64_t ad, int action);

    WorldConfig cfg_;
    World world_;
    int64_t day_ = 0;
    std::vector<std::array<std::vector<SequenceItem>, kNumSeqKinds>> history_;
    std::vector<int64_t> event_counter_;  // per-user, keeps timestamps ascending
};

std::vector<std::vector<Example>> generate_days(const WorldConfig& cfg, int64_t num_days,
                                                int64_t examples_per_day);

}  // namespace dhen
