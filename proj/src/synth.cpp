#include "dhen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dhen/rng.hpp"

namespace dhen {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

World generate_world(const WorldConfig& cfg) {
    if (cfg.num_users < 1 || cfg.num_ads < 1) throw std::runtime_error("world needs users and ads");
    if (cfg.num_advertisers < 1) throw std::runtime_error("world needs advertisers");
    if (cfg.latent_dim < 3) throw std::runtime_error("latent_dim must be at least 3");
    World w;
    Rng rng(mix_keys(cfg.seed, 0x776f726c64ULL));
    w.user_latent.resize(static_cast<size_t>(cfg.num_users));
    w.user_country.resize(static_cast<size_t>(cfg.num_users));
    w.user_interest.resize(static_cast<size_t>(cfg.num_users));
    w.user_activity.resize(static_cast<size_t>(cfg.num_users));
    w.user_pretrained.resize(static_cast<size_t>(cfg.num_users));
    for (auto& u : w.user_latent) {
        u.resize(static_cast<size_t>(cfg.latent_dim));
        for (auto& x : u) x = rng.gaussian();
    }
    for (size_t i = 0; i < w.user_latent.size(); ++i) {
        w.user_country[i] = 1 + rng.uniform_int(9);
        w.user_activity[i] = rng.uniform();
        // coarse latent octant: a weakly informative interest category
        const auto& lat = w.user_latent[i];
        w.user_interest[i] = 1 + (lat[0] > 0 ? 1 : 0) + (lat[1] > 0 ? 2 : 0) + (lat[2] > 0 ? 4 : 0);
        auto& p = w.user_pretrained[i];
        p.resize(static_cast<size_t>(cfg.pretrained_dim));
        // first latent_dim entries: heavily noised latent; rest: pure noise
        for (size_t d = 0; d < p.size(); ++d) {
            double base = d < w.user_latent[i].size() ? w.user_latent[i][d] : 0.0;
            p[d] = 0.3 * base + rng.gaussian();
        }
    }
    w.ad_latent.resize(static_cast<size_t>(cfg.num_ads));
    w.ad_advertiser.resize(static_cast<size_t>(cfg.num_ads));
    w.ad_category.resize(static_cast<size_t>(cfg.num_ads));
    for (size_t i = 0; i < w.ad_latent.size(); ++i) {
        auto& v = w.ad_latent[i];
        v.resize(static_cast<size_t>(cfg.latent_dim));
        for (auto& x : v) x = rng.gaussian();
        w.ad_advertiser[i] = 1 + rng.uniform_int(cfg.num_advertisers);
        w.ad_category[i] = 1 + rng.uniform_int(19);
    }
    return w;
}

SynthGenerator::SynthGenerator(const WorldConfig& cfg) : cfg_(cfg), world_(generate_world(cfg)) {
    history_.resize(static_cast<size_t>(cfg.num_users));
    event_counter_.assign(static_cast<size_t>(cfg.num_users), 0);
    Rng rng(mix_keys(cfg.seed, 0x696e6974ULL));
    for (int64_t u = 0; u < cfg.num_users; ++u) {
        // seed each user's conversion history with their best-affinity ads
        // from a random shortlist, so the planted sequence signal exists
        // from the first generated day
        std::vector<int64_t> shortlist;
        for (int64_t k = 0; k < 10; ++k) shortlist.push_back(rng.uniform_int(cfg.num_ads));
        std::sort(shortlist.begin(), shortlist.end(), [&](int64_t a, int64_t b) {
            return dot(world_.user_latent[static_cast<size_t>(u)], world_.ad_latent[static_cast<size_t>(a)]) >
                   dot(world_.user_latent[static_cast<size_t>(u)], world_.ad_latent[static_cast<size_t>(b)]);
        });
        for (int64_t k = 0; k < std::min<int64_t>(cfg.initial_conv_events, 10); ++k) {
            append_event(u, SeqKind::Conv, shortlist[static_cast<size_t>(k)],
                         static_cast<int>(ActionType::Checkout));
        }
        append_event(u, SeqKind::Search, rng.uniform_int(cfg.num_ads),
                     static_cast<int>(ActionType::SearchIssue));
        append_event(u, SeqKind::Org, rng.uniform_int(cfg.num_ads), static_cast<int>(ActionType::Save));
        append_event(u, SeqKind::Match, rng.uniform_int(cfg.num_ads), static_cast<int>(ActionType::Match));
    }
    day_ = 1;  // initial events live on day 0
}

void SynthGenerator::append_event(int64_t user, SeqKind kind, int64_t ad, int action) {
    SequenceItem item;
    item.item_id = ad;
    item.action_type = action;
    item.timestamp = static_cast<double>(day_) * 86400.0 +
                     static_cast<double>(event_counter_[static_cast<size_t>(user)]++);
    item.embedding = world_.ad_latent[static_cast<size_t>(ad)];
    if (seq_kind_has_advertiser(kind)) item.advertiser_id = world_.ad_advertiser[static_cast<size_t>(ad)];
    history_[static_cast<size_t>(user)][static_cast<size_t>(kind)].push_back(item);
}

std::vector<Example> SynthGenerator::next_day(int64_t num_examples) {
    std::vector<Example> out;
    out.reserve(static_cast<size_t>(num_examples));
    for (int64_t i = 0; i < num_examples; ++i) {
        Rng rng(mix_keys(cfg_.seed, 0x6578616d706c65ULL, static_cast<uint64_t>(day_), static_cast<uint64_t>(i)));
        int64_t user = rng.uniform_int(cfg_.num_users);
        int64_t ad = rng.uniform_int(cfg_.num_ads);
        const auto& u = world_.user_latent[static_cast<size_t>(user)];
        const auto& v = world_.ad_latent[static_cast<size_t>(ad)];
        double affinity = dot(u, v) / static_cast<double>(cfg_.latent_dim);

        double f1 = rng.uniform(-1.0, 1.0);
        double f2 = rng.uniform(-1.0, 1.0);

        const auto& conv_hist = history_[static_cast<size_t>(user)][static_cast<size_t>(SeqKind::Conv)];
        double seq_affinity = 0.0;
        if (!conv_hist.empty()) {
            std::vector<double> mean(static_cast<size_t>(cfg_.latent_dim), 0.0);
            size_t lo = conv_hist.size() > static_cast<size_t>(kSequenceCap)
                            ? conv_hist.size() - static_cast<size_t>(kSequenceCap)
                            : 0;
            for (size_t k = lo; k < conv_hist.size(); ++k) {
                for (size_t d = 0; d < mean.size(); ++d) mean[d] += conv_hist[k].embedding[d];
            }
            for (auto& x : mean) x /= static_cast<double>(conv_hist.size() - lo);
            seq_affinity = dot(mean, v) / static_cast<double>(cfg_.latent_dim);
        }

        double score = cfg_.conv_bias + cfg_.affinity_coef * affinity + cfg_.cross_coef * f1 * f2 +
                       cfg_.sequence_coef * seq_affinity + cfg_.noise_std * rng.gaussian();
        double click_score = cfg_.click_scale * affinity +
                             world_.user_activity[static_cast<size_t>(user)] - 0.5 +
                             cfg_.noise_std * rng.gaussian();

        double click = rng.bernoulli(sigmoid(click_score)) ? 1.0 : 0.0;
        double checkout = rng.bernoulli(sigmoid(score)) ? 1.0 : 0.0;
        double add_to_cart = rng.bernoulli(sigmoid(score + 0.5)) ? 1.0 : 0.0;
        double signup = rng.bernoulli(sigmoid(score - 0.5)) ? 1.0 : 0.0;
        double lead = rng.bernoulli(sigmoid(score - 1.0)) ? 1.0 : 0.0;

        Example ex;
        ex.user_id = user;
        ex.ad_id = ad;
        ex.dense["f1"] = f1;
        ex.dense["f2"] = f2;
        ex.dense["user_activity"] = world_.user_activity[static_cast<size_t>(user)];
        ex.categorical["ad_category"] = world_.ad_category[static_cast<size_t>(ad)];
        ex.categorical["user_country"] = world_.user_country[static_cast<size_t>(user)];
        ex.categorical["user_interest"] = world_.user_interest[static_cast<size_t>(user)];
        ex.pretrained["user_embedding"] = world_.user_pretrained[static_cast<size_t>(user)];
        ex.pretrained["ad_embedding"] = world_.ad_latent[static_cast<size_t>(ad)];
        for (int k = 0; k < kNumSeqKinds; ++k) {
            ex.sequences[static_cast<size_t>(k)].kind = static_cast<SeqKind>(k);
            ex.sequences[static_cast<size_t>(k)].items = history_[static_cast<size_t>(user)][static_cast<size_t>(k)];
            enforce_sequence_cap(ex.sequences[static_cast<size_t>(k)]);
        }
        ex.labels["ctr"] = click;
        ex.labels["checkout"] = checkout;
        ex.labels["add_to_cart"] = add_to_cart;
        ex.labels["signup"] = signup;
        ex.labels["lead"] = lead;

        // history updates happen whether or not downsampling keeps the
        // example; behavior is real even when the row is dropped
        if (click == 1.0) append_event(user, SeqKind::Ads, ad, static_cast<int>(ActionType::Click));
        if (checkout == 1.0) append_event(user, SeqKind::Conv, ad, static_cast<int>(ActionType::Checkout));

        bool negative = checkout == 0.0 && add_to_cart == 0.0 && signup == 0.0 && lead == 0.0;
        if (negative && cfg_.keep_negative < 1.0 && !rng.bernoulli(cfg_.keep_negative)) continue;
        out.push_back(std::move(ex));
    }
    ++day_;
    return out;
}

std::vector<std::vector<Example>> generate_days(const WorldConfig& cfg, int64_t num_days,
                                                int64_t examples_per_day) {
    SynthGenerator gen(cfg);
    std::vector<std::vector<Example>> days;
    days.reserve(static_cast<size_t>(num_days));
    for (int64_t d = 0; d < num_days; ++d) days.push_back(gen.next_day(examples_per_day));
    return days;
}

}  // namespace dhen
