#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "dhen/data.hpp"
#include "dhen/grad_check.hpp"
#include "dhen/ops.hpp"
#include "dhen/pipeline.hpp"
#include "dhen/rng.hpp"

using namespace dhen;

namespace {

FeatureSchema tiny_schema() {
    FeatureSchema s;
    s.continuous = {{"price", 0.0, 10.0, true}};
    s.categorical = {{"country", 4, 3}};
    s.pretrained = {{"user_vec", 3}};
    s.sequence_kinds = {SeqKind::Search, SeqKind::Conv};
    s.item_embedding_dim = 2;
    s.advertiser_vocab = 5;
    return s;
}

Example tiny_example(uint64_t seed) {
    Rng rng(seed);
    Example ex;
    ex.user_id = static_cast<int64_t>(rng.next_u64() % 1000);
    ex.ad_id = static_cast<int64_t>(rng.next_u64() % 1000);
    ex.dense["price"] = rng.uniform(0.0, 10.0);
    ex.categorical["country"] = rng.uniform_int(4);
    ex.pretrained["user_vec"] = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
    for (SeqKind k : {SeqKind::Search, SeqKind::Conv}) {
        auto& seq = ex.sequences[static_cast<int>(k)];
        seq.kind = k;
        double ts = 100.0;
        int n = static_cast<int>(rng.uniform_int(4));
        for (int i = 0; i < n; ++i) {
            SequenceItem it;
            it.item_id = rng.uniform_int(50);
            it.action_type = static_cast<int>(rng.uniform_int(kNumActionTypes));
            ts += rng.uniform(0.0, 5.0);
            it.timestamp = ts;
            it.embedding = {rng.gaussian(), rng.gaussian()};
            if (seq_kind_has_advertiser(k)) it.advertiser_id = rng.uniform_int(5);
            seq.items.push_back(it);
        }
    }
    ex.labels["checkout"] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    ex.masks["checkout"] = 1.0;
    return ex;
}

}  // namespace

TEST_CASE("serialization round trip is lossless") {
    for (uint64_t s = 0; s < 20; ++s) {
        Example ex = tiny_example(s);
        Example back = deserialize_example(serialize_example(ex));
        CHECK(serialize_example(back) == serialize_example(ex));
        CHECK(back.user_id == ex.user_id);
        CHECK(back.dense.at("price") == ex.dense.at("price"));
        for (int k = 0; k < kNumSeqKinds; ++k) {
            REQUIRE(back.sequences[k].items.size() == ex.sequences[k].items.size());
            for (size_t i = 0; i < ex.sequences[k].items.size(); ++i) {
                CHECK(back.sequences[k].items[i].item_id == ex.sequences[k].items[i].item_id);
                CHECK(back.sequences[k].items[i].timestamp == ex.sequences[k].items[i].timestamp);
                CHECK(back.sequences[k].items[i].embedding == ex.sequences[k].items[i].embedding);
            }
        }
    }
}

TEST_CASE("unknown fields are rejected") {
    Example ex = tiny_example(1);
    std::string line = serialize_example(ex);
    std::string bad = "{\"surprise\":1," + line.substr(1);
    CHECK_THROWS(deserialize_example(bad));
    CHECK_THROWS(deserialize_example("not json"));
}

TEST_CASE("partition io reports the offending line") {
    std::string path = "/tmp/dhen_test_partition.jsonl";
    std::vector<Example> exs = {tiny_example(2), tiny_example(3)};
    write_partition(path, exs);
    auto back = read_partition(path);
    REQUIRE(back.size() == 2);
    CHECK(serialize_example(back[1]) == serialize_example(exs[1]));

    FILE* f = std::fopen(path.c_str(), "a");
    std::fputs("{\"bogus\":true}\n", f);
    std::fclose(f);
    try {
        read_partition(path);
        FAIL("expected a parse error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("sequence cap keeps the most recent items") {
    BehaviorSequence seq;
    seq.kind = SeqKind::Search;
    for (int i = 0; i < 600; ++i) {
        SequenceItem it;
        it.item_id = i;
        it.timestamp = i;
        seq.items.push_back(it);
    }
    enforce_sequence_cap(seq);
    REQUIRE(static_cast<int64_t>(seq.items.size()) == kSequenceCap);
    CHECK(seq.items.front().item_id == 100);
    CHECK(seq.items.back().item_id == 599);

    BehaviorSequence bad;
    bad.items.push_back({1, 0, 5.0, {}, -1});
    bad.items.push_back({2, 0, 4.0, {}, -1});
    CHECK_THROWS(enforce_sequence_cap(bad));
}

TEST_CASE("make_batch reports missing features by name") {
    FeatureSchema schema = tiny_schema();
    Example ex = tiny_example(4);
    ex.dense.erase("price");
    std::vector<const Example*> ptrs = {&ex};
    try {
        make_batch(ptrs, schema);
        FAIL("expected missing-feature error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("price") != std::string::npos);
    }
}

TEST_CASE("min-max scaling clips and handles degenerate ranges") {
    auto [lo, hi] = fit_minmax({3.0, -1.0, 7.0}, "x");
    CHECK(lo == -1.0);
    CHECK(hi == 7.0);
    CHECK(apply_minmax(-1.0, lo, hi) == 0.0);
    CHECK(apply_minmax(7.0, lo, hi) == 1.0);
    CHECK(apply_minmax(3.0, lo, hi) == doctest::Approx(0.5));
    CHECK(apply_minmax(100.0, lo, hi) == 1.0);   // clip above
    CHECK(apply_minmax(-100.0, lo, hi) == 0.0);  // clip below
    CHECK(apply_minmax(5.0, 2.0, 2.0) == 0.0);   // degenerate range
    CHECK_THROWS(fit_minmax({}, "x"));
}

TEST_CASE("timestamp transform is log of the gap plus one") {
    auto out = timestamp_transform({10.0, 11.0, 11.0, 20.0});
    REQUIRE(out.size() == 4);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(out[2] == 0.0);
    CHECK(out[3] == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK_THROWS(timestamp_transform({5.0, 4.0}));
}

TEST_CASE("out-of-vocabulary ids map to row zero and are counted") {
    ParamStore params(7);
    CategoricalFeature feat{"country", 4, 3};
    int64_t oov = 0;
    Tensor a = embed_categorical(nullptr, params, "f.", feat, {1, 99, -2, 0}, &oov);
    CHECK(oov == 2);
    Tensor table = params.get("f.country.table");
    for (int j = 0; j < 3; ++j) {
        CHECK(a.data()[0 * 3 + j] == table.data()[1 * 3 + j]);
        CHECK(a.data()[1 * 3 + j] == table.data()[0 * 3 + j]);
        CHECK(a.data()[2 * 3 + j] == table.data()[0 * 3 + j]);
    }
}

TEST_CASE("token projection emits one token per schema feature in order") {
    FeatureSchema schema = tiny_schema();
    std::vector<Example> exs = {tiny_example(10), tiny_example(11), tiny_example(12)};
    std::vector<const Example*> ptrs;
    for (auto& e : exs) ptrs.push_back(&e);
    ExampleBatch batch = make_batch(ptrs, schema);

    ParamStore params(3);
    std::map<SeqKind, Tensor> sums;
    sums[SeqKind::Search] = Tensor::zeros({3, 4});
    sums[SeqKind::Conv] = Tensor::full({3, 4}, 0.5);
    std::vector<std::string> names;
    Tensor tokens = project_to_tokens(nullptr, params, schema, batch, sums, 6, false, &names);
    REQUIRE(tokens.shape() == Shape{3, 5, 6});
    REQUIRE(names.size() == 5);
    CHECK(names[0] == "continuous.price");
    CHECK(names[1] == "categorical.country");
    CHECK(names[2] == "pretrained.user_vec");
    CHECK(names[3] == "sequence.search");
    CHECK(names[4] == "sequence.conv");

    FeatureSchema unfitted = schema;
    unfitted.continuous[0].fitted = false;
    CHECK_THROWS(project_to_tokens(nullptr, params, unfitted, batch, sums, 6, false));
    std::map<SeqKind, Tensor> missing = {{SeqKind::Search, sums[SeqKind::Search]}};
    CHECK_THROWS(project_to_tokens(nullptr, params, schema, batch, missing, 6, false));
}

TEST_CASE("token projection gradients match finite differences") {
    FeatureSchema schema = tiny_schema();
    std::vector<Example> exs = {tiny_example(20), tiny_example(21), tiny_example(23)};
    std::vector<const Example*> ptrs;
    for (auto& e : exs) ptrs.push_back(&e);
    ExampleBatch batch = make_batch(ptrs, schema);

    ParamStore params(9);
    std::map<SeqKind, Tensor> sums;
    sums[SeqKind::Search] = Tensor::full({3, 2}, 0.3);
    sums[SeqKind::Conv] = Tensor::full({3, 2}, -0.2);
    // create parameters once so grad_check can perturb them
    project_to_tokens(nullptr, params, schema, batch, sums, 3, false);
    std::vector<Tensor> inputs = {params.get("features.continuous.price.w"),
                                  params.get("features.categorical.country.table"),
                                  params.get("features.pretrained.user_vec.bn.gamma"),
                                  params.get("features.sequence.conv.w")};
    auto fn = [&](Tape& tape, std::vector<Tensor>&) {
        Tensor t = project_to_tokens(&tape, params, schema, batch, sums, 3, false);
        return ops::sum_all(&tape, ops::mul(&tape, t, t));
    };
    CHECK(grad_check(fn, inputs) < 1e-6);
}
