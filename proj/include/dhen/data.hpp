#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dhen {

// The five behavior sequence kinds, in their fixed model-facing order.
enum class SeqKind { Search = 0, Org = 1, Ads = 2, Match = 3, Conv = 4 };
constexpr int kNumSeqKinds = 5;
const char* seq_kind_name(SeqKind k);
SeqKind seq_kind_from_name(const std::string& name);

// Kinds that carry an advertiser id per item.
bool seq_kind_has_advertiser(SeqKind k);

enum class ActionType {
    Click = 0,
    LongClick,
    Save,
    Hide,
    Checkout,
    AddToCart,
    Signup,
    SearchIssue,
    Match,
    Attribute,
};
constexpr int kNumActionTypes = 10;

constexpr int64_t kSequenceCap = 500;

struct SequenceItem {
    int64_t item_id = 0;
    int action_type = 0;
    double timestamp = 0.0;
    std::vector<double> embedding;
    int64_t advertiser_id = -1;  // only meaningful for match/conv kinds
};

struct BehaviorSequence {
    SeqKind kind = SeqKind::Search;
    std::vector<SequenceItem> items;  // ascending timestamps, length <= cap
};

// Drops all but the most recent `kSequenceCap` items and validates ordering.
void enforce_sequence_cap(BehaviorSequence& seq);

struct Example {
    int64_t user_id = 0;
    int64_t ad_id = 0;
    std::map<std::string, double> dense;
    std::map<std::string, std::int64_t> categorical;
    std::map<std::string, std::vector<double>> pretrained;
    std::array<BehaviorSequence, kNumSeqKinds> sequences;
    std::map<std::string, double> labels;  // values in {0,1}
    std::map<std::string, double> masks;   // optional; absent key means 1.0
};

struct ContinuousFeature {
    std::string name;
    double fit_min = 0.0;
    double fit_max = 1.0;
    bool fitted = false;
};

struct CategoricalFeature {
    std::string name;
    int64_t vocab_size = 1;  // id 0 reserved for out-of-vocabulary
    int64_t embedding_dim = 8;
};

struct PretrainedFeature {
    std::string name;
    int64_t dim = 8;
};

struct FeatureSchema {
    std::vector<ContinuousFeature> continuous;
    std::vector<CategoricalFeature> categorical;
    std::vector<PretrainedFeature> pretrained;
    std::vector<SeqKind> sequence_kinds;
    int64_t item_embedding_dim = 8;
    int64_t advertiser_vocab = 1;

    void validate() const;
};

// Columnar view over a set of examples; sequence columns alias the source
// examples and must not outlive them.
struct ExampleBatch {
    int64_t batch_size = 0;
    std::map<std::string, std::vector<double>> dense;
    std::map<std::string, std::vector<int64_t>> categorical;
    std::map<std::string, std::vector<double>> pretrained;  // flattened B x dim
    std::array<std::vector<const BehaviorSequence*>, kNumSeqKinds> sequences;
    std::map<std::string, std::vector<double>> labels;
    std::map<std::string, std::vector<double>> masks;
};

ExampleBatch make_batch(const std::vector<const Example*>& examples, const FeatureSchema& schema);

// Line-delimited JSON records, lossless round trip; malformed or
// unknown-field records are rejected with their line number.
std::string serialize_example(const Example& ex);
Example deserialize_example(const std::string& line);
void write_partition(const std::string& path, const std::vector<Example>& examples);
std::vector<Example> read_partition(const std::string& path);

}  // namespace dhen
