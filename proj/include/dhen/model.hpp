#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dhen/crossing.hpp"
#include "dhen/data.hpp"
#include "dhen/params.hpp"
#include "dhen/sequence.hpp"
#include "dhen/ssl.hpp"
#include "dhen/tensor.hpp"

namespace dhen {

enum class ModuleKind { Mlp, DcnV2, MaskNet, Transformer };
const char* module_kind_name(ModuleKind k);
ModuleKind module_kind_from_name(const std::string& name);

struct ModuleConfig {
    ModuleKind kind = ModuleKind::Mlp;
    std::vector<int64_t> mlp_hidden{512};
    int64_t dcn_layers = 3;
    int64_t dcn_rank = 64;
    MaskNetConfig masknet;
    TransformerConfig transformer;
};

struct LayerConfig {
    std::vector<ModuleConfig> modules;
};

struct HeadConfig {
    std::string name;
    std::vector<int64_t> tower{128, 128, 128};
    bool train_only = false;  // contributes to the loss, never served
    double weight = 1.0;
};

struct DhenConfig {
    int64_t token_dim = 64;
    int64_t layer_width = 1024;
    int64_t reshape_dim = 64;  // token dim for inter-layer reshape
    bool residual = false;
    std::vector<LayerConfig> layers;
    std::vector<HeadConfig> heads;
    void validate() const;
};

struct ModelConfig {
    DhenConfig dhen;
    SequenceEncoderConfig sequence;
    SslConfig ssl;
    double ssl_enabled = 1.0;  // 0 disables the self-supervised loss
};

// Stacked ensembles over the feature tokens: each layer sums its module
// outputs (width W); between layers the W vector is reshaped back into
// reshape-dim tokens. Returns the final B x W hidden state.
Tensor dhen_forward(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& tokens,
                    const DhenConfig& cfg, bool train, uint64_t seed);

Tensor head_forward(Tape* tape, ParamStore& params, const HeadConfig& head, const Tensor& hidden);

class Model {
public:
    Model(FeatureSchema schema, ModelConfig config, uint64_t init_seed);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const FeatureSchema& schema() const { return schema_; }
    const ModelConfig& config() const { return config_; }

    // Logits for every head (train-only ones included when requested).
    std::map<std::string, Tensor> forward(Tape* tape, const ExampleBatch& batch, bool train, uint64_t seed,
                                          bool include_train_only = true);

    Tensor ssl_loss(Tape* tape, const ExampleBatch& batch, bool train, uint64_t seed);

    // Serving path: eval mode, sigmoid outputs, train-only heads excluded.
    std::map<std::string, std::vector<double>> predict(const ExampleBatch& batch);

    int64_t oov_count() const { return oov_count_; }

    // Analytic multiply-add count for one serving example.
    double flops_per_example() const;

private:
    FeatureSchema schema_;
    ModelConfig config_;
    ParamStore params_;
    int64_t oov_count_ = 0;
};

// Deployed configuration: two ensemble layers (MLP + attention, then
// MLP + masked blocks), 1024-wide, four served heads plus a train-only
// click head.
ModelConfig default_production_config();
FeatureSchema default_production_schema();

}  // namespace dhen
