#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dhen/data.hpp"
#include "dhen/params.hpp"
#include "dhen/tensor.hpp"

namespace dhen {

// Min-max stats for one continuous feature, fit on training data only.
std::pair<double, double> fit_minmax(const std::vector<double>& column, const std::string& feature_name);

// (v - min) / (max - min), clipped to [0,1]; a degenerate range maps to 0.
double apply_minmax(double value, double fit_min, double fit_max);

// Fits min-max stats for every unfitted continuous feature in place.
void fit_schema(FeatureSchema& schema, const std::vector<Example>& examples);

// Element i (i >= 1) = ln(ts[i] - ts[i-1] + 1); element 0 = 0.
std::vector<double> timestamp_transform(const std::vector<double>& timestamps);

// Learnable-row lookup with OOV ids mapped to row 0; `oov_counter`, when
// given, counts remapped ids.
Tensor embed_categorical(Tape* tape, ParamStore& params, const std::string& prefix, const CategoricalFeature& feat,
                         const std::vector<int64_t>& ids, int64_t* oov_counter);

// Batch norm over a pretrained-embedding column with learnable scale/shift.
Tensor normalize_pretrained(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& batch_embeddings,
                            bool train);

// Projects every schema feature (plus the given per-kind sequence
// summaries) through its own affine map to dimension D and stacks the
// results into a B x L x D token tensor. Token order follows schema
// declaration order; names are written to `token_names` when non-null.
Tensor project_to_tokens(Tape* tape, ParamStore& params, const FeatureSchema& schema, const ExampleBatch& batch,
                         const std::map<SeqKind, Tensor>& sequence_summaries, int64_t token_dim, bool train,
                         std::vector<std::string>* token_names = nullptr, int64_t* oov_counter = nullptr);

}  // namespace dhen
