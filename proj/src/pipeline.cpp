#include "dhen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dhen/ops.hpp"

namespace dhen {

std::pair<double, double> fit_minmax(const std::vector<double>& column, const std::string& feature_name) {
    if (column.empty()) throw std::invalid_argument("fit_minmax: empty column for feature '" + feature_name + "'");
    double lo = column[0], hi = column[0];
    for (double v : column) {
        if (!std::isfinite(v))
            throw std::invalid_argument("fit_minmax: non-finite value in feature '" + feature_name + "'");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

double apply_minmax(double value, double fit_min, double fit_max) {
    if (fit_max <= fit_min) return 0.0;
    double v = (value - fit_min) / (fit_max - fit_min);
    return std::clamp(v, 0.0, 1.0);
}

void fit_schema(FeatureSchema& schema, const std::vector<Example>& examples) {
    for (auto& feat : schema.continuous) {
        if (feat.fitted) continue;
        std::vector<double> col;
        col.reserve(examples.size());
        for (const auto& ex : examples) {
            auto it = ex.dense.find(feat.name);
            if (it != ex.dense.end()) col.push_back(it->second);
        }
        auto [lo, hi] = fit_minmax(col, feat.name);
        feat.fit_min = lo;
        feat.fit_max = hi;
        feat.fitted = true;
    }
    schema.validate();
}

std::vector<double> timestamp_transform(const std::vector<double>& timestamps) {
    std::vector<double> out(timestamps.size(), 0.0);
    for (size_t i = 1; i < timestamps.size(); ++i) {
        double delta = timestamps[i] - timestamps[i - 1];
        if (delta < 0.0) throw std::invalid_argument("timestamp_transform: timestamps must be non-decreasing");
        out[i] = std::log(delta + 1.0);
    }
    return out;
}

Tensor embed_categorical(Tape* tape, ParamStore& params, const std::string& prefix, const CategoricalFeature& feat,
                         const std::vector<int64_t>& ids, int64_t* oov_counter) {
    Tensor table = params.get_or_create(prefix + feat.name + ".table", {feat.vocab_size, feat.embedding_dim},
                                        Init::Gaussian);
    std::vector<int64_t> mapped(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= 0 && ids[i] < feat.vocab_size) {
            mapped[i] = ids[i];
        } else {
            mapped[i] = 0;
            if (oov_counter) ++*oov_counter;
        }
    }
    return ops::embedding_lookup(tape, table, mapped);
}

Tensor normalize_pretrained(Tape* tape, ParamStore& params, const std::string& prefix, const Tensor& batch_embeddings,
                            bool train) {
    int64_t dim = batch_embeddings.dim(1);
    Tensor gamma = params.get_or_create(prefix + "bn.gamma", {dim}, Init::Ones);
    Tensor beta = params.get_or_create(prefix + "bn.beta", {dim}, Init::Zeros);
    Tensor rmean = params.get_or_create(prefix + "bn.running_mean", {dim}, Init::Zeros, false);
    Tensor rvar = params.get_or_create(prefix + "bn.running_var", {dim}, Init::Ones, false);
    return ops::batch_norm(tape, batch_embeddings, gamma, beta, rmean, rvar, train, 0.01, 1e-5);
}

namespace {

Tensor affine_token(Tape* tape, ParamStore& params, const std::string& name, const Tensor& x, int64_t token_dim) {
    Tensor w = params.get_or_create(name + ".w", {x.dim(1), token_dim}, Init::Xavier);
    Tensor b = params.get_or_create(name + ".b", {token_dim}, Init::Zeros);
    return ops::add(tape, ops::matmul(tape, x, w), b);
}

}  // namespace

Tensor project_to_tokens(Tape* tape, ParamStore& params, const FeatureSchema& schema, const ExampleBatch& batch,
                         const std::map<SeqKind, Tensor>& sequence_summaries, int64_t token_dim, bool train,
                         std::vector<std::string>* token_names, int64_t* oov_counter) {
    int64_t B = batch.batch_size;
    std::vector<Tensor> tokens;
    std::vector<std::string> names;

    for (const auto& feat : schema.continuous) {
        if (!feat.fitted)
            throw std::invalid_argument("project_to_tokens: continuous feature '" + feat.name + "' is not fitted");
        const auto& col = batch.dense.at(feat.name);
        std::vector<double> scaled(B);
        for (int64_t i = 0; i < B; ++i) scaled[i] = apply_minmax(col[i], feat.fit_min, feat.fit_max);
        Tensor x({B, 1}, std::move(scaled));
        tokens.push_back(affine_token(tape, params, "features.continuous." + feat.name, x, token_dim));
        names.push_back("continuous." + feat.name);
    }
    for (const auto& feat : schema.categorical) {
        Tensor emb = embed_categorical(tape, params, "features.categorical.", feat, batch.categorical.at(feat.name),
                                       oov_counter);
        tokens.push_back(affine_token(tape, params, "features.categorical." + feat.name, emb, token_dim));
        names.push_back("categorical." + feat.name);
    }
    for (const auto& feat : schema.pretrained) {
        Tensor x({B, feat.dim}, batch.pretrained.at(feat.name));
        Tensor normed = normalize_pretrained(tape, params, "features.pretrained." + feat.name + ".", x, train);
        tokens.push_back(affine_token(tape, params, "features.pretrained." + feat.name, normed, token_dim));
        names.push_back("pretrained." + feat.name);
    }
    for (SeqKind kind : schema.sequence_kinds) {
        auto it = sequence_summaries.find(kind);
        if (it == sequence_summaries.end())
            throw std::invalid_argument(std::string("project_to_tokens: missing summary for sequence kind '") +
                                        seq_kind_name(kind) + "'");
        tokens.push_back(
            affine_token(tape, params, std::string("features.sequence.") + seq_kind_name(kind), it->second, token_dim));
        names.push_back(std::string("sequence.") + seq_kind_name(kind));
    }
    if (tokens.empty()) throw std::invalid_argument("project_to_tokens: schema has no features");

    std::vector<Tensor> rows;
    rows.reserve(tokens.size());
    for (auto& t : tokens) rows.push_back(ops::reshape(tape, t, {B, 1, token_dim}));
    Tensor out = ops::concat(tape, rows, 1);
    if (token_names) *token_names = std::move(names);
    return out;
}

}  // namespace dhen
