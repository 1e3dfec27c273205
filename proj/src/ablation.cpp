#include "dhen/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dhen/pipeline.hpp"

namespace dhen {

EvalReport evaluate_model(Model& model, const std::vector<std::vector<Example>>& partitions, int64_t batch_size) {
    std::map<std::string, std::vector<double>> scores, labels;
    for (const auto& part : partitions) {
        for (size_t start = 0; start < part.size(); start += static_cast<size_t>(batch_size)) {
            size_t end = std::min(part.size(), start + static_cast<size_t>(batch_size));
            std::vector<const Example*> ptrs;
            for (size_t i = start; i < end; ++i) ptrs.push_back(&part[i]);
            auto batch = make_batch(ptrs, model.schema());
            auto preds = model.predict(batch);
            for (const auto& [head, probs] : preds) {
                auto lab = batch.labels.find(head);
                if (lab == batch.labels.end()) continue;
                const auto* mask = batch.masks.count(head) ? &batch.masks.at(head) : nullptr;
                for (size_t i = 0; i < probs.size(); ++i) {
                    if (mask && (*mask)[i] == 0.0) continue;
                    scores[head].push_back(probs[i]);
                    labels[head].push_back(lab->second[i]);
                }
            }
        }
    }
    EvalReport report;
    report.parameter_count = model.params().total_elements();
    report.flops_per_example = model.flops_per_example();
    for (const auto& [head, s] : scores) {
        HeadMetrics m;
        m.examples = static_cast<int64_t>(s.size());
        for (double v : labels[head]) m.positives += v == 1.0 ? 1 : 0;
        if (m.positives > 0 && m.positives < m.examples) {
            m.roc_auc = roc_auc(s, labels[head]);
            m.pr_auc = pr_auc(s, labels[head]);
            m.defined = true;
        }
        report.heads[head] = m;
    }
    return report;
}

const char* ablation_plan_name(AblationPlan p) {
    switch (p) {
        case AblationPlan::Crossing: return "crossing";
        case AblationPlan::DhenDepth: return "dhen-depth";
        case AblationPlan::Ssl: return "ssl";
        case AblationPlan::FeatureCategory: return "feature-category";
    }
    return "?";
}

AblationPlan ablation_plan_from_name(const std::string& name) {
    for (AblationPlan p : {AblationPlan::Crossing, AblationPlan::DhenDepth, AblationPlan::Ssl,
                           AblationPlan::FeatureCategory}) {
        if (name == ablation_plan_name(p)) return p;
    }
    throw std::invalid_argument("unknown ablation plan '" + name +
                                "' (expected crossing, dhen-depth, ssl, or feature-category)");
}

namespace {

ModuleConfig module_of_kind(ModuleKind kind, const ModelConfig& base) {
    ModuleConfig m;
    for (const auto& layer : base.dhen.layers) {
        for (const auto& mod : layer.modules) {
            if (mod.kind == kind) return mod;
        }
    }
    m.kind = kind;
    return m;
}

ModelConfig single_module_config(const ModelConfig& base, ModuleKind kind, int64_t depth) {
    ModelConfig cfg = base;
    cfg.dhen.layers.clear();
    for (int64_t i = 0; i < depth; ++i) cfg.dhen.layers.push_back({{module_of_kind(kind, base)}});
    return cfg;
}

FeatureSchema ad_side_only(const FeatureSchema& schema) {
    FeatureSchema s = schema;
    s.continuous.clear();
    for (const auto& f : schema.continuous) {
        if (f.name != "user_activity") s.continuous.push_back(f);
    }
    s.categorical.clear();
    for (const auto& f : schema.categorical) {
        if (f.name != "user_country" && f.name != "user_interest") s.categorical.push_back(f);
    }
    s.pretrained.clear();
    for (const auto& f : schema.pretrained) {
        if (f.name != "user_embedding") s.pretrained.push_back(f);
    }
    s.sequence_kinds.clear();
    return s;
}

}  // namespace

std::vector<AblationArm> ablation_arms(AblationPlan plan, const ModelConfig& base, const FeatureSchema& schema) {
    std::vector<AblationArm> arms;
    switch (plan) {
        case AblationPlan::Crossing: {
            int64_t depth = static_cast<int64_t>(base.dhen.layers.size());
            arms.push_back({"mlp", single_module_config(base, ModuleKind::Mlp, depth), schema, true});
            arms.push_back({"dcn_v2", single_module_config(base, ModuleKind::DcnV2, depth), schema, false});
            arms.push_back({"masknet", single_module_config(base, ModuleKind::MaskNet, depth), schema, false});
            arms.push_back({"transformer", single_module_config(base, ModuleKind::Transformer, depth), schema, false});
            arms.push_back({"dhen", base, schema, false});
            break;
        }
        case AblationPlan::DhenDepth: {
            ModelConfig baseline = single_module_config(base, ModuleKind::Transformer, 1);
            baseline.dhen.layers[0].modules[0].transformer.num_layers = 4;
            arms.push_back({"transformer_4l", baseline, schema, true});
            for (int64_t depth = 1; depth <= 3; ++depth) {
                ModelConfig cfg = base;
                cfg.dhen.layers.clear();
                for (int64_t i = 0; i < depth; ++i) {
                    cfg.dhen.layers.push_back(base.dhen.layers[i % base.dhen.layers.size()]);
                }
                arms.push_back({"dhen_depth_" + std::to_string(depth), cfg, schema, false});
            }
            break;
        }
        case AblationPlan::Ssl: {
            ModelConfig off = base;
            off.ssl_enabled = 0.0;
            arms.push_back({"ssl_off", off, schema, true});
            struct Row {
                SslObjective obj;
                int64_t pos, neg;
                double org, ads;
            };
            const Row rows[] = {
                {SslObjective::NextAction, 90, 20, 2e-4, 1e-4}, {SslObjective::NextAction, 90, 20, 0.0, 2e-4},
                {SslObjective::NextAction, 20, 100, 5e-4, 5e-4}, {SslObjective::NextAction, 20, 100, 1e-3, 1e-3},
                {SslObjective::NextAction, 20, 100, 1e-2, 1e-2}, {SslObjective::MaskedItem, 60, 30, 2e-4, 1e-4},
            };
            for (const auto& r : rows) {
                ModelConfig cfg = base;
                cfg.ssl_enabled = 1.0;
                cfg.ssl.objective = r.obj;
                cfg.ssl.num_positives = r.pos;
                cfg.ssl.num_negatives = r.neg;
                cfg.ssl.org_weight = r.org;
                cfg.ssl.ads_weight = r.ads;
                std::ostringstream name;
                name << ssl_objective_name(r.obj) << "_" << r.pos << "_" << r.neg << "_w" << r.org << "_" << r.ads;
                arms.push_back({name.str(), cfg, schema, false});
            }
            break;
        }
        case AblationPlan::FeatureCategory: {
            FeatureSchema baseline = ad_side_only(schema);
            ModelConfig no_seq = base;
            no_seq.ssl_enabled = 0.0;  // no sequences, nothing to contrast
            arms.push_back({"no_user_features", no_seq, baseline, true});

            FeatureSchema demographic = baseline;
            for (const auto& f : schema.categorical)
                if (f.name == "user_country") demographic.categorical.push_back(f);
            arms.push_back({"demographic", no_seq, demographic, false});

            FeatureSchema counting = baseline;
            for (const auto& f : schema.continuous)
                if (f.name == "user_activity") counting.continuous.push_back(f);
            arms.push_back({"counting", no_seq, counting, false});

            FeatureSchema categorical = baseline;
            for (const auto& f : schema.categorical)
                if (f.name == "user_interest") categorical.categorical.push_back(f);
            arms.push_back({"categorical", no_seq, categorical, false});

            FeatureSchema pretrained = baseline;
            for (const auto& f : schema.pretrained)
                if (f.name == "user_embedding") pretrained.pretrained.push_back(f);
            arms.push_back({"pretrained_embedding", no_seq, pretrained, false});

            FeatureSchema sequence = baseline;
            sequence.sequence_kinds = schema.sequence_kinds;
            arms.push_back({"sequence", base, sequence, false});
            break;
        }
    }
    return arms;
}

AblationReport run_ablation(AblationPlan plan, const ModelConfig& base, const FeatureSchema& schema,
                            const std::vector<std::vector<Example>>& partitions, int64_t eval_days,
                            const TrainConfig& tc) {
    if (eval_days < 1 || static_cast<size_t>(eval_days) >= partitions.size()) {
        throw std::invalid_argument("eval_days must leave at least one training partition");
    }
    AblationReport report;
    report.plan = ablation_plan_name(plan);
    report.seed = tc.seed;
    report.data_hash = dataset_hash(partitions);

    std::vector<std::vector<Example>> train_parts(partitions.begin(), partitions.end() - eval_days);
    std::vector<std::vector<Example>> eval_parts(partitions.end() - eval_days, partitions.end());
    std::vector<Example> fit_pool;
    for (const auto& p : train_parts) fit_pool.insert(fit_pool.end(), p.begin(), p.end());

    auto arms = ablation_arms(plan, base, schema);
    std::map<std::string, double> baseline_auc;
    for (const auto& arm : arms) {
        FeatureSchema fitted = arm.schema;
        fit_schema(fitted, fit_pool);
        Model model(fitted, arm.config, tc.seed);
        AdamOptimizer opt(tc.lr, tc.beta1, tc.beta2, tc.adam_eps);
        auto res = train(model, opt, train_parts, tc);
        if (res.status != TrainStatus::Ok) {
            throw std::runtime_error("ablation arm '" + arm.name + "' failed: " + res.message);
        }
        auto eval = evaluate_model(model, eval_parts);
        for (const auto& [head, m] : eval.heads) {
            AblationRow row;
            row.arm = arm.name;
            row.head = head;
            row.roc_auc = m.roc_auc;
            row.pr_auc = m.pr_auc;
            row.defined = m.defined;
            row.flops = eval.flops_per_example;
            row.params = eval.parameter_count;
            if (arm.baseline && m.defined) baseline_auc[head] = m.roc_auc;
            if (m.defined && baseline_auc.count(head)) row.lift = m.roc_auc - baseline_auc.at(head);
            report.rows.push_back(row);
        }
    }
    return report;
}

std::string ablation_report_csv(const AblationReport& report) {
    std::ostringstream out;
    out.precision(17);
    out << "arm,head,roc_auc,pr_auc,lift,flops,params\n";
    for (const auto& r : report.rows) {
        out << r.arm << "," << r.head << ",";
        if (r.defined) {
            out << r.roc_auc << "," << r.pr_auc << "," << r.lift;
        } else {
            out << "undefined,undefined,undefined";
        }
        out << "," << r.flops << "," << r.params << "\n";
    }
    return out.str();
}

ModelConfig config_from_assignment(const Assignment& a, const ModelConfig& base, TrainConfig* train) {
    ModelConfig cfg = base;
    for (const auto& [name, value] : a) {
        if (name == "depth") {
            int64_t depth = std::get<int64_t>(value);
            if (depth < 1) throw std::invalid_argument("depth must be at least 1");
            cfg.dhen.layers.clear();
            for (int64_t i = 0; i < depth; ++i) {
                cfg.dhen.layers.push_back(base.dhen.layers[i % base.dhen.layers.size()]);
            }
        } else if (name == "module") {
            const std::string& kind = std::get<std::string>(value);
            if (kind != "mixed") {
                auto mod = module_of_kind(module_kind_from_name(kind), base);
                for (auto& layer : cfg.dhen.layers) layer.modules = {mod};
            }
        } else if (name == "layer_width") {
            cfg.dhen.layer_width = std::get<int64_t>(value);
        } else if (name == "lr") {
            if (train) train->lr = std::get<double>(value);
        } else if (name == "ssl_enabled") {
            cfg.ssl_enabled = std::get<int64_t>(value) ? 1.0 : 0.0;
        } else if (name == "ssl_pos") {
            cfg.ssl.num_positives = std::get<int64_t>(value);
        } else if (name == "ssl_neg") {
            cfg.ssl.num_negatives = std::get<int64_t>(value);
        } else if (name == "ssl_org_weight") {
            cfg.ssl.org_weight = std::get<double>(value);
        } else if (name == "ssl_ads_weight") {
            cfg.ssl.ads_weight = std::get<double>(value);
        } else if (name == "ssl_objective") {
            cfg.ssl.objective = ssl_objective_from_name(std::get<std::string>(value));
        } else {
            throw std::invalid_argument("unknown search dimension '" + name + "'");
        }
    }
    cfg.dhen.validate();
    return cfg;
}

CandidateResult evaluate_candidate(const Assignment& a, const ModelConfig& base, const FeatureSchema& schema,
                                   const std::vector<std::vector<Example>>& partitions, const SearchBudget& budget,
                                   uint64_t seed) {
    CandidateResult result;
    result.assignment = a;
    result.seed = seed;
    if (budget.eval_partitions < 1) throw std::invalid_argument("budget needs at least one eval partition");
    if (partitions.size() < static_cast<size_t>(budget.train_partitions + budget.eval_partitions)) {
        throw std::invalid_argument("not enough partitions for the search budget");
    }

    TrainConfig tc = budget.train;
    tc.seed = seed;
    ModelConfig cfg;
    try {
        cfg = config_from_assignment(a, base, &tc);
    } catch (const std::exception& e) {
        result.status = CandidateStatus::Invalid;
        result.note = e.what();
        return result;
    }

    std::vector<std::vector<Example>> train_parts(partitions.begin(), partitions.begin() + budget.train_partitions);
    std::vector<std::vector<Example>> eval_parts(partitions.begin() + budget.train_partitions,
                                                 partitions.begin() + budget.train_partitions + budget.eval_partitions);
    std::vector<Example> fit_pool;
    for (const auto& p : train_parts) fit_pool.insert(fit_pool.end(), p.begin(), p.end());
    FeatureSchema fitted = schema;
    fit_schema(fitted, fit_pool);

    Model model(fitted, cfg, seed);
    AdamOptimizer opt(tc.lr, tc.beta1, tc.beta2, tc.adam_eps);
    auto res = train(model, opt, train_parts, tc);
    if (res.status != TrainStatus::Ok) {
        result.status = CandidateStatus::Failed;
        result.note = res.message;
        return result;
    }

    std::string target_head;
    for (const auto& h : cfg.dhen.heads) {
        if (!h.train_only) {
            target_head = h.name;
            break;
        }
    }
    auto eval = evaluate_model(model, eval_parts);
    auto it = eval.heads.find(target_head);
    if (it == eval.heads.end() || !it->second.defined) {
        result.status = CandidateStatus::Failed;
        result.note = "eval metric undefined for head '" + target_head + "'";
        return result;
    }
    result.auc = it->second.roc_auc;
    result.flops = eval.flops_per_example;
    result.throughput = 1e9 / eval.flops_per_example;  // analytic examples/sec proxy
    return result;
}

SearchSpace default_search_space() {
    SearchSpace space;
    space.dimensions.push_back({"depth", SearchDimension::Kind::IntegerRange, 1, 3, {}, 0.0, 0.0});
    space.dimensions.push_back({"module", SearchDimension::Kind::Categorical, 0, 0,
                                {"mlp", "dcn_v2", "masknet", "transformer", "mixed"}, 0.0, 0.0});
    space.dimensions.push_back({"lr", SearchDimension::Kind::LogUniformFloat, 0, 0, {}, 1e-4, 1e-2});
    return space;
}

}  // namespace dhen
