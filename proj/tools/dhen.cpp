#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dhen/ablation.hpp"
#include "dhen/config.hpp"
#include "dhen/hash.hpp"
#include "dhen/model.hpp"
#include "dhen/pareto.hpp"
#include "dhen/pipeline.hpp"
#include "dhen/synth.hpp"
#include "dhen/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dhen;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

bool quiet() {
    const char* v = std::getenv("DHEN_QUIET");
    return v != nullptr && std::string(v) != "0";
}

void info(const std::string& msg) {
    if (!quiet()) std::cout << msg << "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

std::string part_name(int64_t day) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "part-%03lld.jsonl", static_cast<long long>(day));
    return buf;
}

std::vector<std::string> partition_files(const std::string& dir) {
    std::vector<std::string> files;
    if (!fs::is_directory(dir)) throw std::invalid_argument("data directory not found: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());  // time order follows the day-numbered names
    if (files.empty()) throw std::invalid_argument("no .jsonl partitions in " + dir);
    return files;
}

std::vector<std::vector<Example>> load_partitions(const std::string& dir) {
    std::vector<std::vector<Example>> parts;
    for (const auto& f : partition_files(dir)) parts.push_back(read_partition(f));
    return parts;
}

void ensure_out_dir(const std::string& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw std::invalid_argument(dir + " exists and is not a directory");
        if (!fs::is_empty(dir) && !force) {
            throw std::invalid_argument("output directory " + dir + " is not empty (use --force to overwrite)");
        }
    } else {
        fs::create_directories(dir);
    }
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir, int64_t days, bool force) {
    RunConfig cfg = load_run_config(config_path);
    if (days <= 0) days = cfg.train_days + cfg.eval_days;
    ensure_out_dir(out_dir, force);
    SynthGenerator gen(cfg.world);
    uint64_t hash = 0;
    for (int64_t d = 0; d < days; ++d) {
        auto part = gen.next_day(cfg.examples_per_day);
        for (const auto& ex : part) hash ^= splitmix64(fnv1a(serialize_example(ex)));
        std::string path = (fs::path(out_dir) / part_name(d)).string();
        write_partition(path, part);
        std::cout << path << ": " << part.size() << " records\n";
    }
    std::cout << "data hash: " << std::hex << hash << std::dec << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& warm_start,
              const std::string& out_ckpt, const std::string& trace_path) {
    std::string config_text = read_file(config_path);
    RunConfig cfg = parse_run_config(config_text);
    auto parts = load_partitions(data_dir);

    FeatureSchema schema = cfg.schema;
    int64_t start_partition = 0;
    Model* model = nullptr;
    AdamOptimizer opt(cfg.training.lr, cfg.training.beta1, cfg.training.beta2, cfg.training.adam_eps);

    std::unique_ptr<Model> owned;
    if (!warm_start.empty()) {
        // the stored fit statistics take precedence: feature scaling must
        // match the run that produced the warm-start checkpoint
        nlohmann::json meta = nlohmann::json::parse(read_checkpoint_info(warm_start).config_text);
        apply_fitted_stats(schema, meta.at("fitted").get<std::string>());
        owned = std::make_unique<Model>(schema, cfg.model, cfg.training.seed);
        auto info_ck = load_checkpoint(warm_start, *owned, opt);
        start_partition = info_ck.next_partition;
        model = owned.get();
        info("warm start from " + warm_start + " at partition " + std::to_string(start_partition));
    } else {
        // fit on the first partition only: resumed runs then reproduce the
        // continuous run exactly, because both saw the same fit window
        fit_schema(schema, parts.front());
        owned = std::make_unique<Model>(schema, cfg.model, cfg.training.seed);
        model = owned.get();
    }

    auto result = train(*model, opt, parts, cfg.training, start_partition);
    if (!trace_path.empty()) {
        std::ostringstream trace;
        for (const auto& line : result.trace) trace << line << "\n";
        write_file(trace_path, trace.str());
    }
    if (result.status == TrainStatus::Diverged) {
        std::cerr << "diverged: " << result.message << " (last good step " << opt.step_count() << ")\n";
        return kExitNumeric;
    }

    nlohmann::json meta;
    meta["config"] = config_text;
    meta["fitted"] = fitted_stats_json(model->schema());
    save_checkpoint(out_ckpt, *model, opt, meta.dump(), cfg.training.seed,
                    static_cast<int64_t>(parts.size()));
    info("trained " + std::to_string(result.steps) + " steps, checkpoint written to " + out_ckpt);
    return kExitOk;
}

Model load_model_from_checkpoint(const std::string& ckpt_path, AdamOptimizer& opt, RunConfig* out_cfg) {
    auto info_ck = read_checkpoint_info(ckpt_path);
    nlohmann::json meta = nlohmann::json::parse(info_ck.config_text);
    RunConfig cfg = parse_run_config(meta.at("config").get<std::string>());
    apply_fitted_stats(cfg.schema, meta.at("fitted").get<std::string>());
    Model model(cfg.schema, cfg.model, cfg.training.seed);
    load_checkpoint(ckpt_path, model, opt);
    if (out_cfg) *out_cfg = cfg;
    return model;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& report_path) {
    AdamOptimizer opt(1e-3);
    Model model = load_model_from_checkpoint(ckpt_path, opt, nullptr);
    auto parts = load_partitions(data_dir);
    auto report = evaluate_model(model, parts);
    write_file(report_path, eval_report_csv(report));

    nlohmann::json records = nlohmann::json::array();
    for (const auto& [head, m] : report.heads) {
        nlohmann::json r;
        r["head"] = head;
        r["examples"] = m.examples;
        r["positives"] = m.positives;
        if (m.defined) {
            r["roc_auc"] = m.roc_auc;
            r["pr_auc"] = m.pr_auc;
        } else {
            r["roc_auc"] = "undefined";
            r["pr_auc"] = "undefined";
        }
        records.push_back(r);
    }
    write_file(report_path + ".jsonl", records.dump() + "\n");
    std::cout << eval_report_csv(report);
    return kExitOk;
}

int cmd_ablate(const std::string& plan_name, const std::string& config_path, const std::string& out_dir,
               bool force) {
    AblationPlan plan = ablation_plan_from_name(plan_name);
    RunConfig cfg = load_run_config(config_path);
    ensure_out_dir(out_dir, force);
    auto parts = generate_days(cfg.world, cfg.train_days + cfg.eval_days, cfg.examples_per_day);
    auto report = run_ablation(plan, cfg.model, cfg.schema, parts, cfg.eval_days, cfg.training);
    std::string csv = ablation_report_csv(report);
    std::ostringstream head;
    head << "# plan=" << report.plan << " seed=" << report.seed << " data_hash=" << std::hex << report.data_hash
         << std::dec << "\n";
    write_file((fs::path(out_dir) / "report.csv").string(), head.str() + csv);
    std::cout << head.str() << csv;
    return kExitOk;
}

int cmd_search(const std::string& config_path, const std::string& out_dir, bool force) {
    RunConfig cfg = load_run_config(config_path);
    if (cfg.search_candidates < 1) throw std::invalid_argument("search.candidates must be at least 1");
    ensure_out_dir(out_dir, force);

    auto parts = generate_days(cfg.world, cfg.search_budget.train_partitions + cfg.search_budget.eval_partitions,
                               cfg.search_budget.examples_per_partition);
    cfg.search_budget.train = cfg.training;

    auto assignments = sample_assignments(cfg.search_space, cfg.search_candidates, cfg.training.seed);
    std::vector<CandidateResult> results;
    std::ostringstream log;
    for (size_t i = 0; i < assignments.size(); ++i) {
        uint64_t cand_seed = mix_keys(cfg.training.seed, 0x63616e64ULL, static_cast<uint64_t>(i));
        auto r = evaluate_candidate(assignments[i], cfg.model, cfg.schema, parts, cfg.search_budget, cand_seed);
        nlohmann::json rec;
        for (const auto& [name, v] : r.assignment) {
            if (std::holds_alternative<int64_t>(v)) rec["assignment"][name] = std::get<int64_t>(v);
            if (std::holds_alternative<std::string>(v)) rec["assignment"][name] = std::get<std::string>(v);
            if (std::holds_alternative<double>(v)) rec["assignment"][name] = std::get<double>(v);
        }
        rec["status"] = r.status == CandidateStatus::Ok ? "ok"
                        : r.status == CandidateStatus::Failed ? "failed"
                                                              : "invalid";
        rec["auc"] = r.auc;
        rec["throughput"] = r.throughput;
        rec["flops"] = r.flops;
        rec["seed"] = r.seed;
        if (!r.note.empty()) rec["note"] = r.note;
        log << rec.dump() << "\n";
        info("candidate " + std::to_string(i) + ": " + rec["status"].get<std::string>());
        results.push_back(std::move(r));
    }
    write_file((fs::path(out_dir) / "candidates.jsonl").string(), log.str());

    std::vector<CandidateResult> ok;
    for (const auto& r : results) {
        if (r.status == CandidateStatus::Ok) ok.push_back(r);
    }
    if (ok.size() < cfg.search_space.dimensions.size() + 1) {
        std::cerr << "too few successful candidates (" << ok.size() << ") to fit the surrogate\n";
        return kExitNumeric;
    }
    auto surrogate = Surrogate::fit(cfg.search_space, ok, cfg.search_lambda);
    std::ostringstream summary;
    summary.precision(17);
    summary << "r2_auc=" << surrogate.r2_auc() << "\nr2_log_throughput=" << surrogate.r2_log_throughput() << "\n";
    write_file((fs::path(out_dir) / "surrogate.txt").string(), summary.str());

    auto pool = sample_assignments(cfg.search_space, cfg.search_predict_samples,
                                   mix_keys(cfg.training.seed, 0x706f6f6cULL));
    auto preds = surrogate.predict(pool);
    auto front = pareto_front(preds);

    std::ostringstream front_csv, plot;
    front_csv.precision(17);
    plot.precision(17);
    front_csv << "index,predicted_auc,predicted_throughput";
    for (const auto& d : cfg.search_space.dimensions) front_csv << "," << d.name;
    front_csv << "\n";
    plot << "throughput,auc\n";
    for (size_t idx : front) {
        front_csv << idx << "," << preds[idx].first << "," << preds[idx].second;
        for (const auto& d : cfg.search_space.dimensions) {
            const auto& v = pool[idx].at(d.name);
            front_csv << ",";
            if (std::holds_alternative<int64_t>(v)) front_csv << std::get<int64_t>(v);
            if (std::holds_alternative<std::string>(v)) front_csv << std::get<std::string>(v);
            if (std::holds_alternative<double>(v)) front_csv << std::get<double>(v);
        }
        front_csv << "\n";
        plot << preds[idx].second << "," << preds[idx].first << "\n";
    }
    write_file((fs::path(out_dir) / "front.csv").string(), front_csv.str());
    write_file((fs::path(out_dir) / "plot.csv").string(), plot.str());
    info("front size: " + std::to_string(front.size()));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multitask conversion model workbench: data generation, training, evaluation, ablations, and "
                 "architecture search over one JSON config"};
    app.require_subcommand(1);

    std::string config_path, out_path, data_dir, warm_start, ckpt_path, report_path, plan, trace_path;
    int64_t days = 0;
    bool force = false;

    auto* gen = app.add_subcommand("gen-data", "Generate day-partitioned synthetic training data");
    gen->add_option("--config", config_path, "Run config JSON file")->required();
    gen->add_option("--out", out_path, "Output directory for partition files")->required();
    gen->add_option("--days", days, "Number of day partitions (default: data.train_days + data.eval_days)");
    gen->add_flag("--force", force, "Write into a non-empty output directory");

    auto* tr = app.add_subcommand("train", "Train a model over time-ordered partitions");
    tr->add_option("--config", config_path, "Run config JSON file")->required();
    tr->add_option("--data", data_dir, "Directory of .jsonl partitions")->required();
    tr->add_option("--out", ckpt_path, "Checkpoint output path")->required();
    tr->add_option("--warm-start", warm_start, "Resume from this checkpoint");
    tr->add_option("--trace", trace_path, "Write the per-step metric trace (JSON lines) here");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on held-out partitions");
    ev->add_option("--model", ckpt_path, "Checkpoint path")->required();
    ev->add_option("--data", data_dir, "Directory of .jsonl partitions")->required();
    ev->add_option("--report", report_path, "Report CSV output path")->required();

    auto* ab = app.add_subcommand("ablate", "Run an ablation plan");
    ab->add_option("--plan", plan, "One of: crossing, dhen-depth, ssl, feature-category")->required();
    ab->add_option("--config", config_path, "Run config JSON file")->required();
    ab->add_option("--out", out_path, "Output directory")->required();
    ab->add_flag("--force", force, "Write into a non-empty output directory");

    auto* se = app.add_subcommand("search", "Sample, evaluate, fit a surrogate, and extract the front");
    se->add_option("--config", config_path, "Run config JSON file")->required();
    se->add_option("--out", out_path, "Output directory")->required();
    se->add_flag("--force", force, "Write into a non-empty output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_path, days, force);
        if (tr->parsed()) return cmd_train(config_path, data_dir, warm_start, ckpt_path, trace_path);
        if (ev->parsed()) return cmd_eval(ckpt_path, data_dir, report_path);
        if (ab->parsed()) return cmd_ablate(plan, config_path, out_path, force);
        if (se->parsed()) return cmd_search(config_path, out_path, force);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
