#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "invmm/checkpoint.hpp"
#include "invmm/csvio.hpp"
#include "invmm/errors.hpp"
#include "invmm/experiments.hpp"
#include "invmm/parallel.hpp"

namespace invmm::cli {

using nlohmann::json;

namespace {

// All artifact files carry the resolved config + seed; nothing volatile
// (timestamps, absolute output paths) may enter, so identical runs write
// identical bytes.
void write_manifest(const std::filesystem::path& out, const std::string& command,
                    const RunConfig& cfg, const std::vector<std::string>& outputs,
                    const json& derived = json::object()) {
    json j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["config"] = cfg.root;
    j["outputs"] = outputs;
    if (!derived.empty()) j["derived"] = derived;
    write_text_file(out / "manifest.json", j.dump(2) + "\n");
}

std::filesystem::path required_path(const RunConfig& cfg, const std::string& section,
                                    const std::string& key) {
    const std::string p = cfg.get_string(section, key, "");
    if (p.empty()) throw ConfigError("config key '" + section + "." + key + "' is required");
    return p;
}

ReplicationJudge resolve_judge(const RunConfig& cfg, const ToyDataset& dataset, json& derived) {
    JudgeConfig jc = cfg.judge_config();
    if (jc.beta <= 0.0) {
        const CalibrationResult cal = calibrate_beta(dataset, jc, cfg.judge_percentile());
        jc.beta = cal.beta;
        derived["beta"] = cal.beta;
        derived["beta_calibrated"] = true;
        if (cal.degenerate) derived["beta_degenerate_warning"] = true;
    } else {
        derived["beta"] = jc.beta;
        derived["beta_calibrated"] = false;
    }
    return ReplicationJudge(jc);
}

std::vector<std::size_t> resolve_image_ids(const RunConfig& cfg, const std::string& section,
                                           const ToyDataset& dataset) {
    const json& sec = cfg.section(section);
    std::vector<std::size_t> ids;
    if (sec.contains("image_ids")) {
        ids = sec.at("image_ids").get<std::vector<std::size_t>>();
        for (std::size_t id : ids) {
            if (id >= dataset.images.size()) {
                throw ConfigError("image id " + std::to_string(id) + " out of dataset range");
            }
        }
    } else {
        ids.resize(dataset.images.size());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    }
    if (ids.empty()) throw ConfigError("no image ids to process");
    return ids;
}

struct InvertJobOutput {
    json result_line;
    std::vector<std::pair<std::string, std::string>> files; // name -> content
};

} // namespace

void cmd_gen_dataset(const RunConfig& cfg, const CommonArgs& args) {
    const DatasetSpec spec = cfg.dataset_spec();
    const ToyDataset ds = generate_dataset(spec);
    save_dataset(ds, args.out / "dataset.json");
    json derived;
    derived["content_hash"] = ds.content_hash();
    derived["rows"] = ds.training_rows().size();
    write_manifest(args.out, "gen-dataset", cfg, {"dataset.json"}, derived);
}

void cmd_train(const RunConfig& cfg, const CommonArgs& args) {
    const ToyDataset dataset = load_dataset(required_path(cfg, "train", "dataset"));
    const TrainConfig tc = cfg.train_config();
    NoiseSchedule sched = cfg.schedule();

    std::size_t prior_epochs = 0;
    TrainReport report;
    Denoiser model = [&]() -> Denoiser {
        const std::string resume = cfg.get_string("train", "resume", "");
        const std::size_t vocab = tc.conditional ? dataset.vocab_size() : 0;
        const DenoiserConfig mc = cfg.model_config(dataset.dim(), vocab);
        if (resume.empty()) {
            return train_denoiser(dataset, sched, mc, tc, &report);
        }
        LoadedCheckpoint ckpt = load_checkpoint(resume);
        prior_epochs = ckpt.manifest.epochs;
        sched = std::move(ckpt.schedule);
        Denoiser m = std::move(ckpt.model);
        m.unfreeze();
        train_denoiser_inplace(m, dataset, sched, tc, &report);
        m.freeze();
        return m;
    }();

    TrainingManifest manifest;
    manifest.dataset_hash = dataset.content_hash();
    manifest.epochs = prior_epochs + tc.epochs;
    manifest.duplication = dataset.duplication;
    manifest.seed = tc.seed;
    save_checkpoint(args.out / "checkpoint.json", model, sched, manifest);

    std::string loss_csv = "epoch,ema_loss\n";
    for (std::size_t e = 0; e < report.epoch_ema_loss.size(); ++e) {
        loss_csv += csv_line({std::to_string(prior_epochs + e + 1),
                              format_double(report.epoch_ema_loss[e])});
    }
    write_text_file(args.out / "train_loss.csv", loss_csv);
    json derived;
    derived["final_ema_loss"] = report.final_ema;
    derived["total_epochs"] = manifest.epochs;
    write_manifest(args.out, "train", cfg, {"checkpoint.json", "train_loss.csv"}, derived);
}

namespace {

InvertJobOutput run_one_inversion(const LoadedCheckpoint& ckpt, const ToyDataset& dataset,
                                  const ReplicationJudge& judge, const RunConfig& cfg,
                                  const std::string& mode, std::size_t image_id) {
    InversionConfig inv = cfg.inversion_config(ckpt.schedule);
    inv.seed = Rng::derive(cfg.seed, image_id);
    const Tensor& x0 = dataset.images[image_id];

    std::optional<std::size_t> cond_id;
    if (ckpt.model.conditional() && mode != "joint") {
        if (dataset.labels.empty()) {
            throw ConfigError("conditional checkpoint needs a labeled dataset (or mode=joint)");
        }
        cond_id = dataset.labels[image_id];
    }

    InvertJobOutput out;
    InversionResult res;
    if (mode == "adaptive") {
        res = invert(ckpt.model, ckpt.schedule, x0, inv, judge, cond_id);
    } else if (mode == "joint") {
        PromptInvConfig pc = cfg.prompt_config();
        JointInversionResult joint = joint_invert(ckpt.model, ckpt.schedule, x0, inv, pc, judge);
        res = std::move(joint.inversion);
        out.files.push_back(
            {"prompt_" + std::to_string(image_id) + ".csv", prompt_dist_csv(joint.prompt)});
    } else if (mode.rfind("fixed:", 0) == 0) {
        double lam = 0.0;
        try {
            lam = std::stod(mode.substr(6));
        } catch (const std::exception&) {
            throw ConfigError("bad fixed lambda in mode '" + mode + "'");
        }
        res = fixed_lambda_invert(ckpt.model, ckpt.schedule, x0, inv, judge, lam, cond_id);
    } else {
        throw ConfigError("unknown inversion mode '" + mode +
                          "' (want adaptive, fixed:<lambda> or joint)");
    }

    const std::string trace_name = "trace_" + std::to_string(image_id) + ".csv";
    out.files.push_back({trace_name, trace_to_csv(res)});
    // JSON has no infinity literal; an infinite score is score=null with
    // success=false (CSV exports carry "inf" instead).
    out.result_line["image_id"] = image_id;
    out.result_line["score"] = std::isfinite(res.score) ? json(res.score) : json(nullptr);
    out.result_line["success"] = res.success;
    out.result_line["stop_step"] = res.stop_step;
    out.result_line["sensitivity_fraction"] = res.sensitivity_fraction;
    out.result_line["trace_file"] = trace_name;
    out.result_line["mode"] = mode;
    return out;
}

} // namespace

void cmd_invert(const RunConfig& cfg, const CommonArgs& args) {
    const LoadedCheckpoint ckpt = load_checkpoint(required_path(cfg, "invert", "checkpoint"));
    const ToyDataset dataset = load_dataset(required_path(cfg, "invert", "dataset"));
    if (dataset.dim() != ckpt.model.config().data_dim) {
        throw ConfigError("dataset does not match the checkpoint's data dimensionality");
    }
    const std::vector<std::size_t> ids = resolve_image_ids(cfg, "invert", dataset);
    const std::string mode =
        !args.mode.empty() ? args.mode : cfg.get_string("invert", "mode", "adaptive");
    json derived;
    const ReplicationJudge judge = resolve_judge(cfg, dataset, derived);
    // Validate the inversion/prompt sections before any work starts.
    (void)cfg.inversion_config(ckpt.schedule);
    if (mode == "joint") (void)cfg.prompt_config();

    std::vector<InvertJobOutput> jobs(ids.size());
    parallel_for(ids.size(), args.workers, [&](std::size_t i) {
        jobs[i] = run_one_inversion(ckpt, dataset, judge, cfg, mode, ids[i]);
    });

    std::string jsonl;
    std::vector<std::string> outputs{"results.jsonl"};
    for (auto& job : jobs) {
        jsonl += job.result_line.dump() + "\n";
        for (auto& [name, content] : job.files) {
            write_text_file(args.out / name, content);
            outputs.push_back(name);
        }
    }
    write_text_file(args.out / "results.jsonl", jsonl);
    derived["mode"] = mode;
    write_manifest(args.out, "invert", cfg, outputs, derived);
}

namespace {

json audit_metrics(const ToyDataset& dataset, const std::vector<std::size_t>& ids,
                   const std::vector<double>& invmm_scores,
                   const std::vector<double>& baseline_scores,
                   const std::set<std::size_t>& s_nn, double fpr_budget) {
    // Positives: images the training stream duplicates.
    ScoredSet invmm_set, base_set;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const bool positive = dataset.copy_count(ids[i]) > 1;
        invmm_set.entries.push_back({ids[i], invmm_scores[i], positive});
        base_set.entries.push_back({ids[i], baseline_scores[i], positive});
    }
    json m;
    m["invmm_auc"] = auc(invmm_set, ScoreOrientation::lower_is_positive);
    m["invmm_tpr_at_fpr"] = tpr_at_fpr(invmm_set, fpr_budget, ScoreOrientation::lower_is_positive);
    m["baseline_auc"] = auc(base_set, ScoreOrientation::lower_is_positive);
    m["baseline_tpr_at_fpr"] =
        tpr_at_fpr(base_set, fpr_budget, ScoreOrientation::lower_is_positive);
    std::vector<std::pair<std::size_t, double>> scored;
    for (std::size_t i = 0; i < ids.size(); ++i) scored.push_back({ids[i], invmm_scores[i]});
    const auto iou = iou_collation(scored, s_nn);
    if (iou) {
        m["iou"] = *iou;
    } else {
        m["iou"] = nullptr; // N/A when the nearest-neighbor set is empty
    }
    m["s_nn_size"] = s_nn.size();
    m["fpr_budget"] = fpr_budget;
    return m;
}

std::string summary_csv_from_metrics(const json& m) {
    std::string out = "metric,value\n";
    for (const auto& [key, val] : m.items()) {
        std::string cell;
        if (val.is_null()) {
            cell = "na";
        } else if (val.is_number()) {
            cell = format_double(val.get<double>());
        } else {
            cell = val.dump();
        }
        out += csv_line({key, cell});
    }
    return out;
}

} // namespace

void cmd_audit(const RunConfig& cfg, const CommonArgs& args) {
    const LoadedCheckpoint ckpt = load_checkpoint(required_path(cfg, "audit", "checkpoint"));
    const ToyDataset dataset = load_dataset(required_path(cfg, "audit", "dataset"));
    if (dataset.dim() != ckpt.model.config().data_dim) {
        throw ConfigError("dataset does not match the checkpoint's data dimensionality");
    }
    const std::vector<std::size_t> ids = resolve_image_ids(cfg, "audit", dataset);
    const std::size_t nn_samples = cfg.get_size("audit", "nn_samples", 1000);
    const double fpr_budget = cfg.get_double("audit", "fpr_budget", 0.01);
    const CondSampling cond_mode =
        cond_sampling_from_string(cfg.get_string("audit", "cond_sampling", "uniform"));
    json derived;
    const ReplicationJudge judge = resolve_judge(cfg, dataset, derived);
    const SamplerConfig sampler = cfg.sampler_config(ckpt.schedule);
    (void)cfg.inversion_config(ckpt.schedule);

    // Nearest-neighbor ground truth.
    Rng nn_rng(Rng::derive(cfg.seed, 0x4E4EULL));
    const NnTestResult nn = nearest_neighbor_test(ckpt.model, ckpt.schedule, dataset, nn_samples,
                                                  judge, sampler, nn_rng, cond_mode);

    // Inversion scores.
    std::vector<InvertJobOutput> jobs(ids.size());
    parallel_for(ids.size(), args.workers, [&](std::size_t i) {
        jobs[i] = run_one_inversion(ckpt, dataset, judge, cfg, "adaptive", ids[i]);
    });
    std::vector<double> invmm_scores(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const json& line = jobs[i].result_line;
        invmm_scores[i] = line["score"].is_null() ? std::numeric_limits<double>::infinity()
                                                  : line["score"].get<double>();
    }

    // Loss statistic baseline on the same images.
    std::vector<Tensor> images;
    for (std::size_t id : ids) images.push_back(dataset.images[id]);
    std::optional<std::vector<std::size_t>> cond_ids;
    if (ckpt.model.conditional()) {
        if (dataset.labels.empty()) throw ConfigError("conditional audit needs a labeled dataset");
        std::vector<std::size_t> labels;
        for (std::size_t id : ids) labels.push_back(dataset.labels[id]);
        cond_ids = std::move(labels);
    }
    const std::vector<double> baseline =
        loss_mi_baseline(ckpt.model, ckpt.schedule, images, cfg.baseline_config(), cond_ids);

    const json metrics = audit_metrics(dataset, ids, invmm_scores, baseline, nn.replicated_ids,
                                       fpr_budget);

    // Outputs.
    std::vector<std::string> outputs;
    std::string jsonl;
    for (auto& job : jobs) {
        jsonl += job.result_line.dump() + "\n";
        for (auto& [name, content] : job.files) {
            write_text_file(args.out / name, content);
            outputs.push_back(name);
        }
    }
    write_text_file(args.out / "results.jsonl", jsonl);
    outputs.insert(outputs.begin(), "results.jsonl");

    write_text_file(args.out / "s_nn.csv", nn_result_csv(nn));
    outputs.push_back("s_nn.csv");

    std::string base_csv = "image_id,loss,duplicated\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        base_csv += csv_line({std::to_string(ids[i]), format_double(baseline[i]),
                              dataset.copy_count(ids[i]) > 1 ? "true" : "false"});
    }
    write_text_file(args.out / "baseline.csv", base_csv);
    outputs.push_back("baseline.csv");

    write_text_file(args.out / "summary.csv", summary_csv_from_metrics(metrics));
    outputs.push_back("summary.csv");

    derived["metrics"] = metrics;
    write_manifest(args.out, "audit", cfg, outputs, derived);
}

// ---------------------------------------------------------------------------
// Experiment grids

namespace {

std::filesystem::path train_cell(const RunConfig& cfg, const std::filesystem::path& out,
                                 const std::string& cell_name, const ToyDataset& dataset,
                                 std::size_t epochs, std::uint64_t train_seed) {
    const NoiseSchedule sched = cfg.schedule();
    TrainConfig tc = cfg.train_config();
    tc.epochs = epochs;
    tc.seed = train_seed;
    const std::size_t vocab = tc.conditional ? dataset.vocab_size() : 0;
    const DenoiserConfig mc = cfg.model_config(dataset.dim(), vocab);
    const Denoiser model = train_denoiser(dataset, sched, mc, tc);
    TrainingManifest manifest;
    manifest.dataset_hash = dataset.content_hash();
    manifest.epochs = epochs;
    manifest.duplication = dataset.duplication;
    manifest.seed = tc.seed;
    const std::filesystem::path path = out / ("checkpoint_" + cell_name + ".json");
    save_checkpoint(path, model, sched, manifest);
    return path;
}

void emit_experiment(const RunConfig& cfg, const CommonArgs& args, const std::string& kind,
                     const ExperimentManifest& manifest, const ExperimentTable& table,
                     json derived, std::vector<std::string> outputs) {
    write_text_file(args.out / "results.csv", results_csv(table));
    write_text_file(args.out / "summary.csv", summary_csv(table));
    outputs.push_back("results.csv");
    outputs.push_back("summary.csv");
    derived["cells"] = json::array();
    for (const auto& c : manifest.cells) {
        json jc;
        jc["name"] = c.name;
        jc["checkpoint"] = c.checkpoint.filename().string();
        jc["targets"] = c.target_ids;
        if (c.fixed_lambda) jc["fixed_lambda"] = *c.fixed_lambda;
        derived["cells"].push_back(std::move(jc));
    }
    write_manifest(args.out, "experiment-" + kind, cfg, outputs, derived);
}

} // namespace

void cmd_experiment(const RunConfig& cfg, const CommonArgs& args, const std::string& kind) {
    const json& exp = cfg.section("experiment");
    json derived;
    std::vector<std::string> outputs;

    ExperimentManifest manifest;
    manifest.base_seed = cfg.seed;
    manifest.workers = args.workers;

    if (kind == "duplication") {
        std::vector<std::size_t> factors = exp.contains("factors")
                                               ? exp.at("factors").get<std::vector<std::size_t>>()
                                               : std::vector<std::size_t>{1, 5, 10, 20};
        DatasetSpec spec = cfg.dataset_spec();
        if (!exp.contains("targets")) throw ConfigError("experiment.targets is required");
        const auto targets = exp.at("targets").get<std::vector<std::size_t>>();
        // Same base images in every cell; only the duplication map varies.
        spec.duplication.clear();
        const ToyDataset base = generate_dataset(spec);
        save_dataset(base, args.out / "dataset.json");
        outputs.push_back("dataset.json");
        manifest.dataset_path = args.out / "dataset.json";
        for (std::size_t f : factors) {
            if (f < 1) throw ConfigError("duplication factors must be >= 1");
            DatasetSpec cell_spec = spec;
            for (std::size_t id : targets) {
                if (f > 1) cell_spec.duplication[id] = f;
            }
            const ToyDataset cell_data = generate_dataset(cell_spec);
            const std::string name = "dup" + std::to_string(f);
            const auto ckpt = train_cell(cfg, args.out, name, cell_data,
                                         cfg.train_config().epochs, cfg.seed);
            outputs.push_back(ckpt.filename().string());
            manifest.cells.push_back({name, ckpt, targets, std::nullopt});
        }
    } else if (kind == "epoch") {
        std::vector<std::size_t> multipliers =
            exp.contains("multipliers") ? exp.at("multipliers").get<std::vector<std::size_t>>()
                                        : std::vector<std::size_t>{1, 2, 4};
        const DatasetSpec spec = cfg.dataset_spec();
        const ToyDataset data = generate_dataset(spec);
        save_dataset(data, args.out / "dataset.json");
        outputs.push_back("dataset.json");
        manifest.dataset_path = args.out / "dataset.json";
        std::vector<std::size_t> targets = exp.contains("targets")
                                               ? exp.at("targets").get<std::vector<std::size_t>>()
                                               : data.duplicated_ids();
        if (targets.empty()) throw ConfigError("epoch experiment needs duplicated targets");
        const std::size_t base_epochs = cfg.train_config().epochs;
        for (std::size_t m : multipliers) {
            if (m < 1) throw ConfigError("epoch multipliers must be >= 1");
            const std::string name = "epoch" + std::to_string(m);
            // Same training seed in every cell: a longer run is a strict
            // continuation, so the grid isolates the epoch factor.
            const auto ckpt = train_cell(cfg, args.out, name, data, base_epochs * m, cfg.seed);
            outputs.push_back(ckpt.filename().string());
            manifest.cells.push_back({name, ckpt, targets, std::nullopt});
        }
    } else if (kind == "lambda") {
        std::vector<std::string> modes =
            exp.contains("modes") ? exp.at("modes").get<std::vector<std::string>>()
                                  : std::vector<std::string>{"adaptive", "fixed:0", "fixed:1"};
        const DatasetSpec spec = cfg.dataset_spec();
        const ToyDataset data = generate_dataset(spec);
        save_dataset(data, args.out / "dataset.json");
        outputs.push_back("dataset.json");
        manifest.dataset_path = args.out / "dataset.json";
        std::vector<std::size_t> targets = exp.contains("targets")
                                               ? exp.at("targets").get<std::vector<std::size_t>>()
                                               : data.duplicated_ids();
        if (targets.empty()) throw ConfigError("lambda ablation needs duplicated targets");
        const auto ckpt =
            train_cell(cfg, args.out, "shared", data, cfg.train_config().epochs, cfg.seed);
        outputs.push_back(ckpt.filename().string());
        for (const auto& mode : modes) {
            std::optional<double> lam;
            if (mode.rfind("fixed:", 0) == 0) {
                try {
                    lam = std::stod(mode.substr(6));
                } catch (const std::exception&) {
                    throw ConfigError("bad lambda mode '" + mode + "'");
                }
            } else if (mode != "adaptive") {
                throw ConfigError("lambda modes are adaptive or fixed:<value>");
            }
            manifest.cells.push_back({mode, ckpt, targets, lam});
        }
    } else {
        throw ConfigError("unknown experiment kind '" + kind +
                          "' (want duplication, epoch or lambda)");
    }

    const ToyDataset loaded = load_dataset(manifest.dataset_path);
    manifest.judge = [&] {
        JudgeConfig jc = cfg.judge_config();
        if (jc.beta <= 0.0) {
            const auto cal = calibrate_beta(loaded, jc, cfg.judge_percentile());
            jc.beta = cal.beta;
            derived["beta_calibrated"] = true;
        }
        derived["beta"] = jc.beta;
        return jc;
    }();
    manifest.inversion = cfg.inversion_config(cfg.schedule());

    ExperimentTable table;
    if (kind == "duplication") {
        table = run_duplication_experiment(manifest);
    } else if (kind == "epoch") {
        table = run_epoch_experiment(manifest);
    } else {
        table = run_lambda_ablation(manifest);
    }
    emit_experiment(cfg, args, kind, manifest, table, std::move(derived), std::move(outputs));
}

void cmd_report(const std::filesystem::path& in_dir, const CommonArgs& args) {
    const json manifest = json::parse(read_text_file(in_dir / "manifest.json"));
    const std::string command = manifest.at("command").get<std::string>();
    if (command == "audit") {
        // Recompute the summary from the stored raw outputs.
        json metrics = manifest.at("derived").at("metrics");
        write_text_file(args.out / "summary.csv", summary_csv_from_metrics(metrics));
        return;
    }
    if (command.rfind("experiment-", 0) == 0) {
        // Rebuild the per-cell summary from results.csv.
        const std::string results = read_text_file(in_dir / "results.csv");
        std::map<std::string, std::vector<double>> cell_scores;
        std::map<std::string, std::size_t> cell_successes;
        std::istringstream lines(results);
        std::string line;
        std::getline(lines, line); // header
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::istringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) cells.push_back(cell);
            if (cells.size() != 5) throw IoError("malformed results.csv row: " + line);
            const double score = cells[2] == "inf" ? std::numeric_limits<double>::infinity()
                                                   : std::stod(cells[2]);
            cell_scores[cells[0]].push_back(score);
            cell_successes[cells[0]] += cells[3] == "true" ? 1 : 0;
        }
        ExperimentTable table;
        for (const auto& [name, scores] : cell_scores) {
            CellSummary s;
            s.cell = name;
            s.n = scores.size();
            s.successes = cell_successes[name];
            s.median_score = median_finite(scores);
            s.success_rate = static_cast<double>(s.successes) / static_cast<double>(s.n);
            table.summary.push_back(std::move(s));
        }
        write_text_file(args.out / "summary.csv", summary_csv(table));
        return;
    }
    throw ConfigError("report supports audit and experiment directories, got '" + command + "'");
}

} // namespace invmm::cli
