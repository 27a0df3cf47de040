#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "surrevo/config.hpp"
#include "surrevo/escalate.hpp"
#include "surrevo/report.hpp"
#include "surrevo/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace surrevo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitVerification = 3;
constexpr int kExitIo = 4;

int fail_validation(const std::string& message) {
    std::cerr << "validation error: " << message << "\n";
    return kExitValidation;
}

int fail_io(const std::string& message) {
    std::cerr << "i/o error: " << message << "\n";
    return kExitIo;
}

// Refuses to reuse a non-empty directory unless forced.
int prepare_output_dir(const std::string& dir, bool force) {
    std::error_code ec;
    if (fs::exists(dir, ec)) {
        if (!fs::is_directory(dir, ec)) {
            return fail_io("output path is not a directory: " + dir);
        }
        if (!fs::is_empty(dir, ec) && !force) {
            return fail_io("output directory exists and is not empty (use --force): " + dir);
        }
    } else if (!fs::create_directories(dir, ec)) {
        return fail_io("cannot create output directory: " + dir + " (" + ec.message() + ")");
    }
    return kExitOk;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream file(path);
    if (!file) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    file << text;
}

void write_manifest(const ExperimentConfig& config, const std::string& path) {
    json manifest;
    manifest["config_hash"] = config_hash(config);
    manifest["engine_version"] = kEngineVersion;
    manifest["master_seed"] = config.master_seed;
    manifest["created_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                                   std::chrono::system_clock::now().time_since_epoch())
                                   .count();
    write_text(path, manifest.dump(2) + "\n");
}

struct LoadedExperiment {
    ExperimentConfig config;
    Dataset dataset;
    Contract contract;
};

int load_experiment(const std::string& config_path, LoadedExperiment& out) {
    if (!fs::exists(config_path)) {
        return fail_io("config file not found: " + config_path);
    }
    try {
        out.config = load_experiment_config(config_path);
    } catch (const std::invalid_argument& err) {
        return fail_validation(err.what());
    } catch (const std::exception& err) {
        return fail_io(err.what());
    }
    const auto problems = validate_experiment_config(out.config);
    if (!problems.empty()) {
        return fail_validation(problems.front());
    }
    out.dataset = generate(out.config.task);
    out.contract = bind_contract(out.config, out.dataset);
    return kExitOk;
}

int cmd_run(const std::string& config_path, bool force, int threads_override) {
    LoadedExperiment exp;
    if (const int rc = load_experiment(config_path, exp); rc != kExitOk) {
        return rc;
    }
    if (const int rc = prepare_output_dir(exp.config.output_dir, force); rc != kExitOk) {
        return rc;
    }
    if (threads_override > 0) {
        exp.config.evolution.threads = threads_override;
    }

    const EvolutionResult result = run_evolution(exp.config.evolution, exp.dataset, exp.contract);

    const std::string dir = exp.config.output_dir;
    write_trajectory_jsonl(result.trajectory, dir + "/trajectory.jsonl");
    write_summary_csv(result.summary, dir + "/summary.csv");
    write_archive_json(result.archive, dir + "/archive.json");
    write_manifest(exp.config, dir + "/manifest.json");
    if (result.best) {
        write_text(dir + "/best.genome.json", genome_to_string(result.best->genome));
        std::cout << "best candidate " << result.best->genome.id << " combined_score="
                  << format_metric(result.best->evaluation->aggregate.combined_score)
                  << " fitness=" << format_metric(*result.best->evaluation->fitness) << "\n";
    } else {
        std::cerr << "warning: no accepted candidate; best.genome.json not written\n";
    }
    std::cout << "evaluations=" << result.evaluations
              << " qd_score=" << format_metric(result.archive.qd_score()) << " outputs in " << dir
              << "\n";
    return kExitOk;
}

int cmd_replay(const std::string& genome_path, const std::string& config_path, bool verify,
               std::string trajectory_path) {
    LoadedExperiment exp;
    if (const int rc = load_experiment(config_path, exp); rc != kExitOk) {
        return rc;
    }
    if (!fs::exists(genome_path)) {
        return fail_io("genome file not found: " + genome_path);
    }
    Genome genome;
    try {
        std::ifstream file(genome_path);
        std::stringstream buffer;
        buffer << file.rdbuf();
        genome = genome_from_string(buffer.str());
    } catch (const std::exception& err) {
        return fail_validation(std::string("cannot parse genome: ") + err.what());
    }
    const ValidationReport report = validate(genome);
    if (!report.valid()) {
        std::ostringstream all;
        for (const std::string& v : report.violations) {
            all << v << "; ";
        }
        return fail_validation("genome invalid: " + all.str());
    }

    const Evaluation evaluation = evaluate(genome, exp.dataset, exp.contract);
    std::cout << evaluation_to_json(evaluation).dump(2) << "\n";

    if (!verify) {
        return kExitOk;
    }
    if (trajectory_path.empty()) {
        trajectory_path = exp.config.output_dir + "/trajectory.jsonl";
    }
    if (!fs::exists(trajectory_path)) {
        return fail_io("trajectory log not found: " + trajectory_path);
    }
    const std::vector<TrajectoryRecord> records = read_trajectory_jsonl(trajectory_path);
    const TrajectoryRecord* match = nullptr;
    for (const TrajectoryRecord& r : records) {
        if (r.candidate_id == genome.id) {
            match = &r;
        }
    }
    if (match == nullptr) {
        std::cerr << "verification failure: genome id " << genome.id
                  << " absent from trajectory\n";
        return kExitVerification;
    }
    const double replayed_score =
        evaluation.rejected ? 0.0 : round_metric(evaluation.aggregate.combined_score);
    const bool score_ok = replayed_score == match->combined_score;
    const bool fitness_ok =
        evaluation.rejected
            ? !match->fitness.has_value()
            : (match->fitness.has_value() &&
               round_metric(*evaluation.fitness) == *match->fitness);
    if (!score_ok || !fitness_ok) {
        std::cerr << "verification failure for " << genome.id << ": replayed combined_score="
                  << format_metric(replayed_score) << " logged="
                  << format_metric(match->combined_score);
        if (evaluation.fitness && match->fitness) {
            std::cerr << "; replayed fitness=" << format_metric(*evaluation.fitness)
                      << " logged=" << format_metric(*match->fitness);
        }
        std::cerr << "\n";
        return kExitVerification;
    }
    std::cout << "verified: metrics match trajectory record at iteration " << match->iteration
              << "\n";
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, int seeds, bool force) {
    LoadedExperiment exp;
    if (const int rc = load_experiment(config_path, exp); rc != kExitOk) {
        return rc;
    }
    if (seeds < 1) {
        return fail_validation("--seeds must be >= 1");
    }
    const std::string dir = exp.config.output_dir + "/ablation";
    if (const int rc = prepare_output_dir(dir, force); rc != kExitOk) {
        return rc;
    }
    const AblationReport report =
        run_ablation(exp.config.evolution, exp.dataset, exp.contract, seeds);
    write_ablation_files(report, dir);
    for (const auto& [variant, mean] : report.mean_final_best) {
        std::cout << variant << " mean_final_best=" << format_metric(mean) << "\n";
    }
    std::cout << "ablation outputs in " << dir << "\n";
    return kExitOk;
}

struct Batch {
    Eigen::MatrixXd features;
    std::optional<Eigen::VectorXd> labels;
};

int parse_batch_csv(const std::string& path, std::size_t feature_count, Batch& out) {
    std::ifstream file(path);
    if (!file) {
        return fail_io("cannot open batch csv: " + path);
    }
    std::string line;
    if (!std::getline(file, line)) {
        return fail_validation("batch csv is empty: " + path);
    }
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            header.push_back(cell);
        }
    }
    int label_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "label") {
            label_col = static_cast<int>(c);
        }
    }
    for (std::size_t c = 0; c < feature_count; ++c) {
        const std::string expected = "f" + std::to_string(c);
        if (c >= header.size() || header[c] != expected) {
            return fail_validation("batch csv header must start with f0..f" +
                                   std::to_string(feature_count - 1) + "; missing " + expected);
        }
    }

    std::vector<std::vector<double>> rows;
    std::vector<double> labels;
    int line_number = 1;
    while (std::getline(file, line)) {
        ++line_number;
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() < feature_count ||
            (label_col >= 0 && cells.size() <= static_cast<std::size_t>(label_col))) {
            return fail_validation("row " + std::to_string(line_number) +
                                   ": expected at least " + std::to_string(feature_count) +
                                   " columns, got " + std::to_string(cells.size()));
        }
        std::vector<double> row(feature_count);
        try {
            for (std::size_t c = 0; c < feature_count; ++c) {
                std::size_t used = 0;
                row[c] = std::stod(cells[c], &used);
                if (used != cells[c].size()) {
                    throw std::invalid_argument(cells[c]);
                }
            }
            if (label_col >= 0) {
                labels.push_back(std::stod(cells[static_cast<std::size_t>(label_col)]));
            }
        } catch (const std::exception&) {
            return fail_validation("row " + std::to_string(line_number) +
                                   ": unparsable numeric value");
        }
        rows.push_back(std::move(row));
    }
    out.features.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(feature_count));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < feature_count; ++c) {
            out.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    if (label_col >= 0) {
        out.labels = Eigen::Map<Eigen::VectorXd>(labels.data(),
                                                 static_cast<Eigen::Index>(labels.size()));
    }
    return kExitOk;
}

int cmd_screen(const std::string& config_path, std::string genome_path,
               const std::string& batch_path, double sigma_max, int top_k, double cost_cfd,
               double cost_surrogate, double cost_validation, double margin,
               std::string out_dir) {
    LoadedExperiment exp;
    if (const int rc = load_experiment(config_path, exp); rc != kExitOk) {
        return rc;
    }
    if (genome_path.empty()) {
        genome_path = exp.config.output_dir + "/best.genome.json";
    }
    if (!fs::exists(genome_path)) {
        return fail_io("genome file not found: " + genome_path);
    }
    Genome genome;
    try {
        std::ifstream file(genome_path);
        std::stringstream buffer;
        buffer << file.rdbuf();
        genome = genome_from_string(buffer.str());
    } catch (const std::exception& err) {
        return fail_validation(std::string("cannot parse genome: ") + err.what());
    }
    if (const ValidationReport report = validate(genome); !report.valid()) {
        return fail_validation("genome invalid: " + report.violations.front());
    }

    Batch batch;
    if (const int rc = parse_batch_csv(batch_path, exp.dataset.feature_count(), batch);
        rc != kExitOk) {
        return rc;
    }

    if (out_dir.empty()) {
        out_dir = exp.config.output_dir + "/screen";
    }
    if (const int rc = prepare_output_dir(out_dir, true); rc != kExitOk) {
        return rc;
    }

    // Deployment fit: every non-holdout sample, one replica per contract seed.
    Split s;
    try {
        s = split(exp.dataset, genome.split, exp.contract.split_seed);
    } catch (const std::exception& err) {
        return fail_validation(std::string("split failed: ") + err.what());
    }
    std::vector<bool> is_holdout(exp.dataset.size(), false);
    for (int idx : s.holdout) {
        is_holdout[static_cast<std::size_t>(idx)] = true;
    }
    std::vector<int> train_indices;
    for (std::size_t i = 0; i < exp.dataset.size(); ++i) {
        if (!is_holdout[i]) {
            train_indices.push_back(static_cast<int>(i));
        }
    }
    const Pipeline pipeline(genome, exp.dataset);
    std::vector<FittedReplica> replicas;
    for (std::uint64_t seed : exp.contract.seeds) {
        FittedReplica replica = pipeline.fit(train_indices, seed);
        if (replica.status != RunStatus::ok) {
            return fail_validation("deployment fit failed with numeric_failure");
        }
        replicas.push_back(std::move(replica));
    }
    const Envelope envelope =
        training_envelope(replicas.front().prep, exp.dataset.features, train_indices, margin);

    const ScreenReport report = screen(batch.features, replicas, sigma_max, envelope);

    {
        std::ofstream csv(out_dir + "/decisions.csv");
        if (!csv) {
            return fail_io("cannot write decisions.csv");
        }
        csv << "sample,predicted_mean,sigma,decision,reason\n";
        for (const ScreeningDecision& d : report.decisions) {
            csv << d.sample << "," << format_metric(d.mean) << "," << format_metric(d.sigma)
                << "," << (d.escalate ? "escalate" : "accept") << "," << to_string(d.reason)
                << "\n";
        }
    }

    json out;
    KpiReport kpi;
    if (batch.labels) {
        kpi = kpis(report, *batch.labels, top_k);
        out["kpis"] = kpi_report_to_json(kpi);
    } else {
        for (const ScreeningDecision& d : report.decisions) {
            (d.escalate ? kpi.escalated : kpi.accepted) += 1;
        }
        kpi.top_k = top_k;
        kpi.escalation_rate =
            report.decisions.empty()
                ? 0.0
                : static_cast<double>(kpi.escalated) / static_cast<double>(report.decisions.size());
        if (kpi.escalated + top_k > 0) {
            kpi.throughput_gain = static_cast<double>(report.decisions.size()) /
                                  static_cast<double>(kpi.escalated + top_k);
        }
        out["kpis"] = kpi_report_to_json(kpi);
        out["kpis"]["note"] = "no label column in batch; ranking fidelity unavailable";
    }

    RoiInputs inputs;
    inputs.n_screened = static_cast<double>(report.decisions.size());
    inputs.cost_cfd = cost_cfd;
    inputs.cost_surrogate = cost_surrogate;
    inputs.cost_validation = cost_validation >= 0.0
                                 ? cost_validation
                                 : (kpi.escalated + top_k) * cost_cfd;
    json roi_json;
    roi_json["n_screened"] = inputs.n_screened;
    roi_json["cost_cfd"] = inputs.cost_cfd;
    roi_json["cost_surrogate"] = inputs.cost_surrogate;
    roi_json["cost_validation"] = inputs.cost_validation;
    try {
        roi_json["roi"] = round_metric(roi(inputs));
    } catch (const std::invalid_argument& err) {
        return fail_validation(err.what());
    }
    out["roi"] = roi_json;
    out["sigma_max"] = sigma_max;
    out["envelope_margin"] = margin;
    write_text(out_dir + "/kpis.json", out.dump(2) + "\n");
    std::cout << "screened " << report.decisions.size() << " samples, escalated "
              << kpi.escalated << "; reports in " << out_dir << "\n";
    return kExitOk;
}

int cmd_dataset(const std::string& task_spec_path, const std::string& config_path,
                const std::string& out_dir, bool force) {
    TaskSpec spec;
    if (!task_spec_path.empty()) {
        std::ifstream file(task_spec_path);
        if (!file) {
            return fail_io("cannot open task spec: " + task_spec_path);
        }
        try {
            json j;
            file >> j;
            spec = task_spec_from_json(j);
        } catch (const std::exception& err) {
            return fail_validation(std::string("task spec parse error: ") + err.what());
        }
    } else if (!config_path.empty()) {
        LoadedExperiment exp;
        if (const int rc = load_experiment(config_path, exp); rc != kExitOk) {
            return rc;
        }
        spec = exp.config.task;
    } else {
        return fail_validation("dataset: provide --task-spec or --config");
    }
    if (const int rc = prepare_output_dir(out_dir, force); rc != kExitOk) {
        return rc;
    }
    Dataset ds;
    try {
        ds = generate(spec);
    } catch (const std::invalid_argument& err) {
        return fail_validation(err.what());
    }
    export_csv(ds, out_dir + "/dataset.csv");
    write_text(out_dir + "/dataset_card.json", dataset_card_to_json(ds.card).dump(2) + "\n");
    std::cout << "dataset (" << ds.size() << " samples) written to " << out_dir << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"surrevo: contract-gated evolutionary search for drag-surrogate pipelines"};
    app.require_subcommand(1);

    std::string config_path;
    bool force = false;
    int threads = 0;
    auto* run = app.add_subcommand("run", "run an evolution experiment from a config file");
    run->add_option("--config", config_path, "experiment config JSON")->required();
    run->add_flag("--force", force, "reuse a non-empty output directory");
    run->add_option("--threads", threads, "parallel evaluation threads (default from config)");

    std::string genome_path;
    std::string trajectory_path;
    bool verify = false;
    auto* replay = app.add_subcommand("replay", "re-evaluate a stored genome under a config");
    replay->add_option("--genome", genome_path, "path to a .genome.json file")->required();
    replay->add_option("--config", config_path, "experiment config JSON")->required();
    replay->add_flag("--verify", verify, "compare against the stored trajectory record");
    replay->add_option("--trajectory", trajectory_path,
                       "trajectory.jsonl to verify against (default: <output_dir>/trajectory.jsonl)");

    int ablate_seeds = 3;
    auto* ablate = app.add_subcommand("ablate", "run the four-variant ablation grid");
    ablate->add_option("--config", config_path, "experiment config JSON")->required();
    ablate->add_option("--seeds", ablate_seeds, "independent runs per variant (default 3)");
    ablate->add_flag("--force", force, "reuse a non-empty output directory");

    std::string batch_path;
    std::string screen_out;
    double sigma_max = 0.01;
    int top_k = 10;
    double cost_cfd = 10.0;
    double cost_surrogate = 500.0;
    double cost_validation = -1.0;
    double margin = 0.05;
    auto* screen_cmd = app.add_subcommand("screen", "screen a design batch with a trained genome");
    screen_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    screen_cmd->add_option("--genome", genome_path,
                           "trained genome (default: <output_dir>/best.genome.json)");
    screen_cmd->add_option("--batch", batch_path, "batch CSV with f0..fN columns")->required();
    screen_cmd->add_option("--sigma-max", sigma_max, "uncertainty escalation threshold");
    screen_cmd->add_option("--top-k", top_k, "confirmation set size for KPIs");
    screen_cmd->add_option("--cost-cfd", cost_cfd, "cost units per high-fidelity run");
    screen_cmd->add_option("--cost-surrogate", cost_surrogate, "surrogate build+run cost");
    screen_cmd->add_option("--cost-validation", cost_validation,
                           "validation cost override (default: (escalations + top-K) * cost-cfd)");
    screen_cmd->add_option("--margin", margin, "envelope margin (default 0.05)");
    screen_cmd->add_option("--out", screen_out, "report directory (default: <output_dir>/screen)");

    std::string task_spec_path;
    std::string dataset_out = "dataset_out";
    auto* dataset_cmd = app.add_subcommand("dataset", "export a synthetic task as CSV + card");
    dataset_cmd->add_option("--task-spec", task_spec_path, "TaskSpec JSON file");
    dataset_cmd->add_option("--config", config_path, "experiment config JSON (task section)");
    dataset_cmd->add_option("--out", dataset_out, "output directory");
    dataset_cmd->add_flag("--force", force, "reuse a non-empty output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(config_path, force, threads);
        }
        if (replay->parsed()) {
            return cmd_replay(genome_path, config_path, verify, trajectory_path);
        }
        if (ablate->parsed()) {
            return cmd_ablate(config_path, ablate_seeds, force);
        }
        if (screen_cmd->parsed()) {
            return cmd_screen(config_path, genome_path, batch_path, sigma_max, top_k, cost_cfd,
                              cost_surrogate, cost_validation, margin, screen_out);
        }
        if (dataset_cmd->parsed()) {
            return cmd_dataset(task_spec_path, config_path, dataset_out, force);
        }
    } catch (const std::invalid_argument& err) {
        return fail_validation(err.what());
    } catch (const std::exception& err) {
        return fail_io(err.what());
    }
    return kExitOk;
}
