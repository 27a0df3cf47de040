#include "surrevo/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace surrevo {

using nlohmann::json;

std::vector<LineageNode> lineage(const std::vector<TrajectoryRecord>& trajectory,
                                 const std::string& candidate_id) {
    // Records are iteration-ordered; the latest occurrence is the target.
    const TrajectoryRecord* target = nullptr;
    for (const TrajectoryRecord& r : trajectory) {
        if (r.candidate_id == candidate_id) {
            target = &r;
        }
    }
    if (target == nullptr) {
        throw std::out_of_range("lineage: unknown candidate id " + candidate_id);
    }

    std::map<std::int64_t, const TrajectoryRecord*> by_iteration;
    for (const TrajectoryRecord& r : trajectory) {
        by_iteration[r.iteration] = &r;
    }

    std::vector<LineageNode> chain;
    const TrajectoryRecord* node = target;
    while (node != nullptr) {
        LineageNode entry;
        entry.candidate_id = node->candidate_id;
        entry.combined_score = node->combined_score;
        entry.iteration = node->iteration;
        entry.generation = node->generation;
        entry.operator_kind = node->operator_kind;
        entry.island = node->island;
        entry.fitness = node->fitness;

        const TrajectoryRecord* parent = nullptr;
        if (node->parent_iteration > 0) {
            const auto it = by_iteration.find(node->parent_iteration);
            if (it == by_iteration.end()) {
                throw std::out_of_range("lineage: dangling parent iteration " +
                                        std::to_string(node->parent_iteration));
            }
            parent = it->second;
            if (parent->iteration >= node->iteration) {
                throw std::logic_error("lineage: parent link is not strictly earlier");
            }
            entry.migration = parent->island != node->island;
        }
        chain.push_back(std::move(entry));
        node = parent;
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

std::vector<double> best_so_far(const std::vector<TrajectoryRecord>& run) {
    std::vector<double> series;
    series.reserve(run.size());
    double best = 0.0;
    for (const TrajectoryRecord& r : run) {
        if (r.gate_outcome == "pass") {
            best = std::max(best, r.combined_score);
        }
        series.push_back(best);
    }
    return series;
}

TrajectorySummary trajectory_summary(const std::vector<std::vector<TrajectoryRecord>>& runs) {
    if (runs.empty()) {
        throw std::invalid_argument("trajectory_summary: need at least one run");
    }
    const std::size_t budget = runs.front().size();
    for (const auto& run : runs) {
        if (run.size() != budget) {
            throw std::invalid_argument("trajectory_summary: runs have unequal budgets");
        }
    }
    TrajectorySummary out;
    out.mean.assign(budget, 0.0);
    out.min.assign(budget, std::numeric_limits<double>::infinity());
    out.max.assign(budget, -std::numeric_limits<double>::infinity());
    for (const auto& run : runs) {
        const std::vector<double> series = best_so_far(run);
        for (std::size_t i = 0; i < budget; ++i) {
            out.mean[i] += series[i];
            out.min[i] = std::min(out.min[i], series[i]);
            out.max[i] = std::max(out.max[i], series[i]);
        }
    }
    for (double& m : out.mean) {
        m /= static_cast<double>(runs.size());
    }
    return out;
}

std::string to_string(AblationVariant v) {
    switch (v) {
    case AblationVariant::full: return "full";
    case AblationVariant::no_feedback: return "no_feedback";
    case AblationVariant::no_island: return "no_island";
    case AblationVariant::no_adaptive: return "no_adaptive";
    }
    throw std::logic_error("bad AblationVariant");
}

EvolutionConfig apply_variant(const EvolutionConfig& base, AblationVariant v) {
    EvolutionConfig out = base;
    switch (v) {
    case AblationVariant::full:
        break;
    case AblationVariant::no_feedback:
        out.feedback_enabled = false;
        break;
    case AblationVariant::no_island:
        out.population_per_island = base.population_per_island * base.island_count;
        out.elite_count = base.elite_count * base.island_count;
        out.island_count = 1;
        break;
    case AblationVariant::no_adaptive:
        out.sampling_mode = SamplingMode::topk;
        break;
    }
    return out;
}

AblationReport run_ablation(const EvolutionConfig& base, const Dataset& ds,
                            const Contract& contract, int n_seeds) {
    if (n_seeds < 1) {
        throw std::invalid_argument("run_ablation: n_seeds must be >= 1");
    }
    AblationReport report;
    const DeterministicStream root(base.master_seed);
    std::map<std::string, std::int64_t> budget_by_variant;

    for (AblationVariant variant : kAllAblationVariants) {
        double final_sum = 0.0;
        for (int s = 0; s < n_seeds; ++s) {
            EvolutionConfig config = apply_variant(base, variant);
            config.master_seed =
                root.fork("ablation-seed", static_cast<std::uint64_t>(s)).next_u64();
            const EvolutionResult result = run_evolution(config, ds, contract);

            AblationRun run;
            run.variant = variant;
            run.seed_index = s;
            run.master_seed = config.master_seed;
            run.evaluations = result.evaluations;
            run.trajectory = result.trajectory;
            const std::vector<double> series = best_so_far(result.trajectory);
            run.final_best = series.empty() ? 0.0 : series.back();
            run.iterations_to_95 = 0;
            for (std::size_t i = 0; i < series.size(); ++i) {
                if (series[i] >= 0.95 * run.final_best) {
                    run.iterations_to_95 = static_cast<std::int64_t>(i + 1);
                    break;
                }
            }
            final_sum += run.final_best;

            const std::string name = to_string(variant);
            const auto it = budget_by_variant.find(name);
            if (it == budget_by_variant.end()) {
                budget_by_variant[name] = run.evaluations;
            } else if (it->second != run.evaluations) {
                throw std::logic_error("ablation: evaluation budget varies across seeds");
            }
            report.runs.push_back(std::move(run));
        }
        report.mean_final_best[to_string(variant)] = final_sum / n_seeds;
    }

    const std::int64_t reference = budget_by_variant.begin()->second;
    for (const auto& [name, budget] : budget_by_variant) {
        if (budget != reference) {
            throw std::logic_error("ablation: evaluation budget differs for variant " + name);
        }
    }
    return report;
}

void write_trajectory_jsonl(const std::vector<TrajectoryRecord>& records,
                            const std::string& path) {
    std::ofstream file(path);
    if (!file) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    for (const TrajectoryRecord& r : records) {
        file << trajectory_record_to_json(r).dump() << "\n";
    }
}

std::vector<TrajectoryRecord> read_trajectory_jsonl(const std::string& path) {
    std::ifstream file(path);
    if (!file) {
        throw std::runtime_error("cannot open for reading: " + path);
    }
    std::vector<TrajectoryRecord> records;
    std::string line;
    while (std::getline(file, line)) {
        if (line.empty()) {
            continue;
        }
        records.push_back(trajectory_record_from_json(json::parse(line)));
    }
    return records;
}

void write_summary_csv(const std::vector<GenerationSummary>& rows, const std::string& path) {
    std::ofstream file(path);
    if (!file) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    file << "generation,island,stage,best_score,mean_score,rejected_members,qd_score,"
            "fallback_uniform,migration_arrivals\n";
    for (const GenerationSummary& row : rows) {
        file << row.generation << "," << row.island << "," << row.stage << ","
             << format_metric(row.best_score) << "," << format_metric(row.mean_score) << ","
             << row.rejected_members << "," << format_metric(row.qd_score) << ","
             << (row.fallback_uniform ? 1 : 0) << "," << row.migration_arrivals << "\n";
    }
}

void write_archive_json(const Archive& archive, const std::string& path) {
    std::ofstream file(path);
    if (!file) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    file << archive.to_json().dump(2) << "\n";
}

void write_ablation_files(const AblationReport& report, const std::string& directory) {
    std::ofstream csv(directory + "/ablation_summary.csv");
    if (!csv) {
        throw std::runtime_error("cannot open for writing: " + directory +
                                 "/ablation_summary.csv");
    }
    // no_island necessarily reshapes the population structure, so it shares
    // the per-seed master seeds but not the initial genomes of the other
    // variants; see the run header fields for the exact seeds.
    csv << "variant,seed,final_best_score,iterations_to_95pct\n";
    for (const AblationRun& run : report.runs) {
        csv << to_string(run.variant) << "," << run.seed_index << ","
            << format_metric(run.final_best) << "," << run.iterations_to_95 << "\n";
        write_trajectory_jsonl(run.trajectory, directory + "/trajectory_" +
                                                   to_string(run.variant) + "_" +
                                                   std::to_string(run.seed_index) + ".jsonl");
    }
}

} // namespace surrevo
