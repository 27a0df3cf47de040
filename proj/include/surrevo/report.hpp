#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "surrevo/evolve.hpp"

namespace surrevo {

struct LineageNode {
    std::string candidate_id;
    double combined_score = 0.0;
    std::int64_t iteration = 0;
    std::int64_t generation = 0;
    std::string operator_kind;
    int island = 0;
    bool migration = false; // parent was evaluated on a different island
    std::optional<double> fitness;
};

// Ancestor chain from an initial candidate to the target, following
// parent-record links. The latest record carrying candidate_id is the
// target. Unknown ids raise std::out_of_range.
std::vector<LineageNode> lineage(const std::vector<TrajectoryRecord>& trajectory,
                                 const std::string& candidate_id);

struct TrajectorySummary {
    std::vector<double> mean; // indexed by iteration - 1
    std::vector<double> min;
    std::vector<double> max;
};

// Best-so-far combined score per iteration, aggregated over runs with equal
// budgets. Rejected evaluations contribute zero, so runs start at 0.
TrajectorySummary trajectory_summary(const std::vector<std::vector<TrajectoryRecord>>& runs);

std::vector<double> best_so_far(const std::vector<TrajectoryRecord>& run);

enum class AblationVariant { full, no_feedback, no_island, no_adaptive };

inline constexpr std::array<AblationVariant, 4> kAllAblationVariants = {
    AblationVariant::full, AblationVariant::no_feedback, AblationVariant::no_island,
    AblationVariant::no_adaptive};

std::string to_string(AblationVariant v);

// Each variant changes exactly one mechanism. no_island merges everything
// into one island of equal total population with a proportionally scaled
// elite count so per-generation offspring (and therefore the evaluation
// budget) stay identical.
EvolutionConfig apply_variant(const EvolutionConfig& base, AblationVariant v);

struct AblationRun {
    AblationVariant variant = AblationVariant::full;
    int seed_index = 0;
    std::uint64_t master_seed = 0;
    double final_best = 0.0;
    std::int64_t iterations_to_95 = 0;
    std::int64_t evaluations = 0;
    std::vector<TrajectoryRecord> trajectory;
};

struct AblationReport {
    std::vector<AblationRun> runs;
    std::map<std::string, double> mean_final_best; // by variant name
};

// Runs every variant n_seeds times with per-index master seeds derived from
// the base seed, so structurally identical variants share initial
// populations. Verifies exact budget parity across variants.
AblationReport run_ablation(const EvolutionConfig& base, const Dataset& ds,
                            const Contract& contract, int n_seeds);

// File emitters shared by the CLI.
void write_trajectory_jsonl(const std::vector<TrajectoryRecord>& records,
                            const std::string& path);
std::vector<TrajectoryRecord> read_trajectory_jsonl(const std::string& path);
void write_summary_csv(const std::vector<GenerationSummary>& rows, const std::string& path);
void write_archive_json(const Archive& archive, const std::string& path);
void write_ablation_files(const AblationReport& report, const std::string& directory);

} // namespace surrevo
