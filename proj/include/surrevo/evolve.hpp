#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "surrevo/contract.hpp"
#include "surrevo/genome.hpp"
#include "surrevo/taskbench.hpp"

namespace surrevo {

// One population member. Evaluation is attached when the harness runs;
// trajectory_iteration is the global evaluation counter of its record.
struct Candidate {
    Genome genome;
    std::optional<Evaluation> evaluation;
    std::int64_t parent_iteration = 0; // record iteration of the primary parent, 0 = none
    std::int64_t trajectory_iteration = 0;
    int home_island = -1;                 // island of evaluation
    std::optional<int> migrated_from;     // source island when arrived via migration

    bool accepted() const { return evaluation && !evaluation->rejected; }
    std::optional<double> fitness() const {
        return accepted() ? evaluation->fitness : std::nullopt;
    }
};

struct TrajectoryRecord {
    std::string candidate_id;
    std::optional<std::string> parent_id;
    std::int64_t parent_iteration = 0;
    std::int64_t iteration = 0; // global monotone evaluation counter, 1-based
    std::int64_t generation = 0;
    int island = 0;
    std::string operator_kind; // init | data_edit | ... | crossover | immigrant
    std::string gate_outcome;  // "pass" or the failed gate's name
    std::string stage;
    double combined_score = 0.0; // 0 for rejected candidates
    std::optional<double> fitness;
};

nlohmann::json trajectory_record_to_json(const TrajectoryRecord& r);
TrajectoryRecord trajectory_record_from_json(const nlohmann::json& j);

struct IslandState {
    int id = 0;
    std::vector<Candidate> population;
    std::vector<std::size_t> elites; // indices into population, best first
    DeterministicStream rng{0};
    std::int64_t generation = 0;
};

// MAP-Elites grid over (complexity bin x inference-cost bin). Cells keep the
// best accepted candidate and only ever improve, so the QD-score is
// non-decreasing by construction.
class Archive {
public:
    struct Cell {
        std::string candidate_id;
        Genome genome;
        double fitness = 0.0;
        double combined_score = 0.0;
    };

    explicit Archive(int bins = 8) : bins_(bins) {}

    // Descriptor bins: log2 parameter count over [2^1, 2^12] and log10
    // inference multiply-accumulates per sample over [10^0.5, 10^6.5],
    // clamped to the grid.
    std::pair<int, int> descriptor(double param_count, double inference_macs) const;

    bool insert(const Candidate& candidate, double inference_macs);
    double qd_score() const;
    std::size_t occupied() const { return cells_.size(); }
    const std::map<std::pair<int, int>, Cell>& cells() const { return cells_; }
    int bins() const { return bins_; }
    nlohmann::json to_json() const;

private:
    int bins_;
    std::map<std::pair<int, int>, Cell> cells_;
};

// Decayed (operator kind, failed gate) statistics feeding operator weights.
class ConstraintMemory {
public:
    explicit ConstraintMemory(double decay = 0.95) : decay_(decay) {}

    void record_failure(OperatorKind kind, const std::string& gate);
    void decay_step();

    // Uniform 0.25 each divided by (1 + decayed failure count per kind),
    // floored at 0.05 of uniform, renormalized. Uniform when feedback is
    // disabled.
    std::array<double, 4> operator_weights(bool feedback_enabled) const;

    double count_for(OperatorKind kind) const;
    const std::map<std::pair<int, std::string>, double>& raw() const { return counts_; }

private:
    double decay_;
    std::map<std::pair<int, std::string>, double> counts_;
};

enum class SamplingMode { adaptive, topk };

std::string to_string(SamplingMode m);
SamplingMode sampling_mode_from_string(const std::string& s);

// The K highest-fitness accepted members, ties broken by candidate id.
std::vector<std::size_t> topk_pool(const std::vector<Candidate>& pop, int k);

struct ParentSelection {
    std::vector<std::size_t> indices;
    bool fallback_uniform = false; // no accepted candidate was available
};

// adaptive: `count` Boltzmann draws with probability proportional to
// exp(fitness / temperature) over accepted members. topk: `count` uniform
// draws from the top-K pool. With no accepted members, falls back to uniform
// draws over the whole population (mutation targets only).
ParentSelection select_parents(const std::vector<Candidate>& pop, SamplingMode mode,
                               double temperature, int k, DeterministicStream& rng, int count);

// Objectives: maximize mean Spearman, maximize reliability, minimize
// parameter count.
struct Objectives {
    double spearman = 0.0;
    double reliability = 0.0;
    double param_count = 0.0;
};

Objectives objectives_of(const Candidate& c);
bool dominates(const Objectives& a, const Objectives& b);
std::vector<std::vector<std::size_t>> nondominated_sort(const std::vector<Objectives>& points);

struct EvolutionConfig {
    int island_count = 3;
    int population_per_island = 8;
    int generations = 50;
    int elite_count = 2;
    int migration_interval = 10;
    int migration_count = 1;
    double immigrant_rate = 0.05;
    SamplingMode sampling_mode = SamplingMode::adaptive;
    double adaptive_initial_temperature = 1.0;
    double adaptive_temperature_decay = 0.97;
    int topk = 2;
    double crossover_probability = 0.2;
    bool feedback_enabled = true;
    double refine_at = 0.5;  // generation fraction entering the refine stage
    double certify_at = 0.85;
    std::uint64_t master_seed = 42;
    int threads = 1;
};

std::vector<std::string> validate_config(const EvolutionConfig& config);

LifecycleStage stage_for_generation(const EvolutionConfig& config, std::int64_t generation);

std::vector<IslandState> initialize(const EvolutionConfig& config, const Dataset& ds);

// Ring migration: island i sends copies of its top `count` elites to island
// (i+1) mod n. An arrival replaces the destination's lowest-fitness accepted
// member, and only when the arrival's fitness is strictly higher; population
// sizes are preserved either way.
int migrate(std::vector<IslandState>& islands, int count, DeterministicStream& rng);

// With probability `rate`, replaces one non-elite member with a fresh random
// genome. Elites are never displaced.
bool inject_immigrants(IslandState& island, double rate, DeterministicStream& rng,
                       const LineageStamp& stamp, std::size_t feature_count,
                       const std::vector<std::size_t>& banned_columns);

struct GenerationSummary {
    std::int64_t generation = 0;
    int island = 0;
    std::string stage;
    double best_score = 0.0; // best combined score among accepted members
    double mean_score = 0.0;
    int rejected_members = 0;
    double qd_score = 0.0;
    bool fallback_uniform = false;
    int migration_arrivals = 0;
};

struct EvolutionResult {
    std::vector<IslandState> islands;
    Archive archive;
    std::vector<TrajectoryRecord> trajectory;
    std::vector<GenerationSummary> summary;
    std::optional<Candidate> best;
    std::int64_t evaluations = 0;
    int numeric_failures = 0;
};

// Algorithm: initialize islands, then per generation evaluate new members
// under the stage-tightened contract, select elites by front rank then
// fitness, record failures into constraint memory, variate with
// memory-weighted operators (crossover with the configured probability),
// inject immigrants, and migrate on schedule. Fully deterministic given the
// master seed, including under threads > 1.
EvolutionResult run_evolution(const EvolutionConfig& config, const Dataset& ds,
                              const Contract& base_contract);

} // namespace surrevo
