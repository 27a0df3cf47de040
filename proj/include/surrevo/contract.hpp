#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "surrevo/genome.hpp"
#include "surrevo/metrics.hpp"
#include "surrevo/phenotype.hpp"
#include "surrevo/taskbench.hpp"

namespace surrevo {

enum class LifecycleStage { explore, refine, certify };

std::string to_string(LifecycleStage s);
LifecycleStage stage_from_string(const std::string& s);

// The hard evaluation contract: gate configuration plus the harness
// parameters (seeds, split seed, weights). Values are immutable; tighten()
// returns a stage-adjusted copy.
struct Contract {
    std::vector<std::uint64_t> seeds = {101, 202, 303};
    int fold_count = 3; // default for harness-level refits; genomes carry their own
    std::uint64_t split_seed = 555;
    double mac_budget = 1e9;
    double sigma_seeds_limit = 0.10;
    std::vector<std::size_t> banned_columns;
    bool ban_random_split = true;
    LifecycleStage stage = LifecycleStage::explore;
    ScoreWeights score_weights;
    FitnessWeights fitness_weights;
};

// Stage defaults: explore sigma<=0.10 / budget 1e9, refine 0.05 / 5e8,
// certify 0.02 / 2e8. Idempotent per stage; other gates unchanged.
Contract tighten(const Contract& c, LifecycleStage stage);

Contract contract_for_dataset(const Dataset& ds);

struct GateResult {
    std::string name;
    bool passed = false;
    std::string evidence;
};

struct Evaluation {
    std::string genome_id;
    std::vector<GateResult> gates;
    std::vector<std::vector<MetricBundle>> per_seed_fold; // [seed][fold]
    std::vector<double> per_seed_scores;                  // fold-mean combined score per seed
    MetricBundle aggregate;
    double reliability_value = 0.0;
    double parameter_count = 0.0;
    std::optional<double> fitness; // absent iff rejected
    bool rejected = true;
    std::string failed_gate; // first failing gate, empty when accepted
    ResourceTally resources;
    int numeric_failures = 0;
};

GateResult gate_leakage(const Genome& g, const Dataset& ds, const Contract& c);
GateResult gate_split(const Genome& g, const Contract& c);
GateResult gate_resources(const RunResult& run, const Contract& c);
GateResult gate_variance(const std::vector<double>& per_seed_scores, const Contract& c);

// Runs the producer twice and compares its canonical output exactly.
GateResult determinism_check(const std::function<std::string()>& run_serialized);
GateResult gate_determinism(const Genome& g, const Dataset& ds, const Contract& c);

// Rejected evaluations compare strictly below any accepted one; accepted
// ones compare by fitness.
bool evaluation_less(const Evaluation& a, const Evaluation& b);

// Full harness: structural gates, analytic resource precheck, fold x seed
// execution, determinism replay, variance gate, aggregation, fitness.
Evaluation evaluate(const Genome& g, const Dataset& ds, const Contract& c);

nlohmann::json evaluation_to_json(const Evaluation& e);
std::string serialize_evaluation(const Evaluation& e);

} // namespace surrevo
