#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "surrevo/contract.hpp"
#include "surrevo/evolve.hpp"
#include "surrevo/taskbench.hpp"

namespace surrevo {

// Config-file form of one experiment. The master seed is mandatory; nothing
// in the engine ever seeds from the wall clock.
struct ExperimentConfig {
    TaskSpec task;
    Contract contract;
    EvolutionConfig evolution;
    ScoreWeights score_weights;
    FitnessWeights fitness_weights;
    std::string output_dir = "out";
    std::uint64_t master_seed = 0;
    bool banned_columns_explicit = false; // otherwise taken from the dataset card
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::string& path);

std::vector<std::string> validate_experiment_config(const ExperimentConfig& config);

// Contract bound to a generated dataset: ban list from the card unless the
// config pinned one, weights copied in.
Contract bind_contract(const ExperimentConfig& config, const Dataset& ds);

// Hash of the canonical config serialization; the provenance manifest pins
// (config hash, engine version, master seed).
std::string config_hash(const ExperimentConfig& config);

} // namespace surrevo
