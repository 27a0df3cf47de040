#include "surrevo/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "surrevo/rng.hpp"

namespace surrevo {

using nlohmann::json;

namespace {

json contract_to_json(const Contract& c, bool banned_explicit) {
    json j;
    j["seeds"] = c.seeds;
    j["fold_count"] = c.fold_count;
    j["split_seed"] = c.split_seed;
    j["ban_random_split"] = c.ban_random_split;
    if (banned_explicit) {
        j["banned_columns"] = c.banned_columns;
    }
    return j;
}

json evolution_to_json(const EvolutionConfig& e) {
    json j;
    j["island_count"] = e.island_count;
    j["population_per_island"] = e.population_per_island;
    j["generations"] = e.generations;
    j["elite_count"] = e.elite_count;
    j["migration_interval"] = e.migration_interval;
    j["migration_count"] = e.migration_count;
    j["immigrant_rate"] = e.immigrant_rate;
    j["sampling_mode"] = to_string(e.sampling_mode);
    j["adaptive_initial_temperature"] = e.adaptive_initial_temperature;
    j["adaptive_temperature_decay"] = e.adaptive_temperature_decay;
    j["topk"] = e.topk;
    j["crossover_probability"] = e.crossover_probability;
    j["feedback_enabled"] = e.feedback_enabled;
    j["refine_at"] = e.refine_at;
    j["certify_at"] = e.certify_at;
    j["threads"] = e.threads;
    return j;
}

} // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig config;
    if (!j.contains("master_seed")) {
        throw std::invalid_argument("config: master_seed is mandatory");
    }
    config.master_seed = j.at("master_seed").get<std::uint64_t>();
    config.output_dir = j.value("output_dir", config.output_dir);

    if (j.contains("task")) {
        config.task = task_spec_from_json(j.at("task"));
    }
    if (j.contains("contract")) {
        const json& c = j.at("contract");
        if (c.contains("seeds")) {
            config.contract.seeds = c.at("seeds").get<std::vector<std::uint64_t>>();
        }
        config.contract.fold_count = c.value("fold_count", config.contract.fold_count);
        config.contract.split_seed = c.value("split_seed", config.contract.split_seed);
        config.contract.ban_random_split =
            c.value("ban_random_split", config.contract.ban_random_split);
        if (c.contains("banned_columns")) {
            config.contract.banned_columns =
                c.at("banned_columns").get<std::vector<std::size_t>>();
            config.banned_columns_explicit = true;
        }
    }
    if (j.contains("evolution")) {
        const json& e = j.at("evolution");
        EvolutionConfig& ev = config.evolution;
        ev.island_count = e.value("island_count", ev.island_count);
        ev.population_per_island = e.value("population_per_island", ev.population_per_island);
        ev.generations = e.value("generations", ev.generations);
        ev.elite_count = e.value("elite_count", ev.elite_count);
        ev.migration_interval = e.value("migration_interval", ev.migration_interval);
        ev.migration_count = e.value("migration_count", ev.migration_count);
        ev.immigrant_rate = e.value("immigrant_rate", ev.immigrant_rate);
        if (e.contains("sampling_mode")) {
            ev.sampling_mode = sampling_mode_from_string(e.at("sampling_mode").get<std::string>());
        }
        ev.adaptive_initial_temperature =
            e.value("adaptive_initial_temperature", ev.adaptive_initial_temperature);
        ev.adaptive_temperature_decay =
            e.value("adaptive_temperature_decay", ev.adaptive_temperature_decay);
        ev.topk = e.value("topk", ev.topk);
        ev.crossover_probability = e.value("crossover_probability", ev.crossover_probability);
        ev.feedback_enabled = e.value("feedback_enabled", ev.feedback_enabled);
        ev.refine_at = e.value("refine_at", ev.refine_at);
        ev.certify_at = e.value("certify_at", ev.certify_at);
        ev.threads = e.value("threads", ev.threads);
    }
    if (j.contains("score_weights")) {
        const json& w = j.at("score_weights");
        config.score_weights.alpha = w.value("alpha", config.score_weights.alpha);
        config.score_weights.beta = w.value("beta", config.score_weights.beta);
        config.score_weights.gamma = w.value("gamma", config.score_weights.gamma);
    }
    if (j.contains("fitness_weights")) {
        const json& w = j.at("fitness_weights");
        config.fitness_weights.w_accuracy = w.value("accuracy", config.fitness_weights.w_accuracy);
        config.fitness_weights.w_reliability =
            w.value("reliability", config.fitness_weights.w_reliability);
        config.fitness_weights.w_complexity =
            w.value("complexity", config.fitness_weights.w_complexity);
        config.fitness_weights.complexity_normalizer =
            w.value("complexity_normalizer", config.fitness_weights.complexity_normalizer);
    }
    config.evolution.master_seed = config.master_seed;
    config.contract.score_weights = config.score_weights;
    config.contract.fitness_weights = config.fitness_weights;
    return config;
}

json experiment_config_to_json(const ExperimentConfig& config) {
    json j;
    j["master_seed"] = config.master_seed;
    j["output_dir"] = config.output_dir;
    j["task"] = task_spec_to_json(config.task);
    j["contract"] = contract_to_json(config.contract, config.banned_columns_explicit);
    j["evolution"] = evolution_to_json(config.evolution);
    json sw;
    sw["alpha"] = config.score_weights.alpha;
    sw["beta"] = config.score_weights.beta;
    sw["gamma"] = config.score_weights.gamma;
    j["score_weights"] = sw;
    json fw;
    fw["accuracy"] = config.fitness_weights.w_accuracy;
    fw["reliability"] = config.fitness_weights.w_reliability;
    fw["complexity"] = config.fitness_weights.w_complexity;
    fw["complexity_normalizer"] = config.fitness_weights.complexity_normalizer;
    j["fitness_weights"] = fw;
    return j;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream file(path);
    if (!file) {
        throw std::runtime_error("cannot open config: " + path);
    }
    json j;
    try {
        file >> j;
    } catch (const json::parse_error& err) {
        throw std::invalid_argument("config parse error in " + path + ": " + err.what());
    }
    return experiment_config_from_json(j);
}

std::vector<std::string> validate_experiment_config(const ExperimentConfig& config) {
    std::vector<std::string> problems = validate_config(config.evolution);
    if (config.contract.seeds.size() < 2) {
        problems.push_back("contract needs at least 2 seeds");
    }
    if (config.contract.fold_count < 2) {
        problems.push_back("contract fold_count must be >= 2");
    }
    if (config.score_weights.alpha < 0 || config.score_weights.beta < 0 ||
        config.score_weights.gamma < 0 ||
        config.score_weights.alpha + config.score_weights.beta + config.score_weights.gamma <=
            0.0) {
        problems.push_back("score weights must be nonnegative with positive sum");
    }
    if (config.fitness_weights.w_accuracy < 0 || config.fitness_weights.w_reliability < 0 ||
        config.fitness_weights.w_complexity < 0 ||
        config.fitness_weights.complexity_normalizer <= 0) {
        problems.push_back("fitness weights must be nonnegative with positive normalizer");
    }
    if (config.output_dir.empty()) {
        problems.push_back("output_dir must not be empty");
    }
    try {
        (void)generate(config.task);
    } catch (const std::invalid_argument& err) {
        problems.push_back(err.what());
    }
    return problems;
}

Contract bind_contract(const ExperimentConfig& config, const Dataset& ds) {
    Contract c = config.contract;
    if (!config.banned_columns_explicit) {
        c.banned_columns = ds.banned_columns();
    }
    c.score_weights = config.score_weights;
    c.fitness_weights = config.fitness_weights;
    return c;
}

std::string config_hash(const ExperimentConfig& config) {
    // Hash the experiment identity only: where outputs land does not change
    // what the run computes.
    json j = experiment_config_to_json(config);
    j.erase("output_dir");
    return hex64(fnv1a64(j.dump()));
}

} // namespace surrevo
