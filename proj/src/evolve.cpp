#include "surrevo/evolve.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

namespace surrevo {

using nlohmann::json;

json trajectory_record_to_json(const TrajectoryRecord& r) {
    json j;
    j["candidate_id"] = r.candidate_id;
    if (r.parent_id) {
        j["parent_id"] = *r.parent_id;
    }
    j["parent_iteration"] = r.parent_iteration;
    j["iteration"] = r.iteration;
    j["generation"] = r.generation;
    j["island"] = r.island;
    j["operator"] = r.operator_kind;
    j["gate_outcome"] = r.gate_outcome;
    j["stage"] = r.stage;
    j["combined_score"] = round_metric(r.combined_score);
    if (r.fitness) {
        j["fitness"] = round_metric(*r.fitness);
    }
    return j;
}

TrajectoryRecord trajectory_record_from_json(const json& j) {
    TrajectoryRecord r;
    r.candidate_id = j.at("candidate_id").get<std::string>();
    if (j.contains("parent_id")) {
        r.parent_id = j.at("parent_id").get<std::string>();
    }
    r.parent_iteration = j.value("parent_iteration", std::int64_t{0});
    r.iteration = j.at("iteration").get<std::int64_t>();
    r.generation = j.at("generation").get<std::int64_t>();
    r.island = j.at("island").get<int>();
    r.operator_kind = j.at("operator").get<std::string>();
    r.gate_outcome = j.at("gate_outcome").get<std::string>();
    r.stage = j.value("stage", std::string());
    r.combined_score = j.at("combined_score").get<double>();
    if (j.contains("fitness")) {
        r.fitness = j.at("fitness").get<double>();
    }
    return r;
}

std::pair<int, int> Archive::descriptor(double param_count, double inference_macs) const {
    constexpr double kLogParamLo = 1.0;  // 2 parameters
    constexpr double kLogParamHi = 12.0; // 4096 parameters
    constexpr double kLogMacLo = 0.5;
    constexpr double kLogMacHi = 6.5;
    const double lp = std::log2(std::max(param_count, 2.0));
    const double lm = std::log10(std::max(inference_macs, 1.0));
    const int pb = std::clamp(
        static_cast<int>((lp - kLogParamLo) / (kLogParamHi - kLogParamLo) * bins_), 0, bins_ - 1);
    const int mb = std::clamp(
        static_cast<int>((lm - kLogMacLo) / (kLogMacHi - kLogMacLo) * bins_), 0, bins_ - 1);
    return {pb, mb};
}

bool Archive::insert(const Candidate& candidate, double inference_macs) {
    if (!candidate.accepted()) {
        throw std::invalid_argument("archive: rejected candidates are not insertable");
    }
    const Evaluation& e = *candidate.evaluation;
    const auto key = descriptor(e.parameter_count, inference_macs);
    const auto it = cells_.find(key);
    if (it != cells_.end() && *e.fitness <= it->second.fitness) {
        return false; // strict replacement only
    }
    cells_[key] = Cell{candidate.genome.id, candidate.genome, *e.fitness,
                       e.aggregate.combined_score};
    return true;
}

double Archive::qd_score() const {
    double total = 0.0;
    for (const auto& [key, cell] : cells_) {
        total += cell.fitness;
    }
    return total;
}

json Archive::to_json() const {
    json j;
    j["bins"] = bins_;
    j["qd_score"] = qd_score();
    json cells = json::array();
    for (const auto& [key, cell] : cells_) {
        json cj;
        cj["complexity_bin"] = key.first;
        cj["latency_bin"] = key.second;
        cj["candidate_id"] = cell.candidate_id;
        cj["fitness"] = round_metric(cell.fitness);
        cj["combined_score"] = round_metric(cell.combined_score);
        cj["genome"] = genome_to_json(cell.genome);
        cells.push_back(cj);
    }
    j["cells"] = cells;
    return j;
}

void ConstraintMemory::record_failure(OperatorKind kind, const std::string& gate) {
    counts_[{static_cast<int>(kind), gate}] += 1.0;
}

void ConstraintMemory::decay_step() {
    for (auto& [key, count] : counts_) {
        count *= decay_;
    }
}

double ConstraintMemory::count_for(OperatorKind kind) const {
    double total = 0.0;
    for (const auto& [key, count] : counts_) {
        if (key.first == static_cast<int>(kind)) {
            total += count;
        }
    }
    return total;
}

std::array<double, 4> ConstraintMemory::operator_weights(bool feedback_enabled) const {
    std::array<double, 4> weights = {0.25, 0.25, 0.25, 0.25};
    if (!feedback_enabled) {
        return weights;
    }
    constexpr double kFloor = 0.05 * 0.25;
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double burden = count_for(kAllOperatorKinds[i]);
        weights[i] = std::max(0.25 / (1.0 + burden), kFloor);
        total += weights[i];
    }
    for (double& w : weights) {
        w /= total;
    }
    return weights;
}

std::string to_string(SamplingMode m) {
    return m == SamplingMode::adaptive ? "adaptive" : "topk";
}

SamplingMode sampling_mode_from_string(const std::string& s) {
    if (s == "adaptive") return SamplingMode::adaptive;
    if (s == "topk") return SamplingMode::topk;
    throw std::invalid_argument("unknown sampling mode: " + s);
}

std::vector<std::size_t> topk_pool(const std::vector<Candidate>& pop, int k) {
    std::vector<std::size_t> accepted;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (pop[i].accepted()) {
            accepted.push_back(i);
        }
    }
    std::sort(accepted.begin(), accepted.end(), [&pop](std::size_t a, std::size_t b) {
        const double fa = *pop[a].fitness();
        const double fb = *pop[b].fitness();
        if (fa != fb) {
            return fa > fb;
        }
        return pop[a].genome.id < pop[b].genome.id;
    });
    if (static_cast<int>(accepted.size()) > k) {
        accepted.resize(static_cast<std::size_t>(k));
    }
    return accepted;
}

ParentSelection select_parents(const std::vector<Candidate>& pop, SamplingMode mode,
                               double temperature, int k, DeterministicStream& rng, int count) {
    ParentSelection out;
    std::vector<std::size_t> accepted;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (pop[i].accepted()) {
            accepted.push_back(i);
        }
    }
    if (accepted.empty()) {
        out.fallback_uniform = true;
        for (int c = 0; c < count; ++c) {
            out.indices.push_back(static_cast<std::size_t>(rng.uniform_index(pop.size())));
        }
        return out;
    }

    if (mode == SamplingMode::topk) {
        const std::vector<std::size_t> pool = topk_pool(pop, k);
        for (int c = 0; c < count; ++c) {
            out.indices.push_back(pool[static_cast<std::size_t>(rng.uniform_index(pool.size()))]);
        }
        return out;
    }

    // Boltzmann sampling over fitness, stabilized by subtracting the max.
    double max_fitness = -std::numeric_limits<double>::infinity();
    for (std::size_t i : accepted) {
        max_fitness = std::max(max_fitness, *pop[i].fitness());
    }
    const double t = std::max(temperature, 1e-9);
    std::vector<double> weights;
    weights.reserve(accepted.size());
    double total = 0.0;
    for (std::size_t i : accepted) {
        const double w = std::exp((*pop[i].fitness() - max_fitness) / t);
        weights.push_back(w);
        total += w;
    }
    for (int c = 0; c < count; ++c) {
        const double u = rng.uniform() * total;
        double acc = 0.0;
        std::size_t chosen = accepted.back();
        for (std::size_t w = 0; w < weights.size(); ++w) {
            acc += weights[w];
            if (u < acc) {
                chosen = accepted[w];
                break;
            }
        }
        out.indices.push_back(chosen);
    }
    return out;
}

Objectives objectives_of(const Candidate& c) {
    if (!c.accepted()) {
        throw std::invalid_argument("objectives_of: candidate is not accepted");
    }
    const Evaluation& e = *c.evaluation;
    return {e.aggregate.spearman_rho, e.reliability_value, e.parameter_count};
}

bool dominates(const Objectives& a, const Objectives& b) {
    const bool no_worse = a.spearman >= b.spearman && a.reliability >= b.reliability &&
                          a.param_count <= b.param_count;
    const bool strictly_better = a.spearman > b.spearman || a.reliability > b.reliability ||
                                 a.param_count < b.param_count;
    return no_worse && strictly_better;
}

std::vector<std::vector<std::size_t>> nondominated_sort(const std::vector<Objectives>& points) {
    const std::size_t n = points.size();
    std::vector<int> dominated_by(n, 0);
    std::vector<std::vector<std::size_t>> dominating(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && dominates(points[i], points[j])) {
                dominating[i].push_back(j);
                dominated_by[j] += 1;
            }
        }
    }
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
        if (dominated_by[i] == 0) {
            current.push_back(i);
        }
    }
    while (!current.empty()) {
        fronts.push_back(current);
        std::vector<std::size_t> next;
        for (std::size_t i : current) {
            for (std::size_t j : dominating[i]) {
                if (--dominated_by[j] == 0) {
                    next.push_back(j);
                }
            }
        }
        std::sort(next.begin(), next.end());
        current = std::move(next);
    }
    return fronts;
}

std::vector<std::string> validate_config(const EvolutionConfig& config) {
    std::vector<std::string> problems;
    auto require = [&problems](bool ok, const char* message) {
        if (!ok) {
            problems.push_back(message);
        }
    };
    require(config.island_count >= 1, "island_count must be >= 1");
    require(config.population_per_island >= 1, "population_per_island must be >= 1");
    require(config.generations >= 1, "generations must be >= 1");
    require(config.elite_count >= 1, "elite_count must be >= 1");
    require(config.elite_count < config.population_per_island,
            "elite_count must be below population_per_island");
    require(config.migration_interval >= 1, "migration_interval must be >= 1");
    require(config.migration_count >= 1, "migration_count must be >= 1");
    require(config.immigrant_rate >= 0.0 && config.immigrant_rate <= 1.0,
            "immigrant_rate must lie in [0,1]");
    require(config.crossover_probability >= 0.0 && config.crossover_probability <= 1.0,
            "crossover_probability must lie in [0,1]");
    require(config.topk >= 1, "topk must be >= 1");
    require(config.adaptive_initial_temperature > 0.0, "temperature must be positive");
    require(config.adaptive_temperature_decay > 0.0 && config.adaptive_temperature_decay <= 1.0,
            "temperature decay must lie in (0,1]");
    require(config.refine_at >= 0.0 && config.certify_at >= config.refine_at &&
                config.certify_at <= 1.0,
            "stage schedule fractions must satisfy 0 <= refine <= certify <= 1");
    require(config.threads >= 1, "threads must be >= 1");
    return problems;
}

LifecycleStage stage_for_generation(const EvolutionConfig& config, std::int64_t generation) {
    const double fraction =
        static_cast<double>(generation) / static_cast<double>(config.generations);
    if (fraction >= config.certify_at) {
        return LifecycleStage::certify;
    }
    if (fraction >= config.refine_at) {
        return LifecycleStage::refine;
    }
    return LifecycleStage::explore;
}

namespace {

Genome family_seed_genome(ModelFamily family, std::size_t feature_count,
                          const std::vector<std::size_t>& banned) {
    Genome g = default_genome(feature_count, banned);
    g.model = ModelSpec{};
    g.model.family = family;
    g.id = content_id(g);
    return g;
}

} // namespace

std::vector<IslandState> initialize(const EvolutionConfig& config, const Dataset& ds) {
    const DeterministicStream root(config.master_seed);
    const std::vector<std::size_t> banned = ds.banned_columns();
    const std::array<ModelFamily, 3> families = {
        ModelFamily::ridge_linear, ModelFamily::kernel_ridge_rbf, ModelFamily::mlp_1hidden};

    std::vector<IslandState> islands;
    islands.reserve(static_cast<std::size_t>(config.island_count));
    for (int i = 0; i < config.island_count; ++i) {
        IslandState island;
        island.id = i;
        island.rng = root.fork("island", static_cast<std::uint64_t>(i));
        for (int p = 0; p < config.population_per_island; ++p) {
            Candidate member;
            if (p < static_cast<int>(families.size())) {
                member.genome =
                    family_seed_genome(families[static_cast<std::size_t>(p)],
                                       ds.feature_count(), banned);
            } else {
                member.genome = random_genome(island.rng, ds.feature_count(), banned,
                                              LineageStamp{0, 0}, "init");
            }
            member.genome.provenance.origin = "init";
            island.population.push_back(std::move(member));
        }
        islands.push_back(std::move(island));
    }
    return islands;
}

int migrate(std::vector<IslandState>& islands, int count, DeterministicStream& rng) {
    (void)rng; // the ring route and replacement rule are deterministic
    if (islands.size() < 2) {
        return 0;
    }
    struct Arrival {
        std::size_t destination;
        Candidate migrant;
    };
    std::vector<Arrival> arrivals;
    for (std::size_t i = 0; i < islands.size(); ++i) {
        const IslandState& source = islands[i];
        const std::size_t dest = (i + 1) % islands.size();
        for (int c = 0; c < count && c < static_cast<int>(source.elites.size()); ++c) {
            Candidate copy = source.population[source.elites[static_cast<std::size_t>(c)]];
            copy.migrated_from = source.id;
            arrivals.push_back(Arrival{dest, std::move(copy)});
        }
    }
    int applied = 0;
    for (Arrival& arrival : arrivals) {
        IslandState& dest = islands[arrival.destination];
        std::size_t worst = dest.population.size();
        for (std::size_t m = 0; m < dest.population.size(); ++m) {
            if (!dest.population[m].accepted()) {
                continue;
            }
            if (worst == dest.population.size() ||
                *dest.population[m].fitness() < *dest.population[worst].fitness()) {
                worst = m;
            }
        }
        if (worst == dest.population.size()) {
            continue; // no accepted member to displace
        }
        const double arriving = *arrival.migrant.fitness();
        if (arriving <= *dest.population[worst].fitness()) {
            continue;
        }
        const bool was_elite =
            std::find(dest.elites.begin(), dest.elites.end(), worst) != dest.elites.end();
        dest.population[worst] = std::move(arrival.migrant);
        ++applied;
        if (was_elite) {
            // Keep the elite list consistent: the slot now holds the migrant.
            std::sort(dest.elites.begin(), dest.elites.end(), [&dest](std::size_t a, std::size_t b) {
                return *dest.population[a].fitness() > *dest.population[b].fitness();
            });
        }
    }
    return applied;
}

bool inject_immigrants(IslandState& island, double rate, DeterministicStream& rng,
                       const LineageStamp& stamp, std::size_t feature_count,
                       const std::vector<std::size_t>& banned_columns) {
    if (!rng.bernoulli(rate)) {
        return false;
    }
    std::vector<std::size_t> replaceable;
    for (std::size_t i = 0; i < island.population.size(); ++i) {
        if (std::find(island.elites.begin(), island.elites.end(), i) == island.elites.end()) {
            replaceable.push_back(i);
        }
    }
    if (replaceable.empty()) {
        return false;
    }
    const std::size_t slot =
        replaceable[static_cast<std::size_t>(rng.uniform_index(replaceable.size()))];
    Candidate immigrant;
    immigrant.genome = random_genome(rng, feature_count, banned_columns, stamp, "immigrant");
    island.population[slot] = std::move(immigrant);
    return true;
}

namespace {

// Elite order: NSGA front rank first, scalar fitness inside a front, id as
// the final tiebreak.
std::vector<std::size_t> rank_accepted(const std::vector<Candidate>& pop) {
    std::vector<std::size_t> accepted;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (pop[i].accepted()) {
            accepted.push_back(i);
        }
    }
    if (accepted.empty()) {
        return accepted;
    }
    std::vector<Objectives> objs;
    objs.reserve(accepted.size());
    for (std::size_t i : accepted) {
        objs.push_back(objectives_of(pop[i]));
    }
    const auto fronts = nondominated_sort(objs);
    std::vector<int> rank(accepted.size(), 0);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
        for (std::size_t member : fronts[f]) {
            rank[member] = static_cast<int>(f);
        }
    }
    std::vector<std::size_t> order(accepted.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rank[a] != rank[b]) {
            return rank[a] < rank[b];
        }
        const double fa = *pop[accepted[a]].fitness();
        const double fb = *pop[accepted[b]].fitness();
        if (fa != fb) {
            return fa > fb;
        }
        return pop[accepted[a]].genome.id < pop[accepted[b]].genome.id;
    });
    std::vector<std::size_t> result;
    result.reserve(order.size());
    for (std::size_t o : order) {
        result.push_back(accepted[o]);
    }
    return result;
}

double candidate_inference_macs(const Candidate& c, const Dataset& ds) {
    const int d_sel =
        static_cast<int>(std::count(c.genome.data_ops.feature_mask.begin(),
                                    c.genome.data_ops.feature_mask.end(), true));
    // Nominal training-set size for the kernel family: non-holdout fold share.
    const double n_train = static_cast<double>(ds.size()) *
                           (1.0 - c.genome.split.holdout_fraction) *
                           (1.0 - 1.0 / std::max(2, c.genome.split.fold_count));
    return estimate_inference_macs_per_sample(c.genome.model, static_cast<int>(n_train), d_sel);
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    const int workers = std::min<int>(threads, static_cast<int>(count));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                body(i);
            }
        });
    }
    for (std::thread& t : pool) {
        t.join();
    }
}

std::optional<OperatorKind> operator_kind_of(const std::string& origin) {
    for (OperatorKind kind : kAllOperatorKinds) {
        if (to_string(kind) == origin) {
            return kind;
        }
    }
    return std::nullopt;
}

} // namespace

EvolutionResult run_evolution(const EvolutionConfig& config, const Dataset& ds,
                              const Contract& base_contract) {
    {
        const auto problems = validate_config(config);
        if (!problems.empty()) {
            throw std::invalid_argument("evolution config invalid: " + problems.front());
        }
    }

    EvolutionResult result;
    result.islands = initialize(config, ds);
    ConstraintMemory memory;
    const DeterministicStream root(config.master_seed);
    const std::vector<std::size_t> banned = ds.banned_columns();

    std::int64_t iteration = 0;
    double best_fitness = -std::numeric_limits<double>::infinity();

    for (std::int64_t gen = 0; gen < config.generations; ++gen) {
        const LifecycleStage stage = stage_for_generation(config, gen);
        const Contract contract = tighten(base_contract, stage);
        const std::string stage_name = to_string(stage);

        // Evaluate every new member. Work items are collected in a fixed
        // order, evaluated (possibly concurrently; evaluation draws no rng),
        // then committed sequentially in that same order.
        struct WorkItem {
            std::size_t island;
            std::size_t member;
        };
        std::vector<WorkItem> work;
        for (std::size_t is = 0; is < result.islands.size(); ++is) {
            for (std::size_t m = 0; m < result.islands[is].population.size(); ++m) {
                if (!result.islands[is].population[m].evaluation) {
                    work.push_back({is, m});
                }
            }
        }
        std::vector<Evaluation> outcomes(work.size());
        parallel_for(work.size(), config.threads, [&](std::size_t w) {
            const Candidate& member = result.islands[work[w].island].population[work[w].member];
            outcomes[w] = evaluate(member.genome, ds, contract);
        });

        const double qd_before = result.archive.qd_score();
        for (std::size_t w = 0; w < work.size(); ++w) {
            IslandState& island = result.islands[work[w].island];
            Candidate& member = island.population[work[w].member];
            member.evaluation = std::move(outcomes[w]);
            member.home_island = island.id;
            member.trajectory_iteration = ++iteration;
            result.numeric_failures += member.evaluation->numeric_failures;

            TrajectoryRecord record;
            record.candidate_id = member.genome.id;
            record.parent_id = member.genome.provenance.parent_id;
            record.parent_iteration = member.parent_iteration;
            record.iteration = member.trajectory_iteration;
            record.generation = gen;
            record.island = island.id;
            record.operator_kind = member.genome.provenance.origin;
            record.stage = stage_name;
            if (member.accepted()) {
                record.gate_outcome = "pass";
                record.combined_score = round_metric(member.evaluation->aggregate.combined_score);
                record.fitness = round_metric(*member.evaluation->fitness);
                const bool inserted =
                    result.archive.insert(member, candidate_inference_macs(member, ds));
                (void)inserted;
                if (*member.evaluation->fitness > best_fitness) {
                    best_fitness = *member.evaluation->fitness;
                    result.best = member;
                }
            } else {
                record.gate_outcome = member.evaluation->failed_gate;
                record.combined_score = 0.0;
                if (const auto kind = operator_kind_of(member.genome.provenance.origin)) {
                    memory.record_failure(*kind, member.evaluation->failed_gate);
                }
            }
            result.trajectory.push_back(std::move(record));
        }
        result.evaluations = iteration;

        // Archive quality is monotone by the strict-replacement rule;
        // enforce it as a hard invariant every generation.
        const double qd_after = result.archive.qd_score();
        if (qd_after + 1e-12 < qd_before) {
            throw std::logic_error("archive qd_score decreased");
        }

        // Elite selection and per-island bookkeeping.
        std::vector<bool> fallback_flags(result.islands.size(), false);
        for (IslandState& island : result.islands) {
            const std::vector<std::size_t> ranked = rank_accepted(island.population);
            island.elites.assign(
                ranked.begin(),
                ranked.begin() + std::min<std::size_t>(
                                     ranked.size(), static_cast<std::size_t>(config.elite_count)));
            island.generation = gen;

            GenerationSummary row;
            row.generation = gen;
            row.island = island.id;
            row.stage = stage_name;
            double sum = 0.0;
            int accepted_count = 0;
            for (const Candidate& member : island.population) {
                if (member.accepted()) {
                    row.best_score =
                        std::max(row.best_score, member.evaluation->aggregate.combined_score);
                    sum += member.evaluation->aggregate.combined_score;
                    ++accepted_count;
                } else {
                    row.rejected_members += 1;
                }
            }
            row.mean_score = accepted_count > 0 ? sum / accepted_count : 0.0;
            row.qd_score = qd_after;
            result.summary.push_back(row);
        }

        if (gen + 1 >= config.generations) {
            break; // final generation: offspring would never be evaluated
        }

        memory.decay_step();
        const std::array<double, 4> weights = memory.operator_weights(config.feedback_enabled);
        const double temperature = config.adaptive_initial_temperature *
                                   std::pow(config.adaptive_temperature_decay,
                                            static_cast<double>(gen));

        for (std::size_t is = 0; is < result.islands.size(); ++is) {
            IslandState& island = result.islands[is];
            GenerationSummary& row = result.summary[result.summary.size() - result.islands.size() + is];

            std::vector<Candidate> next;
            next.reserve(island.population.size());
            for (std::size_t e : island.elites) {
                next.push_back(island.population[e]);
            }
            // Keep population size fixed even when the elite set is short:
            // pad with the most recent evaluated members as inert survivors.
            if (next.size() < static_cast<std::size_t>(config.elite_count)) {
                std::vector<std::size_t> rest;
                for (std::size_t m = 0; m < island.population.size(); ++m) {
                    if (std::find(island.elites.begin(), island.elites.end(), m) ==
                        island.elites.end()) {
                        rest.push_back(m);
                    }
                }
                std::sort(rest.begin(), rest.end(), [&island](std::size_t a, std::size_t b) {
                    return island.population[a].trajectory_iteration >
                           island.population[b].trajectory_iteration;
                });
                for (std::size_t r : rest) {
                    if (next.size() >= static_cast<std::size_t>(config.elite_count)) {
                        break;
                    }
                    next.push_back(island.population[r]);
                }
            }
            const std::size_t survivor_count = next.size();

            const int offspring_count =
                config.population_per_island - static_cast<int>(survivor_count);
            for (int o = 0; o < offspring_count; ++o) {
                const LineageStamp stamp{iteration, gen + 1};
                const ParentSelection primary = select_parents(
                    island.population, config.sampling_mode, temperature, config.topk,
                    island.rng, 1);
                row.fallback_uniform = row.fallback_uniform || primary.fallback_uniform;
                const Candidate& parent = island.population[primary.indices.front()];

                Candidate child;
                child.parent_iteration = parent.trajectory_iteration;
                const bool try_crossover = !primary.fallback_uniform &&
                                           island.rng.bernoulli(config.crossover_probability);
                if (try_crossover) {
                    const ParentSelection secondary = select_parents(
                        island.population, config.sampling_mode, temperature, config.topk,
                        island.rng, 1);
                    const Candidate& other = island.population[secondary.indices.front()];
                    child.genome =
                        crossover(parent.genome, other.genome, island.rng, stamp);
                } else {
                    const OperatorKind kind = sample_operator_kind(weights, island.rng);
                    child.genome = mutate(parent.genome, kind, island.rng, stamp);
                }
                next.push_back(std::move(child));
            }

            // Elite indices now refer to the head of the rebuilt population.
            island.population = std::move(next);
            island.elites.clear();
            std::size_t elite_limit = std::min<std::size_t>(survivor_count,
                                                            static_cast<std::size_t>(config.elite_count));
            for (std::size_t e = 0; e < elite_limit; ++e) {
                if (island.population[e].accepted()) {
                    island.elites.push_back(e);
                }
            }

            inject_immigrants(island, config.immigrant_rate, island.rng,
                              LineageStamp{iteration, gen + 1}, ds.feature_count(), banned);
        }

        if (gen > 0 && gen % config.migration_interval == 0 && config.island_count > 1) {
            DeterministicStream migration_rng =
                root.fork("migration", static_cast<std::uint64_t>(gen));
            const int arrivals = migrate(result.islands, config.migration_count, migration_rng);
            for (std::size_t is = 0; is < result.islands.size(); ++is) {
                result.summary[result.summary.size() - result.islands.size() + is]
                    .migration_arrivals = arrivals;
            }
        }
    }

    return result;
}

} // namespace surrevo
