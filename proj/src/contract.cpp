#include "surrevo/contract.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace surrevo {

using nlohmann::json;

std::string to_string(LifecycleStage s) {
    switch (s) {
    case LifecycleStage::explore: return "explore";
    case LifecycleStage::refine: return "refine";
    case LifecycleStage::certify: return "certify";
    }
    throw std::logic_error("bad LifecycleStage");
}

LifecycleStage stage_from_string(const std::string& s) {
    if (s == "explore") return LifecycleStage::explore;
    if (s == "refine") return LifecycleStage::refine;
    if (s == "certify") return LifecycleStage::certify;
    throw std::invalid_argument("unknown lifecycle stage: " + s);
}

Contract tighten(const Contract& c, LifecycleStage stage) {
    Contract out = c;
    out.stage = stage;
    switch (stage) {
    case LifecycleStage::explore:
        out.sigma_seeds_limit = 0.10;
        out.mac_budget = 1e9;
        break;
    case LifecycleStage::refine:
        out.sigma_seeds_limit = 0.05;
        out.mac_budget = 5e8;
        break;
    case LifecycleStage::certify:
        out.sigma_seeds_limit = 0.02;
        out.mac_budget = 2e8;
        break;
    }
    return out;
}

Contract contract_for_dataset(const Dataset& ds) {
    Contract c;
    c.banned_columns = ds.banned_columns();
    return c;
}

GateResult gate_leakage(const Genome& g, const Dataset& ds, const Contract& c) {
    // The ban list lives in the contract; contract_for_dataset seeds it from
    // the dataset card's leaky-column record.
    for (std::size_t col : c.banned_columns) {
        if (col >= ds.feature_count()) {
            continue;
        }
        if (col < g.data_ops.feature_mask.size() && g.data_ops.feature_mask[col]) {
            return {"leakage", false,
                    "feature_mask includes banned column " + std::to_string(col)};
        }
    }
    return {"leakage", true, ""};
}

GateResult gate_split(const Genome& g, const Contract& c) {
    if (c.ban_random_split && g.split.policy == SplitPolicy::random) {
        return {"split", false, "random split banned"};
    }
    return {"split", true, ""};
}

GateResult gate_resources(const RunResult& run, const Contract& c) {
    if (run.resources.mac_estimate > c.mac_budget) {
        std::ostringstream evidence;
        evidence << "estimated " << run.resources.mac_estimate << " multiply-accumulates exceeds budget "
                 << c.mac_budget;
        return {"resources", false, evidence.str()};
    }
    return {"resources", true, ""};
}

GateResult gate_variance(const std::vector<double>& per_seed_scores, const Contract& c) {
    if (per_seed_scores.size() < 2) {
        return {"variance", false, "fewer than 2 seed scores"};
    }
    const double sigma = population_std(per_seed_scores);
    if (sigma > c.sigma_seeds_limit) {
        return {"variance", false,
                "cross-seed score std " + format_metric(sigma) + " exceeds stage limit " +
                    format_metric(c.sigma_seeds_limit)};
    }
    return {"variance", true, ""};
}

GateResult determinism_check(const std::function<std::string()>& run_serialized) {
    const std::string first = run_serialized();
    const std::string second = run_serialized();
    if (first != second) {
        return {"determinism", false, "serialized metrics differ between identical runs"};
    }
    return {"determinism", true, ""};
}

namespace {

struct HarnessRun {
    std::vector<std::vector<MetricBundle>> bundles; // [seed][fold]
    int numeric_failures = 0;
    double parameter_count = 0.0;

    std::string canonical() const {
        std::string out;
        for (const auto& per_seed : bundles) {
            for (const MetricBundle& b : per_seed) {
                out += canonical_metric_string(b);
                out += '\n';
            }
        }
        out += "failures=" + std::to_string(numeric_failures);
        return out;
    }
};

MetricBundle zero_bundle() {
    return MetricBundle{};
}

// One full pass over folds x seeds. Closed-form families are fitted once
// per fold and shared across seeds; the metric layout still carries one
// bundle per (seed, fold) so aggregation is uniform.
HarnessRun run_harness(const Genome& g, const Dataset& ds, const Split& split,
                       const Contract& c) {
    HarnessRun run;
    const Pipeline pipeline(g, ds);
    const std::size_t seed_count = c.seeds.size();
    const std::size_t fold_count = split.folds.size();
    run.bundles.assign(seed_count, std::vector<MetricBundle>(fold_count, zero_bundle()));

    double param_acc = 0.0;
    for (std::size_t f = 0; f < fold_count; ++f) {
        const FoldIndices& fold = split.folds[f];
        const auto n_val = static_cast<Eigen::Index>(fold.validation.size());
        Eigen::MatrixXd raw_val(n_val, ds.features.cols());
        std::vector<double> labels_val(fold.validation.size());
        std::vector<int> versions_val(fold.validation.size());
        for (Eigen::Index r = 0; r < n_val; ++r) {
            const int idx = fold.validation[static_cast<std::size_t>(r)];
            raw_val.row(r) = ds.features.row(idx);
            labels_val[static_cast<std::size_t>(r)] = ds.labels(idx);
            versions_val[static_cast<std::size_t>(r)] = ds.version[static_cast<std::size_t>(idx)];
        }
        const PairSet val_pairs = make_pairs(ds, fold.validation);

        FittedReplica shared;
        bool have_shared = false;
        for (std::size_t s = 0; s < seed_count; ++s) {
            FittedReplica replica;
            if (!seed_sensitive(g.model.family)) {
                if (!have_shared) {
                    shared = pipeline.fit(fold.train, c.seeds[s]);
                    have_shared = true;
                }
                replica = shared;
            } else {
                replica = pipeline.fit(fold.train, c.seeds[s]);
            }
            if (f == 0 && s == 0) {
                param_acc = model_param_count(g.model, static_cast<int>(fold.train.size()),
                                              static_cast<int>(replica.prep.selected.size()));
            }
            if (replica.status != RunStatus::ok) {
                ++run.numeric_failures;
                run.bundles[s][f] = zero_bundle();
                continue;
            }
            const Eigen::VectorXd pred = replica.predict(raw_val, &versions_val);
            if (!pred.allFinite()) {
                ++run.numeric_failures;
                run.bundles[s][f] = zero_bundle();
                continue;
            }
            std::vector<double> pred_v(pred.data(), pred.data() + pred.size());
            MetricBundle bundle;
            const auto [mae, rmse] = error_metrics(pred_v, labels_val);
            bundle.mae = mae;
            bundle.rmse = rmse;
            bundle.sign_accuracy =
                val_pairs.pairs.empty() ? 0.0 : sign_accuracy(pred_v, labels_val, val_pairs);
            try {
                bundle.spearman_rho = spearman(pred_v, labels_val);
            } catch (const UndefinedMetricError&) {
                bundle.spearman_rho = 0.0; // constant predictor carries no ranking signal
            }
            bundle.combined_score =
                combined_score(bundle.sign_accuracy, bundle.mae, bundle.rmse, c.score_weights);
            run.bundles[s][f] = bundle;
        }
    }
    run.parameter_count = param_acc;
    return run;
}

double harness_mac_estimate(const Genome& g, const Split& split,
                            const Contract& c) {
    const int d_sel = static_cast<int>(std::count(g.data_ops.feature_mask.begin(),
                                                  g.data_ops.feature_mask.end(), true));
    const double seed_factor =
        seed_sensitive(g.model.family) ? static_cast<double>(c.seeds.size()) : 1.0;
    double total = 0.0;
    for (const FoldIndices& fold : split.folds) {
        const int n_train = static_cast<int>(fold.train.size());
        const int n_val = static_cast<int>(fold.validation.size());
        total += 2.0 * static_cast<double>(n_train + n_val) * d_sel; // preprocessing
        total += seed_factor * estimate_fit_macs(g.model, g.loss, n_train, d_sel);
        total += seed_factor * static_cast<double>(n_val) *
                 estimate_inference_macs_per_sample(g.model, n_train, d_sel);
    }
    return total;
}

double harness_peak_rows(const Genome& g, const Split& split) {
    const int d_sel = static_cast<int>(std::count(g.data_ops.feature_mask.begin(),
                                                  g.data_ops.feature_mask.end(), true));
    double peak = 0.0;
    for (const FoldIndices& fold : split.folds) {
        const double n = static_cast<double>(fold.train.size());
        switch (g.model.family) {
        case ModelFamily::ridge_linear:
            peak = std::max(peak, n * (d_sel + 1.0));
            break;
        case ModelFamily::kernel_ridge_rbf:
            peak = std::max(peak, n * n);
            break;
        case ModelFamily::mlp_1hidden:
            peak = std::max(peak, n * std::max<double>(d_sel, g.model.hidden_units));
            break;
        }
    }
    return peak;
}

} // namespace

GateResult gate_determinism(const Genome& g, const Dataset& ds, const Contract& c) {
    const Split s = split(ds, g.split, c.split_seed);
    int failures = 0;
    const GateResult result = determinism_check([&]() {
        const HarnessRun run = run_harness(g, ds, s, c);
        failures = run.numeric_failures;
        return run.canonical();
    });
    if (!result.passed || failures > 0) {
        return {"determinism", false, "nondeterministic or unstable execution"};
    }
    return result;
}

bool evaluation_less(const Evaluation& a, const Evaluation& b) {
    if (a.rejected != b.rejected) {
        return a.rejected; // rejected < accepted
    }
    if (a.rejected) {
        return false;
    }
    return *a.fitness < *b.fitness;
}

Evaluation evaluate(const Genome& g, const Dataset& ds, const Contract& c) {
    Evaluation e;
    e.genome_id = g.id;

    auto reject_with = [&e](GateResult gate) {
        e.failed_gate = gate.name;
        e.gates.push_back(std::move(gate));
        e.rejected = true;
    };

    // Structural gates short-circuit before any pipeline execution.
    GateResult leakage = gate_leakage(g, ds, c);
    if (!leakage.passed) {
        reject_with(std::move(leakage));
        return e;
    }
    e.gates.push_back(std::move(leakage));

    GateResult split_gate = gate_split(g, c);
    if (!split_gate.passed) {
        reject_with(std::move(split_gate));
        return e;
    }
    Split s;
    try {
        s = split(ds, g.split, c.split_seed);
    } catch (const InfeasibleSplitError& err) {
        reject_with(GateResult{"split", false, err.what()});
        return e;
    }
    e.gates.push_back(std::move(split_gate));

    // Resource gate runs on the analytic estimate before execution so
    // over-budget candidates never consume compute.
    RunResult run_info;
    run_info.resources.mac_estimate = harness_mac_estimate(g, s, c);
    run_info.resources.peak_rows = harness_peak_rows(g, s);
    e.resources = run_info.resources;
    GateResult resources = gate_resources(run_info, c);
    if (!resources.passed) {
        reject_with(std::move(resources));
        return e;
    }
    e.gates.push_back(std::move(resources));

    // First full pass produces the metrics; the second is the determinism
    // replay required by the gate.
    const HarnessRun first = run_harness(g, ds, s, c);
    const HarnessRun second = run_harness(g, ds, s, c);
    e.per_seed_fold = first.bundles;
    e.numeric_failures = first.numeric_failures + second.numeric_failures;
    e.parameter_count = first.parameter_count;

    if (first.canonical() != second.canonical() || first.numeric_failures > 0) {
        reject_with(GateResult{"determinism", false, "nondeterministic or unstable execution"});
        return e;
    }
    e.gates.push_back(GateResult{"determinism", true, ""});

    e.per_seed_scores.clear();
    for (const auto& per_seed : first.bundles) {
        double acc = 0.0;
        for (const MetricBundle& b : per_seed) {
            acc += b.combined_score;
        }
        e.per_seed_scores.push_back(acc / static_cast<double>(per_seed.size()));
    }
    GateResult variance = gate_variance(e.per_seed_scores, c);
    if (!variance.passed) {
        reject_with(std::move(variance));
        return e;
    }
    e.gates.push_back(std::move(variance));

    MetricBundle agg;
    for (const auto& per_seed : first.bundles) {
        MetricBundle seed_mean;
        for (const MetricBundle& b : per_seed) {
            seed_mean.mae += b.mae;
            seed_mean.rmse += b.rmse;
            seed_mean.sign_accuracy += b.sign_accuracy;
            seed_mean.spearman_rho += b.spearman_rho;
            seed_mean.combined_score += b.combined_score;
        }
        const double folds = static_cast<double>(per_seed.size());
        agg.mae += seed_mean.mae / folds;
        agg.rmse += seed_mean.rmse / folds;
        agg.sign_accuracy += seed_mean.sign_accuracy / folds;
        agg.spearman_rho += seed_mean.spearman_rho / folds;
        agg.combined_score += seed_mean.combined_score / folds;
    }
    const double seeds = static_cast<double>(first.bundles.size());
    agg.mae /= seeds;
    agg.rmse /= seeds;
    agg.sign_accuracy /= seeds;
    agg.spearman_rho /= seeds;
    agg.combined_score /= seeds;
    e.aggregate = agg;

    e.reliability_value = reliability(e.per_seed_scores);
    e.fitness = fitness_value(agg.spearman_rho, e.reliability_value, e.parameter_count,
                              c.fitness_weights);
    e.rejected = false;
    return e;
}

namespace {

json bundle_to_json(const MetricBundle& b) {
    json j;
    j["mae"] = round_metric(b.mae);
    j["rmse"] = round_metric(b.rmse);
    j["sign_accuracy"] = round_metric(b.sign_accuracy);
    j["spearman_rho"] = round_metric(b.spearman_rho);
    j["combined_score"] = round_metric(b.combined_score);
    return j;
}

} // namespace

json evaluation_to_json(const Evaluation& e) {
    json j;
    j["genome_id"] = e.genome_id;
    j["rejected"] = e.rejected;
    j["failed_gate"] = e.failed_gate;
    json gates = json::array();
    for (const GateResult& g : e.gates) {
        json gj;
        gj["name"] = g.name;
        gj["passed"] = g.passed;
        gj["evidence"] = g.evidence;
        gates.push_back(gj);
    }
    j["gates"] = gates;
    json per_seed = json::array();
    for (const auto& folds : e.per_seed_fold) {
        json row = json::array();
        for (const MetricBundle& b : folds) {
            row.push_back(bundle_to_json(b));
        }
        per_seed.push_back(row);
    }
    j["per_seed_fold"] = per_seed;
    json scores = json::array();
    for (double s : e.per_seed_scores) {
        scores.push_back(round_metric(s));
    }
    j["per_seed_scores"] = scores;
    j["aggregate"] = bundle_to_json(e.aggregate);
    j["reliability"] = round_metric(e.reliability_value);
    j["parameter_count"] = e.parameter_count;
    if (e.fitness) {
        j["fitness"] = round_metric(*e.fitness);
    }
    j["mac_estimate"] = e.resources.mac_estimate;
    j["peak_rows"] = e.resources.peak_rows;
    j["numeric_failures"] = e.numeric_failures;
    return j;
}

std::string serialize_evaluation(const Evaluation& e) {
    return evaluation_to_json(e).dump();
}

} // namespace surrevo
