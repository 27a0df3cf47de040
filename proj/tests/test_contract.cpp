#include <doctest.h>

#include <chrono>
#include <cmath>

#include "surrevo/contract.hpp"

using namespace surrevo;

namespace {

Dataset default_task() {
    return generate(TaskSpec{});
}

Genome legal_genome(const Dataset& ds) {
    return default_genome(ds.feature_count(), ds.banned_columns());
}

Genome leaky_genome(const Dataset& ds) {
    Genome g = default_genome(ds.feature_count()); // mask includes the leaky column
    g.split.policy = SplitPolicy::random;
    g.id = content_id(g);
    return g;
}

} // namespace

TEST_CASE("leakage gate bans masked-in solver columns") {
    const Dataset ds = default_task();
    const Contract c = contract_for_dataset(ds);

    CHECK(gate_leakage(legal_genome(ds), ds, c).passed);

    Genome leaky = default_genome(ds.feature_count());
    const GateResult result = gate_leakage(leaky, ds, c);
    CHECK_FALSE(result.passed);
    CHECK(result.evidence.find("8") != std::string::npos);

    TaskSpec clean_spec;
    clean_spec.leaky_feature = false;
    const Dataset clean = generate(clean_spec);
    const Contract clean_contract = contract_for_dataset(clean);
    Genome full = default_genome(clean.feature_count());
    CHECK(gate_leakage(full, clean, clean_contract).passed);
}

TEST_CASE("split gate bans random splits unless configured otherwise") {
    const Dataset ds = default_task();
    Contract c = contract_for_dataset(ds);

    CHECK(gate_split(legal_genome(ds), c).passed);

    Genome random_split = legal_genome(ds);
    random_split.split.policy = SplitPolicy::random;
    random_split.id = content_id(random_split);
    const GateResult result = gate_split(random_split, c);
    CHECK_FALSE(result.passed);
    CHECK(result.evidence == "random split banned");

    c.ban_random_split = false; // test-only override
    CHECK(gate_split(random_split, c).passed);
}

TEST_CASE("resource gate compares the analytic estimate against the budget") {
    const Dataset ds = default_task();
    Contract c = contract_for_dataset(ds);

    const Evaluation ridge_eval = evaluate(legal_genome(ds), ds, c);
    CHECK_FALSE(ridge_eval.rejected);
    CHECK(ridge_eval.resources.mac_estimate < 1e9);

    Genome big_mlp = legal_genome(ds);
    big_mlp.model.family = ModelFamily::mlp_1hidden;
    big_mlp.model.hidden_units = 64;
    big_mlp.model.epochs = 500;
    big_mlp.id = content_id(big_mlp);
    Contract tiny = c;
    tiny.mac_budget = 1e5;
    const Evaluation rejected = evaluate(big_mlp, ds, tiny);
    CHECK(rejected.rejected);
    CHECK(rejected.failed_gate == "resources");

    // Boundary: budget equal to the estimate passes (strict inequality).
    RunResult run;
    run.resources.mac_estimate = 12345.0;
    Contract boundary = c;
    boundary.mac_budget = 12345.0;
    CHECK(gate_resources(run, boundary).passed);
    boundary.mac_budget = 12344.0;
    CHECK_FALSE(gate_resources(run, boundary).passed);
}

TEST_CASE("variance gate applies the stage limit with a closed boundary") {
    Contract c;
    c.sigma_seeds_limit = 0.1;
    CHECK(gate_variance({0.9, 0.9, 0.9}, c).passed);

    Contract strict;
    strict.sigma_seeds_limit = 0.1;
    CHECK_FALSE(gate_variance({0.5, 0.9}, strict).passed); // std 0.2

    // std exactly equal to the limit passes.
    Contract exact;
    exact.sigma_seeds_limit = population_std({0.5, 0.9});
    CHECK(gate_variance({0.5, 0.9}, exact).passed);
}

TEST_CASE("tighten orders stages and is idempotent") {
    Contract c;
    const Contract explore = tighten(c, LifecycleStage::explore);
    const Contract refine = tighten(explore, LifecycleStage::refine);
    const Contract certify = tighten(refine, LifecycleStage::certify);

    CHECK(certify.sigma_seeds_limit <= refine.sigma_seeds_limit);
    CHECK(refine.sigma_seeds_limit <= explore.sigma_seeds_limit);
    CHECK(certify.mac_budget <= refine.mac_budget);
    CHECK(refine.mac_budget <= explore.mac_budget);

    const Contract again = tighten(certify, LifecycleStage::certify);
    CHECK(again.sigma_seeds_limit == certify.sigma_seeds_limit);
    CHECK(again.mac_budget == certify.mac_budget);

    // sigma_seeds = 0.07 passes explore but fails refine.
    std::vector<double> scores = {0.8, 0.8 + 0.14};
    CHECK(std::abs(population_std(scores) - 0.07) < 1e-12);
    CHECK(gate_variance(scores, explore).passed);
    CHECK_FALSE(gate_variance(scores, refine).passed);
}

TEST_CASE("determinism check fails a wall-clock-dependent producer") {
    int calls = 0;
    const GateResult stable = determinism_check([&]() {
        ++calls;
        return std::string("metrics");
    });
    CHECK(stable.passed);
    CHECK(calls == 2);

    const GateResult unstable = determinism_check([]() {
        const auto now = std::chrono::steady_clock::now().time_since_epoch().count();
        return std::to_string(now);
    });
    CHECK_FALSE(unstable.passed);
}

TEST_CASE("determinism gate passes every bundled model family") {
    const Dataset ds = default_task();
    Contract c = contract_for_dataset(ds);
    for (ModelFamily family : {ModelFamily::ridge_linear, ModelFamily::kernel_ridge_rbf,
                               ModelFamily::mlp_1hidden}) {
        Genome g = legal_genome(ds);
        g.model.family = family;
        g.model.epochs = 30;
        g.id = content_id(g);
        CAPTURE(to_string(family));
        CHECK(gate_determinism(g, ds, c).passed);
    }
}

TEST_CASE("structural rejection happens before any pipeline execution") {
    const Dataset ds = default_task();
    const Contract c = contract_for_dataset(ds);
    Genome leaky = default_genome(ds.feature_count());

    const long fits_before = g_fit_call_count.load();
    const Evaluation e = evaluate(leaky, ds, c);
    CHECK(g_fit_call_count.load() == fits_before);
    CHECK(e.rejected);
    CHECK(e.failed_gate == "leakage");
    CHECK_FALSE(e.fitness.has_value());
    REQUIRE(e.gates.size() == 1);
    CHECK_FALSE(e.gates[0].evidence.empty());
}

TEST_CASE("default genome passes all five gates on the default task") {
    const Dataset ds = default_task();
    const Contract c = contract_for_dataset(ds);
    const Evaluation e = evaluate(legal_genome(ds), ds, c);
    CHECK_FALSE(e.rejected);
    REQUIRE(e.gates.size() == 5);
    for (const GateResult& gate : e.gates) {
        CAPTURE(gate.name);
        CHECK(gate.passed);
    }
    CHECK(e.fitness.has_value());
    CHECK(e.per_seed_scores.size() == 3);
    CHECK(e.reliability_value == doctest::Approx(1.0)); // closed-form ridge, zero seed spread

    // Gate soundness: re-check every predicate independently.
    CHECK(gate_leakage(legal_genome(ds), ds, c).passed);
    CHECK(gate_split(legal_genome(ds), c).passed);
    RunResult run;
    run.resources = e.resources;
    CHECK(gate_resources(run, c).passed);
    CHECK(gate_determinism(legal_genome(ds), ds, c).passed);
    CHECK(gate_variance(e.per_seed_scores, c).passed);
}

TEST_CASE("evaluation is byte-identical across repeated runs") {
    const Dataset ds = default_task();
    const Contract c = contract_for_dataset(ds);
    Genome g = legal_genome(ds);
    g.model.family = ModelFamily::mlp_1hidden;
    g.model.epochs = 25;
    g.id = content_id(g);
    const std::string a = serialize_evaluation(evaluate(g, ds, c));
    const std::string b = serialize_evaluation(evaluate(g, ds, c));
    CHECK(a == b);
}

TEST_CASE("leakage gate necessity witness") {
    const Dataset ds = default_task();

    // Gates disabled: the leaky-feature genome under a random split wins big.
    Contract permissive;
    permissive.ban_random_split = false;
    permissive.banned_columns.clear();
    const Genome cheat = leaky_genome(ds);
    const Evaluation fragile = evaluate(cheat, ds, permissive);
    REQUIRE_FALSE(fragile.rejected);
    CHECK(fragile.aggregate.spearman_rho > 0.99);

    // Contract enabled: the same genome is rejected with zero executions.
    const Contract c = contract_for_dataset(ds);
    const long fits_before = g_fit_call_count.load();
    const Evaluation blocked = evaluate(cheat, ds, c);
    CHECK(blocked.rejected);
    CHECK(g_fit_call_count.load() == fits_before);
}

TEST_CASE("infeasible splits surface as a failed split gate") {
    TaskSpec spec;
    spec.family_count = 3;
    spec.sample_count = 60;
    const Dataset ds = generate(spec);
    const Contract c = contract_for_dataset(ds);
    const Evaluation e = evaluate(legal_genome(ds), ds, c); // k=3 needs 4 families
    CHECK(e.rejected);
    CHECK(e.failed_gate == "split");
    REQUIRE_FALSE(e.gates.empty());
    CHECK(e.gates.back().evidence.find("infeasible") != std::string::npos);
}

TEST_CASE("rejected evaluations order below accepted ones") {
    Evaluation rejected;
    rejected.rejected = true;
    Evaluation low;
    low.rejected = false;
    low.fitness = -5.0;
    Evaluation high;
    high.rejected = false;
    high.fitness = 2.0;

    CHECK(evaluation_less(rejected, low));
    CHECK_FALSE(evaluation_less(low, rejected));
    CHECK(evaluation_less(low, high));
    CHECK_FALSE(evaluation_less(rejected, rejected));
}
