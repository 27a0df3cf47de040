#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "surrevo/escalate.hpp"
#include "surrevo/rng.hpp"

using namespace surrevo;

namespace {

// Identity-on-x0 replica with an intercept, for hand-built ensembles.
FittedReplica linear_replica(double slope, double intercept) {
    FittedReplica r;
    r.model.family = ModelFamily::ridge_linear;
    r.prep.selected = {0};
    r.prep.normalization = Normalization::none;
    r.linear_w = Eigen::Vector2d(slope, intercept);
    return r;
}

Envelope box(double lo, double hi) {
    Envelope env;
    env.columns = {0};
    env.lo = Eigen::VectorXd::Constant(1, lo);
    env.hi = Eigen::VectorXd::Constant(1, hi);
    return env;
}

Eigen::MatrixXd column(const std::vector<double>& values) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
        m(static_cast<Eigen::Index>(i), 0) = values[i];
    }
    return m;
}

} // namespace

TEST_CASE("vacuous threshold escalates nothing in-envelope") {
    const Eigen::MatrixXd batch = column({0.1, 0.5, 0.9});
    const std::vector<FittedReplica> replicas = {linear_replica(1.0, 0.0),
                                                 linear_replica(1.0, 0.02)};
    const ScreenReport report =
        screen(batch, replicas, std::numeric_limits<double>::infinity(), box(0.0, 1.0));
    for (const ScreeningDecision& d : report.decisions) {
        CHECK_FALSE(d.escalate);
    }
    CHECK(report.accepted_ranking.size() == 3);
    // Ranked ascending by predicted drag.
    CHECK(report.accepted_ranking == std::vector<int>{0, 1, 2});
}

TEST_CASE("zero threshold escalates every in-envelope sample with seed spread") {
    const Eigen::MatrixXd batch = column({0.1, 0.5, 0.9});
    const std::vector<FittedReplica> replicas = {linear_replica(1.0, 0.0),
                                                 linear_replica(1.0, 0.02)};
    const ScreenReport report = screen(batch, replicas, 0.0, box(0.0, 1.0));
    for (const ScreeningDecision& d : report.decisions) {
        CHECK(d.escalate);
        CHECK(d.reason == ScreenReason::high_uncertainty);
    }
    CHECK(report.accepted_ranking.empty());
}

TEST_CASE("out-of-envelope samples escalate regardless of sigma") {
    const Eigen::MatrixXd batch = column({0.5, 2.0});
    const std::vector<FittedReplica> replicas = {linear_replica(1.0, 0.0),
                                                 linear_replica(1.0, 0.0)}; // sigma 0
    const ScreenReport report =
        screen(batch, replicas, std::numeric_limits<double>::infinity(), box(0.0, 1.0));
    CHECK_FALSE(report.decisions[0].escalate);
    CHECK(report.decisions[1].escalate);
    CHECK(report.decisions[1].reason == ScreenReason::out_of_envelope);
}

TEST_CASE("empty batches produce empty output") {
    const Eigen::MatrixXd batch(0, 1);
    const std::vector<FittedReplica> replicas = {linear_replica(1.0, 0.0),
                                                 linear_replica(1.0, 0.0)};
    const ScreenReport report = screen(batch, replicas, 1.0, box(0.0, 1.0));
    CHECK(report.decisions.empty());
    CHECK(report.accepted_ranking.empty());
}

TEST_CASE("escalation count is non-increasing over a sigma_max sweep") {
    DeterministicStream rng(31);
    std::vector<double> values;
    std::vector<FittedReplica> replicas;
    for (int r = 0; r < 3; ++r) {
        replicas.push_back(linear_replica(1.0, rng.uniform(-0.05, 0.05)));
    }
    for (int i = 0; i < 60; ++i) {
        values.push_back(rng.uniform(0.0, 1.0));
    }
    const Eigen::MatrixXd batch = column(values);
    int previous = std::numeric_limits<int>::max();
    for (int step = 0; step < 10; ++step) {
        const double sigma_max = 0.005 * step;
        const ScreenReport report = screen(batch, replicas, sigma_max, box(0.0, 1.0));
        int escalated = 0;
        for (const ScreeningDecision& d : report.decisions) {
            escalated += d.escalate ? 1 : 0;
        }
        CHECK(escalated <= previous);
        previous = escalated;
    }
}

TEST_CASE("training envelope contains every training sample") {
    DeterministicStream rng(32);
    Eigen::MatrixXd raw(100, 3);
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        for (Eigen::Index c = 0; c < raw.cols(); ++c) {
            raw(i, c) = rng.uniform(-2.0, 2.0);
        }
    }
    Preprocessor prep;
    prep.selected = {0, 2};
    prep.normalization = Normalization::none;
    std::vector<int> train;
    for (int i = 0; i < 70; ++i) {
        train.push_back(i);
    }
    for (double margin : {0.0, 0.05, 0.2}) {
        const Envelope env = training_envelope(prep, raw, train, margin);
        for (int idx : train) {
            CHECK(env.contains(raw, idx));
        }
    }
}

TEST_CASE("roi follows the published equation exactly") {
    CHECK(roi({1000, 10, 500, 1500}) == 4.0);
    CHECK(roi({200, 10, 500, 1500}) == 0.0); // avoided == incurred
    CHECK(roi({0, 10, 500, 1500}) == -1.0);
    CHECK_THROWS_AS(roi({100, 10, 0, 0}), std::invalid_argument);

    double previous = -2.0;
    for (double n : {0.0, 100.0, 500.0, 1000.0, 5000.0}) {
        const double value = roi({n, 10, 500, 1500});
        CHECK(value > previous);
        previous = value;
    }
}

TEST_CASE("kpis: perfect predictor, zero escalations") {
    std::vector<double> labels;
    for (int i = 0; i < 30; ++i) {
        labels.push_back(0.2 + 0.01 * i);
    }
    const Eigen::MatrixXd batch = column(labels); // feature equals the label
    const std::vector<FittedReplica> replicas = {linear_replica(1.0, 0.0),
                                                 linear_replica(1.0, 0.0)};
    const ScreenReport report =
        screen(batch, replicas, std::numeric_limits<double>::infinity(), box(0.0, 1.0));
    const Eigen::VectorXd truth = batch.col(0);
    const KpiReport kpi = kpis(report, truth, 10);
    CHECK(kpi.escalation_rate == 0.0);
    REQUIRE(kpi.top_k_fidelity.has_value());
    CHECK(*kpi.top_k_fidelity == 1.0);
    REQUIRE(kpi.throughput_gain.has_value());
    CHECK(*kpi.throughput_gain == doctest::Approx(3.0)); // 30 / (0 + 10)
}

TEST_CASE("kpis: everything escalated reports fidelity as absent") {
    ScreenReport report;
    for (int i = 0; i < 5; ++i) {
        ScreeningDecision d;
        d.sample = i;
        d.escalate = true;
        d.reason = ScreenReason::high_uncertainty;
        report.decisions.push_back(d);
    }
    const Eigen::VectorXd truth = Eigen::VectorXd::LinSpaced(5, 0.0, 1.0);
    const KpiReport kpi = kpis(report, truth, 3);
    CHECK(kpi.escalation_rate == 1.0);
    CHECK_FALSE(kpi.top_k_fidelity.has_value());
}

TEST_CASE("kpis fidelity equals brute-force set intersection on random batches") {
    DeterministicStream rng(33);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 30;
        ScreenReport report;
        Eigen::VectorXd truth(n);
        std::vector<std::pair<double, int>> by_mean;
        for (int i = 0; i < n; ++i) {
            ScreeningDecision d;
            d.sample = i;
            d.mean = rng.uniform(0.0, 1.0);
            d.escalate = rng.bernoulli(0.3);
            truth(i) = rng.uniform(0.0, 1.0);
            report.decisions.push_back(d);
            if (!d.escalate) {
                by_mean.push_back({d.mean, i});
            }
        }
        std::sort(by_mean.begin(), by_mean.end());
        for (const auto& [mean, idx] : by_mean) {
            report.accepted_ranking.push_back(idx);
        }
        const int k = 1 + static_cast<int>(rng.uniform_index(12));
        const KpiReport kpi = kpis(report, truth, k);
        if (report.accepted_ranking.empty()) {
            CHECK_FALSE(kpi.top_k_fidelity.has_value());
            continue;
        }
        const int kk = std::min<int>(k, static_cast<int>(report.accepted_ranking.size()));
        std::set<int> predicted(report.accepted_ranking.begin(),
                                report.accepted_ranking.begin() + kk);
        std::vector<std::pair<double, int>> by_truth;
        for (int idx : report.accepted_ranking) {
            by_truth.push_back({truth(idx), idx});
        }
        std::sort(by_truth.begin(), by_truth.end());
        std::set<int> actual;
        for (int i = 0; i < kk; ++i) {
            actual.insert(by_truth[static_cast<std::size_t>(i)].second);
        }
        int overlap = 0;
        for (int idx : predicted) {
            overlap += actual.count(idx) ? 1 : 0;
        }
        REQUIRE(kpi.top_k_fidelity.has_value());
        CHECK(*kpi.top_k_fidelity ==
              doctest::Approx(static_cast<double>(overlap) / kk).epsilon(1e-12));
    }
}
