#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "surrevo/taskbench.hpp"

namespace surrevo {

class UndefinedMetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MetricBundle {
    double mae = 0.0;
    double rmse = 0.0;
    double sign_accuracy = 0.0;
    double spearman_rho = 0.0;
    double combined_score = 0.0;
};

// Combined score S = alpha * sign accuracy + beta / (1 + RMSE) + gamma / (1 + MAE).
// The defaults reproduce the published per-operator scores; they are
// config-overridable.
struct ScoreWeights {
    double alpha = 0.8;
    double beta = 0.1;
    double gamma = 0.1;
};

// Fitness F = w_accuracy * mean Spearman + w_reliability * reliability
//           - w_complexity * (parameter count / complexity_normalizer).
struct FitnessWeights {
    double w_accuracy = 1.0;
    double w_reliability = 0.5;
    double w_complexity = 0.1;
    double complexity_normalizer = 1e4;
};

std::pair<double, double> error_metrics(std::span<const double> pred,
                                        std::span<const double> labels);

// Fraction of pairs whose predicted delta sign matches the true delta sign.
// Predicted ties count as incorrect. Throws UndefinedMetricError on an empty
// pair set.
double sign_accuracy(std::span<const double> pred, std::span<const double> labels,
                     const PairSet& pairs);

// Spearman's rho as the Pearson correlation of average ranks (ties receive
// average ranks). Throws UndefinedMetricError when either side has zero rank
// variance.
double spearman(std::span<const double> pred, std::span<const double> labels);

double combined_score(double sign_acc, double mae, double rmse, const ScoreWeights& w);

// 1 minus the population standard deviation of per-seed combined scores.
double reliability(const std::vector<double>& per_seed_scores);

double fitness_value(double mean_spearman, double reliability_value, double param_count,
                     const FitnessWeights& w);

// Population (divide-by-n) standard deviation.
double population_std(const std::vector<double>& values);

// Fixed 6-fractional-digit decimal rendering used wherever metrics must
// compare exactly (determinism gate, logs, replay verification).
std::string format_metric(double value);
std::string canonical_metric_string(const MetricBundle& bundle);

// Round to the same 6-digit grid as format_metric, for numeric log fields.
double round_metric(double value);

} // namespace surrevo
