#include "surrevo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace surrevo {

namespace {

void check_finite_same_length(std::span<const double> pred, std::span<const double> labels) {
    if (pred.size() != labels.size() || pred.empty()) {
        throw std::invalid_argument("metrics: prediction/label lengths must match and be nonzero");
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!std::isfinite(pred[i]) || !std::isfinite(labels[i])) {
            throw std::invalid_argument("metrics: non-finite value at index " + std::to_string(i));
        }
    }
}

// Average ranks, 1-based; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) {
            ++j;
        }
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t p = i; p <= j; ++p) {
            ranks[order[p]] = shared;
        }
        i = j + 1;
    }
    return ranks;
}

} // namespace

double population_std(const std::vector<double>& values) {
    if (values.empty()) {
        throw std::invalid_argument("population_std: empty input");
    }
    const double mean =
        std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double acc = 0.0;
    for (double v : values) {
        acc += (v - mean) * (v - mean);
    }
    return std::sqrt(acc / static_cast<double>(values.size()));
}

std::pair<double, double> error_metrics(std::span<const double> pred,
                                        std::span<const double> labels) {
    check_finite_same_length(pred, labels);
    double abs_acc = 0.0;
    double sq_acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred[i] - labels[i];
        abs_acc += std::abs(diff);
        sq_acc += diff * diff;
    }
    const double n = static_cast<double>(pred.size());
    return {abs_acc / n, std::sqrt(sq_acc / n)};
}

double sign_accuracy(std::span<const double> pred, std::span<const double> labels,
                     const PairSet& pairs) {
    if (pairs.pairs.empty()) {
        throw UndefinedMetricError("sign_accuracy: empty pair set");
    }
    std::size_t correct = 0;
    for (const auto& [i, j] : pairs.pairs) {
        const double dp = pred[static_cast<std::size_t>(i)] - pred[static_cast<std::size_t>(j)];
        const double dy =
            labels[static_cast<std::size_t>(i)] - labels[static_cast<std::size_t>(j)];
        if (dp != 0.0 && ((dp > 0.0) == (dy > 0.0))) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.pairs.size());
}

double spearman(std::span<const double> pred, std::span<const double> labels) {
    check_finite_same_length(pred, labels);
    if (pred.size() < 2) {
        throw std::invalid_argument("spearman: need at least 2 samples");
    }
    const std::vector<double> ra = average_ranks(pred);
    const std::vector<double> rb = average_ranks(labels);
    const double n = static_cast<double>(ra.size());
    const double mean = (n + 1.0) / 2.0;
    double va = 0.0;
    double vb = 0.0;
    double cov = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean;
        const double db = rb[i] - mean;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    if (va == 0.0 || vb == 0.0) {
        throw UndefinedMetricError("spearman: zero rank variance");
    }
    return cov / std::sqrt(va * vb);
}

double combined_score(double sign_acc, double mae, double rmse, const ScoreWeights& w) {
    if (!(sign_acc >= 0.0 && sign_acc <= 1.0)) {
        throw std::invalid_argument("combined_score: sign accuracy outside [0,1]");
    }
    if (mae < 0.0 || rmse < 0.0) {
        throw std::invalid_argument("combined_score: negative error metric");
    }
    return w.alpha * sign_acc + w.beta / (1.0 + rmse) + w.gamma / (1.0 + mae);
}

double reliability(const std::vector<double>& per_seed_scores) {
    if (per_seed_scores.size() < 2) {
        throw std::invalid_argument("reliability: need at least 2 seed scores");
    }
    return 1.0 - population_std(per_seed_scores);
}

double fitness_value(double mean_spearman, double reliability_value, double param_count,
                     const FitnessWeights& w) {
    return w.w_accuracy * mean_spearman + w.w_reliability * reliability_value -
           w.w_complexity * (param_count / w.complexity_normalizer);
}

std::string format_metric(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.6f", value);
    return buffer;
}

std::string canonical_metric_string(const MetricBundle& bundle) {
    return "mae=" + format_metric(bundle.mae) + ";rmse=" + format_metric(bundle.rmse) +
           ";sign_accuracy=" + format_metric(bundle.sign_accuracy) +
           ";spearman_rho=" + format_metric(bundle.spearman_rho) +
           ";combined_score=" + format_metric(bundle.combined_score);
}

double round_metric(double value) {
    return std::round(value * 1e6) / 1e6;
}

} // namespace surrevo
