#include "surrevo/escalate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "surrevo/metrics.hpp"

namespace surrevo {

using nlohmann::json;

bool Envelope::contains(const Eigen::MatrixXd& raw, Eigen::Index row) const {
    for (std::size_t c = 0; c < columns.size(); ++c) {
        const double v = raw(row, columns[c]);
        if (v < lo(static_cast<Eigen::Index>(c)) || v > hi(static_cast<Eigen::Index>(c))) {
            return false;
        }
    }
    return true;
}

Envelope training_envelope(const Preprocessor& prep, const Eigen::MatrixXd& raw,
                           const std::vector<int>& train_indices, double margin) {
    Envelope env;
    env.columns = prep.selected;
    const auto cols = static_cast<Eigen::Index>(env.columns.size());
    env.lo.resize(cols);
    env.hi.resize(cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (int idx : train_indices) {
            const double v = raw(idx, env.columns[static_cast<std::size_t>(c)]);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double range = hi - lo;
        const double pad = margin * (range > 0.0 ? range : std::max(1.0, std::abs(hi)));
        env.lo(c) = lo - pad;
        env.hi(c) = hi + pad;
    }
    return env;
}

std::string to_string(ScreenReason r) {
    switch (r) {
    case ScreenReason::none: return "none";
    case ScreenReason::high_uncertainty: return "high_uncertainty";
    case ScreenReason::out_of_envelope: return "out_of_envelope";
    }
    throw std::logic_error("bad ScreenReason");
}

ScreenReport screen(const Eigen::MatrixXd& batch, const std::vector<FittedReplica>& replicas,
                    double sigma_max, const Envelope& envelope) {
    ScreenReport report;
    if (batch.rows() == 0) {
        return report;
    }
    const auto [mean, sigma] = Pipeline::predict_with_uncertainty(replicas, batch);
    report.decisions.reserve(static_cast<std::size_t>(batch.rows()));
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
        ScreeningDecision d;
        d.sample = static_cast<int>(i);
        d.mean = mean(i);
        d.sigma = sigma(i);
        if (!envelope.contains(batch, i)) {
            d.escalate = true;
            d.reason = ScreenReason::out_of_envelope;
        } else if (d.sigma > sigma_max) {
            d.escalate = true;
            d.reason = ScreenReason::high_uncertainty;
        }
        report.decisions.push_back(d);
        if (!d.escalate) {
            report.accepted_ranking.push_back(d.sample);
        }
    }
    std::sort(report.accepted_ranking.begin(), report.accepted_ranking.end(),
              [&mean](int a, int b) {
                  if (mean(a) != mean(b)) {
                      return mean(a) < mean(b);
                  }
                  return a < b;
              });
    return report;
}

double roi(const RoiInputs& inputs) {
    if (inputs.n_screened < 0.0 || inputs.cost_cfd < 0.0 || inputs.cost_surrogate < 0.0 ||
        inputs.cost_validation < 0.0) {
        throw std::invalid_argument("roi: costs and counts must be nonnegative");
    }
    const double incurred = inputs.cost_surrogate + inputs.cost_validation;
    if (incurred <= 0.0) {
        throw std::invalid_argument("roi: surrogate plus validation cost must be positive");
    }
    return (inputs.n_screened * inputs.cost_cfd - incurred) / incurred;
}

KpiReport kpis(const ScreenReport& report, const Eigen::VectorXd& true_labels, int top_k) {
    if (top_k < 0) {
        throw std::invalid_argument("kpis: top_k must be nonnegative");
    }
    KpiReport out;
    out.top_k = top_k;
    const int total = static_cast<int>(report.decisions.size());
    for (const ScreeningDecision& d : report.decisions) {
        if (d.escalate) {
            ++out.escalated;
        } else {
            ++out.accepted;
        }
    }
    out.escalation_rate = total > 0 ? static_cast<double>(out.escalated) / total : 0.0;
    if (out.escalated + top_k > 0) {
        out.throughput_gain = static_cast<double>(total) / (out.escalated + top_k);
    }

    if (out.accepted == 0) {
        return out; // fidelity undefined, reported as absent
    }
    const int k = std::min(top_k, out.accepted);
    if (k == 0) {
        return out;
    }
    // Predicted top-K: head of the accepted ranking. True top-K: accepted
    // samples sorted by true label.
    std::vector<int> predicted(report.accepted_ranking.begin(),
                               report.accepted_ranking.begin() + k);
    std::vector<int> by_truth = report.accepted_ranking;
    std::sort(by_truth.begin(), by_truth.end(), [&true_labels](int a, int b) {
        if (true_labels(a) != true_labels(b)) {
            return true_labels(a) < true_labels(b);
        }
        return a < b;
    });
    by_truth.resize(static_cast<std::size_t>(k));
    std::sort(predicted.begin(), predicted.end());
    std::sort(by_truth.begin(), by_truth.end());
    std::vector<int> overlap;
    std::set_intersection(predicted.begin(), predicted.end(), by_truth.begin(), by_truth.end(),
                          std::back_inserter(overlap));
    out.top_k_fidelity = static_cast<double>(overlap.size()) / static_cast<double>(k);
    return out;
}

json kpi_report_to_json(const KpiReport& k) {
    json j;
    j["escalation_rate"] = round_metric(k.escalation_rate);
    j["accepted"] = k.accepted;
    j["escalated"] = k.escalated;
    j["top_k"] = k.top_k;
    if (k.throughput_gain) {
        j["throughput_gain"] = round_metric(*k.throughput_gain);
    }
    if (k.top_k_fidelity) {
        j["top_k_ranking_fidelity"] = round_metric(*k.top_k_fidelity);
    }
    return j;
}

} // namespace surrevo
