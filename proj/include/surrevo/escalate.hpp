#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "surrevo/phenotype.hpp"

namespace surrevo {

// Axis-aligned acceptance box over the raw values of the features the model
// consumes, widened by a relative margin on each side.
struct Envelope {
    std::vector<int> columns;
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    bool contains(const Eigen::MatrixXd& raw, Eigen::Index row) const;
};

Envelope training_envelope(const Preprocessor& prep, const Eigen::MatrixXd& raw,
                           const std::vector<int>& train_indices, double margin = 0.05);

enum class ScreenReason { none, high_uncertainty, out_of_envelope };

std::string to_string(ScreenReason r);

struct ScreeningDecision {
    int sample = 0;
    double mean = 0.0;
    double sigma = 0.0;
    bool escalate = false;
    ScreenReason reason = ScreenReason::none;
};

struct ScreenReport {
    std::vector<ScreeningDecision> decisions;
    std::vector<int> accepted_ranking; // accepted sample ids, ascending predicted drag
};

// Per sample: ensemble (mean, sigma); escalate when the sample leaves the
// envelope or sigma exceeds sigma_max. Envelope violations take precedence
// in the recorded reason.
ScreenReport screen(const Eigen::MatrixXd& batch, const std::vector<FittedReplica>& replicas,
                    double sigma_max, const Envelope& envelope);

struct RoiInputs {
    double n_screened = 0.0;
    double cost_cfd = 0.0;
    double cost_surrogate = 0.0;
    double cost_validation = 0.0;
};

// ROI = (N_screened * Cost_CFD - (Cost_Surrogate + Cost_Validation))
//       / (Cost_Surrogate + Cost_Validation)
double roi(const RoiInputs& inputs);

struct KpiReport {
    double escalation_rate = 0.0;
    std::optional<double> throughput_gain;
    std::optional<double> top_k_fidelity; // absent when nothing was accepted
    int accepted = 0;
    int escalated = 0;
    int top_k = 0;
};

// Fidelity compares the predicted top-K against the true top-K (both lowest
// drag first) over accepted samples, with K clamped to the accepted count.
KpiReport kpis(const ScreenReport& report, const Eigen::VectorXd& true_labels, int top_k);

nlohmann::json kpi_report_to_json(const KpiReport& k);

} // namespace surrevo
