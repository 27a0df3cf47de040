#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "surrevo/genome.hpp"
#include "surrevo/metrics.hpp"
#include "surrevo/taskbench.hpp"

namespace surrevo {

// Counts Pipeline::fit invocations; tests use it to prove structural
// rejections never execute the phenotype.
extern std::atomic<long> g_fit_call_count;

enum class RunStatus { ok, numeric_failure, budget_exceeded };

std::string to_string(RunStatus s);

// Train-only feature transform: column selection, optional IQR clipping,
// then normalization. All statistics come from the training fold handed to
// fit_preprocessor.
struct Preprocessor {
    std::vector<int> selected;
    bool has_clip = false;
    Eigen::VectorXd clip_lo;
    Eigen::VectorXd clip_hi;
    Normalization normalization = Normalization::none;
    Eigen::VectorXd center;
    Eigen::VectorXd scale;

    Eigen::MatrixXd transform(const Eigen::MatrixXd& raw) const;
};

Preprocessor fit_preprocessor(const DataOpsSpec& spec, const Eigen::MatrixXd& raw,
                              const std::vector<int>& train_indices);

// Per-solver-version label offset removal, estimated on training labels.
// fit uses compensated labels; predictions add the offset back by sample
// version, so outputs stay in raw label space.
struct DriftCompensation {
    bool enabled = false;
    std::map<int, double> version_offset;

    double offset_for(int version) const;
    Eigen::VectorXd compensate(const Eigen::VectorXd& labels,
                               const std::vector<int>& versions) const;
};

DriftCompensation fit_drift(bool enabled, const Eigen::VectorXd& labels,
                            const std::vector<int>& all_versions,
                            const std::vector<int>& train_indices);

struct LossEval {
    double value = 0.0;
    Eigen::VectorXd grad;
};

// Value and exact gradient w.r.t. predictions for every LossSpec kind.
// Ranking kinds require a nonempty pair set (indices are positions within
// pred/labels). The adaptive logsigmoid threshold is tau times the median
// |label gap| over the pair set.
LossEval loss_value_and_gradient(const LossSpec& loss, const Eigen::VectorXd& pred,
                                 const Eigen::VectorXd& labels, const PairSet& pairs);

// One fitted model replica for one (fold, seed). Closed-form families are
// seed-insensitive; the mlp initialization and therefore its fit depend on
// the seed.
struct FittedReplica {
    RunStatus status = RunStatus::ok;
    Preprocessor prep;
    DriftCompensation drift;
    ModelSpec model;

    Eigen::VectorXd linear_w; // ridge: selected features + intercept

    Eigen::MatrixXd krr_train_points; // transformed training features
    Eigen::VectorXd krr_alpha;
    double krr_label_mean = 0.0;

    Eigen::MatrixXd mlp_w1;
    Eigen::VectorXd mlp_b1;
    Eigen::VectorXd mlp_w2;
    double mlp_b2 = 0.0;

    double param_count() const;

    // Predictions in raw label space. versions may be null when sample
    // solver versions are unknown (drift add-back then defaults to 0).
    Eigen::VectorXd predict(const Eigen::MatrixXd& raw,
                            const std::vector<int>* versions = nullptr) const;
};

// Analytic multiply-accumulate estimates. These drive the resource gate and
// the behavior descriptors, so they are deterministic functions of shapes
// only — wall clock is never consulted.
double estimate_fit_macs(const ModelSpec& model, const LossSpec& loss, int n_train,
                         int d_selected);
double estimate_inference_macs_per_sample(const ModelSpec& model, int n_train, int d_selected);
double model_param_count(const ModelSpec& model, int n_train, int d_selected);
bool seed_sensitive(ModelFamily family);

struct ResourceTally {
    double mac_estimate = 0.0;
    double peak_rows = 0.0;
};

struct RunResult {
    RunStatus status = RunStatus::ok;
    // Indexed [seed][fold]; positions within each fold's validation subset.
    std::vector<std::vector<Eigen::VectorXd>> validation_predictions;
    std::vector<std::vector<MetricBundle>> fold_metrics; // filled by the contract harness
    ResourceTally resources;
    int numeric_failures = 0;
    double parameter_count = 0.0;
};

// Executable program instantiated from a genome for one dataset. Immutable
// after construction; fit calls are const and safe to run concurrently for
// distinct replicas.
class Pipeline {
public:
    Pipeline(const Genome& genome, const Dataset& dataset);

    const Genome& genome() const { return genome_; }
    const Dataset& dataset() const { return dataset_; }

    FittedReplica fit(const std::vector<int>& train_indices, std::uint64_t seed) const;

    // Ensemble mean and population sigma over >= 2 replicas, per sample.
    static std::pair<Eigen::VectorXd, Eigen::VectorXd> predict_with_uncertainty(
        const std::vector<FittedReplica>& replicas, const Eigen::MatrixXd& raw,
        const std::vector<int>* versions = nullptr);

private:
    const Genome genome_;
    const Dataset& dataset_;
};

} // namespace surrevo
