#include "surrevo/phenotype.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

namespace surrevo {

std::atomic<long> g_fit_call_count{0};

namespace {

constexpr double kScaleFloor = 1e-12;

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) {
        throw std::invalid_argument("quantile of empty set");
    }
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - std::floor(pos);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median_abs_gap(const Eigen::VectorXd& labels, const PairSet& pairs) {
    std::vector<double> gaps;
    gaps.reserve(pairs.pairs.size());
    for (const auto& [i, j] : pairs.pairs) {
        gaps.push_back(std::abs(labels(i) - labels(j)));
    }
    std::sort(gaps.begin(), gaps.end());
    const std::size_t n = gaps.size();
    return n % 2 == 1 ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
}

// -log(sigmoid(z)) and its derivative from a single exp evaluation.
void accumulate_logsigmoid(const Eigen::VectorXd& pred, const Eigen::VectorXd& labels,
                           const PairSet& pairs, double tau_eff, double weight, double& value,
                           Eigen::VectorXd& grad) {
    const double inv = weight / static_cast<double>(pairs.pairs.size());
    for (const auto& [i, j] : pairs.pairs) {
        const double s = labels(i) > labels(j) ? 1.0 : -1.0;
        const double z = s * (pred(i) - pred(j)) - tau_eff;
        double dz;
        if (z > 0.0) {
            const double e = std::exp(-z); // loss = log1p(e), d/dz = -e / (1 + e)
            value += inv * std::log1p(e);
            dz = -inv * e / (1.0 + e);
        } else {
            const double e = std::exp(z); // loss = -z + log1p(e), d/dz = -1 / (1 + e)
            value += inv * (-z + std::log1p(e));
            dz = -inv / (1.0 + e);
        }
        grad(i) += s * dz;
        grad(j) -= s * dz;
    }
}

bool all_finite(const Eigen::MatrixXd& m) {
    return m.allFinite();
}

} // namespace

std::string to_string(RunStatus s) {
    switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::numeric_failure: return "numeric_failure";
    case RunStatus::budget_exceeded: return "budget_exceeded";
    }
    throw std::logic_error("bad RunStatus");
}

Eigen::MatrixXd Preprocessor::transform(const Eigen::MatrixXd& raw) const {
    const auto n = raw.rows();
    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(selected.size()));
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        out.col(c) = raw.col(selected[static_cast<std::size_t>(c)]);
        if (has_clip) {
            out.col(c) = out.col(c).cwiseMax(clip_lo(c)).cwiseMin(clip_hi(c));
        }
    }
    switch (normalization) {
    case Normalization::none:
        break;
    case Normalization::zscore:
    case Normalization::minmax:
        for (Eigen::Index c = 0; c < out.cols(); ++c) {
            out.col(c) = (out.col(c).array() - center(c)) / scale(c);
        }
        break;
    }
    return out;
}

Preprocessor fit_preprocessor(const DataOpsSpec& spec, const Eigen::MatrixXd& raw,
                              const std::vector<int>& train_indices) {
    Preprocessor prep;
    for (std::size_t c = 0; c < spec.feature_mask.size(); ++c) {
        if (spec.feature_mask[c]) {
            prep.selected.push_back(static_cast<int>(c));
        }
    }
    const auto cols = static_cast<Eigen::Index>(prep.selected.size());
    const auto n_train = static_cast<Eigen::Index>(train_indices.size());

    Eigen::MatrixXd train(n_train, cols);
    for (Eigen::Index r = 0; r < n_train; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            train(r, c) = raw(train_indices[static_cast<std::size_t>(r)],
                              prep.selected[static_cast<std::size_t>(c)]);
        }
    }

    if (spec.outlier_clip) {
        prep.has_clip = true;
        prep.clip_lo.resize(cols);
        prep.clip_hi.resize(cols);
        std::vector<double> column(static_cast<std::size_t>(n_train));
        for (Eigen::Index c = 0; c < cols; ++c) {
            for (Eigen::Index r = 0; r < n_train; ++r) {
                column[static_cast<std::size_t>(r)] = train(r, c);
            }
            std::sort(column.begin(), column.end());
            const double q1 = quantile_sorted(column, 0.25);
            const double q3 = quantile_sorted(column, 0.75);
            const double iqr = q3 - q1;
            prep.clip_lo(c) = q1 - *spec.outlier_clip * iqr;
            prep.clip_hi(c) = q3 + *spec.outlier_clip * iqr;
            train.col(c) = train.col(c).cwiseMax(prep.clip_lo(c)).cwiseMin(prep.clip_hi(c));
        }
    }

    prep.normalization = spec.normalization;
    if (spec.normalization == Normalization::zscore) {
        prep.center = train.colwise().mean();
        prep.scale.resize(cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
            const double var =
                (train.col(c).array() - prep.center(c)).square().sum() / static_cast<double>(n_train);
            prep.scale(c) = std::max(std::sqrt(var), kScaleFloor);
        }
    } else if (spec.normalization == Normalization::minmax) {
        prep.center = train.colwise().minCoeff();
        prep.scale.resize(cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
            prep.scale(c) = std::max(train.col(c).maxCoeff() - prep.center(c), kScaleFloor);
        }
    }
    return prep;
}

double DriftCompensation::offset_for(int version) const {
    const auto it = version_offset.find(version);
    return it == version_offset.end() ? 0.0 : it->second;
}

Eigen::VectorXd DriftCompensation::compensate(const Eigen::VectorXd& labels,
                                              const std::vector<int>& versions) const {
    Eigen::VectorXd out = labels;
    if (!enabled) {
        return out;
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out(i) -= offset_for(versions[static_cast<std::size_t>(i)]);
    }
    return out;
}

DriftCompensation fit_drift(bool enabled, const Eigen::VectorXd& labels,
                            const std::vector<int>& all_versions,
                            const std::vector<int>& train_indices) {
    DriftCompensation drift;
    drift.enabled = enabled;
    if (!enabled) {
        return drift;
    }
    std::map<int, std::pair<double, int>> sums;
    double total = 0.0;
    for (int idx : train_indices) {
        const int v = all_versions[static_cast<std::size_t>(idx)];
        sums[v].first += labels(idx);
        sums[v].second += 1;
        total += labels(idx);
    }
    const double overall = total / static_cast<double>(train_indices.size());
    for (const auto& [version, acc] : sums) {
        drift.version_offset[version] = acc.first / static_cast<double>(acc.second) - overall;
    }
    return drift;
}

LossEval loss_value_and_gradient(const LossSpec& loss, const Eigen::VectorXd& pred,
                                 const Eigen::VectorXd& labels, const PairSet& pairs) {
    if (pred.size() != labels.size()) {
        throw std::invalid_argument("loss: prediction/label length mismatch");
    }
    if (loss.kind != LossKind::mse && pairs.pairs.empty()) {
        throw std::invalid_argument("loss: ranking kinds require a nonempty pair set");
    }
    LossEval out;
    out.grad = Eigen::VectorXd::Zero(pred.size());
    const double n = static_cast<double>(pred.size());

    switch (loss.kind) {
    case LossKind::mse: {
        const Eigen::VectorXd diff = pred - labels;
        out.value = diff.squaredNorm() / n;
        out.grad = 2.0 / n * diff;
        break;
    }
    case LossKind::pairwise_hinge: {
        const double inv = 1.0 / static_cast<double>(pairs.pairs.size());
        for (const auto& [i, j] : pairs.pairs) {
            const double s = labels(i) > labels(j) ? 1.0 : -1.0;
            const double margin = loss.tau - s * (pred(i) - pred(j));
            if (margin > 0.0) {
                out.value += inv * margin;
                out.grad(i) -= inv * s;
                out.grad(j) += inv * s;
            }
        }
        break;
    }
    case LossKind::logsigmoid_rank: {
        const double tau_eff =
            loss.adaptive_threshold ? loss.tau * median_abs_gap(labels, pairs) : loss.tau;
        accumulate_logsigmoid(pred, labels, pairs, tau_eff, 1.0, out.value, out.grad);
        break;
    }
    case LossKind::multitask: {
        const Eigen::VectorXd diff = pred - labels;
        const double lam = loss.lambda_rank;
        out.value = (1.0 - lam) * diff.squaredNorm() / n;
        out.grad = (1.0 - lam) * 2.0 / n * diff;
        accumulate_logsigmoid(pred, labels, pairs, loss.tau, lam, out.value, out.grad);
        break;
    }
    }
    return out;
}

double FittedReplica::param_count() const {
    return model_param_count(model, static_cast<int>(krr_train_points.rows()),
                             static_cast<int>(prep.selected.size()));
}

Eigen::VectorXd FittedReplica::predict(const Eigen::MatrixXd& raw,
                                       const std::vector<int>* versions) const {
    const Eigen::MatrixXd x = prep.transform(raw);
    Eigen::VectorXd pred(x.rows());
    switch (model.family) {
    case ModelFamily::ridge_linear: {
        pred = x * linear_w.head(x.cols());
        pred.array() += linear_w(x.cols());
        break;
    }
    case ModelFamily::kernel_ridge_rbf: {
        const Eigen::VectorXd train_sq = krr_train_points.rowwise().squaredNorm();
        const Eigen::VectorXd query_sq = x.rowwise().squaredNorm();
        Eigen::MatrixXd cross = x * krr_train_points.transpose();
        for (Eigen::Index r = 0; r < cross.rows(); ++r) {
            for (Eigen::Index c = 0; c < cross.cols(); ++c) {
                const double sq = query_sq(r) + train_sq(c) - 2.0 * cross(r, c);
                cross(r, c) = std::exp(-model.gamma_rbf * std::max(sq, 0.0));
            }
        }
        pred = cross * krr_alpha;
        pred.array() += krr_label_mean;
        break;
    }
    case ModelFamily::mlp_1hidden: {
        Eigen::MatrixXd hidden = (x * mlp_w1).rowwise() + mlp_b1.transpose();
        hidden = hidden.array().tanh();
        pred = hidden * mlp_w2;
        pred.array() += mlp_b2;
        break;
    }
    }
    if (drift.enabled && versions != nullptr) {
        for (Eigen::Index i = 0; i < pred.size(); ++i) {
            pred(i) += drift.offset_for((*versions)[static_cast<std::size_t>(i)]);
        }
    }
    return pred;
}

double estimate_fit_macs(const ModelSpec& model, const LossSpec& loss, int n_train,
                         int d_selected) {
    const double n = n_train;
    const double d = d_selected;
    switch (model.family) {
    case ModelFamily::ridge_linear:
        return n * (d + 1.0) * (d + 1.0) + std::pow(d + 1.0, 3) / 3.0;
    case ModelFamily::kernel_ridge_rbf:
        return n * n * (d + 2.0) + n * n * n / 3.0;
    case ModelFamily::mlp_1hidden: {
        const double h = model.hidden_units;
        double per_epoch = n * 6.0 * h * (d + 2.0);
        // Pair terms are dominated by transcendentals; weight them at their
        // multiply-accumulate equivalents (hinge: compares and adds,
        // logsigmoid: exp + log per pair).
        const double pair_count = n * (n - 1.0) / 2.0;
        if (loss.kind == LossKind::pairwise_hinge) {
            per_epoch += 16.0 * pair_count;
        } else if (loss.kind == LossKind::logsigmoid_rank || loss.kind == LossKind::multitask) {
            per_epoch += 64.0 * pair_count;
        }
        return static_cast<double>(model.epochs) * per_epoch;
    }
    }
    return 0.0;
}

double estimate_inference_macs_per_sample(const ModelSpec& model, int n_train, int d_selected) {
    const double d = d_selected;
    switch (model.family) {
    case ModelFamily::ridge_linear:
        return d + 1.0;
    case ModelFamily::kernel_ridge_rbf:
        return static_cast<double>(n_train) * (d + 2.0);
    case ModelFamily::mlp_1hidden:
        return static_cast<double>(model.hidden_units) * (d + 2.0);
    }
    return 0.0;
}

double model_param_count(const ModelSpec& model, int n_train, int d_selected) {
    switch (model.family) {
    case ModelFamily::ridge_linear:
        return d_selected + 1.0;
    case ModelFamily::kernel_ridge_rbf:
        return n_train + 1.0;
    case ModelFamily::mlp_1hidden:
        return static_cast<double>(model.hidden_units) * (d_selected + 2.0) + 1.0;
    }
    return 0.0;
}

bool seed_sensitive(ModelFamily family) {
    return family == ModelFamily::mlp_1hidden;
}

Pipeline::Pipeline(const Genome& genome, const Dataset& dataset)
    : genome_(genome), dataset_(dataset) {
    if (genome.data_ops.feature_mask.size() != dataset.feature_count()) {
        throw std::invalid_argument(
            "pipeline: feature_mask length " +
            std::to_string(genome.data_ops.feature_mask.size()) +
            " does not match dataset feature count " + std::to_string(dataset.feature_count()));
    }
}

FittedReplica Pipeline::fit(const std::vector<int>& train_indices, std::uint64_t seed) const {
    g_fit_call_count.fetch_add(1, std::memory_order_relaxed);
    FittedReplica replica;
    replica.model = genome_.model;
    replica.prep = fit_preprocessor(genome_.data_ops, dataset_.features, train_indices);
    replica.drift = fit_drift(genome_.data_ops.drift_compensation, dataset_.labels,
                              dataset_.version, train_indices);

    const auto n = static_cast<Eigen::Index>(train_indices.size());
    Eigen::MatrixXd raw(n, dataset_.features.cols());
    Eigen::VectorXd y(n);
    std::vector<int> versions(train_indices.size());
    for (Eigen::Index r = 0; r < n; ++r) {
        const int idx = train_indices[static_cast<std::size_t>(r)];
        raw.row(r) = dataset_.features.row(idx);
        y(r) = dataset_.labels(idx);
        versions[static_cast<std::size_t>(r)] = dataset_.version[static_cast<std::size_t>(idx)];
    }
    y = replica.drift.compensate(y, versions);

    const Eigen::MatrixXd x = replica.prep.transform(raw);
    const auto d = x.cols();

    switch (genome_.model.family) {
    case ModelFamily::ridge_linear: {
        Eigen::MatrixXd design(n, d + 1);
        design.leftCols(d) = x;
        design.col(d).setOnes();
        Eigen::MatrixXd gram = design.transpose() * design;
        for (Eigen::Index i = 0; i < d; ++i) {
            gram(i, i) += genome_.model.lambda_reg; // intercept stays unregularized
        }
        const Eigen::VectorXd rhs = design.transpose() * y;
        const Eigen::LDLT<Eigen::MatrixXd> solver(gram);
        if (solver.info() != Eigen::Success) {
            replica.status = RunStatus::numeric_failure;
            return replica;
        }
        replica.linear_w = solver.solve(rhs);
        if (!all_finite(replica.linear_w)) {
            replica.status = RunStatus::numeric_failure;
        }
        break;
    }
    case ModelFamily::kernel_ridge_rbf: {
        replica.krr_train_points = x;
        replica.krr_label_mean = y.mean();
        const Eigen::VectorXd sq = x.rowwise().squaredNorm();
        Eigen::MatrixXd kernel = x * x.transpose();
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < n; ++c) {
                const double dist = sq(r) + sq(c) - 2.0 * kernel(r, c);
                kernel(r, c) = std::exp(-genome_.model.gamma_rbf * std::max(dist, 0.0));
            }
            kernel(r, r) += genome_.model.lambda_reg;
        }
        const Eigen::LLT<Eigen::MatrixXd> solver(kernel);
        if (solver.info() != Eigen::Success) {
            replica.status = RunStatus::numeric_failure;
            return replica;
        }
        replica.krr_alpha = solver.solve(
            (y.array() - replica.krr_label_mean).matrix().eval());
        if (!all_finite(replica.krr_alpha)) {
            replica.status = RunStatus::numeric_failure;
        }
        break;
    }
    case ModelFamily::mlp_1hidden: {
        const int h = genome_.model.hidden_units;
        DeterministicStream init = DeterministicStream(seed).fork("mlp_init");
        const double s1 = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(d, 1)));
        const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
        replica.mlp_w1.resize(d, h);
        for (Eigen::Index r = 0; r < d; ++r) {
            for (int c = 0; c < h; ++c) {
                replica.mlp_w1(r, c) = init.uniform(-s1, s1);
            }
        }
        replica.mlp_b1 = Eigen::VectorXd::Zero(h);
        replica.mlp_w2.resize(h);
        for (int c = 0; c < h; ++c) {
            replica.mlp_w2(c) = init.uniform(-s2, s2);
        }
        replica.mlp_b2 = 0.0;

        PairSet pairs;
        if (genome_.loss.kind != LossKind::mse) {
            pairs = make_pairs(dataset_, train_indices);
            if (pairs.pairs.empty()) {
                replica.status = RunStatus::numeric_failure;
                return replica;
            }
        }

        const double lr = genome_.model.learning_rate;
        Eigen::MatrixXd act(n, h);
        Eigen::MatrixXd grad_hidden(n, h);
        Eigen::MatrixXd grad_w1(d, h);
        Eigen::VectorXd pred(n);
        Eigen::VectorXd grad_w2(h);
        for (int epoch = 0; epoch < genome_.model.epochs; ++epoch) {
            act.noalias() = x * replica.mlp_w1;
            act.rowwise() += replica.mlp_b1.transpose();
            act = act.array().tanh();
            pred.noalias() = act * replica.mlp_w2;
            pred.array() += replica.mlp_b2;

            const LossEval eval = loss_value_and_gradient(genome_.loss, pred, y, pairs);
            if (!std::isfinite(eval.value)) {
                replica.status = RunStatus::numeric_failure;
                return replica;
            }
            grad_w2.noalias() = act.transpose() * eval.grad;
            const double grad_b2 = eval.grad.sum();
            grad_hidden.noalias() = eval.grad * replica.mlp_w2.transpose();
            grad_hidden.array() *= 1.0 - act.array().square();
            grad_w1.noalias() = x.transpose() * grad_hidden;
            const Eigen::VectorXd grad_b1 = grad_hidden.colwise().sum();

            replica.mlp_w1 -= lr * grad_w1;
            replica.mlp_b1 -= lr * grad_b1;
            replica.mlp_w2 -= lr * grad_w2;
            replica.mlp_b2 -= lr * grad_b2;
        }
        if (!all_finite(replica.mlp_w1) || !all_finite(replica.mlp_w2) ||
            !all_finite(replica.mlp_b1) || !std::isfinite(replica.mlp_b2)) {
            replica.status = RunStatus::numeric_failure;
        }
        break;
    }
    }
    return replica;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> Pipeline::predict_with_uncertainty(
    const std::vector<FittedReplica>& replicas, const Eigen::MatrixXd& raw,
    const std::vector<int>* versions) {
    if (replicas.empty()) {
        throw std::logic_error("predict_with_uncertainty: no fitted replicas");
    }
    if (replicas.size() < 2) {
        throw std::invalid_argument("predict_with_uncertainty: need >= 2 seed replicas");
    }
    const auto n = raw.rows();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(n);
    for (const FittedReplica& replica : replicas) {
        const Eigen::VectorXd pred = replica.predict(raw, versions);
        mean += pred;
        sq += pred.cwiseProduct(pred);
    }
    const double count = static_cast<double>(replicas.size());
    mean /= count;
    const Eigen::VectorXd variance = (sq / count - mean.cwiseProduct(mean)).cwiseMax(0.0);
    return {mean, variance.cwiseSqrt()};
}

} // namespace surrevo
