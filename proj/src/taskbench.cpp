#include "surrevo/taskbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "surrevo/version.hpp"

namespace surrevo {

using nlohmann::json;

namespace {

// Latent-function constants. Scales keep labels near realistic drag
// coefficients (~0.25-0.35) while family separation stays resolvable above
// the default noise floor.
constexpr double kBaseline = 0.28;
constexpr double kLinearScale = 0.05;
constexpr double kQuadScale = 0.02;
constexpr double kSinAmplitude = 0.02;
constexpr double kFamilyOffsetRange = 0.05;
constexpr double kVersionOffsetRange = 0.01;
constexpr double kLeakJitterStd = 1e-4;

void check_spec(const TaskSpec& spec) {
    if (spec.feature_dim < 2) {
        throw std::invalid_argument("task spec: feature_dim must be >= 2");
    }
    if (spec.family_count < 1) {
        throw std::invalid_argument("task spec: family_count must be >= 1");
    }
    if (spec.sample_count < 10 * spec.family_count) {
        throw std::invalid_argument("task spec: sample_count must be >= 10 * family_count");
    }
    if (spec.noise_std < 0.0) {
        throw std::invalid_argument("task spec: noise_std must be >= 0");
    }
    if (spec.solver_versions < 1) {
        throw std::invalid_argument("task spec: solver_versions must be >= 1");
    }
}

std::vector<double> spaced_offsets(int count, double range) {
    std::vector<double> offsets(static_cast<std::size_t>(count), 0.0);
    if (count > 1) {
        for (int i = 0; i < count; ++i) {
            offsets[static_cast<std::size_t>(i)] =
                -range + 2.0 * range * static_cast<double>(i) / static_cast<double>(count - 1);
        }
    }
    return offsets;
}

std::vector<int> shuffled_iota(int n, DeterministicStream rng) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        const auto j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    return order;
}

} // namespace

json task_spec_to_json(const TaskSpec& spec) {
    json j;
    j["feature_dim"] = spec.feature_dim;
    j["sample_count"] = spec.sample_count;
    j["family_count"] = spec.family_count;
    j["noise_std"] = spec.noise_std;
    j["solver_versions"] = spec.solver_versions;
    j["leaky_feature"] = spec.leaky_feature;
    j["seed"] = spec.seed;
    return j;
}

TaskSpec task_spec_from_json(const json& j) {
    TaskSpec spec;
    spec.feature_dim = j.value("feature_dim", spec.feature_dim);
    spec.sample_count = j.value("sample_count", spec.sample_count);
    spec.family_count = j.value("family_count", spec.family_count);
    spec.noise_std = j.value("noise_std", spec.noise_std);
    spec.solver_versions = j.value("solver_versions", spec.solver_versions);
    spec.leaky_feature = j.value("leaky_feature", spec.leaky_feature);
    spec.seed = j.value("seed", spec.seed);
    return spec;
}

Dataset generate(const TaskSpec& spec) {
    check_spec(spec);

    const int n = spec.sample_count;
    const int d = spec.feature_dim;
    const int cols = d + (spec.leaky_feature ? 1 : 0);

    DeterministicStream root(spec.seed);
    DeterministicStream coef = root.fork("coefficients");
    DeterministicStream samples = root.fork("samples");
    DeterministicStream noise = root.fork("noise");
    DeterministicStream leak = root.fork("leak");

    Eigen::VectorXd a(d);
    for (int k = 0; k < d; ++k) {
        a(k) = coef.uniform(-kLinearScale, kLinearScale);
    }
    Eigen::MatrixXd q(d, d);
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
            q(r, c) = coef.uniform(-kQuadScale, kQuadScale);
        }
    }
    const std::vector<double> family_offset = spaced_offsets(spec.family_count, kFamilyOffsetRange);
    const std::vector<double> version_offset =
        spaced_offsets(spec.solver_versions, kVersionOffsetRange);

    Dataset ds;
    ds.features.resize(n, cols);
    ds.labels.resize(n);
    ds.family.resize(static_cast<std::size_t>(n));
    ds.version.resize(static_cast<std::size_t>(n));

    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x(d);
        for (int k = 0; k < d; ++k) {
            x(k) = samples.uniform(-1.0, 1.0);
        }
        const int fam = static_cast<int>(static_cast<std::int64_t>(i) * spec.family_count / n);
        const int ver = i % spec.solver_versions;
        double y = kBaseline + a.dot(x) + x.dot(q * x) + kSinAmplitude * std::sin(3.0 * x(0)) * x(1);
        y += family_offset[static_cast<std::size_t>(fam)];
        y += version_offset[static_cast<std::size_t>(ver)];
        y += spec.noise_std * noise.normal();

        ds.features.row(i).head(d) = x;
        if (spec.leaky_feature) {
            ds.features(i, d) = y + kLeakJitterStd * leak.normal();
        }
        ds.labels(i) = y;
        ds.family[static_cast<std::size_t>(i)] = fam;
        ds.version[static_cast<std::size_t>(i)] = ver;
    }

    ds.card.spec = spec;
    ds.card.generator_version = kEngineVersion;
    if (spec.leaky_feature) {
        ds.card.leaky_column = static_cast<std::size_t>(d);
        ds.card.metadata["leaky_feature"] = "solver-internal proxy column, banned for training";
    }
    ds.card.metadata["flow_conditions"] = "fixed reference regime";
    return ds;
}

PairSet make_pairs(const Dataset& ds, const std::vector<int>& indices, double epsilon) {
    PairSet out;
    out.epsilon = epsilon;
    const int m = static_cast<int>(indices.size());
    for (int p = 0; p < m; ++p) {
        for (int q = p + 1; q < m; ++q) {
            const double gap = std::abs(ds.labels(indices[static_cast<std::size_t>(p)]) -
                                        ds.labels(indices[static_cast<std::size_t>(q)]));
            if (gap > epsilon) {
                out.pairs.emplace_back(p, q);
            }
        }
    }
    return out;
}

Split split(const Dataset& ds, const SplitSpec& policy, std::uint64_t seed) {
    if (!(policy.holdout_fraction > 0.0 && policy.holdout_fraction < 1.0)) {
        throw std::invalid_argument("split: holdout_fraction out of range");
    }
    if (policy.fold_count < 2) {
        throw std::invalid_argument("split: fold_count must be >= 2");
    }

    const int n = static_cast<int>(ds.size());
    const int k = policy.fold_count;
    DeterministicStream rng(seed);
    Split out;
    out.folds.resize(static_cast<std::size_t>(k));

    if (policy.policy == SplitPolicy::by_family) {
        const int families = ds.card.spec.family_count;
        if (families < k + 1) {
            throw InfeasibleSplitError("by_family split infeasible: " + std::to_string(families) +
                                       " families cannot supply " + std::to_string(k) +
                                       " folds plus a holdout");
        }
        int holdout_families = static_cast<int>(
            std::lround(policy.holdout_fraction * static_cast<double>(families)));
        holdout_families = std::clamp(holdout_families, 1, families - k);

        const std::vector<int> order = shuffled_iota(families, rng.fork("families"));
        std::vector<int> fold_of_family(static_cast<std::size_t>(families), -1);
        for (int pos = 0; pos < families; ++pos) {
            const int fam = order[static_cast<std::size_t>(pos)];
            if (pos < holdout_families) {
                fold_of_family[static_cast<std::size_t>(fam)] = -2; // holdout
            } else {
                fold_of_family[static_cast<std::size_t>(fam)] = (pos - holdout_families) % k;
            }
        }
        for (int i = 0; i < n; ++i) {
            const int assignment = fold_of_family[static_cast<std::size_t>(
                ds.family[static_cast<std::size_t>(i)])];
            if (assignment == -2) {
                out.holdout.push_back(i);
                continue;
            }
            for (int f = 0; f < k; ++f) {
                if (assignment == f) {
                    out.folds[static_cast<std::size_t>(f)].validation.push_back(i);
                } else {
                    out.folds[static_cast<std::size_t>(f)].train.push_back(i);
                }
            }
        }
    } else {
        const std::vector<int> order = shuffled_iota(n, rng.fork("samples"));
        const int holdout_count =
            static_cast<int>(std::lround(policy.holdout_fraction * static_cast<double>(n)));
        std::vector<int> fold_of_sample(static_cast<std::size_t>(n), -1);
        for (int pos = 0; pos < n; ++pos) {
            const int idx = order[static_cast<std::size_t>(pos)];
            if (pos < holdout_count) {
                fold_of_sample[static_cast<std::size_t>(idx)] = -2;
            } else {
                fold_of_sample[static_cast<std::size_t>(idx)] = (pos - holdout_count) % k;
            }
        }
        for (int i = 0; i < n; ++i) {
            const int assignment = fold_of_sample[static_cast<std::size_t>(i)];
            if (assignment == -2) {
                out.holdout.push_back(i);
                continue;
            }
            for (int f = 0; f < k; ++f) {
                if (assignment == f) {
                    out.folds[static_cast<std::size_t>(f)].validation.push_back(i);
                } else {
                    out.folds[static_cast<std::size_t>(f)].train.push_back(i);
                }
            }
        }
    }
    return out;
}

void export_csv(const Dataset& ds, const std::string& path) {
    std::ofstream file(path);
    if (!file) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    const auto cols = static_cast<int>(ds.feature_count());
    for (int c = 0; c < cols; ++c) {
        file << "f" << c << ",";
    }
    file << "label,family,version\n";
    file.precision(17);
    for (int i = 0; i < static_cast<int>(ds.size()); ++i) {
        for (int c = 0; c < cols; ++c) {
            file << ds.features(i, c) << ",";
        }
        file << ds.labels(i) << "," << ds.family[static_cast<std::size_t>(i)] << ","
             << ds.version[static_cast<std::size_t>(i)] << "\n";
    }
}

json dataset_card_to_json(const DatasetCard& card) {
    json j;
    j["task_spec"] = task_spec_to_json(card.spec);
    j["generator_version"] = card.generator_version;
    if (card.leaky_column) {
        j["leaky_column"] = *card.leaky_column;
    }
    j["metadata"] = card.metadata;
    return j;
}

} // namespace surrevo
