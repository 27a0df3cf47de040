#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "surrevo/genome.hpp"

namespace surrevo {

// Synthetic parametric drag-surrogate task. The latent label function is
//   y = c0 + a'x + x'Qx + b*sin(3*x0)*x1 + family offset + version offset + noise
// with coefficients drawn deterministically from the task seed and
// x ~ U(-1,1)^d. When leaky_feature is set, an extra trailing column equals
// the label plus tiny jitter; the column index is recorded in the card so
// the contract can ban it.
struct TaskSpec {
    int feature_dim = 8;
    int sample_count = 600;
    int family_count = 6;
    double noise_std = 0.005;
    int solver_versions = 2;
    bool leaky_feature = true;
    std::uint64_t seed = 42;
};

nlohmann::json task_spec_to_json(const TaskSpec& spec);
TaskSpec task_spec_from_json(const nlohmann::json& j);

struct DatasetCard {
    TaskSpec spec;
    std::string generator_version;
    std::optional<std::size_t> leaky_column;
    std::map<std::string, std::string> metadata;
};

struct Dataset {
    Eigen::MatrixXd features; // N x d'
    Eigen::VectorXd labels;
    std::vector<int> family;
    std::vector<int> version;
    DatasetCard card;

    std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t feature_count() const { return static_cast<std::size_t>(features.cols()); }
    std::vector<std::size_t> banned_columns() const {
        return card.leaky_column ? std::vector<std::size_t>{*card.leaky_column}
                                 : std::vector<std::size_t>{};
    }
};

Dataset generate(const TaskSpec& spec);

// Ordered sample pairs (i, j), i < j in subset order, with |y_i - y_j|
// strictly above epsilon. Indices are positions within the subset handed to
// make_pairs, so they line up with prediction vectors computed over that
// subset.
struct PairSet {
    std::vector<std::pair<int, int>> pairs;
    double epsilon = 1e-6;
};

inline constexpr double kDefaultPairEpsilon = 1e-6;

PairSet make_pairs(const Dataset& ds, const std::vector<int>& indices,
                   double epsilon = kDefaultPairEpsilon);

struct FoldIndices {
    std::vector<int> train;
    std::vector<int> validation;
};

struct Split {
    std::vector<FoldIndices> folds;
    std::vector<int> holdout;
};

class InfeasibleSplitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// by_family keeps every family wholly on one side of each train/validation
// boundary and freezes a family-disjoint holdout; random assigns samples
// uniformly. Both are pure functions of (dataset, policy, seed).
Split split(const Dataset& ds, const SplitSpec& policy, std::uint64_t seed);

void export_csv(const Dataset& ds, const std::string& path);
nlohmann::json dataset_card_to_json(const DatasetCard& card);

} // namespace surrevo
