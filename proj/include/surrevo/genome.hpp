#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "surrevo/rng.hpp"

namespace surrevo {

enum class Normalization { none, zscore, minmax };
enum class ModelFamily { ridge_linear, kernel_ridge_rbf, mlp_1hidden };
enum class LossKind { mse, pairwise_hinge, logsigmoid_rank, multitask };
enum class SplitPolicy { by_family, random };

// The four heritable variation-operator classes. Each owns a fixed catalog
// of parameterized sub-mutations over exactly one genome block.
enum class OperatorKind { data_edit, model_swap, loss_evolve, split_guard };

inline constexpr std::array<OperatorKind, 4> kAllOperatorKinds = {
    OperatorKind::data_edit, OperatorKind::model_swap,
    OperatorKind::loss_evolve, OperatorKind::split_guard};

std::string to_string(Normalization v);
std::string to_string(ModelFamily v);
std::string to_string(LossKind v);
std::string to_string(SplitPolicy v);
std::string to_string(OperatorKind v);

struct DataOpsSpec {
    Normalization normalization = Normalization::zscore;
    std::optional<double> outlier_clip; // IQR multiple, > 0 when present
    std::vector<bool> feature_mask;     // over all dataset columns, leaky included
    bool drift_compensation = false;

    bool operator==(const DataOpsSpec&) const = default;
};

struct ModelSpec {
    ModelFamily family = ModelFamily::ridge_linear;
    double lambda_reg = 1.0;    // ridge_linear, kernel_ridge_rbf
    double gamma_rbf = 1.0;     // kernel_ridge_rbf only
    int hidden_units = 16;      // mlp_1hidden only, 4..64
    double learning_rate = 0.05; // mlp_1hidden only
    int epochs = 100;           // mlp_1hidden only, 10..500

    bool operator==(const ModelSpec&) const = default;
};

struct LossSpec {
    LossKind kind = LossKind::mse;
    double lambda_rank = 0.5;       // multitask only, in [0,1]
    double tau = 0.0;               // margin/threshold, >= 0
    bool adaptive_threshold = false; // logsigmoid_rank only

    bool operator==(const LossSpec&) const = default;
};

struct SplitSpec {
    SplitPolicy policy = SplitPolicy::by_family;
    double holdout_fraction = 1.0 / 6.0; // in (0,1)
    int fold_count = 3;                  // >= 2

    bool operator==(const SplitSpec&) const = default;
};

struct Provenance {
    std::optional<std::string> parent_id;
    std::optional<std::string> parent2_id; // crossover second parent
    std::string origin = "init"; // init | operator kind | crossover | immigrant
    std::int64_t iteration = 0;  // global evaluation counter at creation time
    std::int64_t generation = 0;

    bool operator==(const Provenance&) const = default;
};

// Heritable specification of a full training/evaluation pipeline. Immutable
// after construction; id is the FNV-1a hash of the canonical serialization
// of the four pipeline blocks (version and provenance are lineage metadata
// and do not enter the hash).
struct Genome {
    std::string id;
    std::int64_t version = 0;
    DataOpsSpec data_ops;
    ModelSpec model;
    LossSpec loss;
    SplitSpec split;
    Provenance provenance;

    bool content_equal(const Genome& other) const;
};

// Recomputes the content id from the pipeline blocks.
std::string content_id(const Genome& g);

// Key-sorted JSON of the pipeline blocks only, with family/kind-irrelevant
// hyperparameters omitted. This string is the hashing and audit surface.
std::string canonical_content(const Genome& g);

nlohmann::json genome_to_json(const Genome& g);
Genome genome_from_json(const nlohmann::json& j);
std::string genome_to_string(const Genome& g);
Genome genome_from_string(const std::string& text);

struct ValidationReport {
    std::vector<std::string> violations;
    bool valid() const { return violations.empty(); }
};

ValidationReport validate(const Genome& g);

struct LineageStamp {
    std::int64_t iteration = 0;
    std::int64_t generation = 0;
};

// Applies one sub-mutation of `kind` to g. The starting sub-mutation is
// drawn from rng; a draw that leaves the genome unchanged falls through to
// the next catalog entry, and an exhausted catalog returns g with a bumped
// version so the loop never stalls.
Genome mutate(const Genome& g, OperatorKind kind, DeterministicStream& rng,
              const LineageStamp& stamp);

// Block-level recombination: each of {data_ops, model, loss, split} is taken
// wholly from a or from b.
Genome crossover(const Genome& a, const Genome& b, DeterministicStream& rng,
                 const LineageStamp& stamp);

// Weighted draw over the four operator kinds. weights must be positive and
// sum to ~1.
OperatorKind sample_operator_kind(const std::array<double, 4>& weights,
                                  DeterministicStream& rng);

// Structurally legal starting point: zscore, ridge with lambda 1.0, mse,
// by-family split, and a mask that excludes the banned columns.
Genome default_genome(std::size_t feature_count,
                      const std::vector<std::size_t>& banned_columns = {});

// Fresh random genome used for initial-population variants and immigrants.
// Respects the banned-column list; split settings stay at their defaults.
Genome random_genome(DeterministicStream& rng, std::size_t feature_count,
                     const std::vector<std::size_t>& banned_columns,
                     const LineageStamp& stamp, std::string origin = "immigrant");

} // namespace surrevo
