#include "surrevo/genome.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace surrevo {

using nlohmann::json;

std::string to_string(Normalization v) {
    switch (v) {
    case Normalization::none: return "none";
    case Normalization::zscore: return "zscore";
    case Normalization::minmax: return "minmax";
    }
    throw std::logic_error("bad Normalization");
}

std::string to_string(ModelFamily v) {
    switch (v) {
    case ModelFamily::ridge_linear: return "ridge_linear";
    case ModelFamily::kernel_ridge_rbf: return "kernel_ridge_rbf";
    case ModelFamily::mlp_1hidden: return "mlp_1hidden";
    }
    throw std::logic_error("bad ModelFamily");
}

std::string to_string(LossKind v) {
    switch (v) {
    case LossKind::mse: return "mse";
    case LossKind::pairwise_hinge: return "pairwise_hinge";
    case LossKind::logsigmoid_rank: return "logsigmoid_rank";
    case LossKind::multitask: return "multitask";
    }
    throw std::logic_error("bad LossKind");
}

std::string to_string(SplitPolicy v) {
    switch (v) {
    case SplitPolicy::by_family: return "by_family";
    case SplitPolicy::random: return "random";
    }
    throw std::logic_error("bad SplitPolicy");
}

std::string to_string(OperatorKind v) {
    switch (v) {
    case OperatorKind::data_edit: return "data_edit";
    case OperatorKind::model_swap: return "model_swap";
    case OperatorKind::loss_evolve: return "loss_evolve";
    case OperatorKind::split_guard: return "split_guard";
    }
    throw std::logic_error("bad OperatorKind");
}

namespace {

template <typename E>
E parse_enum(const std::string& text, std::initializer_list<E> values, const char* what) {
    for (E v : values) {
        if (to_string(v) == text) {
            return v;
        }
    }
    throw std::invalid_argument(std::string("unknown ") + what + ": " + text);
}

Normalization parse_normalization(const std::string& s) {
    return parse_enum<Normalization>(
        s, {Normalization::none, Normalization::zscore, Normalization::minmax}, "normalization");
}

ModelFamily parse_family(const std::string& s) {
    return parse_enum<ModelFamily>(
        s, {ModelFamily::ridge_linear, ModelFamily::kernel_ridge_rbf, ModelFamily::mlp_1hidden},
        "model family");
}

LossKind parse_loss_kind(const std::string& s) {
    return parse_enum<LossKind>(
        s,
        {LossKind::mse, LossKind::pairwise_hinge, LossKind::logsigmoid_rank, LossKind::multitask},
        "loss kind");
}

SplitPolicy parse_policy(const std::string& s) {
    return parse_enum<SplitPolicy>(s, {SplitPolicy::by_family, SplitPolicy::random},
                                   "split policy");
}

bool model_uses_lambda(ModelFamily f) {
    return f == ModelFamily::ridge_linear || f == ModelFamily::kernel_ridge_rbf;
}

bool loss_uses_tau(LossKind k) {
    return k != LossKind::mse;
}

json data_ops_json(const DataOpsSpec& d) {
    json j;
    j["drift_compensation"] = d.drift_compensation;
    j["feature_mask"] = d.feature_mask;
    j["normalization"] = to_string(d.normalization);
    if (d.outlier_clip) {
        j["outlier_clip"] = *d.outlier_clip;
    }
    return j;
}

json model_json(const ModelSpec& m) {
    json j;
    j["family"] = to_string(m.family);
    if (model_uses_lambda(m.family)) {
        j["lambda_reg"] = m.lambda_reg;
    }
    if (m.family == ModelFamily::kernel_ridge_rbf) {
        j["gamma_rbf"] = m.gamma_rbf;
    }
    if (m.family == ModelFamily::mlp_1hidden) {
        j["epochs"] = m.epochs;
        j["hidden_units"] = m.hidden_units;
        j["learning_rate"] = m.learning_rate;
    }
    return j;
}

json loss_json(const LossSpec& l) {
    json j;
    j["kind"] = to_string(l.kind);
    if (loss_uses_tau(l.kind)) {
        j["tau"] = l.tau;
    }
    if (l.kind == LossKind::logsigmoid_rank) {
        j["adaptive_threshold"] = l.adaptive_threshold;
    }
    if (l.kind == LossKind::multitask) {
        j["lambda_rank"] = l.lambda_rank;
    }
    return j;
}

json split_json(const SplitSpec& s) {
    json j;
    j["fold_count"] = s.fold_count;
    j["holdout_fraction"] = s.holdout_fraction;
    j["policy"] = to_string(s.policy);
    return j;
}

json content_json(const Genome& g) {
    json j;
    j["data_ops"] = data_ops_json(g.data_ops);
    j["loss"] = loss_json(g.loss);
    j["model"] = model_json(g.model);
    j["split"] = split_json(g.split);
    return j;
}

DataOpsSpec data_ops_from_json(const json& j) {
    DataOpsSpec d;
    d.drift_compensation = j.at("drift_compensation").get<bool>();
    d.feature_mask = j.at("feature_mask").get<std::vector<bool>>();
    d.normalization = parse_normalization(j.at("normalization").get<std::string>());
    if (j.contains("outlier_clip")) {
        d.outlier_clip = j.at("outlier_clip").get<double>();
    }
    return d;
}

ModelSpec model_from_json(const json& j) {
    ModelSpec m;
    m.family = parse_family(j.at("family").get<std::string>());
    if (j.contains("lambda_reg")) {
        m.lambda_reg = j.at("lambda_reg").get<double>();
    }
    if (j.contains("gamma_rbf")) {
        m.gamma_rbf = j.at("gamma_rbf").get<double>();
    }
    if (j.contains("hidden_units")) {
        m.hidden_units = j.at("hidden_units").get<int>();
    }
    if (j.contains("learning_rate")) {
        m.learning_rate = j.at("learning_rate").get<double>();
    }
    if (j.contains("epochs")) {
        m.epochs = j.at("epochs").get<int>();
    }
    return m;
}

LossSpec loss_from_json(const json& j) {
    LossSpec l;
    l.kind = parse_loss_kind(j.at("kind").get<std::string>());
    if (j.contains("tau")) {
        l.tau = j.at("tau").get<double>();
    }
    if (j.contains("adaptive_threshold")) {
        l.adaptive_threshold = j.at("adaptive_threshold").get<bool>();
    }
    if (j.contains("lambda_rank")) {
        l.lambda_rank = j.at("lambda_rank").get<double>();
    }
    return l;
}

SplitSpec split_from_json(const json& j) {
    SplitSpec s;
    s.fold_count = j.at("fold_count").get<int>();
    s.holdout_fraction = j.at("holdout_fraction").get<double>();
    s.policy = parse_policy(j.at("policy").get<std::string>());
    return s;
}

double clamp_scale(double value, double factor, double lo, double hi) {
    return std::clamp(value * factor, lo, hi);
}

ModelSpec family_defaults(ModelFamily f) {
    ModelSpec m;
    m.family = f;
    return m;
}

LossSpec kind_defaults(LossKind k) {
    LossSpec l;
    l.kind = k;
    return l;
}

// One sub-mutation applied to a copy of g. Returns false when the entry does
// not apply or would leave the content unchanged without consuming rng in
// a way that matters.
bool apply_sub_mutation(Genome& g, OperatorKind kind, std::size_t entry,
                        DeterministicStream& rng) {
    switch (kind) {
    case OperatorKind::data_edit:
        switch (entry) {
        case 0: { // cycle normalization
            const int next = (static_cast<int>(g.data_ops.normalization) + 1) % 3;
            g.data_ops.normalization = static_cast<Normalization>(next);
            return true;
        }
        case 1: { // adjust clip on a x2 log grid, introducing it when absent
            if (!g.data_ops.outlier_clip) {
                g.data_ops.outlier_clip = 3.0;
                return true;
            }
            const double factor = rng.bernoulli(0.5) ? 2.0 : 0.5;
            const double next = clamp_scale(*g.data_ops.outlier_clip, factor, 0.5, 10.0);
            if (next == *g.data_ops.outlier_clip) {
                return false;
            }
            g.data_ops.outlier_clip = next;
            return true;
        }
        case 2: { // drop clipping
            if (!g.data_ops.outlier_clip) {
                return false;
            }
            g.data_ops.outlier_clip.reset();
            return true;
        }
        case 3: { // flip one mask bit, never emptying the mask
            const auto& mask = g.data_ops.feature_mask;
            const std::size_t set_count =
                static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
            std::vector<std::size_t> eligible;
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (mask[i] && set_count == 1) {
                    continue; // flipping the last selected feature would empty the mask
                }
                eligible.push_back(i);
            }
            if (eligible.empty()) {
                return false;
            }
            const std::size_t pick =
                eligible[static_cast<std::size_t>(rng.uniform_index(eligible.size()))];
            g.data_ops.feature_mask[pick] = !g.data_ops.feature_mask[pick];
            return true;
        }
        case 4:
            g.data_ops.drift_compensation = !g.data_ops.drift_compensation;
            return true;
        default:
            return false;
        }
    case OperatorKind::model_swap:
        switch (entry) {
        case 0: { // switch family, resetting hyperparameters to its defaults
            const std::array<ModelFamily, 3> all = {ModelFamily::ridge_linear,
                                                    ModelFamily::kernel_ridge_rbf,
                                                    ModelFamily::mlp_1hidden};
            std::vector<ModelFamily> others;
            for (ModelFamily f : all) {
                if (f != g.model.family) {
                    others.push_back(f);
                }
            }
            g.model = family_defaults(rng.pick(others));
            return true;
        }
        case 1: {
            if (!model_uses_lambda(g.model.family)) {
                return false;
            }
            const double factor = rng.bernoulli(0.5) ? 2.0 : 0.5;
            const double next = clamp_scale(g.model.lambda_reg, factor, 1e-6, 1e3);
            if (next == g.model.lambda_reg) {
                return false;
            }
            g.model.lambda_reg = next;
            return true;
        }
        case 2: {
            if (g.model.family != ModelFamily::kernel_ridge_rbf) {
                return false;
            }
            const double factor = rng.bernoulli(0.5) ? 2.0 : 0.5;
            const double next = clamp_scale(g.model.gamma_rbf, factor, 1e-3, 1e3);
            if (next == g.model.gamma_rbf) {
                return false;
            }
            g.model.gamma_rbf = next;
            return true;
        }
        case 3: {
            if (g.model.family != ModelFamily::mlp_1hidden) {
                return false;
            }
            const double factor = rng.bernoulli(0.5) ? 2.0 : 0.5;
            const int next = std::clamp(
                static_cast<int>(std::lround(g.model.hidden_units * factor)), 4, 64);
            if (next == g.model.hidden_units) {
                return false;
            }
            g.model.hidden_units = next;
            return true;
        }
        case 4: {
            if (g.model.family != ModelFamily::mlp_1hidden) {
                return false;
            }
            const double factor = rng.bernoulli(0.5) ? 2.0 : 0.5;
            const double next = clamp_scale(g.model.learning_rate, factor, 1e-4, 1.0);
            if (next == g.model.learning_rate) {
                return false;
            }
            g.model.learning_rate = next;
            return true;
        }
        case 5: {
            if (g.model.family != ModelFamily::mlp_1hidden) {
                return false;
            }
            const double factor = rng.bernoulli(0.5) ? 2.0 : 0.5;
            const int next =
                std::clamp(static_cast<int>(std::lround(g.model.epochs * factor)), 10, 500);
            if (next == g.model.epochs) {
                return false;
            }
            g.model.epochs = next;
            return true;
        }
        default:
            return false;
        }
    case OperatorKind::loss_evolve:
        switch (entry) {
        case 0: { // switch kind, resetting loss parameters to kind defaults
            const std::array<LossKind, 4> all = {LossKind::mse, LossKind::pairwise_hinge,
                                                 LossKind::logsigmoid_rank, LossKind::multitask};
            std::vector<LossKind> others;
            for (LossKind k : all) {
                if (k != g.loss.kind) {
                    others.push_back(k);
                }
            }
            g.loss = kind_defaults(rng.pick(others));
            return true;
        }
        case 1: {
            if (!loss_uses_tau(g.loss.kind)) {
                return false;
            }
            if (g.loss.tau == 0.0) {
                g.loss.tau = 0.01;
                return true;
            }
            const double factor = rng.bernoulli(0.5) ? 2.0 : 0.5;
            const double next = clamp_scale(g.loss.tau, factor, 1e-3, 1.0);
            if (next == g.loss.tau) {
                return false;
            }
            g.loss.tau = next;
            return true;
        }
        case 2: {
            if (!loss_uses_tau(g.loss.kind) || g.loss.tau == 0.0) {
                return false;
            }
            g.loss.tau = 0.0;
            return true;
        }
        case 3: {
            if (g.loss.kind != LossKind::logsigmoid_rank) {
                return false;
            }
            g.loss.adaptive_threshold = !g.loss.adaptive_threshold;
            return true;
        }
        case 4: {
            if (g.loss.kind != LossKind::multitask) {
                return false;
            }
            const double delta = rng.bernoulli(0.5) ? 0.1 : -0.1;
            const double next = std::clamp(g.loss.lambda_rank + delta, 0.0, 1.0);
            if (next == g.loss.lambda_rank) {
                return false;
            }
            g.loss.lambda_rank = next;
            return true;
        }
        default:
            return false;
        }
    case OperatorKind::split_guard:
        switch (entry) {
        case 0:
            g.split.policy = g.split.policy == SplitPolicy::by_family ? SplitPolicy::random
                                                                      : SplitPolicy::by_family;
            return true;
        case 1: {
            const double factor = rng.bernoulli(0.5) ? 2.0 : 0.5;
            const double next = clamp_scale(g.split.holdout_fraction, factor, 0.05, 0.5);
            if (next == g.split.holdout_fraction) {
                return false;
            }
            g.split.holdout_fraction = next;
            return true;
        }
        case 2: {
            const int delta = rng.bernoulli(0.5) ? 1 : -1;
            const int next = std::clamp(g.split.fold_count + delta, 2, 6);
            if (next == g.split.fold_count) {
                return false;
            }
            g.split.fold_count = next;
            return true;
        }
        default:
            return false;
        }
    }
    return false;
}

std::size_t catalog_size(OperatorKind kind) {
    switch (kind) {
    case OperatorKind::data_edit: return 5;
    case OperatorKind::model_swap: return 6;
    case OperatorKind::loss_evolve: return 5;
    case OperatorKind::split_guard: return 3;
    }
    return 0;
}

} // namespace

bool Genome::content_equal(const Genome& other) const {
    return canonical_content(*this) == canonical_content(other);
}

std::string canonical_content(const Genome& g) {
    return content_json(g).dump();
}

std::string content_id(const Genome& g) {
    return hex64(fnv1a64(canonical_content(g)));
}

json genome_to_json(const Genome& g) {
    json j = content_json(g);
    j["id"] = g.id;
    j["version"] = g.version;
    json p;
    p["generation"] = g.provenance.generation;
    p["iteration"] = g.provenance.iteration;
    p["origin"] = g.provenance.origin;
    if (g.provenance.parent_id) {
        p["parent_id"] = *g.provenance.parent_id;
    }
    if (g.provenance.parent2_id) {
        p["parent2_id"] = *g.provenance.parent2_id;
    }
    j["provenance"] = p;
    return j;
}

Genome genome_from_json(const json& j) {
    Genome g;
    g.data_ops = data_ops_from_json(j.at("data_ops"));
    g.model = model_from_json(j.at("model"));
    g.loss = loss_from_json(j.at("loss"));
    g.split = split_from_json(j.at("split"));
    g.version = j.value("version", std::int64_t{0});
    if (j.contains("provenance")) {
        const json& p = j.at("provenance");
        g.provenance.generation = p.value("generation", std::int64_t{0});
        g.provenance.iteration = p.value("iteration", std::int64_t{0});
        g.provenance.origin = p.value("origin", std::string("init"));
        if (p.contains("parent_id")) {
            g.provenance.parent_id = p.at("parent_id").get<std::string>();
        }
        if (p.contains("parent2_id")) {
            g.provenance.parent2_id = p.at("parent2_id").get<std::string>();
        }
    }
    g.id = j.contains("id") ? j.at("id").get<std::string>() : content_id(g);
    return g;
}

std::string genome_to_string(const Genome& g) {
    return genome_to_json(g).dump(2) + "\n";
}

Genome genome_from_string(const std::string& text) {
    return genome_from_json(json::parse(text));
}

ValidationReport validate(const Genome& g) {
    ValidationReport report;
    auto flag = [&report](const std::string& message) { report.violations.push_back(message); };

    const auto& mask = g.data_ops.feature_mask;
    if (mask.empty() || std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
        flag("feature_mask empty");
    }
    if (g.data_ops.outlier_clip && *g.data_ops.outlier_clip <= 0.0) {
        flag("outlier_clip must be > 0");
    }

    if (model_uses_lambda(g.model.family) && g.model.lambda_reg < 0.0) {
        flag("lambda_reg out of range");
    }
    if (g.model.family == ModelFamily::kernel_ridge_rbf && g.model.gamma_rbf <= 0.0) {
        flag("gamma_rbf out of range");
    }
    if (g.model.family == ModelFamily::mlp_1hidden) {
        if (g.model.hidden_units < 4 || g.model.hidden_units > 64) {
            flag("hidden_units out of range");
        }
        if (g.model.learning_rate <= 0.0) {
            flag("learning_rate out of range");
        }
        if (g.model.epochs < 10 || g.model.epochs > 500) {
            flag("epochs out of range");
        }
    }

    if (loss_uses_tau(g.loss.kind) && g.loss.tau < 0.0) {
        flag("tau out of range");
    }
    if (g.loss.kind == LossKind::multitask &&
        (g.loss.lambda_rank < 0.0 || g.loss.lambda_rank > 1.0)) {
        flag("lambda_rank out of range");
    }

    if (!(g.split.holdout_fraction > 0.0 && g.split.holdout_fraction < 1.0)) {
        flag("holdout out of range");
    }
    if (g.split.fold_count < 2) {
        flag("fold_count out of range");
    }

    if (g.version < 0) {
        flag("version negative");
    }
    if (g.id != content_id(g)) {
        flag("id mismatch");
    }
    return report;
}

Genome mutate(const Genome& g, OperatorKind kind, DeterministicStream& rng,
              const LineageStamp& stamp) {
    const std::size_t n = catalog_size(kind);
    const std::size_t start = static_cast<std::size_t>(rng.uniform_index(n));
    Genome child = g;
    child.version = g.version + 1;
    child.provenance = Provenance{g.id, std::nullopt, to_string(kind), stamp.iteration,
                                  stamp.generation};
    for (std::size_t attempt = 0; attempt < n; ++attempt) {
        Genome candidate = child;
        if (apply_sub_mutation(candidate, kind, (start + attempt) % n, rng) &&
            !candidate.content_equal(g)) {
            candidate.id = content_id(candidate);
            return candidate;
        }
    }
    // Catalog exhausted without a content change: version-bump only.
    child.id = content_id(child);
    return child;
}

Genome crossover(const Genome& a, const Genome& b, DeterministicStream& rng,
                 const LineageStamp& stamp) {
    Genome child;
    child.data_ops = rng.bernoulli(0.5) ? a.data_ops : b.data_ops;
    child.model = rng.bernoulli(0.5) ? a.model : b.model;
    child.loss = rng.bernoulli(0.5) ? a.loss : b.loss;
    child.split = rng.bernoulli(0.5) ? a.split : b.split;
    child.version = std::max(a.version, b.version) + 1;
    child.provenance =
        Provenance{a.id, b.id, "crossover", stamp.iteration, stamp.generation};
    child.id = content_id(child);
    return child;
}

OperatorKind sample_operator_kind(const std::array<double, 4>& weights,
                                  DeterministicStream& rng) {
    double total = 0.0;
    for (double w : weights) {
        if (w <= 0.0) {
            throw std::invalid_argument("operator weights must be positive");
        }
        total += w;
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) {
            return kAllOperatorKinds[i];
        }
    }
    return kAllOperatorKinds.back();
}

Genome default_genome(std::size_t feature_count,
                      const std::vector<std::size_t>& banned_columns) {
    Genome g;
    g.data_ops.feature_mask.assign(feature_count, true);
    for (std::size_t col : banned_columns) {
        if (col < feature_count) {
            g.data_ops.feature_mask[col] = false;
        }
    }
    g.id = content_id(g);
    return g;
}

Genome random_genome(DeterministicStream& rng, std::size_t feature_count,
                     const std::vector<std::size_t>& banned_columns,
                     const LineageStamp& stamp, std::string origin) {
    Genome g = default_genome(feature_count, banned_columns);

    g.data_ops.normalization = static_cast<Normalization>(rng.uniform_index(3));
    if (rng.bernoulli(0.3)) {
        g.data_ops.outlier_clip = std::exp(rng.uniform(std::log(1.0), std::log(8.0)));
    }
    g.data_ops.drift_compensation = rng.bernoulli(0.5);
    std::vector<std::size_t> allowed;
    for (std::size_t i = 0; i < feature_count; ++i) {
        if (g.data_ops.feature_mask[i]) {
            g.data_ops.feature_mask[i] = rng.bernoulli(0.85);
            allowed.push_back(i);
        }
    }
    if (std::none_of(g.data_ops.feature_mask.begin(), g.data_ops.feature_mask.end(),
                     [](bool b) { return b; })) {
        for (std::size_t i : allowed) {
            g.data_ops.feature_mask[i] = true;
        }
    }

    const auto family = static_cast<ModelFamily>(rng.uniform_index(3));
    g.model = ModelSpec{};
    g.model.family = family;
    switch (family) {
    case ModelFamily::ridge_linear:
        g.model.lambda_reg = std::exp(rng.uniform(std::log(1e-4), std::log(10.0)));
        break;
    case ModelFamily::kernel_ridge_rbf:
        g.model.lambda_reg = std::exp(rng.uniform(std::log(1e-4), std::log(10.0)));
        g.model.gamma_rbf = std::exp(rng.uniform(std::log(0.05), std::log(5.0)));
        break;
    case ModelFamily::mlp_1hidden:
        g.model.hidden_units = static_cast<int>(
            std::lround(std::exp(rng.uniform(std::log(4.0), std::log(64.0)))));
        g.model.learning_rate = std::exp(rng.uniform(std::log(0.003), std::log(0.3)));
        g.model.epochs = static_cast<int>(
            std::lround(std::exp(rng.uniform(std::log(10.0), std::log(500.0)))));
        break;
    }

    g.loss = LossSpec{};
    g.loss.kind = static_cast<LossKind>(rng.uniform_index(4));
    if (g.loss.kind != LossKind::mse && rng.bernoulli(0.5)) {
        g.loss.tau = std::exp(rng.uniform(std::log(1e-3), std::log(0.1)));
    }
    if (g.loss.kind == LossKind::logsigmoid_rank) {
        g.loss.adaptive_threshold = rng.bernoulli(0.5);
    }
    if (g.loss.kind == LossKind::multitask) {
        g.loss.lambda_rank = 0.1 * static_cast<double>(rng.uniform_index(11));
    }

    g.provenance = Provenance{std::nullopt, std::nullopt, std::move(origin), stamp.iteration,
                              stamp.generation};
    g.id = content_id(g);
    return g;
}

} // namespace surrevo
