#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "surrevo/taskbench.hpp"

using namespace surrevo;

namespace {

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double ma = a.mean();
    const double mb = b.mean();
    const Eigen::VectorXd da = a.array() - ma;
    const Eigen::VectorXd db = b.array() - mb;
    return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

std::uint64_t dataset_hash(const Dataset& ds) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](double v) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(&v);
        for (std::size_t i = 0; i < sizeof(v); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
            mix(ds.features(i, j));
        }
        mix(ds.labels(i));
    }
    return h;
}

} // namespace

TEST_CASE("generation is a pure function of the spec") {
    const TaskSpec spec;
    const Dataset a = generate(spec);
    const Dataset b = generate(spec);
    CHECK(dataset_hash(a) == dataset_hash(b));
    CHECK(a.family == b.family);
    CHECK(a.version == b.version);

    TaskSpec other = spec;
    other.seed = 43;
    CHECK(dataset_hash(generate(other)) != dataset_hash(a));
}

TEST_CASE("default dataset shape and card") {
    const Dataset ds = generate(TaskSpec{});
    CHECK(ds.size() == 600);
    CHECK(ds.feature_count() == 9); // 8 features + leaky column
    REQUIRE(ds.card.leaky_column.has_value());
    CHECK(*ds.card.leaky_column == 8);
    CHECK(ds.labels.allFinite());
    for (int fam = 0; fam < 6; ++fam) {
        CHECK(std::count(ds.family.begin(), ds.family.end(), fam) >= 5);
    }
}

TEST_CASE("invalid specs name the violated bound") {
    TaskSpec spec;
    spec.sample_count = 50; // < 10 * family_count
    CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("sample_count"),
                         std::invalid_argument);
    TaskSpec narrow;
    narrow.feature_dim = 1;
    CHECK_THROWS_WITH_AS(generate(narrow), doctest::Contains("feature_dim"),
                         std::invalid_argument);
    TaskSpec noisy;
    noisy.noise_std = -0.1;
    CHECK_THROWS_WITH_AS(generate(noisy), doctest::Contains("noise_std"),
                         std::invalid_argument);
}

TEST_CASE("leaky column tracks the label almost exactly") {
    TaskSpec spec;
    spec.noise_std = 0.0;
    const Dataset ds = generate(spec);
    const Eigen::VectorXd leaky = ds.features.col(8);
    CHECK(pearson(leaky, ds.labels) > 0.999);
}

TEST_CASE("family label means separate beyond twice the noise floor") {
    const Dataset ds = generate(TaskSpec{});
    const int families = ds.card.spec.family_count;
    std::vector<double> mean(static_cast<std::size_t>(families), 0.0);
    std::vector<int> count(static_cast<std::size_t>(families), 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        mean[static_cast<std::size_t>(ds.family[i])] += ds.labels(static_cast<Eigen::Index>(i));
        count[static_cast<std::size_t>(ds.family[i])] += 1;
    }
    for (int f = 0; f < families; ++f) {
        mean[static_cast<std::size_t>(f)] /= count[static_cast<std::size_t>(f)];
    }
    const double margin = 2.0 * ds.card.spec.noise_std;
    for (int a = 0; a < families; ++a) {
        for (int b = a + 1; b < families; ++b) {
            CAPTURE(a);
            CAPTURE(b);
            CHECK(std::abs(mean[static_cast<std::size_t>(a)] -
                           mean[static_cast<std::size_t>(b)]) > margin);
        }
    }
}

TEST_CASE("pair construction excludes ties") {
    Dataset ds = generate(TaskSpec{});
    ds.labels(0) = 0.30;
    ds.labels(1) = 0.30;
    ds.labels(2) = 0.35;
    const PairSet pairs = make_pairs(ds, {0, 1, 2});
    REQUIRE(pairs.pairs.size() == 2);
    CHECK(pairs.pairs[0] == std::pair<int, int>{0, 2});
    CHECK(pairs.pairs[1] == std::pair<int, int>{1, 2});
}

TEST_CASE("pair counts match brute force for distinct labels") {
    Dataset ds = generate(TaskSpec{});
    for (int n = 2; n <= 20; ++n) {
        std::vector<int> idx;
        for (int i = 0; i < n; ++i) {
            ds.labels(i) = 0.25 + 0.01 * i; // distinct by construction
            idx.push_back(i);
        }
        const PairSet pairs = make_pairs(ds, idx);
        CHECK(static_cast<int>(pairs.pairs.size()) == n * (n - 1) / 2);
    }
    // 4 distinct labels -> 6 pairs, the small case called out explicitly.
    const PairSet four = make_pairs(ds, {0, 1, 2, 3});
    CHECK(four.pairs.size() == 6);
}

TEST_CASE("fewer than two usable samples yields an empty pair set") {
    const Dataset ds = generate(TaskSpec{});
    CHECK(make_pairs(ds, {0}).pairs.empty());
    CHECK(make_pairs(ds, {}).pairs.empty());
}

TEST_CASE("by_family split keeps families on one side of every boundary") {
    const Dataset ds = generate(TaskSpec{});
    SplitSpec policy;
    const Split s = split(ds, policy, 555);
    REQUIRE(s.folds.size() == 3);

    std::set<int> holdout_families;
    for (int idx : s.holdout) {
        holdout_families.insert(ds.family[static_cast<std::size_t>(idx)]);
    }
    CHECK(holdout_families.size() == 1); // F=6, holdout fraction 1/6

    for (const FoldIndices& fold : s.folds) {
        std::set<int> train_fams;
        std::set<int> val_fams;
        for (int idx : fold.train) {
            train_fams.insert(ds.family[static_cast<std::size_t>(idx)]);
        }
        for (int idx : fold.validation) {
            val_fams.insert(ds.family[static_cast<std::size_t>(idx)]);
        }
        for (int fam : val_fams) {
            CHECK(train_fams.count(fam) == 0);
            CHECK(holdout_families.count(fam) == 0);
        }
        for (int fam : train_fams) {
            CHECK(holdout_families.count(fam) == 0);
        }
    }

    // The five non-holdout families cycle into validation groups of 2/2/1.
    std::multiset<std::size_t> val_family_sizes;
    for (const FoldIndices& fold : s.folds) {
        std::set<int> fams;
        for (int idx : fold.validation) {
            fams.insert(ds.family[static_cast<std::size_t>(idx)]);
        }
        val_family_sizes.insert(fams.size());
    }
    CHECK(val_family_sizes == std::multiset<std::size_t>{1, 2, 2});
}

TEST_CASE("by_family split is deterministic in the seed") {
    const Dataset ds = generate(TaskSpec{});
    SplitSpec policy;
    const Split a = split(ds, policy, 555);
    const Split b = split(ds, policy, 555);
    CHECK(a.holdout == b.holdout);
    for (std::size_t f = 0; f < a.folds.size(); ++f) {
        CHECK(a.folds[f].train == b.folds[f].train);
        CHECK(a.folds[f].validation == b.folds[f].validation);
    }
}

TEST_CASE("random split sizes follow the holdout fraction") {
    TaskSpec spec;
    spec.sample_count = 100;
    spec.family_count = 5;
    const Dataset ds = generate(spec);
    SplitSpec policy;
    policy.policy = SplitPolicy::random;
    policy.holdout_fraction = 0.2;
    const Split s = split(ds, policy, 1);
    CHECK(s.holdout.size() == 20);
    std::size_t covered = s.holdout.size();
    for (const FoldIndices& fold : s.folds) {
        covered += fold.validation.size();
        CHECK(fold.train.size() + fold.validation.size() + s.holdout.size() == 100);
    }
    CHECK(covered == 100);
}

TEST_CASE("infeasible by_family splits raise the dedicated error") {
    TaskSpec spec;
    spec.family_count = 3;
    spec.sample_count = 60;
    const Dataset ds = generate(spec);
    SplitSpec policy; // fold_count 3 needs at least 4 families
    CHECK_THROWS_AS(split(ds, policy, 555), InfeasibleSplitError);
}
