#include <catch2/catch_amalgamated.hpp>

#include <srtree/bounds.hpp>

#include <map>

#include "oracles.hpp"

using namespace srtree;
using namespace srtree_test;

namespace {

// Stats with one singleton group per value.
SubproblemStats singleton_stats(const std::vector<double>& values) {
    SubproblemStats st;
    for (double v : values) {
        st.support_size += 1.0;
        st.target_sum += v;
        st.target_sq_sum += v * v;
        st.groups.push_back(GroupView{1.0, v, v * v});
    }
    return st;
}

std::vector<std::size_t> mask_rows(const std::vector<std::uint8_t>& mask) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) rows.push_back(i);
    return rows;
}

} // namespace

TEST_CASE("leaf objective frozen values") {
    BoundConfig cfg{0.1, 2.0, true};
    // identical targets: zero loss, objective is the leaf penalty alone
    REQUIRE(leaf_objective(singleton_stats({2.0, 2.0}), cfg) == 0.1);
    // targets {0, 2}: SSE 2 over N=2, plus lambda -> 1.1
    REQUIRE(leaf_objective(singleton_stats({0.0, 2.0}), cfg) == Catch::Approx(1.1).margin(1e-12));
}

TEST_CASE("equivalent-points bound frozen values") {
    // one equivalent set holding targets {1, 3}: irreducible SSE 2, N=2
    SubproblemStats st;
    st.support_size = 2.0;
    st.target_sum = 4.0;
    st.target_sq_sum = 10.0;
    st.groups.push_back(GroupView{2.0, 4.0, 10.0});
    BoundConfig cfg{0.05, 2.0, false};
    REQUIRE(equivalent_points_bound(st, cfg) == Catch::Approx(1.05).margin(1e-12));

    // two pure sets: the floor vanishes, the bound is one leaf's penalty
    BoundConfig cfg2{0.25, 4.0, false};
    REQUIRE(equivalent_points_bound(singleton_stats({1.0, 2.0, 3.0}), cfg2) == 0.25);
}

TEST_CASE("k-means bound frozen values") {
    SubproblemStats st = singleton_stats({0.0, 1.0, 4.0, 5.0});

    // lambda 0.1, N 4: scaled penalty 0.4 < every marginal gain, so four
    // clusters win with zero loss -> 0 + 0.1 * 4
    REQUIRE(kmeans_equiv_bound(st, BoundConfig{0.1, 4.0, true}) ==
            Catch::Approx(0.4).margin(1e-12));

    // lambda 0.15: scaled penalty 0.6 stops at two clusters {0,1},{4,5},
    // loss 1.0 -> 1.0/4 + 0.15 * 2 = 0.55
    REQUIRE(kmeans_equiv_bound(st, BoundConfig{0.15, 4.0, true}) ==
            Catch::Approx(0.55).margin(1e-12));
}

TEST_CASE("split bound adds the two children's bounds") {
    // left {0, 2} at lambda 0.1, N 4: two clusters, zero loss -> 0.2
    // right, a single set at mean 5: floor zero -> 0.1; total 0.3
    SubproblemStats left = singleton_stats({0.0, 2.0});
    SubproblemStats right;
    right.support_size = 1.0;
    right.target_sum = 5.0;
    right.target_sq_sum = 25.0;
    right.groups.push_back(GroupView{1.0, 5.0, 25.0});
    BoundConfig cfg{0.1, 4.0, true};
    REQUIRE(split_lower_bound(left, right, cfg) == Catch::Approx(0.3).margin(1e-12));
    REQUIRE(split_lower_bound(left, right, cfg) ==
            analytic_lower_bound(left, cfg) + analytic_lower_bound(right, cfg));
}

TEST_CASE("bounds reject degenerate inputs") {
    SubproblemStats empty;
    BoundConfig cfg{0.1, 4.0, true};
    REQUIRE_THROWS_AS(leaf_objective(empty, cfg), std::invalid_argument);

    SubproblemStats st = singleton_stats({1.0});
    REQUIRE_THROWS_AS(leaf_objective(st, BoundConfig{-0.1, 4.0, true}), std::invalid_argument);
    REQUIRE_THROWS_AS(leaf_objective(st, BoundConfig{0.1, 0.0, true}), std::invalid_argument);

    SubproblemStats no_groups;
    no_groups.support_size = 2.0;
    no_groups.target_sum = 2.0;
    no_groups.target_sq_sum = 4.0;
    REQUIRE_THROWS_AS(equivalent_points_bound(no_groups, cfg), std::invalid_argument);
    REQUIRE_THROWS_AS(kmeans_equiv_bound(no_groups, cfg), std::invalid_argument);
}

TEST_CASE("leaf SSE clamps the catastrophic-cancellation residue") {
    SubproblemStats st = singleton_stats({1e8 + 0.25, 1e8 + 0.25, 1e8 + 0.25});
    REQUIRE(st.leaf_sse() >= 0.0);
}

TEST_CASE("k-means bound dominates the equivalent-points bound") {
    std::mt19937_64 rng(61);
    for (int rep = 0; rep < 40; ++rep) {
        BinaryDataset d = clustered_binary_dataset(rng, 60, 5, 8, 0.3);
        std::vector<std::uint8_t> mask(d.n_rows, 0);
        std::bernoulli_distribution keep(0.7);
        for (auto& b : mask) b = keep(rng);
        SubproblemStats st = stats_from_sample_mask(d, mask);
        if (st.support_size == 0.0) continue;
        std::uniform_real_distribution<double> ul(0.0, 0.1);
        BoundConfig cfg{ul(rng), static_cast<double>(d.n_rows), true};
        double km = kmeans_equiv_bound(st, cfg);
        double eq = equivalent_points_bound(st, cfg);
        REQUIRE(km >= eq - 1e-12 * std::max(1.0, std::abs(eq)));
    }
}

TEST_CASE("both bounds stay below the true optimal subtree objective") {
    std::mt19937_64 rng(67);
    for (int rep = 0; rep < 30; ++rep) {
        BinaryDataset d = rep % 2 ? random_binary_dataset(rng, 16, 5)
                                  : clustered_binary_dataset(rng, 24, 5, 6, 0.4);
        std::vector<std::uint8_t> mask(d.n_rows, 0);
        std::bernoulli_distribution keep(0.6);
        bool any = false;
        for (auto& b : mask) { b = keep(rng); any |= b; }
        if (!any) mask[0] = 1;

        SubproblemStats st = stats_from_sample_mask(d, mask);
        std::vector<std::size_t> rows = mask_rows(mask);
        std::uniform_real_distribution<double> ul(0.002, 0.08);
        double lambda = ul(rng);
        BoundConfig cfg{lambda, static_cast<double>(d.n_rows), true};

        // the stats builder and the two-pass oracle agree on the leaf objective
        REQUIRE(leaf_objective(st, cfg) ==
                Catch::Approx(oracle_leaf_objective(d, rows, lambda)).margin(1e-9));

        std::map<std::vector<std::size_t>, double> memo;
        double best = oracle_best_objective_unlimited(d, rows, lambda, memo);
        REQUIRE(kmeans_equiv_bound(st, cfg) <= best + 1e-9);
        REQUIRE(equivalent_points_bound(st, cfg) <= best + 1e-9);
    }
}

TEST_CASE("k-means bound equals brute-force set clustering minimized over cluster count") {
    std::mt19937_64 rng(71);
    for (int rep = 0; rep < 20; ++rep) {
        BinaryDataset d = clustered_binary_dataset(rng, 40, 4, 6, 0.5);
        SubproblemStats st = stats_from_group_support(
            d, SupportSet::full(d.n_groups()));
        if (st.groups.size() > 7) continue; // keep the enumeration tractable

        std::vector<SetStats> sets;
        for (const GroupView& g : st.groups) sets.push_back(SetStats{g.size, g.sum, g.sqsum});

        std::uniform_real_distribution<double> ul(0.005, 0.12);
        BoundConfig cfg{ul(rng), static_cast<double>(d.n_rows), true};
        double expect = std::numeric_limits<double>::infinity();
        for (std::size_t C = 1; C <= sets.size(); ++C) {
            double total = oracle_constrained_set_kmeans(sets, C) / cfg.n_total +
                           cfg.lambda * static_cast<double>(C);
            expect = std::min(expect, total);
        }
        REQUIRE(kmeans_equiv_bound(st, cfg) == Catch::Approx(expect).margin(1e-9));
    }
}

TEST_CASE("singleton groups reduce to unrestricted 1-D k-means") {
    std::mt19937_64 rng(73);
    for (int rep = 0; rep < 15; ++rep) {
        std::uniform_int_distribution<std::size_t> un(2, 8);
        std::vector<double> values = random_values(rng, un(rng));
        SubproblemStats st = singleton_stats(values);
        std::uniform_real_distribution<double> ul(0.01, 0.3);
        double n_total = values.size() + 3.0; // normalizer need not match the support
        BoundConfig cfg{ul(rng), n_total, true};

        std::vector<double> unit(values.size(), 1.0);
        double expect = std::numeric_limits<double>::infinity();
        for (std::size_t C = 1; C <= values.size(); ++C) {
            double total = oracle_unrestricted_kmeans(values, unit, C) / n_total +
                           cfg.lambda * static_cast<double>(C);
            expect = std::min(expect, total);
        }
        REQUIRE(kmeans_equiv_bound(st, cfg) == Catch::Approx(expect).margin(1e-9));
    }
}

TEST_CASE("group-support stats match sample-mask stats on whole-set supports") {
    std::mt19937_64 rng(79);
    for (int rep = 0; rep < 10; ++rep) {
        BinaryDataset d = clustered_binary_dataset(rng, 80, 5, 10, 0.3);
        SupportSet support = SupportSet::empty(d.n_groups());
        std::bernoulli_distribution keep(0.6);
        for (std::size_t g = 0; g < d.n_groups(); ++g)
            if (keep(rng)) support.set(g);
        if (!support.any()) support.set(0);

        std::vector<std::uint8_t> mask(d.n_rows, 0);
        for (std::size_t i = 0; i < d.n_rows; ++i)
            mask[i] = support.test(d.row_group[i]);

        SubproblemStats a = stats_from_group_support(d, support);
        SubproblemStats b = stats_from_sample_mask(d, mask);
        REQUIRE(a.support_size == b.support_size);
        REQUIRE(a.groups.size() == b.groups.size());
        REQUIRE(a.target_sum == Catch::Approx(b.target_sum).margin(1e-9));
        REQUIRE(a.target_sq_sum == Catch::Approx(b.target_sq_sum).margin(1e-9));
        BoundConfig cfg{0.05, static_cast<double>(d.n_rows), true};
        REQUIRE(kmeans_equiv_bound(a, cfg) ==
                Catch::Approx(kmeans_equiv_bound(b, cfg)).margin(1e-9));
    }
}
