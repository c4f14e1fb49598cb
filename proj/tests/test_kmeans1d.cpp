#include <catch2/catch_amalgamated.hpp>

#include <srtree/kmeans1d.hpp>

#include "oracles.hpp"

using namespace srtree;
using namespace srtree_test;

TEST_CASE("build_weighted_points sorts and merges duplicates") {
    // values [3,1,3] with weights [1,1,2]: the two 3s merge.
    WeightedPoints p = build_weighted_points({3, 1, 3}, {1, 1, 2});
    REQUIRE(p.values == std::vector<double>{1, 3});
    REQUIRE(p.weights == std::vector<double>{1, 3});

    SECTION("total weight and weighted sum are preserved") {
        std::mt19937_64 rng(11);
        for (int rep = 0; rep < 50; ++rep) {
            auto vals = random_values(rng, 20, 0, 5);
            // force duplicates
            for (auto& v : vals) v = std::round(v * 4) / 4;
            auto wts = random_weights(rng, 20);
            WeightedPoints q = build_weighted_points(vals, wts);
            double w_in = 0, wv_in = 0, w_out = 0, wv_out = 0;
            for (std::size_t i = 0; i < vals.size(); ++i) { w_in += wts[i]; wv_in += wts[i] * vals[i]; }
            for (std::size_t i = 0; i < q.size(); ++i) { w_out += q.weights[i]; wv_out += q.weights[i] * q.values[i]; }
            REQUIRE(w_out == Catch::Approx(w_in).epsilon(1e-12));
            REQUIRE(wv_out == Catch::Approx(wv_in).epsilon(1e-12));
            for (std::size_t i = 1; i < q.size(); ++i) REQUIRE(q.values[i] > q.values[i - 1]);
        }
    }

    SECTION("rejects bad input") {
        REQUIRE_THROWS_AS(build_weighted_points({}, {}), std::invalid_argument);
        REQUIRE_THROWS_AS(build_weighted_points({1.0}, {0.0}), std::invalid_argument);
        REQUIRE_THROWS_AS(build_weighted_points({1.0}, {-1.0}), std::invalid_argument);
        REQUIRE_THROWS_AS(build_weighted_points({1.0, 2.0}, {1.0}), std::invalid_argument);
    }
}

TEST_CASE("optimal_loss frozen examples") {
    // [0,1,4,5], unit weights, 2 clusters: best contiguous split is {0,1}|{4,5}
    // with cost 0.5 + 0.5 = 1.0.
    WeightedPoints p = build_weighted_points({0, 1, 4, 5}, {1, 1, 1, 1});
    REQUIRE(optimal_loss(p, 2) == 1.0);

    // [0,10] with weights [3,1], one cluster: weighted mean 2.5,
    // SSE = 3*2.5^2 + 1*7.5^2 = 75.
    WeightedPoints q = build_weighted_points({0, 10}, {3, 1});
    REQUIRE(optimal_loss(q, 1) == 75.0);

    // As many clusters as points: zero loss, exactly.
    REQUIRE(optimal_loss(p, 4) == 0.0);

    // Identical points merge to one, so C=1 is the only row and loss is 0.
    WeightedPoints ident = build_weighted_points({2, 2, 2}, {1, 1, 1});
    REQUIRE(ident.size() == 1);
    REQUIRE(optimal_loss(ident, 1) == 0.0);

    REQUIRE_THROWS_AS(optimal_loss(p, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(optimal_loss(p, 5), std::invalid_argument);
}

TEST_CASE("optimal_loss matches the contiguous-partition oracle exactly") {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 60; ++rep) {
        std::size_t n = 2 + rep % 9; // up to 10 points
        auto vals = random_values(rng, n);
        auto wts = random_weights(rng, n);
        WeightedPoints p = build_weighted_points(vals, wts);
        for (std::size_t C = 1; C <= p.size(); ++C) {
            double dp = optimal_loss(p, C);
            double oracle = oracle_contiguous_kmeans(p.values, p.weights, C);
            REQUIRE(dp == oracle); // same candidate partitions, same cost primitive
        }
    }
}

TEST_CASE("contiguity is optimal: DP matches the unrestricted-assignment oracle") {
    std::mt19937_64 rng(29);
    for (int rep = 0; rep < 40; ++rep) {
        std::size_t n = 2 + rep % 7; // up to 8 points
        auto vals = random_values(rng, n);
        auto wts = random_weights(rng, n);
        WeightedPoints p = build_weighted_points(vals, wts);
        for (std::size_t C = 1; C <= p.size(); ++C) {
            double dp = optimal_loss(p, C);
            double oracle = oracle_unrestricted_kmeans(p.values, p.weights, C);
            REQUIRE(dp == Catch::Approx(oracle).margin(1e-9));
        }
    }
}

TEST_CASE("loss is non-increasing and convex in the cluster count") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 40; ++rep) {
        std::size_t n = 3 + rep % 14;
        WeightedPoints p = build_weighted_points(random_values(rng, n), random_weights(rng, n));
        KMeansTable t(p);
        std::vector<double> losses;
        for (std::size_t C = 1; C <= p.size(); ++C) {
            t.fill_next_row();
            losses.push_back(t.loss(C));
        }
        for (std::size_t i = 1; i < losses.size(); ++i)
            REQUIRE(losses[i] <= losses[i - 1] + 1e-9);
        // marginal improvements shrink
        for (std::size_t i = 2; i < losses.size(); ++i) {
            double d1 = losses[i - 2] - losses[i - 1];
            double d2 = losses[i - 1] - losses[i];
            REQUIRE(d2 <= d1 + 1e-9);
        }
        REQUIRE(losses.back() == 0.0);
        REQUIRE_THROWS_AS(t.fill_next_row(), std::logic_error);
    }
}

TEST_CASE("backtracked clusters have weighted-mean centers") {
    std::mt19937_64 rng(37);
    for (int rep = 0; rep < 30; ++rep) {
        std::size_t n = 4 + rep % 12;
        WeightedPoints p = build_weighted_points(random_values(rng, n), random_weights(rng, n));
        KMeansTable t(p);
        std::size_t C = 1 + rep % p.size();
        for (std::size_t c = 0; c < C; ++c) t.fill_next_row();
        auto bounds = t.backtrack(C);
        REQUIRE(bounds.front() == 0);
        REQUIRE(bounds.back() == p.size());
        double total = 0.0;
        for (std::size_t c = 1; c < bounds.size(); ++c) {
            REQUIRE(bounds[c] > bounds[c - 1]); // clusters non-empty, contiguous
            // cost of this cluster about its weighted mean, recomputed directly
            std::vector<std::size_t> members;
            for (std::size_t i = bounds[c - 1]; i < bounds[c]; ++i) members.push_back(i);
            total += direct_weighted_sse(p.values, p.weights, members);
        }
        REQUIRE(total == Catch::Approx(t.loss(C)).margin(1e-9).epsilon(1e-12));
    }
}

TEST_CASE("quadratic and divide-and-conquer row fills agree") {
    // The production cutover is at 256 points; build tables past it and compare
    // against a quadratic reference run at reduced scale by brute force.
    std::mt19937_64 rng(41);
    for (int rep = 0; rep < 3; ++rep) {
        std::size_t n = 300 + 40 * static_cast<std::size_t>(rep);
        auto vals = random_values(rng, n, 0, 100);
        auto wts = random_weights(rng, n);
        WeightedPoints p = build_weighted_points(vals, wts);
        KMeansTable fast(p);
        std::size_t rows = 6;
        for (std::size_t c = 0; c < rows; ++c) fast.fill_next_row();

        // Quadratic reference over the same points.
        IntervalCoster cost(p.values, p.weights);
        std::size_t m = p.size();
        std::vector<double> prev(m + 1, 0.0), cur(m + 1, 0.0);
        for (std::size_t b = 1; b <= m; ++b) prev[b] = cost(0, b);
        REQUIRE(prev[m] == fast.loss(1));
        for (std::size_t c = 1; c < rows; ++c) {
            for (std::size_t b = 0; b <= m; ++b) cur[b] = 0.0;
            for (std::size_t b = c + 1; b <= m; ++b) {
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t s = c; s < b; ++s) {
                    double cand = prev[s] + cost(s, b);
                    if (cand < best) best = cand;
                }
                cur[b] = best;
            }
            REQUIRE(cur[m] == fast.loss(c + 1));
            std::swap(prev, cur);
        }
    }
}

TEST_CASE("regularized_min frozen examples") {
    SECTION("identical points: one cluster, zero loss") {
        WeightedPoints p = build_weighted_points({5, 5, 5}, {1, 2, 1});
        RegularizedMin rm = regularized_min(p, 0.7);
        REQUIRE(rm.loss == 0.0);
        REQUIRE(rm.clusters == 1);
        REQUIRE(rm.total == 0.7);
    }
    SECTION("[0,1,4,5] with lambda_scaled 0.4: full split wins") {
        // totals: C=1: 17.4, C=2: 1.8, C=3: 1.7, C=4: 1.6 -> C*=4, loss 0.
        WeightedPoints p = build_weighted_points({0, 1, 4, 5}, {1, 1, 1, 1});
        RegularizedMin rm = regularized_min(p, 0.4);
        REQUIRE(rm.loss == 0.0);
        REQUIRE(rm.clusters == 4);
        REQUIRE(rm.total == Catch::Approx(1.6).epsilon(1e-12));
    }
    SECTION("[0,1,4,5] with lambda_scaled 0.6: early stop at the gap") {
        // totals: C=1: 17.6, C=2: 2.2, C=3: 2.3 (improvement 0.5 <= 0.6 stops
        // the scan); minimum is C=2.
        WeightedPoints p = build_weighted_points({0, 1, 4, 5}, {1, 1, 1, 1});
        RegularizedMin rm = regularized_min(p, 0.6);
        REQUIRE(rm.clusters == 2);
        REQUIRE(rm.loss == 1.0);
        REQUIRE(rm.total == Catch::Approx(2.2).epsilon(1e-12));
    }
    SECTION("lambda_scaled 0 drives the loss component to zero") {
        WeightedPoints p = build_weighted_points({0, 3, 9}, {1, 1, 1});
        RegularizedMin rm = regularized_min(p, 0.0);
        REQUIRE(rm.loss == 0.0);
        REQUIRE(rm.total == 0.0);
    }
    REQUIRE_THROWS_AS(regularized_min(build_weighted_points({1.0}, {1.0}), -0.1),
                      std::invalid_argument);
}

TEST_CASE("regularized_min early stop equals the exhaustive-over-C minimum") {
    std::mt19937_64 rng(43);
    for (int rep = 0; rep < 60; ++rep) {
        std::size_t n = 2 + rep % 11;
        WeightedPoints p = build_weighted_points(random_values(rng, n), random_weights(rng, n));
        double lambda_scaled = rep % 5 == 0 ? 0.0 : random_values(rng, 1, 0.01, 20.0)[0];
        RegularizedMin rm = regularized_min(p, lambda_scaled);

        KMeansTable t(p);
        double best_total = std::numeric_limits<double>::infinity();
        std::size_t best_C = 0;
        for (std::size_t C = 1; C <= p.size(); ++C) {
            t.fill_next_row();
            double total = t.loss(C) + lambda_scaled * static_cast<double>(C);
            if (total < best_total) { best_total = total; best_C = C; }
        }
        REQUIRE(rm.total == best_total);
        REQUIRE(rm.clusters == best_C);
    }
}
