#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace srtree {

// Exact 1-D weighted k-Means by dynamic programming over sorted points.
// In one dimension every optimal clustering is contiguous in sorted order, so
// the DP over prefix split positions is exact, not a heuristic.

// Sorted, strictly increasing values with positive weights. Duplicate input
// values are merged by summing weights; that leaves every clustering cost
// unchanged because equal values always share a cluster in some optimum.
struct WeightedPoints {
    std::vector<double> values;
    std::vector<double> weights;
    std::size_t size() const { return values.size(); }
};

inline WeightedPoints build_weighted_points(const std::vector<double>& values,
                                            const std::vector<double>& weights) {
    if (values.empty()) throw std::invalid_argument("build_weighted_points: empty input");
    if (values.size() != weights.size())
        throw std::invalid_argument("build_weighted_points: value/weight length mismatch");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return values[a] < values[b];
    });
    WeightedPoints p;
    for (std::size_t idx : order) {
        double v = values[idx], w = weights[idx];
        if (!(w > 0.0) || !std::isfinite(w) || !std::isfinite(v))
            throw std::invalid_argument("build_weighted_points: weights must be positive and finite");
        if (!p.values.empty() && v == p.values.back()) p.weights.back() += w;
        else { p.values.push_back(v); p.weights.push_back(w); }
    }
    return p;
}

// DP table grown one row at a time. Row c (0-based) holds, for every prefix
// length b, the optimal weighted SSE of the first b points split into at most
// c+1 contiguous clusters. Cluster centers are weighted means, which the
// prefix-sum interval cost encodes implicitly.
class KMeansTable {
public:
    explicit KMeansTable(WeightedPoints points) : pts_(std::move(points)) {
        const std::size_t n = pts_.size();
        if (n == 0) throw std::invalid_argument("KMeansTable: no points");
        pw_.assign(n + 1, 0.0);
        ps_.assign(n + 1, 0.0);
        pq_.assign(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double w = pts_.weights[i], v = pts_.values[i];
            pw_[i + 1] = pw_[i] + w;
            ps_[i + 1] = ps_[i] + w * v;
            pq_[i + 1] = pq_[i] + w * v * v;
        }
    }

    const WeightedPoints& points() const { return pts_; }
    std::size_t n_points() const { return pts_.size(); }
    std::size_t rows_filled() const { return rows_.size(); }

    // Weighted SSE of points [i, j) about their weighted mean, from prefix sums:
    // sum(w v^2) - (sum(w v))^2 / sum(w). Tiny negative residue of the
    // cancellation is clamped to zero.
    double interval_cost(std::size_t i, std::size_t j) const {
        if (j - i == 1) return 0.0; // one point is its own center, exactly
        double W = pw_[j] - pw_[i];
        double S = ps_[j] - ps_[i];
        double Q = pq_[j] - pq_[i];
        double c = Q - S * S / W;
        return c > 0.0 ? c : 0.0;
    }

    // Appends the row for (rows_filled()+1) clusters. Throws once every point
    // can sit in its own cluster: more rows than points never help.
    void fill_next_row() {
        const std::size_t n = n_points();
        const std::size_t c = rows_.size();
        if (c >= n) throw std::logic_error("KMeansTable: more cluster rows requested than points");
        std::vector<double> row(n + 1, 0.0);
        std::vector<std::uint32_t> split(n + 1, 0);
        if (c == 0) {
            for (std::size_t b = 1; b <= n; ++b) row[b] = interval_cost(0, b);
        } else {
            // Entries b <= c stay 0 (each point its own cluster). The candidate
            // split s is the prefix size handled by the first c clusters.
            if (n - c <= kQuadraticCutoff) fill_quadratic(c, row, split);
            else fill_divide_conquer(c, row, split);
        }
        rows_.push_back(std::move(row));
        splits_.push_back(std::move(split));
    }

    // Optimal loss of all points in at most `clusters` clusters; the row must
    // already be filled.
    double loss(std::size_t clusters) const {
        if (clusters == 0 || clusters > rows_.size())
            throw std::out_of_range("KMeansTable::loss: row not filled");
        return rows_[clusters - 1][n_points()];
    }

    // Cluster boundaries for the filled row `clusters`: bounds[k] is the number
    // of points in the first k clusters, so cluster k covers [bounds[k-1],
    // bounds[k]). Used by tests to recover centers.
    std::vector<std::size_t> backtrack(std::size_t clusters) const {
        if (clusters == 0 || clusters > rows_.size())
            throw std::out_of_range("KMeansTable::backtrack: row not filled");
        std::vector<std::size_t> bounds(clusters + 1, 0);
        bounds[clusters] = n_points();
        std::size_t b = n_points();
        // split values in row c always lie in [c, b-1], so b stays >= c+1 on
        // the way down and the degenerate zero-initialized entries are never hit.
        for (std::size_t c = clusters - 1; c >= 1; --c) {
            b = splits_[c][b];
            bounds[c] = b;
        }
        bounds[0] = 0;
        return bounds;
    }

private:
    // Quadratic scans stay exact and simple; the divide-and-conquer fill
    // exploits monotone split positions of the concave-Monge interval cost for
    // large instances. Both produce identical row values (same candidate set,
    // true minimum); unit tests enforce the A/B agreement.
    static constexpr std::size_t kQuadraticCutoff = 256;

    void fill_quadratic(std::size_t c, std::vector<double>& row,
                        std::vector<std::uint32_t>& split) const {
        const std::size_t n = n_points();
        const std::vector<double>& prev = rows_[c - 1];
        for (std::size_t b = c + 1; b <= n; ++b) {
            double best = prev[c] + interval_cost(c, b);
            std::uint32_t best_s = static_cast<std::uint32_t>(c);
            for (std::size_t s = c + 1; s < b; ++s) {
                double cand = prev[s] + interval_cost(s, b);
                if (cand < best) { best = cand; best_s = static_cast<std::uint32_t>(s); }
            }
            row[b] = best;
            split[b] = best_s;
        }
    }

    void fill_divide_conquer(std::size_t c, std::vector<double>& row,
                             std::vector<std::uint32_t>& split) const {
        dc_fill(c, c + 1, n_points(), c, n_points() - 1, row, split);
    }

    void dc_fill(std::size_t c, std::size_t b_lo, std::size_t b_hi,
                 std::size_t s_lo, std::size_t s_hi,
                 std::vector<double>& row, std::vector<std::uint32_t>& split) const {
        if (b_lo > b_hi) return;
        const std::vector<double>& prev = rows_[c - 1];
        std::size_t b = b_lo + (b_hi - b_lo) / 2;
        std::size_t hi = std::min(s_hi, b - 1);
        double best = prev[s_lo] + interval_cost(s_lo, b);
        std::size_t best_s = s_lo;
        for (std::size_t s = s_lo + 1; s <= hi; ++s) {
            double cand = prev[s] + interval_cost(s, b);
            if (cand < best) { best = cand; best_s = s; }
        }
        row[b] = best;
        split[b] = static_cast<std::uint32_t>(best_s);
        if (b > b_lo) dc_fill(c, b_lo, b - 1, s_lo, best_s, row, split);
        if (b < b_hi) dc_fill(c, b + 1, b_hi, best_s, s_hi, row, split);
    }

    WeightedPoints pts_;
    std::vector<double> pw_, ps_, pq_;            // prefix sums of w, w*v, w*v^2
    std::vector<std::vector<double>> rows_;       // rows_[c][b]: first b points, c+1 clusters
    std::vector<std::vector<std::uint32_t>> splits_;
};

inline double optimal_loss(const WeightedPoints& points, std::size_t clusters) {
    if (clusters == 0 || clusters > points.size())
        throw std::invalid_argument("optimal_loss: clusters must be in [1, n]");
    KMeansTable t(points);
    for (std::size_t c = 0; c < clusters; ++c) t.fill_next_row();
    return t.loss(clusters);
}

struct RegularizedMin {
    double loss = 0.0;        // k-means loss component at the minimizer
    std::size_t clusters = 1; // minimizing cluster count (smallest on ties)
    double total = 0.0;       // loss + lambda_scaled * clusters
};

// Minimizes loss(C) + lambda_scaled * C over C >= 1, filling DP rows lazily.
// loss(C) is convex in C for contiguous 1-D clusterings, so once the marginal
// improvement loss(C-1) - loss(C) drops to lambda_scaled or below, no larger C
// can win and the scan stops. The C = 1 row is always evaluated first.
inline RegularizedMin regularized_min(const WeightedPoints& points, double lambda_scaled) {
    if (!(lambda_scaled >= 0.0))
        throw std::invalid_argument("regularized_min: lambda_scaled must be >= 0");
    KMeansTable t(points);
    const std::size_t n = points.size();
    RegularizedMin best;
    double prev_loss = 0.0;
    for (std::size_t C = 1; C <= n; ++C) {
        t.fill_next_row();
        double cur = t.loss(C);
        double total = cur + lambda_scaled * static_cast<double>(C);
        if (C == 1 || total < best.total) {
            best.loss = cur;
            best.clusters = C;
            best.total = total;
        }
        if (C > 1 && prev_loss - cur <= lambda_scaled) break;
        prev_loss = cur;
    }
    return best;
}

} // namespace srtree
