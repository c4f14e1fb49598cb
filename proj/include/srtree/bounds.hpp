#pragma once

#include <stdexcept>
#include <vector>

#include "dataset.hpp"
#include "kmeans1d.hpp"
#include "support_set.hpp"

namespace srtree {

// Everything here works in normalized objective units: per-leaf loss summed in
// raw form internally, divided by the *total* training sample count exactly
// once at the return boundary, plus lambda per leaf. A bound value is therefore
// directly comparable with any subtree objective on the same support.

// One equivalent set restricted to the support: how many of its rows are in,
// and their target sums. When the support is a union of whole sets (the only
// shape the solver ever produces) these equal the global set stats.
struct GroupView {
    double size = 0.0;
    double sum = 0.0;
    double sqsum = 0.0;
};

struct SubproblemStats {
    double support_size = 0.0;
    double target_sum = 0.0;
    double target_sq_sum = 0.0;
    std::vector<GroupView> groups; // equivalent sets intersecting the support

    // Raw SSE of a single leaf covering the support, guarded against the tiny
    // negative residue of the two-term form.
    double leaf_sse() const {
        double sse = target_sq_sum - target_sum * target_sum / support_size;
        return sse > 0.0 ? sse : 0.0;
    }
};

struct BoundConfig {
    double lambda = 0.0;       // per-leaf penalty, normalized units
    double n_total = 0.0;      // total training samples (the normalizer)
    bool use_kmeans_bound = true;
};

inline void check_stats(const SubproblemStats& stats, const BoundConfig& cfg) {
    if (!(stats.support_size > 0.0))
        throw std::invalid_argument("bounds: empty support");
    if (!(cfg.n_total > 0.0) || !(cfg.lambda >= 0.0))
        throw std::invalid_argument("bounds: invalid config");
}

// Objective of replacing the whole subproblem by one leaf: SSE/N + lambda.
inline double leaf_objective(const SubproblemStats& stats, const BoundConfig& cfg) {
    check_stats(stats, cfg);
    return stats.leaf_sse() / cfg.n_total + cfg.lambda;
}

// Raw sum of within-set SSEs over the support: no tree can distinguish rows of
// the same equivalent set, so this loss is irreducible by any split.
inline double equivalence_floor_raw(const SubproblemStats& stats) {
    double floor = 0.0;
    for (const GroupView& g : stats.groups) {
        double sse = g.sqsum - g.sum * g.sum / g.size;
        if (sse > 0.0) floor += sse;
    }
    return floor;
}

// Lower bound: irreducible equivalence loss plus one leaf's penalty.
inline double equivalent_points_bound(const SubproblemStats& stats, const BoundConfig& cfg) {
    check_stats(stats, cfg);
    if (stats.groups.empty())
        throw std::invalid_argument("equivalent_points_bound: stats lack the equivalent-set view");
    return equivalence_floor_raw(stats) / cfg.n_total + cfg.lambda;
}

// Lower bound: any subtree with C leaves partitions the support's rows into C
// prediction groups, and its loss is at least the best 1-D k-means loss of the
// targets with C clusters. Restricting clusterings to keep equivalent sets
// whole reduces each set to one weighted point at its target mean; the dropped
// within-set SSE is added back as a constant correction. Minimizing over C with
// the per-leaf penalty stays below every achievable subtree objective.
inline double kmeans_equiv_bound(const SubproblemStats& stats, const BoundConfig& cfg) {
    check_stats(stats, cfg);
    if (stats.groups.empty())
        throw std::invalid_argument("kmeans_equiv_bound: stats lack the equivalent-set view");
    std::vector<double> values, weights;
    values.reserve(stats.groups.size());
    weights.reserve(stats.groups.size());
    for (const GroupView& g : stats.groups) {
        values.push_back(g.sum / g.size);
        weights.push_back(g.size);
    }
    RegularizedMin rm = regularized_min(build_weighted_points(values, weights),
                                        cfg.lambda * cfg.n_total);
    double correction = equivalence_floor_raw(stats);
    return (rm.loss + correction) / cfg.n_total +
           cfg.lambda * static_cast<double>(rm.clusters);
}

// The bound the solver seeds a fresh subproblem with.
inline double analytic_lower_bound(const SubproblemStats& stats, const BoundConfig& cfg) {
    return cfg.use_kmeans_bound ? kmeans_equiv_bound(stats, cfg)
                                : equivalent_points_bound(stats, cfg);
}

// Lower bound of splitting into two fixed disjoint children: bounds add because
// the objective decomposes over the two sides. Callers guarantee disjointness
// (the solver splits by a feature mask, which cannot overlap).
inline double split_lower_bound(const SubproblemStats& left, const SubproblemStats& right,
                                const BoundConfig& cfg) {
    return analytic_lower_bound(left, cfg) + analytic_lower_bound(right, cfg);
}

// ---------------------------------------------------------------------------
// Stats builders
// ---------------------------------------------------------------------------

// Arbitrary sample-level support (tests, tools): group views are recomputed
// locally because the mask may cut through equivalent sets.
inline SubproblemStats stats_from_sample_mask(const BinaryDataset& d,
                                              const std::vector<std::uint8_t>& mask) {
    if (mask.size() != d.n_rows)
        throw std::invalid_argument("stats_from_sample_mask: mask length mismatch");
    SubproblemStats st;
    std::vector<GroupView> local(d.n_groups());
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        if (!mask[i]) continue;
        double y = d.targets[i];
        st.support_size += 1.0;
        st.target_sum += y;
        st.target_sq_sum += y * y;
        GroupView& g = local[d.row_group[i]];
        g.size += 1.0;
        g.sum += y;
        g.sqsum += y * y;
    }
    for (const GroupView& g : local)
        if (g.size > 0.0) st.groups.push_back(g);
    return st;
}

// Solver path: the support is a union of whole equivalent sets, identified by
// group indices, so the global per-set stats apply unchanged.
inline SubproblemStats stats_from_group_support(const BinaryDataset& d, const SupportSet& support) {
    SubproblemStats st;
    st.groups.reserve(support.popcount());
    support.for_each_set([&](std::size_t g) {
        const EquivalentSet& e = d.equivalent_sets[g];
        st.support_size += static_cast<double>(e.size);
        st.target_sum += e.target_sum;
        st.target_sq_sum += e.target_sq_sum;
        st.groups.push_back(GroupView{static_cast<double>(e.size), e.target_sum, e.target_sq_sum});
    });
    return st;
}

} // namespace srtree
