#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "bounds.hpp"
#include "dataset.hpp"
#include "model.hpp"
#include "support_set.hpp"

namespace srtree {

enum class BoundMode { kmeans_equiv, equiv_only };
enum class SolveStatus { optimal, timeout };

struct SolverConfig {
    double lambda = 0.01;
    std::optional<int> depth_limit;      // max branch tests on any root-to-leaf path
    std::optional<double> time_limit_s;  // soft: best incumbent is returned on expiry
    BoundMode bound_mode = BoundMode::kmeans_equiv;
    bool leaf_budget_pruning = true;
    bool greedy_warm_start = false;
    std::size_t trace_every = 256;       // work-loop iterations between trace records
    std::size_t memory_cap_bytes = std::size_t{8} << 30;
};

struct TraceRecord {
    double wall_time_s = 0.0;
    double root_lb = 0.0;
    double root_ub = 0.0;
    std::size_t graph_size = 0;
    std::size_t iterations = 0;
};

struct SolveResult {
    Tree tree;
    SolveStatus status = SolveStatus::optimal;
    double objective = 0.0;   // objective of the returned tree (root upper bound)
    double root_lb = 0.0;
    double gap = 0.0;         // objective - root_lb, zero once proven optimal
    std::size_t iterations = 0;
    std::size_t expansions = 0;
    std::size_t graph_size = 0;
    double wall_time_s = 0.0;
    std::vector<TraceRecord> trace;
};

struct MemoryCapError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double bound_epsilon(double ub) {
    return 1e-9 * std::max(1.0, std::abs(ub));
}

// Safety margin for pruning comparisons: an ulp-level wobble in a lower bound
// must never be what removes a candidate.
inline double prune_margin(double x) {
    return 1e-12 * std::max(1.0, std::abs(x));
}

// Largest leaf count any improving subtree can have, given the subproblem's
// current incumbent objective: objective >= lambda * leaves, capped by the
// feature count (2^M distinct paths) and the remaining depth (2^d leaves).
inline std::size_t leaf_budget(double incumbent, double lambda,
                               std::size_t n_features, int depth_budget) {
    std::size_t budget = std::numeric_limits<std::size_t>::max();
    if (lambda > 0.0) {
        double b = std::floor(incumbent / lambda + 1e-9); // guard the division's rounding
        budget = b < 0 ? 0 : (b > 1e18 ? budget : static_cast<std::size_t>(b));
    }
    if (n_features < 40)
        budget = std::min(budget, std::size_t{1} << n_features);
    if (depth_budget >= 0 && depth_budget < 40)
        budget = std::min(budget, std::size_t{1} << depth_budget);
    return budget;
}

inline bool prune_by_leaf_count(double incumbent, double lambda,
                                std::size_t n_features, int depth_budget) {
    return leaf_budget(incumbent, lambda, n_features, depth_budget) < 2;
}

class Solver {
public:
    Solver(const BinaryDataset& data, const SolverConfig& cfg) : d_(data), cfg_(cfg) {
        if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda))
            throw std::invalid_argument("solver: lambda must be finite and >= 0");
        if (cfg.depth_limit && *cfg.depth_limit < 1)
            throw std::invalid_argument("solver: depth_limit must be >= 1");
        if (cfg.time_limit_s && !(*cfg.time_limit_s > 0.0))
            throw std::invalid_argument("solver: time_limit_s must be > 0");
        if (cfg.trace_every == 0)
            throw std::invalid_argument("solver: trace_every must be >= 1");
        if (d_.n_rows == 0 || d_.n_features == 0)
            throw std::invalid_argument("solver: empty dataset");
        bcfg_.lambda = cfg.lambda;
        bcfg_.n_total = static_cast<double>(d_.n_rows);
        bcfg_.use_kmeans_bound = cfg.bound_mode == BoundMode::kmeans_equiv;
    }

    SolveResult solve() {
        start_ = Clock::now();
        Node* root = get_or_create(SupportSet::full(d_.n_groups()),
                                   cfg_.depth_limit ? *cfg_.depth_limit : -1);
        root_ = root;

        if (cfg_.greedy_warm_start) {
            incumbent_ = greedy_tree(root->support, root->depth_budget);
            if (incumbent_ && incumbent_->training_objective < root->ub) {
                root->ub = incumbent_->training_objective;
                root->lb = std::min(root->lb, root->ub);
            }
        }

        emit_trace();
        SolveStatus status = work_loop();
        emit_trace();

        SolveResult res;
        res.status = status;
        res.tree = extract_tree();
        res.objective = root_->ub;
        res.root_lb = root_->lb;
        res.gap = std::max(0.0, root_->ub - root_->lb);
        res.iterations = iterations_;
        res.expansions = expansions_;
        res.graph_size = arena_.size();
        res.wall_time_s = elapsed();
        res.trace = std::move(trace_);
        return res;
    }

private:
    using Clock = std::chrono::steady_clock;

    struct Node;

    struct Split {
        int feature = -1;
        Node* left = nullptr;   // feature bit 1 ("true" edge)
        Node* right = nullptr;  // feature bit 0
        bool active = true;
        double lb_sum() const { return left->lb + right->lb; }
        double ub_sum() const { return left->ub + right->ub; }
    };

    struct Node {
        SupportSet support;
        int depth_budget = -1;   // -1: unlimited
        double size = 0.0, sum = 0.0; // support sample count and target sum
        double leaf_obj = 0.0;   // exact single-leaf objective
        double lb = 0.0, ub = 0.0;
        bool expanded = false;
        bool terminal = false;   // proven leaf-optimal without expansion
        std::uint64_t seq = 0;
        std::vector<Split> splits;
        std::vector<Node*> parents;

        bool converged() const { return ub - lb <= bound_epsilon(ub); }
    };

    struct QueueEntry {
        double gap;
        std::size_t support_size;
        std::uint64_t seq;
        Node* node;
        // Largest gap first; ties to smaller support, then creation order.
        bool operator<(const QueueEntry& o) const {
            if (gap != o.gap) return gap < o.gap;
            if (support_size != o.support_size) return support_size > o.support_size;
            return seq > o.seq;
        }
    };

    double elapsed() const {
        return std::chrono::duration<double>(Clock::now() - start_).count();
    }

    Node* find(const SupportSet& support, int budget) {
        auto it = table_.find(key_of(support, budget));
        if (it == table_.end()) return nullptr;
        for (Node* n : it->second)
            if (n->depth_budget == budget && n->support == support) return n;
        return nullptr;
    }

    static std::uint64_t key_of(const SupportSet& support, int budget) {
        // Budget folded into the hash; exact equality is re-checked on lookup.
        return support.hash() ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(budget + 2));
    }

    Node* get_or_create(const SupportSet& support, int budget) {
        if (Node* n = find(support, budget)) return n;

        SubproblemStats stats = stats_from_group_support(d_, support);
        arena_.emplace_back();
        Node* n = &arena_.back();
        n->support = support;
        n->depth_budget = budget;
        n->seq = next_seq_++;
        n->size = stats.support_size;
        n->sum = stats.target_sum;
        double sse = stats.leaf_sse();
        n->leaf_obj = sse / bcfg_.n_total + cfg_.lambda;
        n->ub = n->leaf_obj;

        // A split is pointless when the support cannot be divided (one
        // equivalent set), the depth budget is exhausted, or even a perfect
        // split cannot recoup one extra leaf penalty (SSE/N <= lambda).
        bool no_split = support.popcount() <= 1 || budget == 0 ||
                        sse <= cfg_.lambda * bcfg_.n_total;
        if (no_split) {
            n->terminal = true;
            n->lb = n->ub;
        } else {
            double analytic = analytic_lower_bound(stats, bcfg_);
            n->lb = std::min(analytic, n->ub);
            if (!n->converged()) queue_.push(QueueEntry{n->ub - n->lb, support.popcount(), n->seq, n});
        }

        memory_bytes_ += support.memory_bytes() + sizeof(Node) + 64;
        if (memory_bytes_ > cfg_.memory_cap_bytes)
            throw MemoryCapError("solver: dependency graph exceeded the memory cap");
        table_[key_of(support, budget)].push_back(n);
        return n;
    }

    // Recomputes a node's bounds from its leaf option and active splits,
    // deactivating splits that can no longer beat the node's upper bound.
    // Bounds only tighten. Returns whether anything moved.
    bool recompute_bounds(Node* n) {
        double old_lb = n->lb, old_ub = n->ub;

        double ub = n->leaf_obj;
        for (const Split& s : n->splits)
            if (s.active) ub = std::min(ub, s.ub_sum());
        n->ub = std::min(n->ub, ub);

        for (Split& s : n->splits)
            if (s.active && s.lb_sum() > n->ub + prune_margin(n->ub)) s.active = false;

        double lb = n->leaf_obj;
        for (const Split& s : n->splits)
            if (s.active) lb = std::min(lb, s.lb_sum());
        n->lb = std::max(n->lb, std::min(lb, n->ub));
        // The upper bound can round one ulp below an analytic bound taken at
        // creation; the reported pair must still satisfy lb <= ub.
        if (n->lb > n->ub) n->lb = n->ub;

        return n->lb != old_lb || n->ub != old_ub;
    }

    void propagate_from(Node* n) {
        std::vector<Node*> stack = {n};
        while (!stack.empty()) {
            Node* cur = stack.back();
            stack.pop_back();
            for (Node* p : cur->parents)
                if (recompute_bounds(p)) stack.push_back(p);
        }
    }

    void expand(Node* n) {
        ++expansions_;
        if (cfg_.leaf_budget_pruning &&
            prune_by_leaf_count(n->ub, cfg_.lambda, d_.n_features, n->depth_budget)) {
            // Any split pays for at least two leaves; the budget says that
            // already exceeds the incumbent, so the leaf is final.
            n->terminal = true;
            n->expanded = true;
            n->lb = n->ub = n->leaf_obj;
            propagate_from(n);
            return;
        }

        int child_budget = n->depth_budget < 0 ? -1 : n->depth_budget - 1;
        // Distinct features can induce the same left/right partition of this
        // support; only the first one becomes a split. Exact word comparison,
        // not just hashes.
        std::vector<SupportSet> seen;
        for (std::size_t j = 0; j < d_.n_features; ++j) {
            SupportSet left_sup = n->support.intersect(d_.group_feature_masks[j]);
            if (left_sup.popcount() == 0 || left_sup.popcount() == n->support.popcount())
                continue;
            bool dup = false;
            for (const SupportSet& s : seen)
                if (s == left_sup) { dup = true; break; }
            if (dup) continue;
            SupportSet right_sup = n->support.subtract(d_.group_feature_masks[j]);
            seen.push_back(left_sup);
            seen.push_back(right_sup);

            Node* left = get_or_create(left_sup, child_budget);
            Node* right = get_or_create(std::move(right_sup), child_budget);
            if (left->lb + right->lb > n->ub + prune_margin(n->ub))
                continue; // dominated before it ever becomes a split
            n->splits.push_back(Split{static_cast<int>(j), left, right, true});
            left->parents.push_back(n);
            right->parents.push_back(n);
        }
        n->expanded = true;
        recompute_bounds(n);
        propagate_from(n);
    }

    SolveStatus work_loop() {
        while (true) {
            if (root_->converged()) return SolveStatus::optimal;
            if (cfg_.time_limit_s && elapsed() > *cfg_.time_limit_s)
                return SolveStatus::timeout;
            if (queue_.empty())
                throw std::logic_error("solver: dependency graph inconsistent "
                                       "(queue drained before the root converged)");
            QueueEntry e = queue_.top();
            queue_.pop();
            ++iterations_;
            Node* n = e.node;
            if (!n->expanded && !n->terminal && !n->converged()) expand(n);
            if (iterations_ % cfg_.trace_every == 0 ||
                root_->lb != last_traced_lb_ || root_->ub != last_traced_ub_)
                emit_trace();
        }
    }

    void emit_trace() {
        trace_.push_back(TraceRecord{elapsed(), root_->lb, root_->ub,
                                     arena_.size(), iterations_});
        last_traced_lb_ = root_->lb;
        last_traced_ub_ = root_->ub;
    }

    // ---- extraction ----

    int extract_node(Node* n, Tree& t) {
        int idx = static_cast<int>(t.nodes.size());
        t.nodes.emplace_back();

        const Split* best = nullptr;
        if (!n->terminal && n->leaf_obj > n->ub) {
            double best_sum = std::numeric_limits<double>::infinity();
            for (const Split& s : n->splits)
                if (s.active && s.ub_sum() < best_sum) { best_sum = s.ub_sum(); best = &s; }
            // Ties prefer the leaf, then the smallest feature index; splits_ is
            // already in feature order and `<` keeps the first of equal sums.
            if (best && best_sum > n->ub + prune_margin(n->ub))
                best = nullptr; // upper bound held by the warm-start incumbent
        }

        if (!best) {
            TreeNode& leaf = t.nodes[static_cast<std::size_t>(idx)];
            leaf.is_leaf = true;
            leaf.prediction = n->sum / n->size;
            leaf.count = static_cast<std::size_t>(n->size);
            return idx;
        }
        int feature = best->feature;
        int yes = extract_node(best->left, t);
        int no = extract_node(best->right, t);
        TreeNode& branch = t.nodes[static_cast<std::size_t>(idx)];
        branch.is_leaf = false;
        branch.feature = feature;
        branch.predicate = d_.feature_meta[static_cast<std::size_t>(feature)].predicate;
        branch.yes = yes;
        branch.no = no;
        return idx;
    }

    Tree extract_tree() {
        // A warm-start incumbent that no graph path has matched yet is the
        // upper bound's witness; return it directly.
        if (incumbent_ && root_->ub == incumbent_->training_objective) {
            bool graph_matches = root_->leaf_obj <= root_->ub;
            for (const Split& s : root_->splits)
                if (s.active && s.ub_sum() <= root_->ub + prune_margin(root_->ub))
                    graph_matches = true;
            if (!graph_matches) {
                Tree t = *incumbent_;
                t.lambda = cfg_.lambda;
                return t;
            }
        }
        Tree t;
        t.lambda = cfg_.lambda;
        t.root = extract_node(root_, t);
        t.training_objective = root_->ub;
        return t;
    }

    // ---- greedy warm start (optional) ----

    std::optional<Tree> greedy_tree(const SupportSet& support, int budget) {
        Tree t;
        t.lambda = cfg_.lambda;
        double objective = greedy_node(support, budget, t);
        if (t.nodes.empty()) return std::nullopt;
        t.training_objective = objective;
        return t;
    }

    // Builds a CART-style tree: take the single split with the largest SSE
    // reduction while it beats one extra leaf penalty. Returns the subtree's
    // objective contribution. Only used to seed the root upper bound.
    double greedy_node(const SupportSet& support, int budget, Tree& t) {
        SubproblemStats stats = stats_from_group_support(d_, support);
        double leaf_obj = stats.leaf_sse() / bcfg_.n_total + cfg_.lambda;
        int best_j = -1;
        double best_child_sse = 0.0;
        SupportSet best_left, best_right;
        if (budget != 0 && support.popcount() > 1) {
            for (std::size_t j = 0; j < d_.n_features; ++j) {
                SupportSet left = support.intersect(d_.group_feature_masks[j]);
                if (left.popcount() == 0 || left.popcount() == support.popcount()) continue;
                SupportSet right = support.subtract(d_.group_feature_masks[j]);
                double child_sse = stats_from_group_support(d_, left).leaf_sse() +
                                   stats_from_group_support(d_, right).leaf_sse();
                if (best_j < 0 || child_sse < best_child_sse) {
                    best_j = static_cast<int>(j);
                    best_child_sse = child_sse;
                    best_left = std::move(left);
                    best_right = std::move(right);
                }
            }
        }
        if (best_j < 0 ||
            stats.leaf_sse() - best_child_sse <= cfg_.lambda * bcfg_.n_total) {
            int idx = static_cast<int>(t.nodes.size());
            t.nodes.emplace_back();
            TreeNode& leaf = t.nodes[static_cast<std::size_t>(idx)];
            leaf.is_leaf = true;
            leaf.prediction = stats.target_sum / stats.support_size;
            leaf.count = static_cast<std::size_t>(stats.support_size);
            return leaf_obj;
        }
        int idx = static_cast<int>(t.nodes.size());
        t.nodes.emplace_back();
        int child_budget = budget < 0 ? -1 : budget - 1;
        double obj_yes = greedy_node(best_left, child_budget, t);
        int yes = idx + 1; // left subtree laid out immediately after the branch
        std::size_t no_start = t.nodes.size();
        double obj_no = greedy_node(best_right, child_budget, t);
        TreeNode& branch = t.nodes[static_cast<std::size_t>(idx)];
        branch.is_leaf = false;
        branch.feature = best_j;
        branch.predicate = d_.feature_meta[static_cast<std::size_t>(best_j)].predicate;
        branch.yes = yes;
        branch.no = static_cast<int>(no_start);
        return obj_yes + obj_no;
    }

    const BinaryDataset& d_;
    SolverConfig cfg_;
    BoundConfig bcfg_;
    Clock::time_point start_;

    std::deque<Node> arena_;
    std::unordered_map<std::uint64_t, std::vector<Node*>> table_;
    std::priority_queue<QueueEntry> queue_;
    Node* root_ = nullptr;
    std::optional<Tree> incumbent_;

    std::uint64_t next_seq_ = 0;
    std::size_t iterations_ = 0;
    std::size_t expansions_ = 0;
    std::size_t memory_bytes_ = 0;
    std::vector<TraceRecord> trace_;
    double last_traced_lb_ = -1.0, last_traced_ub_ = -1.0;
};

inline SolveResult solve(const BinaryDataset& data, const SolverConfig& cfg) {
    return Solver(data, cfg).solve();
}

} // namespace srtree
