#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"

namespace srtree {

// A trained tree as a flat arena. Branches route on one binary feature: bit 1
// follows the "true" edge. Leaves carry the mean-target prediction and the
// training support count.
struct TreeNode {
    bool is_leaf = true;
    int feature = -1;
    std::string predicate;  // human-readable test of the branch feature
    int yes = -1, no = -1;  // child indices within the arena
    double prediction = 0.0;
    std::size_t count = 0;
};

struct Tree {
    std::vector<TreeNode> nodes; // root at index 0
    int root = 0;
    // Training metadata (not part of the serialized model).
    double lambda = 0.0;
    double training_objective = 0.0;

    bool empty() const { return nodes.empty(); }

    std::size_t leaf_count() const {
        std::size_t c = 0;
        for (const TreeNode& n : nodes) c += n.is_leaf;
        return c;
    }

    // Longest root-to-leaf path, counted in branch tests (a lone leaf is depth 0).
    std::size_t depth() const { return depth_below(root); }

    std::size_t depth_below(int idx) const {
        const TreeNode& n = nodes[static_cast<std::size_t>(idx)];
        if (n.is_leaf) return 0;
        return 1 + std::max(depth_below(n.yes), depth_below(n.no));
    }

    // Smallest row width the tree can route.
    std::size_t required_features() const {
        std::size_t m = 0;
        for (const TreeNode& n : nodes)
            if (!n.is_leaf) m = std::max(m, static_cast<std::size_t>(n.feature) + 1);
        return m;
    }
};

template <typename BitFn>
inline double predict_with(const Tree& t, BitFn&& bit) {
    if (t.empty()) throw std::logic_error("predict: empty tree");
    int idx = t.root;
    for (;;) {
        const TreeNode& n = t.nodes[static_cast<std::size_t>(idx)];
        if (n.is_leaf) return n.prediction;
        idx = bit(static_cast<std::size_t>(n.feature)) ? n.yes : n.no;
    }
}

inline double predict(const Tree& t, const BinaryDataset& d, std::size_t row) {
    if (d.n_features < t.required_features())
        throw std::invalid_argument("predict: row narrower than the tree's feature space");
    return predict_with(t, [&](std::size_t j) { return d.bit(row, j); });
}

inline double predict(const Tree& t, const std::vector<std::uint8_t>& row) {
    if (row.size() < t.required_features())
        throw std::invalid_argument("predict: row narrower than the tree's feature space");
    return predict_with(t, [&](std::size_t j) { return row[j] != 0; });
}

struct EvalReport {
    double mse = 0.0;
    double r_squared = 0.0;
    std::size_t n = 0;
};

// Training-style evaluation: MSE of routed predictions and R^2 against the
// evaluation set's own target variance.
inline EvalReport evaluate(const Tree& t, const BinaryDataset& d) {
    if (d.n_rows == 0) throw std::invalid_argument("evaluate: empty dataset");
    EvalReport r;
    r.n = d.n_rows;
    double se = 0.0;
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        double e = d.targets[i] - predict(t, d, i);
        se += e * e;
    }
    r.mse = se / static_cast<double>(d.n_rows);
    double sst = d.target_sst();
    if (sst > 0.0) r.r_squared = 1.0 - se / sst;
    else r.r_squared = se == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    return r;
}

// ---------------------------------------------------------------------------
// Serialization: nested objects, {"feature", "name", "true", "false"} for a
// branch and {"prediction", "count"} for a leaf. The document root is the tree
// root, so a hand-written single-leaf file is a valid model.
// ---------------------------------------------------------------------------

inline nlohmann::json serialize_node(const Tree& t, int idx) {
    const TreeNode& n = t.nodes[static_cast<std::size_t>(idx)];
    nlohmann::json j;
    if (n.is_leaf) {
        j["prediction"] = n.prediction;
        j["count"] = n.count;
    } else {
        j["feature"] = n.feature;
        j["name"] = n.predicate;
        j["true"] = serialize_node(t, n.yes);
        j["false"] = serialize_node(t, n.no);
    }
    return j;
}

inline nlohmann::json serialize(const Tree& t) {
    if (t.empty()) throw std::logic_error("serialize: empty tree");
    return serialize_node(t, t.root);
}

inline int deserialize_node(const nlohmann::json& j, Tree& t) {
    if (!j.is_object()) throw std::runtime_error("model JSON: node must be an object");
    int idx = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    if (j.contains("prediction")) {
        if (!j.contains("count"))
            throw std::runtime_error("model JSON: leaf missing 'count'");
        t.nodes[static_cast<std::size_t>(idx)].is_leaf = true;
        t.nodes[static_cast<std::size_t>(idx)].prediction = j.at("prediction").get<double>();
        t.nodes[static_cast<std::size_t>(idx)].count = j.at("count").get<std::size_t>();
        return idx;
    }
    if (!j.contains("feature") || !j.contains("true") || !j.contains("false"))
        throw std::runtime_error("model JSON: branch missing 'feature'/'true'/'false'");
    int feature = j.at("feature").get<int>();
    if (feature < 0) throw std::runtime_error("model JSON: negative feature index");
    std::string name = j.value("name", std::string{});
    int yes = deserialize_node(j.at("true"), t);
    int no = deserialize_node(j.at("false"), t);
    TreeNode& n = t.nodes[static_cast<std::size_t>(idx)];
    n.is_leaf = false;
    n.feature = feature;
    n.predicate = name.empty() ? "f" + std::to_string(feature) + " = 1" : name;
    n.yes = yes;
    n.no = no;
    return idx;
}

inline Tree deserialize(const nlohmann::json& j) {
    Tree t;
    t.root = deserialize_node(j, t);
    return t;
}

// ---------------------------------------------------------------------------
// Text rendering: one line per node, children indented two spaces under their
// branch, predictions at two decimals.
// ---------------------------------------------------------------------------

inline std::string format_prediction(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
}

inline void render_node(const Tree& t, int idx, int depth, std::string& out) {
    const TreeNode& n = t.nodes[static_cast<std::size_t>(idx)];
    if (n.is_leaf) {
        out += format_prediction(n.prediction);
        out += "\n";
        return;
    }
    out += n.predicate;
    out += "\n";
    std::string pad(static_cast<std::size_t>(depth + 1) * 2, ' ');
    out += pad + "T: ";
    render_node(t, n.yes, depth + 1, out);
    out += pad + "F: ";
    render_node(t, n.no, depth + 1, out);
}

inline std::string render_text(const Tree& t) {
    if (t.empty()) throw std::logic_error("render_text: empty tree");
    std::string out;
    render_node(t, t.root, 0, out);
    return out;
}

} // namespace srtree
