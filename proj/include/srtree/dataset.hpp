#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "support_set.hpp"

namespace srtree {

// ---------------------------------------------------------------------------
// Raw (pre-binarization) data
// ---------------------------------------------------------------------------

struct RawColumn {
    std::string name;
    bool numeric = false;              // every cell parsed as a double
    std::vector<double> values;        // filled when numeric
    std::vector<std::string> labels;   // always filled (original cell text)
};

struct RawDataset {
    std::vector<RawColumn> columns;    // feature columns, target excluded
    std::string target_name;
    std::vector<double> target;
    std::size_t n_rows = 0;
    std::size_t rows_dropped_missing = 0;
};

inline bool is_missing_cell(const std::string& s) {
    return s.empty() || s == "NA" || s == "na" || s == "?";
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

// Loads a CSV with a header row. `target` selects the target column by name;
// empty means the last column. Rows containing any missing cell (empty, NA, ?)
// are dropped before anything else happens.
inline RawDataset load_csv(const std::string& path, const std::string& target = "") {
    CsvTable t = read_csv(path);
    if (t.header.empty()) throw std::runtime_error("CSV has no columns: " + path);

    std::size_t target_idx = t.header.size() - 1;
    if (!target.empty()) {
        auto it = std::find(t.header.begin(), t.header.end(), target);
        if (it == t.header.end())
            throw std::runtime_error("target column '" + target + "' not found in " + path);
        target_idx = static_cast<std::size_t>(it - t.header.begin());
    }

    RawDataset d;
    d.target_name = t.header[target_idx];

    std::vector<std::vector<std::string>> kept;
    for (auto& row : t.rows) {
        bool missing = std::any_of(row.begin(), row.end(),
                                   [](const std::string& c) { return is_missing_cell(c); });
        if (missing) { ++d.rows_dropped_missing; continue; }
        kept.push_back(std::move(row));
    }
    if (kept.empty())
        throw std::runtime_error("no complete rows in " + path);

    d.n_rows = kept.size();
    for (std::size_t r = 0; r < kept.size(); ++r) {
        double y;
        if (!parse_double(kept[r][target_idx], y))
            throw std::runtime_error("non-numeric target value '" + kept[r][target_idx] +
                                     "' in " + path);
        d.target.push_back(y);
    }

    for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (j == target_idx) continue;
        RawColumn col;
        col.name = t.header[j];
        col.numeric = true;
        col.values.reserve(kept.size());
        col.labels.reserve(kept.size());
        for (const auto& row : kept) {
            col.labels.push_back(row[j]);
            double v = 0.0;
            if (col.numeric && parse_double(row[j], v)) col.values.push_back(v);
            else col.numeric = false;
        }
        if (!col.numeric) col.values.clear();
        d.columns.push_back(std::move(col));
    }
    return d;
}

// ---------------------------------------------------------------------------
// Binarization
// ---------------------------------------------------------------------------

struct BinarizeOptions {
    int buckets = 4;                      // equal-width intervals per continuous column
    std::set<std::string> categorical;    // numeric columns to treat as categorical
    bool drop_first_bucket = true;        // drop the reference interval of each continuous column
    bool drop_first_level = false;        // drop the first sorted level of each categorical column
    bool adjacent_thresholds = false;     // thresholds at midpoints of adjacent distinct values
    bool dedup_columns = true;            // drop binary columns identical to an earlier one
};

struct FeatureMeta {
    enum class Kind { interval, threshold, level };
    Kind kind = Kind::interval;
    std::string source;     // raw column name
    double lo = 0.0, hi = 0.0; // interval bounds (interval/threshold kinds)
    bool closed_left = false;  // first interval: lo is included (covers v == min)
    std::string level;      // categorical level (level kind)
    std::string predicate;  // human-readable test, true when the bit is 1
};

// Rows identical in every binary feature. `equivalence_loss` is the within-set
// SSE of the target divided by the *total* sample count, so summing it over all
// sets gives the irreducible part of the normalized single-leaf loss.
struct EquivalentSet {
    std::vector<std::uint32_t> members;
    std::size_t size = 0;
    double target_sum = 0.0;
    double target_sq_sum = 0.0;
    double target_mean = 0.0;
    double equivalence_loss = 0.0;
};

class BinaryDataset {
public:
    std::size_t n_rows = 0;
    std::size_t n_features = 0;
    std::vector<double> targets;
    std::vector<FeatureMeta> feature_meta;

    // Row-major packed bits, words_per_row() words per row.
    std::vector<std::uint64_t> row_bits;

    // Equivalent-point structure (always built).
    std::vector<EquivalentSet> equivalent_sets;
    std::vector<std::uint32_t> row_group;          // row index -> group index
    std::vector<SupportSet> group_feature_masks;   // per feature: groups with bit 1

    std::size_t words_per_row() const { return (n_features + 63) / 64; }

    bool bit(std::size_t row, std::size_t feature) const {
        const std::uint64_t* w = &row_bits[row * words_per_row()];
        return (w[feature / 64] >> (feature % 64)) & 1u;
    }

    std::size_t n_groups() const { return equivalent_sets.size(); }

    double target_sum() const {
        double s = 0.0;
        for (double y : targets) s += y;
        return s;
    }

    double target_sst() const {
        double mean = target_sum() / static_cast<double>(n_rows);
        double sst = 0.0;
        for (double y : targets) sst += (y - mean) * (y - mean);
        return sst;
    }

    nlohmann::json feature_meta_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (std::size_t j = 0; j < feature_meta.size(); ++j) {
            const FeatureMeta& m = feature_meta[j];
            nlohmann::json e;
            e["index"] = j;
            e["source"] = m.source;
            e["predicate"] = m.predicate;
            switch (m.kind) {
                case FeatureMeta::Kind::interval:
                    e["kind"] = "interval"; e["lo"] = m.lo; e["hi"] = m.hi;
                    e["closed_left"] = m.closed_left; break;
                case FeatureMeta::Kind::threshold:
                    e["kind"] = "threshold"; e["hi"] = m.hi; break;
                case FeatureMeta::Kind::level:
                    e["kind"] = "level"; e["level"] = m.level; break;
            }
            arr.push_back(std::move(e));
        }
        return arr;
    }

    void export_binarized_csv(const std::string& path, const std::string& target_name) const {
        CsvTable t;
        for (const auto& m : feature_meta) t.header.push_back(m.predicate);
        t.header.push_back(target_name.empty() ? "target" : target_name);
        t.rows.reserve(n_rows);
        for (std::size_t i = 0; i < n_rows; ++i) {
            std::vector<std::string> row;
            row.reserve(n_features + 1);
            for (std::size_t j = 0; j < n_features; ++j) row.push_back(bit(i, j) ? "1" : "0");
            row.push_back(format_number(targets[i], 17));
            t.rows.push_back(std::move(row));
        }
        write_csv(path, t);
    }
};

// Groups rows by their full bit pattern. Group order is first-occurrence order.
inline std::vector<EquivalentSet> group_equivalent_points(const std::vector<std::uint64_t>& row_bits,
                                                          std::size_t words_per_row,
                                                          const std::vector<double>& targets,
                                                          std::vector<std::uint32_t>* row_group_out = nullptr) {
    const std::size_t n = targets.size();
    std::vector<EquivalentSet> sets;
    std::vector<std::uint32_t> row_group(n);

    struct PatternHash {
        std::size_t operator()(const std::vector<std::uint64_t>& v) const {
            std::uint64_t h = 0x9e3779b97f4a7c15ull;
            for (std::uint64_t w : v) {
                h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            }
            return static_cast<std::size_t>(h);
        }
    };
    std::unordered_map<std::vector<std::uint64_t>, std::uint32_t, PatternHash> index;
    index.reserve(n * 2);

    std::vector<std::uint64_t> key(words_per_row);
    for (std::size_t i = 0; i < n; ++i) {
        key.assign(row_bits.begin() + static_cast<std::ptrdiff_t>(i * words_per_row),
                   row_bits.begin() + static_cast<std::ptrdiff_t>((i + 1) * words_per_row));
        auto [it, inserted] = index.try_emplace(key, static_cast<std::uint32_t>(sets.size()));
        if (inserted) sets.emplace_back();
        EquivalentSet& g = sets[it->second];
        g.members.push_back(static_cast<std::uint32_t>(i));
        g.size += 1;
        g.target_sum += targets[i];
        g.target_sq_sum += targets[i] * targets[i];
        row_group[i] = it->second;
    }

    for (EquivalentSet& g : sets) {
        g.target_mean = g.target_sum / static_cast<double>(g.size);
        double sse = g.target_sq_sum - g.target_sum * g.target_sum / static_cast<double>(g.size);
        if (sse < 0) sse = 0; // guard tiny negative residue of the two-term form
        g.equivalence_loss = sse / static_cast<double>(n);
    }
    if (row_group_out) *row_group_out = std::move(row_group);
    return sets;
}

namespace detail {

struct PendingFeature {
    FeatureMeta meta;
    std::vector<std::uint8_t> bits; // one per row
};

// Builds the equivalent-set structure and per-feature group masks. Rows in the
// same group share every feature bit, so the first member's bit speaks for all.
inline void finalize_groups(BinaryDataset& d) {
    d.equivalent_sets = group_equivalent_points(d.row_bits, d.words_per_row(),
                                                d.targets, &d.row_group);
    d.group_feature_masks.clear();
    d.group_feature_masks.reserve(d.n_features);
    for (std::size_t j = 0; j < d.n_features; ++j) {
        SupportSet mask = SupportSet::empty(d.equivalent_sets.size());
        for (std::size_t g = 0; g < d.equivalent_sets.size(); ++g)
            if (d.bit(d.equivalent_sets[g].members[0], j)) mask.set(g);
        d.group_feature_masks.push_back(std::move(mask));
    }
}

inline std::string interval_predicate(const std::string& col, double lo, double hi, bool first) {
    if (first) return col + " <= " + format_number(hi);
    return format_number(lo) + " < " + col + " <= " + format_number(hi);
}

} // namespace detail

// Turns raw columns into binary features:
//   - continuous columns: `buckets` equal-width intervals over the observed
//     [min, max], one feature per interval except the (optional) reference
//     interval; a value lands in interval k when t_{k-1} < v <= t_k, with the
//     first interval closed on the left so v == min is covered.
//   - categorical columns (non-numeric, or numeric names listed in
//     options.categorical): one feature per distinct level, optionally
//     dropping the first sorted level as reference.
//   - constant columns produce no features; with dedup_columns, a binary
//     column identical to an earlier one is dropped (first occurrence wins).
inline BinaryDataset binarize(const RawDataset& raw, const BinarizeOptions& options = {}) {
    if (options.buckets < 2) throw std::invalid_argument("binarize: buckets must be >= 2");
    const std::size_t n = raw.n_rows;
    std::vector<detail::PendingFeature> pending;

    for (const RawColumn& col : raw.columns) {
        bool categorical = !col.numeric || options.categorical.count(col.name) > 0;
        if (categorical) {
            // Distinct levels, sorted numerically when every level parses as a
            // number (so "10" sorts after "2"), lexicographically otherwise.
            std::vector<std::string> levels(col.labels);
            std::sort(levels.begin(), levels.end());
            levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
            bool all_numeric = true;
            std::vector<double> numeric_levels;
            for (const auto& s : levels) {
                double v;
                if (!parse_double(s, v)) { all_numeric = false; break; }
                numeric_levels.push_back(v);
            }
            if (all_numeric) {
                std::vector<std::size_t> order(levels.size());
                for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    return numeric_levels[a] < numeric_levels[b];
                });
                std::vector<std::string> sorted;
                for (std::size_t k : order) sorted.push_back(levels[k]);
                levels = std::move(sorted);
            }
            std::size_t start = options.drop_first_level && levels.size() > 1 ? 1 : 0;
            for (std::size_t k = start; k < levels.size(); ++k) {
                detail::PendingFeature f;
                f.meta.kind = FeatureMeta::Kind::level;
                f.meta.source = col.name;
                f.meta.level = levels[k];
                f.meta.predicate = col.name + " = " + levels[k];
                f.bits.resize(n);
                for (std::size_t i = 0; i < n; ++i) f.bits[i] = col.labels[i] == levels[k];
                pending.push_back(std::move(f));
            }
        } else if (options.adjacent_thresholds) {
            std::vector<double> distinct(col.values);
            std::sort(distinct.begin(), distinct.end());
            distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
            for (std::size_t k = 0; k + 1 < distinct.size(); ++k) {
                double t = (distinct[k] + distinct[k + 1]) / 2.0;
                detail::PendingFeature f;
                f.meta.kind = FeatureMeta::Kind::threshold;
                f.meta.source = col.name;
                f.meta.hi = t;
                f.meta.predicate = col.name + " <= " + format_number(t);
                f.bits.resize(n);
                for (std::size_t i = 0; i < n; ++i) f.bits[i] = col.values[i] <= t;
                pending.push_back(std::move(f));
            }
        } else {
            double lo = *std::min_element(col.values.begin(), col.values.end());
            double hi = *std::max_element(col.values.begin(), col.values.end());
            if (!(hi > lo)) continue; // constant column
            const int B = options.buckets;
            std::vector<double> edges(static_cast<std::size_t>(B) + 1);
            for (int k = 0; k <= B; ++k)
                edges[static_cast<std::size_t>(k)] = lo + (hi - lo) * static_cast<double>(k) / B;
            edges[0] = lo;
            edges[static_cast<std::size_t>(B)] = hi;
            int start = options.drop_first_bucket ? 1 : 0;
            for (int k = start; k < B; ++k) {
                double a = edges[static_cast<std::size_t>(k)];
                double b = edges[static_cast<std::size_t>(k) + 1];
                detail::PendingFeature f;
                f.meta.kind = FeatureMeta::Kind::interval;
                f.meta.source = col.name;
                f.meta.lo = a;
                f.meta.hi = b;
                f.meta.closed_left = k == 0;
                f.meta.predicate = detail::interval_predicate(col.name, a, b, k == 0);
                f.bits.resize(n);
                for (std::size_t i = 0; i < n; ++i) {
                    double v = col.values[i];
                    // First interval is closed on the left so v == min is covered;
                    // the last edge equals max exactly so v == max is covered too.
                    f.bits[i] = (k == 0) ? (v <= b) : (v > a && v <= b);
                }
                pending.push_back(std::move(f));
            }
        }
    }

    // Drop constant feature columns, then exact duplicates (keep first).
    std::vector<detail::PendingFeature> kept;
    for (auto& f : pending) {
        std::size_t ones = 0;
        for (auto b : f.bits) ones += b;
        if (ones == 0 || ones == n) continue;
        if (options.dedup_columns) {
            bool dup = false;
            for (const auto& g : kept)
                if (g.bits == f.bits) { dup = true; break; }
            if (dup) continue;
        }
        kept.push_back(std::move(f));
    }
    if (kept.empty()) throw std::runtime_error("binarize: no non-constant binary features produced");

    BinaryDataset d;
    d.n_rows = n;
    d.n_features = kept.size();
    d.targets = raw.target;
    for (auto& f : kept) d.feature_meta.push_back(f.meta);

    const std::size_t W = d.words_per_row();
    d.row_bits.assign(n * W, 0);
    for (std::size_t j = 0; j < kept.size(); ++j)
        for (std::size_t i = 0; i < n; ++i)
            if (kept[j].bits[i])
                d.row_bits[i * W + j / 64] |= std::uint64_t{1} << (j % 64);

    detail::finalize_groups(d);
    return d;
}

// Builds a BinaryDataset directly from bit rows (tests and synthetic data).
inline BinaryDataset make_binary_dataset(const std::vector<std::vector<std::uint8_t>>& rows,
                                         const std::vector<double>& targets) {
    if (rows.empty() || rows.size() != targets.size())
        throw std::invalid_argument("make_binary_dataset: empty data or row/target mismatch");
    BinaryDataset d;
    d.n_rows = rows.size();
    d.n_features = rows[0].size();
    if (d.n_features == 0) throw std::invalid_argument("make_binary_dataset: zero features");
    d.targets = targets;
    for (std::size_t j = 0; j < d.n_features; ++j) {
        FeatureMeta m;
        m.kind = FeatureMeta::Kind::level;
        m.source = "f" + std::to_string(j);
        m.level = "1";
        m.predicate = "f" + std::to_string(j) + " = 1";
        d.feature_meta.push_back(std::move(m));
    }
    const std::size_t W = d.words_per_row();
    d.row_bits.assign(d.n_rows * W, 0);
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        if (rows[i].size() != d.n_features)
            throw std::invalid_argument("make_binary_dataset: ragged rows");
        for (std::size_t j = 0; j < d.n_features; ++j)
            if (rows[i][j])
                d.row_bits[i * W + j / 64] |= std::uint64_t{1} << (j % 64);
    }
    detail::finalize_groups(d);
    return d;
}

} // namespace srtree
