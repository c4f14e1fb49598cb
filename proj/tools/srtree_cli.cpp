// srtree command-line interface: train / predict / evaluate / sweep /
// trace-plot-data / binarize / kmeans-curve / split.
//
// Exit codes: 0 success (including timeout with an incumbent tree),
//             2 usage error, 3 data or runtime error.

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <srtree/srtree.hpp>

namespace {

using namespace srtree;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shared option blocks
// ---------------------------------------------------------------------------

struct DataArgs {
    std::string data;
    std::string target;
    BinarizeOptions bopts;
    std::vector<std::string> categorical;

    void finalize() {
        for (const auto& c : categorical) bopts.categorical.insert(c);
    }
};

void add_data_flags(CLI::App* cmd, DataArgs& a, bool data_required = true) {
    auto* dopt = cmd->add_option("--data", a.data, "input CSV with a header row");
    if (data_required) dopt->required();
    cmd->add_option("--target", a.target,
                    "target column name (default: last column)");
    cmd->add_option("--buckets", a.bopts.buckets,
                    "equal-width intervals per continuous column")
        ->check(CLI::Range(2, 1024));
    cmd->add_option("--categorical", a.categorical,
                    "numeric columns to treat as categorical (comma separated)")
        ->delimiter(',');
    cmd->add_flag("--drop-first-level", a.bopts.drop_first_level,
                  "drop each categorical column's first sorted level");
    cmd->add_flag("!--no-drop-first-bucket", a.bopts.drop_first_bucket,
                  "keep the reference interval of continuous columns");
    cmd->add_flag("--adjacent-thresholds", a.bopts.adjacent_thresholds,
                  "threshold features at midpoints of adjacent distinct values");
    cmd->add_flag("!--no-dedup", a.bopts.dedup_columns,
                  "keep duplicate binary columns");
}

struct SolveArgs {
    double lambda = 0.01;
    int depth = 0; // 0: unlimited
    bool no_depth_limit = false;
    double time_limit_s = 0.0; // 0: none
    std::string bound = "kmeans";
    bool warm_start = false;
    bool no_leaf_budget = false;
    std::size_t trace_every = 256;

    SolverConfig config() const {
        SolverConfig cfg;
        cfg.lambda = lambda;
        if (depth > 0 && !no_depth_limit) cfg.depth_limit = depth;
        if (time_limit_s > 0.0) cfg.time_limit_s = time_limit_s;
        cfg.bound_mode = bound == "equiv" ? BoundMode::equiv_only : BoundMode::kmeans_equiv;
        cfg.greedy_warm_start = warm_start;
        cfg.leaf_budget_pruning = !no_leaf_budget;
        cfg.trace_every = trace_every;
        return cfg;
    }
};

void add_solve_flags(CLI::App* cmd, SolveArgs& a) {
    cmd->add_option("--lambda", a.lambda, "per-leaf penalty (normalized units)")
        ->check(CLI::NonNegativeNumber);
    auto* dep = cmd->add_option("--depth", a.depth,
                                "max branch tests on any root-to-leaf path")
                    ->check(CLI::Range(1, 64));
    cmd->add_flag("--no-depth-limit", a.no_depth_limit, "solve without a depth limit")
        ->excludes(dep);
    cmd->add_option("--time-limit-s", a.time_limit_s,
                    "soft wall-clock limit; the incumbent is returned on expiry")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--bound", a.bound, "lower bound: kmeans (default) or equiv")
        ->check(CLI::IsMember({"kmeans", "equiv"}));
    cmd->add_flag("--warm-start", a.warm_start,
                  "seed the incumbent with a greedy tree (never changes the optimum)");
    cmd->add_flag("--no-leaf-budget", a.no_leaf_budget, "disable leaf-budget pruning");
    cmd->add_option("--trace-every", a.trace_every,
                    "work-loop iterations between trace records")
        ->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

BinaryDataset load_binary(const DataArgs& a) {
    RawDataset raw = load_csv(a.data, a.target);
    return binarize(raw, a.bopts);
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

// Applies exported feature metadata to a raw dataset, reproducing the training
// feature space on data whose observed ranges may differ.
BinaryDataset apply_feature_meta(const RawDataset& raw, const nlohmann::json& meta) {
    if (!meta.is_array() || meta.empty())
        throw std::runtime_error("feature metadata: expected a non-empty array");
    std::vector<std::vector<std::uint8_t>> rows(raw.n_rows,
                                                std::vector<std::uint8_t>(meta.size(), 0));
    std::vector<FeatureMeta> metas;
    for (std::size_t j = 0; j < meta.size(); ++j) {
        const nlohmann::json& e = meta[j];
        std::string source = e.at("source").get<std::string>();
        std::string kind = e.at("kind").get<std::string>();
        const RawColumn* col = nullptr;
        for (const RawColumn& c : raw.columns)
            if (c.name == source) { col = &c; break; }
        if (!col) throw std::runtime_error("feature metadata: column '" + source +
                                           "' missing from the data");
        FeatureMeta m;
        m.source = source;
        m.predicate = e.value("predicate", source);
        if (kind == "level") {
            m.kind = FeatureMeta::Kind::level;
            m.level = e.at("level").get<std::string>();
            for (std::size_t i = 0; i < raw.n_rows; ++i)
                rows[i][j] = col->labels[i] == m.level;
        } else {
            if (!col->numeric)
                throw std::runtime_error("feature metadata: column '" + source +
                                         "' must be numeric");
            m.hi = e.at("hi").get<double>();
            if (kind == "threshold") {
                m.kind = FeatureMeta::Kind::threshold;
                for (std::size_t i = 0; i < raw.n_rows; ++i)
                    rows[i][j] = col->values[i] <= m.hi;
            } else if (kind == "interval") {
                m.kind = FeatureMeta::Kind::interval;
                m.lo = e.at("lo").get<double>();
                m.closed_left = e.value("closed_left", false);
                for (std::size_t i = 0; i < raw.n_rows; ++i) {
                    double v = col->values[i];
                    rows[i][j] = m.closed_left ? v <= m.hi : (v > m.lo && v <= m.hi);
                }
            } else {
                throw std::runtime_error("feature metadata: unknown kind '" + kind + "'");
            }
        }
        metas.push_back(std::move(m));
    }
    BinaryDataset d = make_binary_dataset(rows, raw.target);
    d.feature_meta = std::move(metas);
    return d;
}

BinaryDataset load_for_model(const DataArgs& a, const std::string& meta_path) {
    RawDataset raw = load_csv(a.data, a.target);
    if (!meta_path.empty()) return apply_feature_meta(raw, read_json_file(meta_path));
    return binarize(raw, a.bopts);
}

std::string status_name(SolveStatus s) {
    return s == SolveStatus::optimal ? "optimal" : "timeout";
}

std::string trace_csv(const std::vector<TraceRecord>& trace) {
    std::string out = "wall_time_s,lower_bound,upper_bound,graph_size,iterations\n";
    for (const TraceRecord& r : trace) {
        out += format_number(r.wall_time_s, 9);
        out += ",";
        out += format_number(r.root_lb, 17);
        out += ",";
        out += format_number(r.root_ub, 17);
        out += ",";
        out += std::to_string(r.graph_size);
        out += ",";
        out += std::to_string(r.iterations);
        out += "\n";
    }
    return out;
}

std::string summary_line(const SolveResult& res) {
    std::string s = "objective=" + format_number(res.objective);
    s += " lower_bound=" + format_number(res.root_lb);
    s += " gap=" + format_number(res.gap);
    s += " leaves=" + std::to_string(res.tree.leaf_count());
    s += " depth=" + std::to_string(res.tree.depth());
    s += " status=" + status_name(res.status);
    s += " iterations=" + std::to_string(res.iterations);
    s += " expansions=" + std::to_string(res.expansions);
    s += " graph_size=" + std::to_string(res.graph_size);
    s += " wall_time_s=" + format_number(res.wall_time_s, 6);
    return s;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int run_train(const DataArgs& da, const SolveArgs& sa, const std::string& lambda_grid,
              const std::string& out_model, const std::string& out_trace,
              const std::string& out_meta) {
    if (!lambda_grid.empty())
        throw UsageError("train takes a single --lambda; --lambda-grid belongs to sweep");
    BinaryDataset d = load_binary(da);
    SolveResult res = solve(d, sa.config());

    if (!out_model.empty()) write_text_file(out_model, serialize(res.tree).dump(2) + "\n");
    if (!out_trace.empty()) write_text_file(out_trace, trace_csv(res.trace));
    if (!out_meta.empty()) write_text_file(out_meta, d.feature_meta_json().dump(2) + "\n");

    std::cout << render_text(res.tree) << summary_line(res) << "\n";
    return 0;
}

int run_predict(const DataArgs& da, const std::string& model_path,
                const std::string& meta_path, const std::string& out_csv) {
    Tree t = deserialize(read_json_file(model_path));
    BinaryDataset d = load_for_model(da, meta_path);
    if (d.n_features < t.required_features())
        throw std::runtime_error("model uses feature indices beyond the binarized data; "
                                 "pass the training --out-meta file via --meta");
    std::string out = "row,prediction\n";
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        out += std::to_string(i);
        out += ",";
        out += format_number(predict(t, d, i), 17);
        out += "\n";
    }
    if (out_csv.empty()) std::cout << out;
    else write_text_file(out_csv, out);
    return 0;
}

int run_evaluate(const DataArgs& da, const std::string& model_path,
                 const std::string& meta_path) {
    Tree t = deserialize(read_json_file(model_path));
    BinaryDataset d = load_for_model(da, meta_path);
    if (d.n_features < t.required_features())
        throw std::runtime_error("model uses feature indices beyond the binarized data; "
                                 "pass the training --out-meta file via --meta");
    EvalReport r = evaluate(t, d);
    std::cout << "mse=" << format_number(r.mse) << " r_squared=" << format_number(r.r_squared)
              << " n=" << r.n << " leaves=" << t.leaf_count() << " depth=" << t.depth()
              << "\n";
    return 0;
}

int run_sweep(const DataArgs& da, const SolveArgs& sa,
              const std::vector<double>& lambda_grid, const std::vector<int>& depths,
              const std::string& out_csv, unsigned jobs) {
    if (lambda_grid.empty()) throw UsageError("sweep needs a non-empty --lambda-grid");
    for (double l : lambda_grid)
        if (!(l >= 0.0)) throw UsageError("sweep: lambdas must be >= 0");
    for (int dep : depths)
        if (dep < 0 || dep > 64) throw UsageError("sweep: depths must be in [0, 64] (0 = unlimited)");

    BinaryDataset d = load_binary(da);

    struct Cell {
        int depth;
        double lambda;
        SolveResult res;
        double train_mse = 0.0, r2 = 0.0;
    };
    std::vector<Cell> cells;
    for (int dep : depths)
        for (double l : lambda_grid) cells.push_back(Cell{dep, l, {}, 0.0, 0.0});

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t k = next.fetch_add(1);
            if (k >= cells.size()) return;
            Cell& c = cells[k];
            SolveArgs cell_args = sa;
            cell_args.lambda = c.lambda;
            cell_args.depth = c.depth;
            cell_args.no_depth_limit = c.depth == 0;
            c.res = solve(d, cell_args.config());
            EvalReport r = evaluate(c.res.tree, d);
            c.train_mse = r.mse;
            c.r2 = r.r_squared;
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::string out =
        "depth,lambda,leaves,train_mse,r_squared,objective,wall_time_s,status,over_30_leaves\n";
    for (const Cell& c : cells) {
        out += std::to_string(c.depth);
        out += ",";
        out += format_number(c.lambda, 17);
        out += ",";
        out += std::to_string(c.res.tree.leaf_count());
        out += ",";
        out += format_number(c.train_mse, 17);
        out += ",";
        out += format_number(c.r2, 17);
        out += ",";
        out += format_number(c.res.objective, 17);
        out += ",";
        out += format_number(c.res.wall_time_s, 6);
        out += ",";
        out += status_name(c.res.status);
        out += ",";
        out += (c.res.tree.leaf_count() > 30 ? "1" : "0");
        out += "\n";
    }
    if (out_csv.empty()) std::cout << out;
    else write_text_file(out_csv, out);
    return 0;
}

int run_trace_plot_data(const std::string& trace_path, const std::string& out_csv) {
    CsvTable t = read_csv(trace_path);
    std::size_t time_col = t.header.size(), lb_col = t.header.size(), ub_col = t.header.size();
    for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (t.header[j] == "wall_time_s") time_col = j;
        if (t.header[j] == "lower_bound") lb_col = j;
        if (t.header[j] == "upper_bound") ub_col = j;
    }
    if (time_col == t.header.size() || lb_col == t.header.size() || ub_col == t.header.size())
        throw std::runtime_error("trace CSV must have wall_time_s, lower_bound, upper_bound");
    std::string out = "time,bound_type,value\n";
    for (const auto& row : t.rows) {
        out += row[time_col] + ",lower," + row[lb_col] + "\n";
        out += row[time_col] + ",upper," + row[ub_col] + "\n";
    }
    if (out_csv.empty()) std::cout << out;
    else write_text_file(out_csv, out);
    return 0;
}

int run_binarize(const DataArgs& da, const std::string& out_csv,
                 const std::string& out_meta) {
    RawDataset raw = load_csv(da.data, da.target);
    BinaryDataset d = binarize(raw, da.bopts);
    if (!out_csv.empty()) d.export_binarized_csv(out_csv, raw.target_name);
    if (!out_meta.empty()) write_text_file(out_meta, d.feature_meta_json().dump(2) + "\n");
    std::cout << "rows=" << d.n_rows << " features=" << d.n_features
              << " groups=" << d.n_groups()
              << " dropped_missing=" << raw.rows_dropped_missing << "\n";
    return 0;
}

int run_kmeans_curve(const DataArgs& da, int max_clusters, const std::string& out_csv) {
    RawDataset raw = load_csv(da.data, da.target);
    WeightedPoints pts = build_weighted_points(raw.target,
                                               std::vector<double>(raw.target.size(), 1.0));
    KMeansTable table(pts);
    std::size_t top = pts.size();
    if (max_clusters > 0) top = std::min(top, static_cast<std::size_t>(max_clusters));
    while (table.rows_filled() < top) table.fill_next_row();
    std::string out = "clusters,loss\n";
    for (std::size_t c = 1; c <= top; ++c) {
        out += std::to_string(c);
        out += ",";
        out += format_number(table.loss(c), 17);
        out += "\n";
    }
    if (out_csv.empty()) std::cout << out;
    else write_text_file(out_csv, out);
    return 0;
}

int run_split(const std::string& data, int every, const std::string& train_out,
              const std::string& test_out) {
    CsvTable t = read_csv(data);
    CsvTable train, test;
    train.header = t.header;
    test.header = t.header;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        // deterministic systematic split: every `every`-th row goes to test
        if ((i + 1) % static_cast<std::size_t>(every) == 0) test.rows.push_back(t.rows[i]);
        else train.rows.push_back(t.rows[i]);
    }
    write_csv(train_out, train);
    write_csv(test_out, test);
    std::cout << "train_rows=" << train.rows.size() << " test_rows=" << test.rows.size() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"srtree: provably optimal sparse regression trees"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train an optimal tree");
    DataArgs train_data;
    SolveArgs train_solve;
    std::string train_grid, out_model, out_trace, out_meta;
    add_data_flags(train_cmd, train_data);
    add_solve_flags(train_cmd, train_solve);
    train_cmd->add_option("--lambda-grid", train_grid, "rejected: grids belong to sweep");
    train_cmd->add_option("--out-model", out_model, "write the model JSON here");
    train_cmd->add_option("--out-trace", out_trace, "write the bound trace CSV here");
    train_cmd->add_option("--out-meta", out_meta, "write the feature metadata JSON here");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "route rows through a model");
    DataArgs predict_data;
    std::string predict_model, predict_meta, predict_out;
    add_data_flags(predict_cmd, predict_data);
    predict_cmd->add_option("--model", predict_model, "model JSON path")->required();
    predict_cmd->add_option("--meta", predict_meta,
                            "feature metadata JSON from training (reapplies thresholds)");
    predict_cmd->add_option("--out-csv", predict_out, "write predictions here (default stdout)");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "MSE and R^2 of a model on a dataset");
    DataArgs eval_data;
    std::string eval_model, eval_meta;
    add_data_flags(eval_cmd, eval_data);
    eval_cmd->add_option("--model", eval_model, "model JSON path")->required();
    eval_cmd->add_option("--meta", eval_meta,
                         "feature metadata JSON from training (reapplies thresholds)");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "solve a lambda x depth grid");
    DataArgs sweep_data;
    SolveArgs sweep_solve;
    std::vector<double> sweep_grid;
    std::vector<int> sweep_depths{0};
    std::string sweep_out;
    unsigned sweep_jobs = 1;
    add_data_flags(sweep_cmd, sweep_data);
    add_solve_flags(sweep_cmd, sweep_solve);
    sweep_cmd->add_option("--lambda-grid", sweep_grid,
                          "comma-separated per-leaf penalties")
        ->delimiter(',')
        ->required();
    sweep_cmd->add_option("--depths", sweep_depths,
                          "comma-separated depth limits, 0 = unlimited")
        ->delimiter(',');
    sweep_cmd->add_option("--out-csv", sweep_out, "write the sweep CSV here (default stdout)");
    sweep_cmd->add_option("--jobs", sweep_jobs, "parallel workers over grid cells")
        ->check(CLI::Range(1u, 256u));

    // trace-plot-data
    auto* trace_cmd = app.add_subcommand("trace-plot-data",
                                         "tidy (time, bound_type, value) CSV from a trace");
    std::string trace_in, trace_out;
    trace_cmd->add_option("--trace", trace_in, "trace CSV written by train")->required();
    trace_cmd->add_option("--out-csv", trace_out, "write the tidy CSV here (default stdout)");

    // binarize
    auto* bin_cmd = app.add_subcommand("binarize", "dump the binary feature matrix");
    DataArgs bin_data;
    std::string bin_out, bin_meta;
    add_data_flags(bin_cmd, bin_data);
    bin_cmd->add_option("--out-csv", bin_out, "write the 0/1 matrix CSV here");
    bin_cmd->add_option("--out-meta", bin_meta, "write the feature metadata JSON here");

    // kmeans-curve
    auto* km_cmd = app.add_subcommand("kmeans-curve",
                                      "per-cluster-count optimal 1-D k-means losses of the target");
    DataArgs km_data;
    int km_max = 0;
    std::string km_out;
    add_data_flags(km_cmd, km_data);
    km_cmd->add_option("--max-clusters", km_max, "largest cluster count to report")
        ->check(CLI::PositiveNumber);
    km_cmd->add_option("--out-csv", km_out, "write the curve CSV here (default stdout)");

    // split
    auto* split_cmd = app.add_subcommand("split", "deterministic train/test row split");
    std::string split_data, split_train, split_test;
    int split_every = 4;
    split_cmd->add_option("--data", split_data, "input CSV")->required();
    split_cmd->add_option("--every", split_every, "every k-th row goes to test")
        ->check(CLI::Range(2, 1000000));
    split_cmd->add_option("--train-out", split_train, "training rows CSV")->required();
    split_cmd->add_option("--test-out", split_test, "test rows CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        train_data.finalize();
        predict_data.finalize();
        eval_data.finalize();
        sweep_data.finalize();
        bin_data.finalize();
        km_data.finalize();

        if (*train_cmd)
            return run_train(train_data, train_solve, train_grid, out_model, out_trace, out_meta);
        if (*predict_cmd)
            return run_predict(predict_data, predict_model, predict_meta, predict_out);
        if (*eval_cmd) return run_evaluate(eval_data, eval_model, eval_meta);
        if (*sweep_cmd)
            return run_sweep(sweep_data, sweep_solve, sweep_grid, sweep_depths, sweep_out,
                             sweep_jobs);
        if (*trace_cmd) return run_trace_plot_data(trace_in, trace_out);
        if (*bin_cmd) return run_binarize(bin_data, bin_out, bin_meta);
        if (*km_cmd) return run_kmeans_curve(km_data, km_max, km_out);
        if (*split_cmd) return run_split(split_data, split_every, split_train, split_test);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
