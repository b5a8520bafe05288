#pragma once

// Command-line front end: ensemble, synth, bound, eval.
// Exit codes: 0 success, 1 runtime failure, 2 invalid input.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "stackcast/bounds.hpp"
#include "stackcast/data.hpp"
#include "stackcast/errors.hpp"
#include "stackcast/io.hpp"
#include "stackcast/loss.hpp"
#include "stackcast/optimize.hpp"
#include "stackcast/pipeline.hpp"
#include "stackcast/synthetic.hpp"

namespace stackcast::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline QuantileSpec parse_quantiles(const std::string& text) {
    std::vector<double> taus;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) {
        auto v = detail::to_double(detail::trim(part));
        if (!v) throw input_error("bad quantile level '" + part + "'");
        taus.push_back(*v);
    }
    return QuantileSpec(std::move(taus));
}

/// Preset name (default, zero, full) or a CSV file with header alpha1,alpha2,alpha3,alpha4.
inline std::vector<Alpha> load_alpha_grid(const std::string& what) {
    if (what.empty() || what == "default") return default_alpha_grid();
    if (what == "zero") return {Alpha{}};
    if (what == "full") {
        static constexpr double levels[4] = {0.0, 0.01, 0.1, 1.0};
        std::vector<Alpha> grid;
        for (double a : levels)
            for (double b : levels)
                for (double c : levels)
                    for (double d : levels) grid.emplace_back(a, b, c, d);
        return grid;
    }
    std::ifstream in(what);
    if (!in) throw input_error("alpha grid '" + what + "' is neither a preset (default, zero, full) nor a readable file");
    detail::CsvReader reader(in, what, "alpha1,alpha2,alpha3,alpha4");
    std::vector<Alpha> grid;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        Alpha a;
        for (std::size_t d = 0; d < 4; ++d) a[d] = reader.number(f[d], "alpha");
        if (!a.valid()) reader.fail("alpha coordinates must be nonnegative");
        grid.push_back(a);
    }
    if (grid.empty()) throw input_error(what + ": alpha grid has no rows");
    return grid;
}

inline L1Target parse_l1(const std::string& s) {
    if (s == "logits") return L1Target::logits;
    if (s == "weights") return L1Target::weights;
    throw input_error("l1 target must be 'logits' or 'weights'");
}

inline std::optional<NoiseMode> parse_mode(const std::string& s) {
    if (s == "none") return std::nullopt;
    if (s == "time") return NoiseMode::time;
    if (s == "items") return NoiseMode::items;
    if (s == "quantiles") return NoiseMode::quantiles;
    throw input_error("mode must be one of none, time, items, quantiles");
}

inline BaselineSet parse_baselines(const std::vector<std::string>& names) {
    BaselineSet b{false, false, false, false, false};
    for (const std::string& n : names) {
        if (n == "mean") b.mean = true;
        else if (n == "median") b.median = true;
        else if (n == "gb" || n == "global_best") b.global_best = true;
        else if (n == "best" || n == "best_single") b.best_single = true;
        else if (n == "unregularized") b.unregularized = true;
        else if (n == "none") continue;
        else throw input_error("unknown baseline '" + n + "'");
    }
    return b;
}

/// Settings shared by `ensemble` and `synth`, filled from flags and an optional JSON config.
struct RunConfig {
    std::string config;
    std::string panel;
    std::vector<std::string> cubes;
    std::string out = "out";
    std::size_t horizon = 0;
    std::string quantiles = "0.1,0.5,0.9";
    std::string alpha_grid = "default";
    bool refine = false;
    std::size_t refine_budget = 40;
    std::uint64_t seed = 0;
    std::string l1_target = "logits";
    std::size_t max_iters = FitOptions{}.max_iters;
    double step_size = FitOptions{}.step_size;
    std::size_t threads = 1;
    std::vector<std::string> baselines{"mean", "median", "gb", "best", "unregularized"};

    // synth
    std::string mode = "none";
    std::size_t reps = 1;
    std::size_t items = 20;
    std::size_t length = 56;
    bool with_exact = false;
    std::size_t oracle_gap = 0;
};

/// Applies JSON keys for every option the user did not set on the command line.
inline void merge_config(RunConfig& rc, const CLI::App& app) {
    if (rc.config.empty()) return;
    std::ifstream in(rc.config);
    if (!in) throw input_error("cannot open config " + rc.config);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw input_error(rc.config + ": " + e.what());
    }
    if (!j.is_object()) throw input_error(rc.config + ": config must be a JSON object");
    auto given = [&](const char* flag) {
        const CLI::Option* o = app.get_option_no_throw(flag);
        return o && o->count() > 0;
    };
    auto take = [&](const char* key, const char* flag, auto& target) {
        if (!j.contains(key) || given(flag)) return;
        try {
            target = j.at(key).get<std::decay_t<decltype(target)>>();
        } catch (const json::exception& e) {
            throw input_error(rc.config + ": key '" + std::string(key) + "': " + e.what());
        }
    };
    take("panel", "--panel", rc.panel);
    if (j.contains("cubes") && !given("--cubes")) {
        if (j["cubes"].is_string()) rc.cubes = {j["cubes"].get<std::string>()};
        else take("cubes", "--cubes", rc.cubes);
    }
    take("out", "--out", rc.out);
    take("horizon", "--horizon", rc.horizon);
    if (j.contains("quantiles") && !given("--quantiles")) {
        if (j["quantiles"].is_array()) {
            std::string s;
            for (const auto& v : j["quantiles"]) s += (s.empty() ? "" : ",") + format_number(v.get<double>(), 17);
            rc.quantiles = s;
        } else {
            take("quantiles", "--quantiles", rc.quantiles);
        }
    }
    take("alpha_grid", "--alpha-grid", rc.alpha_grid);
    take("refine", "--refine", rc.refine);
    take("refine_budget", "--refine-budget", rc.refine_budget);
    take("seed", "--seed", rc.seed);
    take("l1_target", "--l1-target", rc.l1_target);
    take("max_iters", "--max-iters", rc.max_iters);
    take("step_size", "--step-size", rc.step_size);
    take("threads", "--threads", rc.threads);
    take("baselines", "--baselines", rc.baselines);
    take("mode", "--mode", rc.mode);
    take("reps", "--reps", rc.reps);
    take("items", "--items", rc.items);
    take("length", "--length", rc.length);
    take("with_exact", "--with-exact", rc.with_exact);
    take("oracle_gap", "--oracle-gap", rc.oracle_gap);
}

inline PipelineConfig pipeline_config(const RunConfig& rc) {
    PipelineConfig pc;
    pc.quantiles = parse_quantiles(rc.quantiles);
    pc.horizon = rc.horizon;
    pc.search.grid = load_alpha_grid(rc.alpha_grid);
    pc.search.refine = rc.refine;
    pc.search.refine_budget = rc.refine_budget;
    pc.search.threads = rc.threads;
    pc.fit.max_iters = rc.max_iters;
    pc.fit.step_size = rc.step_size;
    pc.fit.l1 = parse_l1(rc.l1_target);
    pc.fit.seed = rc.seed;
    pc.baselines = parse_baselines(rc.baselines);
    pc.seed = rc.seed;
    pc.search.validate();
    pc.fit.validate();
    return pc;
}

using FileSet = std::vector<std::pair<fs::path, std::string>>;

/// Renders every artifact first, then writes each through a temporary + rename.
inline void commit(const FileSet& files) {
    for (const auto& [path, content] : files) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
    }
    for (const auto& [path, content] : files) write_file_atomic(path, content);
}

inline void add_pipeline_files(FileSet& files, const fs::path& dir, const PipelineResult& r,
                               const BacktestData& data, const std::vector<std::string>& items,
                               const QuantileSpec& taus) {
    files.emplace_back(dir / "weights.csv", weights_csv(r.w_star, data.learners, items, taus));
    files.emplace_back(dir / "predictions.csv", predictions_csv(r.predictions, items, taus));
    files.emplace_back(dir / "comparison.csv", comparison_csv(r.reports));
    files.emplace_back(dir / "losses.csv", loss_reports_csv(r.reports, taus));
    files.emplace_back(dir / "search.csv", search_report_csv(r.search));
}

inline void print_comparison(std::ostream& out, const PipelineResult& r) {
    out << "alpha_hat = (" << format_number(r.alpha_hat[0], 6) << ", " << format_number(r.alpha_hat[1], 6) << ", "
        << format_number(r.alpha_hat[2], 6) << ", " << format_number(r.alpha_hat[3], 6)
        << ")  validation mean_wql = " << format_number(r.search.val_wql, 6) << '\n';
    for (const LossReport& rep : r.reports) {
        char line[160];
        std::snprintf(line, sizeof line, "  %-16s %.6f\n", rep.strategy.c_str(), rep.mean_wql);
        out << line;
    }
}

inline int cmd_ensemble(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    if (rc.panel.empty()) throw input_error("--panel is required");
    if (rc.cubes.empty()) throw input_error("--cubes is required");
    if (rc.horizon < 1) throw invalid_horizon("--horizon must be at least 1");
    const PipelineConfig pc = pipeline_config(rc);
    const PanelDataset panel = load_panel(rc.panel);
    const BacktestSplit split = make_backtest_splits(panel, rc.horizon);
    std::vector<fs::path> paths(rc.cubes.begin(), rc.cubes.end());
    const CubeSet cubes = load_cubes(paths, panel.items, rc.horizon, pc.quantiles);
    for (std::size_t l = 0; l < cubes.size(); ++l)
        for (int n = 0; n < 3; ++n) {
            const auto& c = cubes.cubes[l][static_cast<std::size_t>(n)];
            if (!c)
                throw missing_window("missing cube for learner '" + cubes.learners[l] + "' window " +
                                     std::to_string(n));
            if (std::size_t x = count_crossings(*c))
                err << "warning: learner '" << cubes.learners[l] << "' window " << n << " has " << x
                    << " quantile crossings\n";
        }
    const BacktestData data = assemble_backtest(cubes, panel, split);
    const PipelineResult r = run_algorithm1(data, pc);

    FileSet files;
    add_pipeline_files(files, rc.out, r, data, panel.items, pc.quantiles);
    commit(files);
    print_comparison(out, r);
    return 0;
}

inline CubeSet to_cube_set(const BacktestData& data) {
    CubeSet set;
    for (std::size_t l = 0; l < data.size(); ++l)
        for (int n = 0; n < 3; ++n) set.add(data.learners[l], n, data.windows[static_cast<std::size_t>(n)].cubes[l]);
    return set;
}

inline int cmd_synth(const RunConfig& rc, std::ostream& out, std::ostream&) {
    if (rc.reps < 1) throw input_error("--reps must be at least 1");
    RunConfig eff = rc;
    if (eff.horizon == 0) eff.horizon = 8;
    const PipelineConfig pc = pipeline_config(eff);

    SyntheticConfig sc;
    sc.items = eff.items;
    sc.horizon = eff.horizon;
    sc.length = eff.length;
    sc.quantiles = pc.quantiles;
    sc.noise = parse_mode(eff.mode);
    sc.fit = pc.fit;
    sc.search = pc.search;
    if (eff.with_exact) sc.learners.insert(sc.learners.begin(), {"exact", LearnerKind::exact, 0.0, 0.0});

    FileSet files;
    const fs::path root = eff.out;
    std::string summary = "rep,seed,strategy,test_mean_wql\n";
    for (std::size_t rep = 0; rep < eff.reps; ++rep) {
        const std::uint64_t seed = eff.seed + rep;
        const SyntheticInstance inst = make_instance(sc, seed);
        const PipelineResult r = run_algorithm1(inst.data, pc);
        const fs::path dir = root / ("rep_" + std::to_string(rep));
        std::ostringstream panel_csv, cube_csv;
        write_panel(panel_csv, inst.panel);
        write_cubes(cube_csv, to_cube_set(inst.data), inst.panel.items, pc.quantiles);
        files.emplace_back(dir / "panel.csv", panel_csv.str());
        files.emplace_back(dir / "cubes.csv", cube_csv.str());
        add_pipeline_files(files, dir, r, inst.data, inst.panel.items, pc.quantiles);
        for (const LossReport& rep_loss : r.reports)
            summary += std::to_string(rep) + ',' + std::to_string(seed) + ',' + rep_loss.strategy + ',' +
                       format_number(rep_loss.mean_wql, 12) + '\n';
        out << "rep " << rep << " (seed " << seed << ", mode " << eff.mode << ")\n";
        print_comparison(out, r);
    }
    files.emplace_back(root / "summary.csv", summary);

    if (eff.oracle_gap > 0) {
        const GapSummary g = oracle_gap_experiment(sc, eff.oracle_gap, eff.seed);
        files.emplace_back(root / "oracle_gap.csv", gap_csv(g, eff.mode));
        out << "oracle gap over " << eff.oracle_gap << " repetitions: median rel_gap "
            << format_number(g.median_rel_gap, 6) << ", within 5%: " << format_number(g.frac_within_5pct, 6)
            << ", validation argmin " << g.validation_dominant << "/" << eff.oracle_gap << '\n';
    }
    commit(files);
    return 0;
}

struct BoundFlags {
    double M = 1, v = 1, delta = 1, p = 1, n1 = 100, eps = 0.01, ell = 1, K = 1, dim = 1, mean_loss = 1;
    double oracle_loss = 0.0;
    double extra = 0.0;
    std::optional<double> covering;
    bool finite = false;
};

inline int cmd_bound(const BoundFlags& f, std::ostream& out) {
    BoundInputs in;
    in.M = f.M;
    in.v = f.v;
    in.delta = f.delta;
    in.p = f.p;
    in.n1 = f.n1;
    in.eps_n1 = f.eps;
    in.ell = f.ell;
    in.K = f.K;
    in.dim = f.dim;
    in.mean_loss = f.mean_loss;
    in.covering_count = f.covering;
    in.finite_family = f.finite;
    const OracleBound b = oracle_bound(in, f.oracle_loss, f.extra);
    auto fmt = [](double x) { return format_number(x, 6); };
    if (b.covering_derived)
        out << "covering count (derived from ell, K, dim, eps): " << fmt(b.covering_count) << '\n';
    else
        out << "covering count: " << fmt(b.covering_count) << '\n';
    out << "oracle term: " << fmt(b.oracle_term) << '\n';
    out << "B_f term: " << fmt(b.bf_term) << '\n';
    out << "eps term: " << fmt(b.eps_term) << '\n';
    out << "total: " << fmt(b.total()) << '\n';
    return 0;
}

struct EvalFlags {
    std::string panel, predictions, quantiles = "0.1,0.5,0.9";
    std::size_t horizon = 0;
    int window = 2;
};

inline int cmd_eval(const EvalFlags& f, std::ostream& out) {
    if (f.horizon < 1) throw invalid_horizon("--horizon must be at least 1");
    if (f.window < 0 || f.window > 2) throw input_error("--window must be 0, 1 or 2");
    const QuantileSpec taus = parse_quantiles(f.quantiles);
    const PanelDataset panel = load_panel(f.panel);
    const BacktestSplit split = make_backtest_splits(panel, f.horizon);
    const Tensor3 pred = load_predictions(f.predictions, panel.items, f.horizon, taus);
    const ActualsWindow act = actuals_for(panel, split, f.window);
    const LossReport r = loss_report("eval", std::to_string(f.window), pred, act.values, taus);
    for (std::size_t k = 0; k < taus.size(); ++k)
        out << "wql[" << format_tau(taus[k]) << "]: " << format_number(r.per_quantile[k], 6) << '\n';
    out << "mean_wql: " << format_number(r.mean_wql, 6) << '\n';
    return 0;
}

inline void add_run_options(CLI::App& sub, RunConfig& rc) {
    sub.add_option("--config", rc.config, "Flat JSON file with run settings (flags win)");
    sub.add_option("--out", rc.out, "Output directory");
    sub.add_option("--horizon", rc.horizon, "Forecast horizon h");
    sub.add_option("--quantiles", rc.quantiles, "Comma-separated quantile levels");
    sub.add_option("--alpha-grid", rc.alpha_grid, "Preset (default, zero, full) or CSV alpha1..alpha4");
    sub.add_flag("--refine", rc.refine, "Refine the grid argmin with a bounded Nelder-Mead search");
    sub.add_option("--refine-budget", rc.refine_budget, "Extra evaluations allowed for refinement");
    sub.add_option("--seed", rc.seed, "Seed for every stochastic step");
    sub.add_option("--l1-target", rc.l1_target, "Tensor the L1 penalty acts on")
        ->check(CLI::IsMember({"logits", "weights"}));
    sub.add_option("--max-iters", rc.max_iters, "Inner optimizer iteration cap");
    sub.add_option("--step-size", rc.step_size, "Inner optimizer initial step");
    sub.add_option("--threads", rc.threads, "Workers for alpha grid evaluation (0 = all cores)");
    sub.add_option("--baselines", rc.baselines, "Baselines: mean median gb best unregularized (or none)");
}

/// Entry point shared by the executable and the tests.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Cross-validated ensembles of probabilistic forecasts", "stackcast"};
    app.require_subcommand(1);

    RunConfig rc;
    auto* ens = app.add_subcommand("ensemble", "Learn ensemble weights from learner cubes and a panel");
    add_run_options(*ens, rc);
    ens->add_option("--panel", rc.panel, "Panel CSV (item,t,value)");
    ens->add_option("--cubes", rc.cubes, "Cube CSV files (learner,window,item,step,tau,value)");

    auto* syn = app.add_subcommand("synth", "Generate synthetic learners, inject noise, run every strategy");
    add_run_options(*syn, rc);
    syn->add_option("--mode", rc.mode, "Noise mode")->check(CLI::IsMember({"none", "time", "items", "quantiles"}));
    syn->add_option("--reps", rc.reps, "Number of seeds (seed, seed+1, ...)");
    syn->add_option("--items", rc.items, "Items per panel");
    syn->add_option("--length", rc.length, "Timestamps per series");
    syn->add_flag("--with-exact", rc.with_exact, "Add a learner that predicts the truth exactly");
    syn->add_option("--oracle-gap", rc.oracle_gap, "Also run the oracle-gap experiment over this many repetitions");

    BoundFlags bf;
    auto* bnd = app.add_subcommand("bound", "Evaluate the oracle-inequality right-hand side");
    bnd->add_option("--M", bf.M, "Bernstein first number");
    bnd->add_option("--v", bf.v, "Bernstein second number");
    bnd->add_option("--delta", bf.delta, "delta > 0");
    bnd->add_option("--p", bf.p, "p in [1,2]");
    bnd->add_option("--n1", bf.n1, "Validation sample count");
    bnd->add_option("--eps", bf.eps, "eps_n1 > 0");
    bnd->add_option("--ell", bf.ell, "Lipschitz constant");
    bnd->add_option("--K", bf.K, "Radius of the ball holding the index set");
    bnd->add_option("--dim", bf.dim, "Ambient dimension of the index set");
    bnd->add_option("--mean-loss", bf.mean_loss, "Smallest expected loss over the family");
    bnd->add_option("--N", bf.covering, "Covering count (derived from ell, K, dim, eps when omitted)");
    bnd->add_option("--oracle-loss", bf.oracle_loss, "Oracle expected loss");
    bnd->add_option("--extra", bf.extra, "Base learners added to the guarantee");
    bnd->add_flag("--finite", bf.finite, "Finite index set of size N; drops the eps term");

    EvalFlags ef;
    auto* evl = app.add_subcommand("eval", "Mean weighted quantile loss of a predictions file");
    evl->add_option("--panel", ef.panel, "Panel CSV")->required();
    evl->add_option("--predictions", ef.predictions, "Predictions CSV (item,step,tau,value)")->required();
    evl->add_option("--horizon", ef.horizon, "Forecast horizon h")->required();
    evl->add_option("--quantiles", ef.quantiles, "Comma-separated quantile levels");
    evl->add_option("--window", ef.window, "Backtest window scored (0, 1, 2)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return 2;
    }

    try {
        if (ens->parsed()) {
            merge_config(rc, *ens);
            return cmd_ensemble(rc, out, err);
        }
        if (syn->parsed()) {
            merge_config(rc, *syn);
            return cmd_synth(rc, out, err);
        }
        if (bnd->parsed()) return cmd_bound(bf, out);
        if (evl->parsed()) return cmd_eval(ef, out);
    } catch (const input_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace stackcast::cli
