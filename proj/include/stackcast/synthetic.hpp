#pragma once

// Seeded synthetic panels, simulated base learners, prediction-noise injection along
// time / items / quantiles, and the empirical oracle-gap experiment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "stackcast/data.hpp"
#include "stackcast/errors.hpp"
#include "stackcast/io.hpp"
#include "stackcast/loss.hpp"
#include "stackcast/optimize.hpp"
#include "stackcast/pipeline.hpp"

namespace stackcast {

using Rng = std::mt19937_64;

/// Independent stream for (seed, a, b); stable across runs of the same build.
inline Rng derived_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    return Rng(seq);
}

inline double standard_normal_quantile(double tau) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), tau);
}

// ---------------------------------------------------------------------------
// Panels

/// Amplitudes of the generated components. Per-item multipliers are drawn from the
/// seed; every component vanishes when its amplitude is zero.
struct PanelComponents {
    double level = 50.0;
    double trend = 0.2;    ///< slope per timestamp
    double season = 10.0;  ///< sinusoid amplitude
    double noise = 2.0;    ///< Gaussian noise standard deviation
    double period = 12.0;
};

inline PanelDataset gen_panel(std::uint64_t seed, std::size_t items, std::size_t length,
                              const PanelComponents& comp = {}) {
    if (items < 1 || length < 1) throw input_error("panel needs at least one item and one timestamp");
    Rng rng = derived_rng(seed, 0x70616e656c);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    PanelDataset p;
    p.values = Matrix(items, length);
    for (std::size_t i = 0; i < items; ++i) {
        p.items.push_back("item_" + std::to_string(i + 1));
        const double level = comp.level * (0.5 + u(rng));
        const double slope = comp.trend * u(rng);
        const double amp = comp.season * (0.5 + u(rng));
        const double phase = 2.0 * std::numbers::pi * u(rng);
        for (std::size_t t = 0; t < length; ++t) {
            const double x = static_cast<double>(t + 1);
            p.values(i, t) = level + slope * x + amp * std::sin(2.0 * std::numbers::pi * x / comp.period + phase) +
                             comp.noise * g(rng);
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Simulated learners

enum class LearnerKind { exact, biased, lagged, noisy_quantile };

/// A stand-in forecaster. Quantile offsets are noise_scale * Phi^-1(tau).
///   exact:          future values + offsets
///   biased:         exact + bias
///   lagged:         last observed value + sqrt(step)-widening spread from the history's
///                   first differences, + bias
///   noisy_quantile: future values + N(0, noise_scale) per (item, step) + offsets + bias
struct SimLearnerSpec {
    std::string name;
    LearnerKind kind = LearnerKind::exact;
    double bias = 0.0;
    double noise_scale = 0.0;

    void validate() const {
        if (!std::isfinite(bias) || !std::isfinite(noise_scale) || noise_scale < 0.0)
            throw input_error("learner '" + name + "': bias must be finite and noise_scale >= 0");
    }
};

/// Four learners of mixed skill.
inline std::vector<SimLearnerSpec> default_learners() {
    return {
        {"noisy_small", LearnerKind::noisy_quantile, 0.0, 2.0},
        {"lagged", LearnerKind::lagged, 0.0, 0.0},
        {"biased", LearnerKind::biased, 4.0, 1.5},
        {"noisy_large", LearnerKind::noisy_quantile, 0.0, 5.0},
    };
}

inline Tensor3 simulate_cube(const PanelDataset& panel, const BacktestSplit& split, const SimLearnerSpec& spec,
                             const QuantileSpec& taus, int window, Rng& rng) {
    spec.validate();
    const TimeRange r = split.window[window];
    const std::size_t N = panel.size(), h = r.length(), q = taus.size();
    std::vector<double> zq(q);
    for (std::size_t k = 0; k < q; ++k) zq[k] = standard_normal_quantile(taus[k]);
    Tensor3 cube(N, h, q);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t i = 0; i < N; ++i) {
        double last = 0.0, spread = 0.0;
        if (spec.kind == LearnerKind::lagged) {
            const std::size_t hist = split.train[window].last; // timestamps 1..hist
            last = panel.values(i, hist - 1);
            if (hist >= 2) {
                double mean = 0.0, sq = 0.0;
                for (std::size_t t = 1; t < hist; ++t) mean += panel.values(i, t) - panel.values(i, t - 1);
                mean /= static_cast<double>(hist - 1);
                for (std::size_t t = 1; t < hist; ++t) {
                    const double d = panel.values(i, t) - panel.values(i, t - 1) - mean;
                    sq += d * d;
                }
                spread = std::sqrt(sq / static_cast<double>(hist - 1));
            }
        }
        for (std::size_t j = 0; j < h; ++j) {
            const double truth = panel.values(i, r.first - 1 + j);
            double center = truth, width = spec.noise_scale;
            switch (spec.kind) {
            case LearnerKind::exact: break;
            case LearnerKind::biased: center += spec.bias; break;
            case LearnerKind::lagged:
                center = last + spec.bias;
                width = spread * std::sqrt(static_cast<double>(j + 1));
                break;
            case LearnerKind::noisy_quantile: center += spec.noise_scale * g(rng) + spec.bias; break;
            }
            for (std::size_t k = 0; k < q; ++k) cube(i, j, k) = center + width * zq[k];
        }
    }
    return cube;
}

/// Cubes for every (learner, window), each learner predicting a window from the
/// history before it.
inline CubeSet simulate_learners(const PanelDataset& panel, const BacktestSplit& split,
                                 const std::vector<SimLearnerSpec>& specs, const QuantileSpec& taus,
                                 std::uint64_t seed) {
    CubeSet set;
    for (std::size_t l = 0; l < specs.size(); ++l)
        for (int n = 0; n < 3; ++n) {
            Rng rng = derived_rng(seed, 0x6c6561726e + l, static_cast<std::uint64_t>(n));
            const std::string name = specs[l].name.empty() ? "learner_" + std::to_string(l + 1) : specs[l].name;
            set.add(name, n, simulate_cube(panel, split, specs[l], taus, n, rng));
        }
    return set;
}

// ---------------------------------------------------------------------------
// Noise injection

/// Population standard deviation over steps for each (item, quantile).
inline Matrix prediction_std(const Tensor3& cube) {
    const std::size_t N = cube.items(), h = cube.steps(), q = cube.quantiles();
    if (h < 1) throw input_error("prediction_std needs at least one step");
    Matrix s(N, q);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < q; ++k) {
            double mean = 0.0;
            for (std::size_t j = 0; j < h; ++j) mean += cube(i, j, k);
            mean /= static_cast<double>(h);
            double sq = 0.0;
            for (std::size_t j = 0; j < h; ++j) sq += (cube(i, j, k) - mean) * (cube(i, j, k) - mean);
            s(i, k) = std::sqrt(sq / static_cast<double>(h));
        }
    return s;
}

enum class NoiseMode { time, items, quantiles };

struct NoiseSpec {
    NoiseMode mode = NoiseMode::items;
    std::uint64_t seed = 0;
};

/// Standard deviation of the injected noise per cell, from the per-(item, quantile)
/// spread `s` and the mode's scale draws `r`:
///   time:      r has one entry;   eps = 2 j r s(i,k) / h   (j 1-based)
///   items:     r has N entries;   eps = r_i s(i,k)
///   quantiles: r has q entries;   eps = 2 r_k s(i,k)
inline Tensor3 noise_scale(NoiseMode mode, const Matrix& s, std::span<const double> r, std::size_t horizon) {
    const std::size_t N = s.rows(), q = s.cols();
    const std::size_t want = mode == NoiseMode::time ? 1 : mode == NoiseMode::items ? N : q;
    if (r.size() != want) throw dimension_mismatch("noise scale draws have the wrong length");
    Tensor3 eps(N, horizon, q);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < horizon; ++j)
            for (std::size_t k = 0; k < q; ++k) {
                switch (mode) {
                case NoiseMode::time:
                    eps(i, j, k) = 2.0 * static_cast<double>(j + 1) * r[0] * s(i, k) / static_cast<double>(horizon);
                    break;
                case NoiseMode::items: eps(i, j, k) = r[i] * s(i, k); break;
                case NoiseMode::quantiles: eps(i, j, k) = 2.0 * r[k] * s(i, k); break;
                }
            }
    return eps;
}

/// Per-learner scale draws and the resulting noise standard deviations.
struct NoisePlan {
    NoiseMode mode = NoiseMode::items;
    std::vector<std::vector<double>> draws;
    std::vector<Tensor3> eps;
};

/// Draws r ~ U(0, 0.5) (time) or U(0, 2) (items, quantiles) once per learner and
/// computes eps from the window-0 cube's spread.
inline NoisePlan plan_noise(const BacktestData& data, NoiseMode mode, Rng& rng) {
    NoisePlan plan{mode, {}, {}};
    const Tensor3& ref = data.windows[0].cubes.front();
    const std::size_t count = mode == NoiseMode::time ? 1 : mode == NoiseMode::items ? ref.items() : ref.quantiles();
    std::uniform_real_distribution<double> u(0.0, mode == NoiseMode::time ? 0.5 : 2.0);
    for (std::size_t l = 0; l < data.size(); ++l) {
        std::vector<double> r(count);
        for (double& v : r) v = u(rng);
        const Tensor3& cube0 = data.windows[0].cubes[l];
        plan.eps.push_back(noise_scale(mode, prediction_std(cube0), r, cube0.steps()));
        plan.draws.push_back(std::move(r));
    }
    return plan;
}

/// Adds one realized Gaussian noise tensor per learner, identical in all three windows.
inline void apply_noise(BacktestData& data, const NoisePlan& plan, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t l = 0; l < data.size(); ++l) {
        const Tensor3& eps = plan.eps[l];
        std::vector<double> noise(eps.size());
        for (std::size_t c = 0; c < noise.size(); ++c) noise[c] = eps.values()[c] * g(rng);
        for (WindowData& w : data.windows) {
            auto& v = w.cubes[l].values();
            if (v.size() != noise.size()) throw dimension_mismatch("noise plan does not match cube shape");
            for (std::size_t c = 0; c < v.size(); ++c) v[c] += noise[c];
        }
    }
}

inline BacktestData inject_noise(BacktestData data, const NoiseSpec& spec) {
    Rng rng = derived_rng(spec.seed, 0x6e6f697365);
    const NoisePlan plan = plan_noise(data, spec.mode, rng);
    apply_noise(data, plan, rng);
    return data;
}

inline const char* to_string(NoiseMode m) {
    switch (m) {
    case NoiseMode::time: return "time";
    case NoiseMode::items: return "items";
    case NoiseMode::quantiles: return "quantiles";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Experiments

struct SyntheticConfig {
    std::size_t items = 20;
    std::size_t horizon = 8;
    std::size_t length = 56;
    QuantileSpec quantiles = QuantileSpec::standard();
    PanelComponents components;
    std::vector<SimLearnerSpec> learners = default_learners();
    std::optional<NoiseMode> noise;
    FitOptions fit;
    AlphaSearchSpec search{default_alpha_grid()};
};

struct SyntheticInstance {
    PanelDataset panel;
    BacktestSplit split;
    CubeSet cubes;        ///< before noise
    BacktestData data;    ///< after noise, if any
};

inline SyntheticInstance make_instance(const SyntheticConfig& cfg, std::uint64_t seed) {
    SyntheticInstance inst;
    inst.panel = gen_panel(seed, cfg.items, cfg.length, cfg.components);
    inst.split = make_backtest_splits(inst.panel, cfg.horizon);
    inst.cubes = simulate_learners(inst.panel, inst.split, cfg.learners, cfg.quantiles, seed);
    inst.data = assemble_backtest(inst.cubes, inst.panel, inst.split);
    if (cfg.noise) inst.data = inject_noise(std::move(inst.data), {*cfg.noise, seed});
    return inst;
}

struct GapRow {
    std::size_t rep = 0;
    Alpha alpha_hat;
    double test_ours = 0.0;
    double test_oracle = 0.0;
    double gap = 0.0;
    double rel_gap = 0.0;
    bool validation_dominant = false;
};

struct GapSummary {
    std::vector<GapRow> rows;
    double mean_ours = 0.0;
    double mean_oracle = 0.0;
    double median_gap = 0.0;
    double median_rel_gap = 0.0;
    double frac_within_5pct = 0.0;
    std::size_t validation_dominant = 0;
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// For each repetition: pick alpha by validation, then compare its test loss with the
/// best test loss any grid point would have achieved.
inline GapSummary oracle_gap_experiment(const SyntheticConfig& cfg, std::size_t repetitions, std::uint64_t seed) {
    if (repetitions < 1) throw input_error("repetitions must be at least 1");
    PipelineConfig pc;
    pc.quantiles = cfg.quantiles;
    pc.horizon = cfg.horizon;
    pc.search = cfg.search;
    pc.search.refine = false;
    pc.fit = cfg.fit;
    pc.baselines = {false, false, false, false, false};

    GapSummary out;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
        const SyntheticInstance inst = make_instance(cfg, seed + rep);
        const PipelineResult res = run_algorithm1(inst.data, pc);
        const WindowData& w1 = inst.data.windows[1];
        const WindowData& w2 = inst.data.windows[2];

        std::vector<double> test(pc.search.grid.size());
        parallel_for(test.size(), pc.search.threads, [&](std::size_t g) {
            test[g] = evaluate_alpha(pc.search.grid[g], w1, w2, cfg.quantiles, cfg.fit);
        });
        GapRow row;
        row.rep = rep;
        row.alpha_hat = res.alpha_hat;
        row.test_ours = res.ours.mean_wql;
        row.test_oracle = *std::min_element(test.begin(), test.end());
        row.gap = row.test_ours - row.test_oracle;
        row.rel_gap = row.test_oracle > 0.0 ? row.gap / row.test_oracle : 0.0;
        double val_min = res.search.points.front().val_wql;
        for (const SearchPoint& p : res.search.points) val_min = std::min(val_min, p.val_wql);
        row.validation_dominant = res.search.val_wql == val_min;
        out.rows.push_back(row);
    }

    std::vector<double> gaps, rels;
    std::size_t within = 0;
    for (const GapRow& r : out.rows) {
        out.mean_ours += r.test_ours / static_cast<double>(repetitions);
        out.mean_oracle += r.test_oracle / static_cast<double>(repetitions);
        gaps.push_back(r.gap);
        rels.push_back(r.rel_gap);
        within += r.rel_gap <= 0.05;
        out.validation_dominant += r.validation_dominant;
    }
    out.median_gap = median_of(gaps);
    out.median_rel_gap = median_of(rels);
    out.frac_within_5pct = static_cast<double>(within) / static_cast<double>(repetitions);
    return out;
}

inline std::string gap_csv(const GapSummary& s, const std::string& mode) {
    std::string out = "rep,mode,alpha_hat1,alpha_hat2,alpha_hat3,alpha_hat4,test_wql_ours,test_wql_oracle,gap,rel_gap\n";
    for (const GapRow& r : s.rows) {
        out += std::to_string(r.rep) + ',' + mode;
        for (double a : r.alpha_hat.values) out += ',' + format_number(a, 12);
        out += ',' + format_number(r.test_ours, 12) + ',' + format_number(r.test_oracle, 12) + ',' +
               format_number(r.gap, 12) + ',' + format_number(r.rel_gap, 12) + '\n';
    }
    out += "summary," + mode + ",,,,," + format_number(s.mean_ours, 12) + ',' + format_number(s.mean_oracle, 12) +
           ',' + format_number(s.median_gap, 12) + ',' + format_number(s.median_rel_gap, 12) + '\n';
    return out;
}

} // namespace stackcast
