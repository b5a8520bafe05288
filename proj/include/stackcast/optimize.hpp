#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "stackcast/data.hpp"
#include "stackcast/errors.hpp"
#include "stackcast/loss.hpp"
#include "stackcast/objective.hpp"

namespace stackcast {

struct FitOptions {
    std::size_t max_iters = 2000;
    /// Initial per-coordinate step on the logits.
    double step_size = 0.1;
    /// Multiplier applied to a coordinate's step when its gradient changes sign,
    /// and to every step after `patience` iterations without a new incumbent.
    double step_decay = 0.5;
    double tol = 1e-8;
    std::size_t patience = 25;
    std::uint64_t seed = 0;
    L1Target l1 = L1Target::logits;

    void validate() const {
        if (max_iters < 1) throw input_error("max_iters must be at least 1");
        if (!(step_size > 0.0)) throw input_error("step_size must be positive");
        if (!(step_decay > 0.0 && step_decay <= 1.0)) throw input_error("step_decay must lie in (0,1]");
        if (!(tol >= 0.0)) throw input_error("tol must be nonnegative");
        if (patience < 1) throw input_error("patience must be at least 1");
    }
};

struct FitResult {
    WeightTensor weights;
    LogitTensor logits;
    double objective = 0.0;
    std::size_t iterations = 0;
    /// Best objective seen after each evaluation (index 0 is the starting point).
    std::vector<double> best_trace;
};

/// Minimizes the regularized loss over logits from the uniform start (all zeros) with
/// sign-based per-coordinate steps (iRprop-) and incumbent tracking. Deterministic.
inline FitResult fit_weights(const ObjectiveProblem& prob, const Alpha& alpha, const FitOptions& opts) {
    alpha.validate();
    opts.validate();
    constexpr double grow = 1.2;
    constexpr double max_step = 1.0;
    constexpr double min_step = 1e-12;
    constexpr int stall_limit = 3;

    const std::size_t m = prob.learners();
    LogitTensor theta(m, prob.shape());
    LogitGradient grad;
    double f = evaluate_objective(theta, alpha, prob, opts.l1, &grad);
    if (!std::isfinite(f)) throw non_finite_objective(0);

    FitResult res;
    res.logits = theta;
    res.objective = f;
    res.best_trace.push_back(f);

    const std::size_t P = theta.size();
    std::vector<double> step(P, opts.step_size), prev(P, 0.0);
    std::size_t since_best = 0;
    double best_at_decay = f;
    int stalls = 0;

    for (std::size_t it = 1; it <= opts.max_iters; ++it) {
        auto& g = grad.values();
        if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) break;

        auto& t = theta.values();
        for (std::size_t x = 0; x < P; ++x) {
            const double s = g[x] * prev[x];
            if (s > 0.0)
                step[x] = std::min(step[x] * grow, max_step);
            else if (s < 0.0) {
                step[x] = std::max(step[x] * opts.step_decay, min_step);
                g[x] = 0.0;
            }
            if (g[x] > 0.0)
                t[x] -= step[x];
            else if (g[x] < 0.0)
                t[x] += step[x];
            prev[x] = g[x];
        }

        f = evaluate_objective(theta, alpha, prob, opts.l1, &grad);
        res.iterations = it;
        if (!std::isfinite(f)) throw non_finite_objective(it);
        if (f < res.objective) {
            res.objective = f;
            res.logits = theta;
            since_best = 0;
        } else if (++since_best >= opts.patience) {
            // Restart from the incumbent with every step shrunk.
            since_best = 0;
            theta = res.logits;
            f = evaluate_objective(theta, alpha, prob, opts.l1, &grad);
            for (double& s : step) s = std::max(s * opts.step_decay, min_step);
            std::fill(prev.begin(), prev.end(), 0.0);
            stalls = best_at_decay - res.objective < opts.tol ? stalls + 1 : 0;
            best_at_decay = res.objective;
        }
        res.best_trace.push_back(res.objective);
        if (stalls >= stall_limit) break;
        if (std::all_of(step.begin(), step.end(), [](double s) { return s <= min_step; })) break;
    }
    res.weights = weights_from_logits(res.logits);
    return res;
}

inline FitResult fit_weights(const WindowData& data, const QuantileSpec& taus, const Alpha& alpha,
                             const FitOptions& opts) {
    check_window(data, taus.size());
    ObjectiveProblem prob(data.cubes, data.actuals, taus);
    return fit_weights(prob, alpha, opts);
}

/// Fits on `train`, applies the weights index-wise to `val`'s cubes, returns the
/// validation mean weighted quantile loss.
inline double evaluate_alpha(const Alpha& alpha, const WindowData& train, const WindowData& val,
                             const QuantileSpec& taus, const FitOptions& opts) {
    check_window(val, taus.size());
    FitResult fit = fit_weights(train, taus, alpha, opts);
    return mean_wql(combine(fit.weights, val.cubes), val.actuals, taus);
}

// ---------------------------------------------------------------------------
// Outer search over alpha

struct AlphaSearchSpec {
    std::vector<Alpha> grid;
    bool refine = false;
    std::size_t refine_budget = 40;
    std::array<double, 4> upper{10.0, 10.0, 10.0, 10.0};
    /// Worker threads for grid evaluation; 0 picks the hardware concurrency.
    std::size_t threads = 1;

    void validate() const {
        if (grid.empty()) throw input_error("alpha grid is empty");
        for (const Alpha& a : grid) {
            a.validate();
            for (std::size_t d = 0; d < 4; ++d)
                if (a[d] > upper[d]) throw input_error("alpha grid point exceeds the search bounds");
        }
    }
};

/// {0, 0.01, 0.1, 1}^4 restricted to points with at most two nonzero coordinates,
/// in lexicographic order (67 points).
inline std::vector<Alpha> default_alpha_grid() {
    static constexpr double levels[4] = {0.0, 0.01, 0.1, 1.0};
    std::vector<Alpha> grid;
    for (double a : levels)
        for (double b : levels)
            for (double c : levels)
                for (double d : levels) {
                    Alpha p(a, b, c, d);
                    int nonzero = (a != 0) + (b != 0) + (c != 0) + (d != 0);
                    if (nonzero <= 2) grid.push_back(p);
                }
    return grid;
}

enum class PointSource { grid, refine };

inline const char* to_string(PointSource s) { return s == PointSource::grid ? "grid" : "refine"; }

struct SearchPoint {
    Alpha alpha;
    double val_wql = 0.0;
    std::size_t evals = 0; ///< 1-based evaluation counter
    PointSource source = PointSource::grid;
};

struct SearchResult {
    Alpha alpha_hat;
    double val_wql = 0.0;
    std::vector<SearchPoint> points;
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers; results land by index, so the
/// outcome does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Smallest loss; exact ties go to the lexicographically smallest alpha.
inline const SearchPoint& best_point(const std::vector<SearchPoint>& pts) {
    const SearchPoint* best = &pts.front();
    for (const SearchPoint& p : pts)
        if (p.val_wql < best->val_wql || (p.val_wql == best->val_wql && p.alpha < best->alpha)) best = &p;
    return *best;
}

namespace detail {

/// Box-clamped Nelder-Mead on f, starting near x0, spending at most `budget` calls.
template <class F>
void nelder_mead_box(F&& f, const std::array<double, 4>& x0, double fx0, const std::array<double, 4>& upper,
                     std::size_t budget) {
    using Point = std::array<double, 4>;
    constexpr std::size_t dim = 4;
    auto clamp = [&](Point p) {
        for (std::size_t d = 0; d < dim; ++d) p[d] = std::clamp(p[d], 0.0, upper[d]);
        return p;
    };
    std::size_t used = 0;
    auto call = [&](const Point& p, double& out) {
        if (used >= budget) return false;
        ++used;
        out = f(p);
        return true;
    };

    std::vector<std::pair<Point, double>> simplex{{x0, fx0}};
    for (std::size_t d = 0; d < dim; ++d) {
        Point p = x0;
        double delta = std::max(0.5 * x0[d], 0.05 * upper[d]);
        p[d] = x0[d] + delta <= upper[d] ? x0[d] + delta : std::max(0.0, x0[d] - delta);
        double fp;
        if (!call(p, fp)) return;
        simplex.emplace_back(p, fp);
    }

    auto by_value = [](const auto& a, const auto& b) { return a.second < b.second; };
    while (used < budget) {
        std::stable_sort(simplex.begin(), simplex.end(), by_value);
        if (std::abs(simplex.back().second - simplex.front().second) <= 1e-14) {
            double size = 0.0;
            for (std::size_t v = 1; v <= dim; ++v)
                for (std::size_t d = 0; d < dim; ++d)
                    size = std::max(size, std::abs(simplex[v].first[d] - simplex[0].first[d]));
            if (size < 1e-9) return;
        }
        Point centroid{};
        for (std::size_t v = 0; v < dim; ++v)
            for (std::size_t d = 0; d < dim; ++d) centroid[d] += simplex[v].first[d] / dim;
        const Point& worst = simplex.back().first;
        auto along = [&](double coef) {
            Point p;
            for (std::size_t d = 0; d < dim; ++d) p[d] = centroid[d] + coef * (worst[d] - centroid[d]);
            return clamp(p);
        };

        Point xr = along(-1.0);
        double fr;
        if (!call(xr, fr)) return;
        if (fr < simplex.front().second) {
            Point xe = along(-2.0);
            double fe;
            if (!call(xe, fe)) {
                simplex.back() = {xr, fr};
                return;
            }
            simplex.back() = fe < fr ? std::make_pair(xe, fe) : std::make_pair(xr, fr);
        } else if (fr < simplex[dim - 1].second) {
            simplex.back() = {xr, fr};
        } else {
            const bool outside = fr < simplex.back().second;
            Point xc = along(outside ? -0.5 : 0.5);
            double fc;
            if (!call(xc, fc)) return;
            if (fc < std::min(fr, simplex.back().second)) {
                simplex.back() = {xc, fc};
            } else {
                for (std::size_t v = 1; v <= dim; ++v) {
                    Point p;
                    for (std::size_t d = 0; d < dim; ++d)
                        p[d] = simplex[0].first[d] + 0.5 * (simplex[v].first[d] - simplex[0].first[d]);
                    p = clamp(p);
                    double fp;
                    if (!call(p, fp)) return;
                    simplex[v] = {p, fp};
                }
            }
        }
    }
}

} // namespace detail

/// Scores every grid point, optionally refines from the grid argmin with a bounded
/// Nelder-Mead search, and returns the argmin over everything evaluated.
inline SearchResult search_alpha(const AlphaSearchSpec& spec, const WindowData& train, const WindowData& val,
                                 const QuantileSpec& taus, const FitOptions& opts) {
    spec.validate();
    check_window(train, taus.size());
    check_window(val, taus.size());

    SearchResult res;
    res.points.resize(spec.grid.size());
    parallel_for(spec.grid.size(), spec.threads, [&](std::size_t i) {
        res.points[i] = {spec.grid[i], evaluate_alpha(spec.grid[i], train, val, taus, opts), i + 1,
                         PointSource::grid};
    });

    if (spec.refine && spec.refine_budget > 0) {
        const SearchPoint start = best_point(res.points);
        std::map<std::array<double, 4>, double> seen;
        for (const SearchPoint& p : res.points) seen.emplace(p.alpha.values, p.val_wql);
        auto f = [&](const std::array<double, 4>& x) {
            auto it = seen.find(x);
            if (it != seen.end()) return it->second;
            Alpha a;
            a.values = x;
            double v = evaluate_alpha(a, train, val, taus, opts);
            seen.emplace(x, v);
            res.points.push_back({a, v, res.points.size() + 1, PointSource::refine});
            return v;
        };
        detail::nelder_mead_box(f, start.alpha.values, start.val_wql, spec.upper, spec.refine_budget);
    }

    const SearchPoint& best = best_point(res.points);
    res.alpha_hat = best.alpha;
    res.val_wql = best.val_wql;
    return res;
}

} // namespace stackcast
