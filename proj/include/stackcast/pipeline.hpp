#pragma once

// Cross-validated choice of the regularization vector over three trailing backtest
// windows, and the simple ensembling baselines it is compared against.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "stackcast/data.hpp"
#include "stackcast/errors.hpp"
#include "stackcast/io.hpp"
#include "stackcast/loss.hpp"
#include "stackcast/objective.hpp"
#include "stackcast/optimize.hpp"

namespace stackcast {

struct BaselineSet {
    bool mean = true;
    bool median = true;
    bool global_best = true;
    bool best_single = true;
    bool unregularized = true;
};

struct PipelineConfig {
    QuantileSpec quantiles = QuantileSpec::standard();
    std::size_t horizon = 0;
    AlphaSearchSpec search{default_alpha_grid()};
    FitOptions fit;
    BaselineSet baselines;
    std::uint64_t seed = 0;
};

/// Learner cubes and actuals of the three backtest windows.
struct BacktestData {
    std::vector<std::string> learners;
    std::array<WindowData, 3> windows;

    std::size_t size() const noexcept { return learners.size(); }
};

inline BacktestData assemble_backtest(const CubeSet& cubes, const PanelDataset& panel, const BacktestSplit& split) {
    if (cubes.size() == 0) throw missing_window("no learner cubes supplied");
    BacktestData d;
    d.learners = cubes.learners;
    for (int n = 0; n < 3; ++n) {
        d.windows[static_cast<std::size_t>(n)].cubes = cubes.window(n);
        d.windows[static_cast<std::size_t>(n)].actuals = actuals_for(panel, split, n).values;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Baselines

inline Tensor3 mean_ensemble(std::span<const Tensor3> cubes) {
    Tensor3 out = cubes.front();
    auto& o = out.values();
    for (std::size_t l = 1; l < cubes.size(); ++l)
        for (std::size_t c = 0; c < o.size(); ++c) o[c] += cubes[l].values()[c];
    for (double& v : o) v /= static_cast<double>(cubes.size());
    return out;
}

/// Element-wise median across learners; even counts take the midpoint of the central pair.
inline Tensor3 median_ensemble(std::span<const Tensor3> cubes) {
    Tensor3 out = cubes.front();
    const std::size_t m = cubes.size();
    std::vector<double> col(m);
    for (std::size_t c = 0; c < out.size(); ++c) {
        for (std::size_t l = 0; l < m; ++l) col[l] = cubes[l].values()[c];
        std::sort(col.begin(), col.end());
        out.values()[c] = m % 2 ? col[m / 2] : 0.5 * (col[m / 2 - 1] + col[m / 2]);
    }
    return out;
}

enum class CenterKind { mean, median };

inline LossReport baseline(CenterKind kind, const WindowData& test, const QuantileSpec& taus) {
    check_window(test, taus.size());
    const Tensor3 pred = kind == CenterKind::mean ? mean_ensemble(test.cubes) : median_ensemble(test.cubes);
    return loss_report(kind == CenterKind::mean ? "Mean" : "Median", "2", pred, test.actuals, taus);
}

inline constexpr std::size_t max_subset_learners = 20;

/// Learner indices of a subset mask, ascending.
inline std::vector<std::size_t> subset_members(std::uint32_t mask) {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; mask >> l; ++l)
        if (mask >> l & 1u) out.push_back(l);
    return out;
}

/// Picks the mask with minimal loss from `loss_by_mask` (indexed by mask, entry 0
/// unused); ties go to the smaller subset, then to the lexicographically smaller
/// member list.
inline std::uint32_t choose_global_best(std::span<const double> loss_by_mask) {
    std::uint32_t best = 1;
    for (std::uint32_t mask = 2; mask < loss_by_mask.size(); ++mask) {
        const double a = loss_by_mask[mask], b = loss_by_mask[best];
        if (a < b) {
            best = mask;
        } else if (a == b) {
            const int pa = std::popcount(mask), pb = std::popcount(best);
            if (pa < pb || (pa == pb && subset_members(mask) < subset_members(best))) best = mask;
        }
    }
    return best;
}

struct SubsetChoice {
    std::vector<std::size_t> members;
    double validation_wql = 0.0;
    LossReport test;
};

/// Global Best: the learner subset whose simple mean scores best on the validation
/// window, evaluated on the test window.
inline SubsetChoice baseline_global_best(const WindowData& val, const WindowData& test, const QuantileSpec& taus) {
    check_window(val, taus.size());
    check_window(test, taus.size());
    const std::size_t m = val.cubes.size();
    if (m > max_subset_learners)
        throw too_many_learners(std::to_string(m) + " learners; subset enumeration supports at most " +
                                std::to_string(max_subset_learners));
    const std::uint32_t masks = 1u << m;
    std::vector<double> losses(masks, 0.0);
    std::vector<Tensor3> pick;
    for (std::uint32_t mask = 1; mask < masks; ++mask) {
        pick.clear();
        for (std::size_t l : subset_members(mask)) pick.push_back(val.cubes[l]);
        losses[mask] = mean_wql(mean_ensemble(pick), val.actuals, taus);
    }
    const std::uint32_t best = choose_global_best(losses);
    SubsetChoice out{subset_members(best), losses[best], {}};
    pick.clear();
    for (std::size_t l : out.members) pick.push_back(test.cubes[l]);
    out.test = loss_report("GB", "2", mean_ensemble(pick), test.actuals, taus);
    return out;
}

/// Lowest-loss index; ties go to the lowest index.
inline std::size_t choose_best_single(std::span<const double> losses) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < losses.size(); ++l)
        if (losses[l] < losses[best]) best = l;
    return best;
}

struct SingleChoice {
    std::size_t learner = 0;
    double validation_wql = 0.0;
    LossReport test;
};

inline SingleChoice baseline_best_single(const WindowData& val, const WindowData& test, const QuantileSpec& taus) {
    check_window(val, taus.size());
    check_window(test, taus.size());
    std::vector<double> losses;
    for (const Tensor3& c : val.cubes) losses.push_back(mean_wql(c, val.actuals, taus));
    const std::size_t best = choose_best_single(losses);
    return {best, losses[best], loss_report("Best", "2", test.cubes[best], test.actuals, taus)};
}

// ---------------------------------------------------------------------------
// Algorithm

struct PipelineResult {
    Alpha alpha_hat;
    SearchResult search;
    WeightTensor w_star;
    Tensor3 predictions;
    LossReport ours;
    /// Base learners first, then "Ours" and every enabled baseline, all on window 2.
    std::vector<LossReport> reports;
    std::optional<WeightTensor> unregularized_weights;
    std::optional<SubsetChoice> global_best;
    std::optional<SingleChoice> best_single;
};

inline void validate_backtest(const BacktestData& data, const QuantileSpec& taus) {
    if (data.size() == 0) throw missing_window("no learners");
    for (const WindowData& w : data.windows) {
        if (w.cubes.size() != data.size()) throw missing_window("window is missing learner cubes");
        check_window(w, taus.size());
    }
    const CellShape s = CellShape::of(data.windows[0].cubes.front());
    for (const WindowData& w : data.windows)
        if (!(CellShape::of(w.cubes.front()) == s)) throw dimension_mismatch("backtest windows differ in shape");
}

/// Scores each candidate alpha by fitting on window 0 and validating on window 1,
/// refits the winner on window 1, and predicts window 2.
inline PipelineResult run_algorithm1(const BacktestData& data, const PipelineConfig& config) {
    const QuantileSpec& taus = config.quantiles;
    validate_backtest(data, taus);
    const WindowData& w0 = data.windows[0];
    const WindowData& w1 = data.windows[1];
    const WindowData& w2 = data.windows[2];

    PipelineResult r;
    r.search = search_alpha(config.search, w0, w1, taus, config.fit);
    r.alpha_hat = r.search.alpha_hat;
    r.w_star = fit_weights(w1, taus, r.alpha_hat, config.fit).weights;
    r.predictions = combine(r.w_star, w2.cubes);
    r.ours = loss_report("Ours", "2", r.predictions, w2.actuals, taus);

    for (std::size_t l = 0; l < data.size(); ++l)
        r.reports.push_back(loss_report(data.learners[l], "2", w2.cubes[l], w2.actuals, taus));
    r.reports.push_back(r.ours);

    const BaselineSet& b = config.baselines;
    if (b.mean) r.reports.push_back(baseline(CenterKind::mean, w2, taus));
    if (b.median) r.reports.push_back(baseline(CenterKind::median, w2, taus));
    if (b.global_best && data.size() <= max_subset_learners) {
        r.global_best = baseline_global_best(w1, w2, taus);
        r.reports.push_back(r.global_best->test);
    }
    if (b.best_single) {
        r.best_single = baseline_best_single(w1, w2, taus);
        r.reports.push_back(r.best_single->test);
    }
    if (b.unregularized) {
        r.unregularized_weights = fit_weights(w1, taus, Alpha{}, config.fit).weights;
        r.reports.push_back(
            loss_report("Unregularized", "2", combine(*r.unregularized_weights, w2.cubes), w2.actuals, taus));
    }
    return r;
}

inline const LossReport* find_report(const PipelineResult& r, const std::string& strategy) {
    for (const LossReport& rep : r.reports)
        if (rep.strategy == strategy) return &rep;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Emission

inline std::string weights_csv(const WeightTensor& w, const std::vector<std::string>& learners,
                               const std::vector<std::string>& items, const QuantileSpec& taus) {
    std::string out = "learner,item,step,tau,weight\n";
    const CellShape& s = w.shape();
    for (std::size_t l = 0; l < w.learners(); ++l)
        for (std::size_t i = 0; i < s.items; ++i)
            for (std::size_t j = 0; j < s.steps; ++j)
                for (std::size_t k = 0; k < s.quantiles; ++k)
                    out += learners[l] + ',' + items[i] + ',' + std::to_string(j + 1) + ',' + format_tau(taus[k]) +
                           ',' + format_number(w(l, i, j, k), 12) + '\n';
    return out;
}

inline std::string predictions_csv(const Tensor3& pred, const std::vector<std::string>& items,
                                   const QuantileSpec& taus) {
    std::ostringstream out;
    write_predictions(out, pred, items, taus);
    return out.str();
}

inline std::string loss_reports_csv(const std::vector<LossReport>& reports, const QuantileSpec& taus) {
    std::string out = "strategy,window,tau,loss\n";
    for (const LossReport& r : reports) {
        for (std::size_t k = 0; k < r.per_quantile.size(); ++k)
            out += r.strategy + ',' + r.window + ',' + format_tau(taus[k]) + ',' +
                   format_number(r.per_quantile[k], 12) + '\n';
        out += r.strategy + ',' + r.window + ",all," + format_number(r.mean_wql, 12) + '\n';
    }
    return out;
}

/// One row per base learner or strategy, as in a results table.
inline std::string comparison_csv(const std::vector<LossReport>& reports) {
    std::string out = "strategy,test_mean_wql\n";
    for (const LossReport& r : reports) out += r.strategy + ',' + format_number(r.mean_wql, 12) + '\n';
    return out;
}

inline std::string search_report_csv(const SearchResult& s) {
    std::string out = "alpha1,alpha2,alpha3,alpha4,val_wql,evals,source\n";
    for (const SearchPoint& p : s.points) {
        for (double a : p.alpha.values) out += format_number(a, 12) + ',';
        out += format_number(p.val_wql, 12) + ',' + std::to_string(p.evals) + ',' + to_string(p.source) + '\n';
    }
    return out;
}

} // namespace stackcast
