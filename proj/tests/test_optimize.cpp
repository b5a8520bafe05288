#include <gtest/gtest.h>

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "stackcast/optimize.hpp"
#include "stackcast/pipeline.hpp"
#include "stackcast/synthetic.hpp"

namespace stackcast {
namespace {

SyntheticConfig small_config() {
    SyntheticConfig cfg;
    cfg.items = 5;
    cfg.horizon = 4;
    cfg.length = 24;
    cfg.learners.resize(3);
    return cfg;
}

WindowData exact_and_shifted(const SyntheticConfig& cfg, std::uint64_t seed, int window) {
    SyntheticConfig c = cfg;
    c.learners = {{"exact", LearnerKind::exact, 0, 0}, {"shifted", LearnerKind::biased, 10, 0}};
    return make_instance(c, seed).data.windows[static_cast<std::size_t>(window)];
}

TEST(FitWeights, SingleLearnerConvergesImmediately) {
    SyntheticConfig cfg = small_config();
    cfg.learners.resize(1);
    const SyntheticInstance inst = make_instance(cfg, 1);
    const FitResult r = fit_weights(inst.data.windows[0], cfg.quantiles, Alpha(0.1, 0, 0, 0), {});
    EXPECT_LE(r.iterations, 1u);
    for (double w : r.weights.values()) EXPECT_EQ(w, 1.0);
}

TEST(FitWeights, ConcentratesOnExactLearner) {
    const SyntheticConfig cfg = small_config();
    const WindowData w = exact_and_shifted(cfg, 2, 0);
    const FitResult r = fit_weights(w, cfg.quantiles, Alpha{}, {});
    for (double v : r.weights.learner(0)) EXPECT_GE(v, 0.99);

    // One-cell sweep over the exact learner's weight: the loss is smallest at weight 1.
    const std::vector<Tensor3> cell{Tensor3(1, 1, 1, w.actuals(0, 0)), Tensor3(1, 1, 1, w.actuals(0, 0) + 10)};
    double best_w = 0, best = 1e300;
    for (int s = 0; s <= 1000; ++s) {
        const double a = s / 1000.0;
        const double loss = pinball(w.actuals(0, 0), a * cell[0](0, 0, 0) + (1 - a) * cell[1](0, 0, 0), 0.5);
        if (loss < best) best = loss, best_w = a;
    }
    EXPECT_EQ(best_w, 1.0);
}

TEST(FitWeights, LargeItemEntropyFlattensAcrossItems) {
    SyntheticConfig cfg = small_config();
    cfg.noise = NoiseMode::items;
    const SyntheticInstance inst = make_instance(cfg, 3);
    const FitResult r = fit_weights(inst.data.windows[0], cfg.quantiles, Alpha(1e3, 0, 0, 0), {});
    const CellShape& s = r.weights.shape();
    for (std::size_t l = 0; l < r.weights.learners(); ++l)
        for (std::size_t j = 0; j < s.steps; ++j)
            for (std::size_t k = 0; k < s.quantiles; ++k) {
                double lo = 1, hi = 0;
                for (std::size_t i = 0; i < s.items; ++i) {
                    lo = std::min(lo, r.weights(l, i, j, k));
                    hi = std::max(hi, r.weights(l, i, j, k));
                }
                EXPECT_LE(hi - lo, 1e-3);
            }
}

TEST(FitWeights, BestTraceNeverIncreases) {
    SyntheticConfig cfg = small_config();
    cfg.noise = NoiseMode::time;
    const SyntheticInstance inst = make_instance(cfg, 4);
    const FitResult r = fit_weights(inst.data.windows[0], cfg.quantiles, Alpha(0.1, 0.01, 0, 0.01), {});
    ASSERT_FALSE(r.best_trace.empty());
    for (std::size_t t = 1; t < r.best_trace.size(); ++t) EXPECT_LE(r.best_trace[t], r.best_trace[t - 1]);
    EXPECT_EQ(r.objective, r.best_trace.back());
    EXPECT_LE(r.objective, r.best_trace.front());
}

TEST(FitOptions, RejectsInvalid) {
    FitOptions o;
    o.step_decay = 1.5;
    EXPECT_THROW(o.validate(), input_error);
    o = {};
    o.max_iters = 0;
    EXPECT_THROW(o.validate(), input_error);
}

TEST(EvaluateAlpha, PerfectLearnerBeatsBestSingle) {
    const SyntheticConfig cfg = small_config();
    const WindowData w = exact_and_shifted(cfg, 5, 1);
    const double val = evaluate_alpha(Alpha{}, w, w, cfg.quantiles, {});
    double best_single = 1e300;
    for (const Tensor3& c : w.cubes) best_single = std::min(best_single, mean_wql(c, w.actuals, cfg.quantiles));
    EXPECT_LT(val, best_single + 1e-6);
}

TEST(EvaluateAlpha, SingleLearnerIsItsValidationLoss) {
    SyntheticConfig cfg = small_config();
    cfg.learners.resize(1);
    const SyntheticInstance inst = make_instance(cfg, 6);
    const WindowData& val = inst.data.windows[1];
    EXPECT_EQ(evaluate_alpha(Alpha(1, 1, 1, 1), inst.data.windows[0], val, cfg.quantiles, {}),
              mean_wql(val.cubes[0], val.actuals, cfg.quantiles));
}

TEST(EvaluateAlpha, HugeAlphaMatchesSimpleMean) {
    SyntheticConfig cfg = small_config();
    cfg.noise = NoiseMode::quantiles;
    const SyntheticInstance inst = make_instance(cfg, 7);
    const WindowData& val = inst.data.windows[1];
    const double huge = evaluate_alpha(Alpha(1e4, 1e4, 1e4, 1e4), inst.data.windows[0], val, cfg.quantiles, {});
    EXPECT_NEAR(huge, mean_wql(mean_ensemble(val.cubes), val.actuals, cfg.quantiles), 1e-6);
}

struct SearchFixture : ::testing::Test {
    SyntheticConfig cfg = [] {
        SyntheticConfig c = small_config();
        c.noise = NoiseMode::items;
        return c;
    }();
    SyntheticInstance inst = make_instance(cfg, 8);
    const WindowData& train = inst.data.windows[0];
    const WindowData& val = inst.data.windows[1];
};

TEST_F(SearchFixture, SinglePointGrid) {
    const SearchResult r = search_alpha(AlphaSearchSpec{{Alpha{}}}, train, val, cfg.quantiles, {});
    EXPECT_EQ(r.alpha_hat, Alpha{});
    ASSERT_EQ(r.points.size(), 1u);
    EXPECT_EQ(r.points[0].evals, 1u);
}

TEST_F(SearchFixture, MatchesExhaustiveEvaluation) {
    const std::vector<Alpha> grid{Alpha{}, Alpha(1, 0, 0, 0), Alpha(0, 0.1, 0, 0), Alpha(0, 0, 0, 1)};
    const SearchResult r = search_alpha(AlphaSearchSpec{grid}, train, val, cfg.quantiles, {});
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double loss = evaluate_alpha(grid[g], train, val, cfg.quantiles, {});
        EXPECT_EQ(r.points[g].val_wql, loss);
        if (loss < r.points[best].val_wql) best = g;
    }
    EXPECT_EQ(r.alpha_hat, grid[best]);
}

TEST_F(SearchFixture, RefinementKeepsIncumbent) {
    AlphaSearchSpec spec{{Alpha{}, Alpha(0.1, 0.1, 0, 0), Alpha(1, 0, 0.1, 0)}};
    const SearchResult grid_only = search_alpha(spec, train, val, cfg.quantiles, {});
    spec.refine = true;
    spec.refine_budget = 12;
    const SearchResult refined = search_alpha(spec, train, val, cfg.quantiles, {});
    EXPECT_LE(refined.val_wql, grid_only.val_wql);
    EXPECT_LE(refined.points.size(), 3u + 12u);
    for (const SearchPoint& p : refined.points) {
        EXPECT_TRUE(p.alpha.valid());
        for (std::size_t d = 0; d < 4; ++d) EXPECT_LE(p.alpha[d], spec.upper[d]);
    }
}

TEST_F(SearchFixture, ThreadCountDoesNotChangeResult) {
    AlphaSearchSpec spec{{Alpha{}, Alpha(0.01, 0, 0, 0), Alpha(0, 1, 0, 0), Alpha(0, 0, 0.1, 0.1), Alpha(1, 1, 0, 0)}};
    const SearchResult one = search_alpha(spec, train, val, cfg.quantiles, {});
    spec.threads = 3;
    const SearchResult three = search_alpha(spec, train, val, cfg.quantiles, {});
    ASSERT_EQ(one.points.size(), three.points.size());
    for (std::size_t g = 0; g < one.points.size(); ++g) EXPECT_EQ(one.points[g].val_wql, three.points[g].val_wql);
    EXPECT_EQ(one.alpha_hat, three.alpha_hat);
}

TEST(BestPoint, TiesGoToSmallerAlpha) {
    const std::vector<SearchPoint> pts{{Alpha(1, 0, 0, 0), 0.5, 1, PointSource::grid},
                                       {Alpha(0, 1, 0, 0), 0.5, 2, PointSource::grid},
                                       {Alpha(0, 0, 1, 0), 0.7, 3, PointSource::grid}};
    EXPECT_EQ(best_point(pts).alpha, Alpha(0, 1, 0, 0));
}

TEST(DefaultGrid, AtMostTwoActiveCoordinates) {
    const std::vector<Alpha> grid = default_alpha_grid();
    // 1 all-zero point + 4*3 single + 6*3*3 pairs.
    EXPECT_EQ(grid.size(), 67u);
    for (const Alpha& a : grid) {
        int active = 0;
        for (std::size_t d = 0; d < 4; ++d) {
            active += a[d] != 0.0;
            EXPECT_TRUE(a[d] == 0.0 || a[d] == 0.01 || a[d] == 0.1 || a[d] == 1.0);
        }
        EXPECT_LE(active, 2);
    }
    EXPECT_EQ(std::adjacent_find(grid.begin(), grid.end()), grid.end());
}

TEST(ParallelFor, VisitsEveryIndexAndPropagatesErrors) {
    std::vector<int> hits(50, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
    for (int h : hits) EXPECT_EQ(h, 1);
    EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                     if (i == 7) throw std::runtime_error("boom");
                 }),
                 std::runtime_error);
}

} // namespace
} // namespace stackcast
