#include <gtest/gtest.h>

#include <random>

#include "stackcast/loss.hpp"

namespace stackcast {
namespace {

TEST(Pinball, HandExamples) {
    EXPECT_NEAR(pinball(10, 8, 0.5), 1.0, 1e-12);
    EXPECT_EQ(pinball(3.25, 3.25, 0.1), 0.0);
    EXPECT_EQ(pinball(3.25, 3.25, 0.9), 0.0);
    EXPECT_NEAR(pinball(0, 4, 0.1), 3.6, 1e-12);
}

TEST(Pinball, NonnegativeWithOneSidedSlopes) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-50, 50), t(0.01, 0.99);
    for (int n = 0; n < 1000; ++n) {
        const double z = u(rng), zhat = u(rng), tau = t(rng);
        const double v = pinball(z, zhat, tau);
        EXPECT_GE(v, 0.0);
        if (zhat != z) {
            EXPECT_GT(v, 0.0);
        }
        // Slopes in zhat: -tau below the truth, 1 - tau above it.
        const double step = 1e-3;
        EXPECT_NEAR((pinball(z, z - step, tau) - pinball(z, z - 2 * step, tau)) / step, -tau, 1e-9);
        EXPECT_NEAR((pinball(z, z + 2 * step, tau) - pinball(z, z + step, tau)) / step, 1 - tau, 1e-9);
    }
}

TEST(MeanWql, SingleCell) {
    Tensor3 pred(1, 1, 1, 8.0);
    Matrix z(1, 1, 10.0);
    EXPECT_NEAR(mean_wql(pred, z, QuantileSpec({0.5})), 0.2, 1e-12);
}

TEST(MeanWql, TwoStepsTwoQuantiles) {
    Tensor3 pred(1, 2, 2);
    pred(0, 0, 0) = 9;
    pred(0, 0, 1) = 11;
    pred(0, 1, 0) = 18;
    pred(0, 1, 1) = 22;
    Matrix z(1, 2);
    z(0, 0) = 10;
    z(0, 1) = 20;
    EXPECT_NEAR(mean_wql(pred, z, QuantileSpec({0.1, 0.9})), 0.02, 1e-12);
}

TEST(MeanWql, PerfectPredictionIsZero) {
    Tensor3 pred(2, 3, 3);
    Matrix z(2, 3);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            z(i, j) = 1.0 + i + j;
            for (std::size_t k = 0; k < 3; ++k) pred(i, j, k) = z(i, j);
        }
    EXPECT_EQ(mean_wql(pred, z, QuantileSpec::standard()), 0.0);
}

TEST(MeanWql, ZeroDenominator) {
    EXPECT_THROW(mean_wql(Tensor3(1, 2, 1, 1.0), Matrix(1, 2, 0.0), QuantileSpec({0.5})), zero_denominator);
}

TEST(MeanWql, ShapeMismatch) {
    EXPECT_THROW(mean_wql(Tensor3(1, 2, 1), Matrix(2, 2, 1.0), QuantileSpec({0.5})), dimension_mismatch);
    EXPECT_THROW(mean_wql(Tensor3(1, 2, 2), Matrix(1, 2, 1.0), QuantileSpec({0.5})), dimension_mismatch);
}

TEST(MeanWql, PerQuantileAveragesToMean) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-10, 10);
    Tensor3 pred(3, 4, 3);
    Matrix z(3, 4);
    for (double& v : pred.values()) v = u(rng);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) z(i, j) = u(rng);
    const auto per = wql_per_quantile(pred, z, QuantileSpec::standard());
    EXPECT_NEAR((per[0] + per[1] + per[2]) / 3.0, mean_wql(pred, z, QuantileSpec::standard()), 1e-12);
}

TEST(MeanWql, ScaleInvariance) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-10, 10), c(0.01, 100);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor3 pred(2, 3, 3);
        Matrix z(2, 3);
        for (double& v : pred.values()) v = u(rng);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 3; ++j) z(i, j) = u(rng);
        const double s = c(rng);
        Tensor3 ps = pred;
        Matrix zs = z;
        for (double& v : ps.values()) v *= s;
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 3; ++j) zs(i, j) *= s;
        const double a = mean_wql(pred, z, QuantileSpec::standard());
        EXPECT_NEAR(mean_wql(ps, zs, QuantileSpec::standard()), a, 1e-12 * std::max(1.0, a));
    }
}

TEST(MeanWql, ConcatenationIsDenominatorWeighted) {
    // Brute force: loss of the stacked item set equals the |z|-weighted blend of the parts.
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-10, 10);
    const QuantileSpec taus = QuantileSpec::standard();
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t na = 1 + rng() % 3, nb = 1 + rng() % 3, h = 1 + rng() % 4;
        Tensor3 pa(na, h, 3), pb(nb, h, 3), pab(na + nb, h, 3);
        Matrix za(na, h), zb(nb, h), zab(na + nb, h);
        for (std::size_t i = 0; i < na + nb; ++i)
            for (std::size_t j = 0; j < h; ++j) {
                const double zv = u(rng);
                zab(i, j) = zv;
                (i < na ? za(i, j) : zb(i - na, j)) = zv;
                for (std::size_t k = 0; k < 3; ++k) {
                    const double pv = u(rng);
                    pab(i, j, k) = pv;
                    (i < na ? pa(i, j, k) : pb(i - na, j, k)) = pv;
                }
            }
        const double da = abs_sum(za), db = abs_sum(zb);
        const double blended = (da * mean_wql(pa, za, taus) + db * mean_wql(pb, zb, taus)) / (da + db);
        EXPECT_NEAR(mean_wql(pab, zab, taus), blended, 1e-12);
    }
}

} // namespace
} // namespace stackcast
