#include <gtest/gtest.h>

#include <cmath>

#include "stackcast/bounds.hpp"

namespace stackcast {
namespace {

BoundInputs worked_example() {
    BoundInputs in;
    in.M = 1;
    in.v = 1;
    in.delta = 1;
    in.p = 1;
    in.mean_loss = 1;
    in.n1 = 100;
    in.eps_n1 = 0.01;
    in.covering_count = 9;
    return in;
}

TEST(CoveringBound, HandExamples) {
    EXPECT_NEAR(covering_upper_bound(1, 1, 1, 1).value, 4.0, 1e-12);
    EXPECT_NEAR(covering_upper_bound(1, 1, 2, 2).value, 8.0, 1e-12);
    EXPECT_NEAR(covering_upper_bound(2, 3, 4, 4 * 2 * 3 * 2).value, 1.0, 1e-12);
}

TEST(CoveringBound, OverflowKeepsLogDomain) {
    const CoveringBound b = covering_upper_bound(1, 1, 400, 1e-3);
    EXPECT_TRUE(b.overflow);
    EXPECT_TRUE(std::isinf(b.value));
    EXPECT_NEAR(b.log_value, 400 * std::log(4 * std::sqrt(400.0) / 1e-3), 1e-9);

    BoundInputs in = worked_example();
    in.covering_count.reset();
    in.dim = 400;
    in.eps_n1 = 1e-3;
    const double bf = bound_Bf(in);
    EXPECT_TRUE(std::isfinite(bf));
    EXPECT_NEAR(bf, 16 * 2 * b.log_value / 10, 1e-9 * bf);
}

TEST(BoundBf, HandExamples) {
    BoundInputs in = worked_example();
    EXPECT_NEAR(bound_Bf(in), 7.368272, 5e-7);
    EXPECT_NEAR(bound_Bf(in), 16 * 2 * std::log(10.0) / 10, 1e-12);
    in.p = 2;
    EXPECT_NEAR(bound_Bf(in), 40.525497, 5e-6);
    in.covering_count = 0;
    EXPECT_EQ(bound_Bf(in), 0.0);
}

TEST(BoundBf, Monotone) {
    const BoundInputs base = worked_example();
    for (double p : {1.0, 1.3, 2.0}) {
        BoundInputs in = base;
        in.p = p;
        double prev = bound_Bf(in);
        for (double n1 : {200.0, 1e3, 1e4, 1e5}) {
            in.n1 = n1;
            const double bf = bound_Bf(in);
            EXPECT_LE(bf, prev);
            prev = bf;
        }
        for (auto field : {&BoundInputs::M, &BoundInputs::v}) {
            BoundInputs a = base, b = base;
            a.p = b.p = p;
            b.*field = 3.0;
            EXPECT_LT(bound_Bf(a), bound_Bf(b));
        }
        BoundInputs small = base, large = base;
        small.p = large.p = p;
        large.covering_count = 90;
        EXPECT_LT(bound_Bf(small), bound_Bf(large));
    }
}

TEST(BoundBf, SublinearInValidationSize) {
    BoundInputs in = worked_example();
    double prev = 1e300;
    for (double n1 = 1e2; n1 <= 1e6; n1 *= 10) {
        in.n1 = n1;
        const double ratio = bound_Bf(in) / n1;
        EXPECT_LT(ratio, prev);
        prev = ratio;
    }
}

TEST(OracleRhs, WorkedExample) {
    const BoundInputs in = worked_example();
    EXPECT_NEAR(oracle_rhs(in, 0.5), 9.270272, 5e-7);
    const OracleBound b = oracle_bound(in, 0.5);
    EXPECT_EQ(b.oracle_term, 1.5);
    EXPECT_NEAR(b.eps_term, 2 * (2 * 10 + 0.1) * 0.01, 1e-15);
    EXPECT_FALSE(b.covering_derived);
    EXPECT_EQ(b.covering_count, 9.0);
}

TEST(OracleRhs, SlackVanishes) {
    BoundInputs in = worked_example();
    in.delta = 1e-12;
    in.eps_n1 = 1e-12;
    in.covering_count = 0;
    EXPECT_NEAR(oracle_rhs(in, 0.37), 0.37, 1e-9);
}

TEST(OracleRhs, FiniteFamilyDropsEpsTerm) {
    BoundInputs in = worked_example();
    in.finite_family = true;
    const OracleBound b = oracle_bound(in, 0.5);
    EXPECT_EQ(b.eps_term, 0.0);
    EXPECT_NEAR(b.total(), 1.5 + 7.368272, 5e-7);
    in.covering_count.reset();
    EXPECT_THROW(oracle_bound(in, 0.5), input_error);
}

TEST(OracleRhs, ExtraAlgorithmsEnterLog) {
    const BoundInputs in = worked_example();
    EXPECT_NEAR(oracle_bound(in, 0.5, 6).bf_term, 16 * 2 * std::log(16.0) / 10, 1e-12);
}

TEST(OracleRhs, DerivedCoveringCount) {
    BoundInputs in = worked_example();
    in.covering_count.reset();
    in.ell = 1;
    in.K = 1;
    in.dim = 2;
    in.eps_n1 = 2;
    const OracleBound b = oracle_bound(in, 0.0);
    EXPECT_TRUE(b.covering_derived);
    EXPECT_NEAR(b.covering_count, 8.0, 1e-12);
}

TEST(BoundInputs, Validation) {
    BoundInputs in = worked_example();
    in.p = 3;
    EXPECT_THROW(bound_Bf(in), invalid_p);
    in.p = 0.5;
    EXPECT_THROW(bound_Bf(in), invalid_p);
    in = worked_example();
    in.delta = 0;
    EXPECT_THROW(bound_Bf(in), input_error);
    in = worked_example();
    in.n1 = 0.5;
    EXPECT_THROW(bound_Bf(in), input_error);
    in = worked_example();
    EXPECT_THROW(oracle_rhs(in, -1), input_error);
}

} // namespace
} // namespace stackcast
