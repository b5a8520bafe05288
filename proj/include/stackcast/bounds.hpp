#pragma once

// Evaluates the right-hand side of the cross-validation oracle inequality:
//
//   (1 + 2 delta) * oracle + B_f + 2 ((1 + delta) sqrt(n1) + 1/sqrt(n1)) eps_n1
//
//   B_f = 16 (M / n1^(1-1/p) + (v / (delta * mean_loss)^(2-p))^(1/p)) log(1 + N)
//         / n1^(1/p - 1/2)
//
// where N counts eps_n1/ell-balls covering the index set. Without an explicit N the
// count is bounded by (4 ell K sqrt(dim) / eps)^dim. Natural logarithms throughout.

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>

#include "stackcast/errors.hpp"

namespace stackcast {

struct BoundInputs {
    double M = 1.0;          ///< Bernstein first number
    double v = 1.0;          ///< Bernstein second number
    double delta = 1.0;
    double p = 1.0;
    double n1 = 100.0;       ///< validation sample count
    double eps_n1 = 0.01;
    double ell = 1.0;        ///< Lipschitz constant of alpha -> loss
    double K = 1.0;          ///< radius of a ball containing the index set
    double dim = 1.0;        ///< ambient dimension of the index set
    double mean_loss = 1.0;  ///< worst-case (smallest) expected loss over the family
    std::optional<double> covering_count;
    /// Finite index set: covering_count is |J| and the eps summand is dropped.
    bool finite_family = false;

    void validate() const {
        if (!(p >= 1.0 && p <= 2.0)) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "p must lie in [1, 2], got %g", p);
            throw invalid_p(buf);
        }
        auto positive = [](double x, const char* name) {
            if (!(x > 0.0) || !std::isfinite(x)) throw input_error(std::string(name) + " must be positive and finite");
        };
        positive(delta, "delta");
        positive(eps_n1, "eps_n1");
        positive(ell, "ell");
        positive(K, "K");
        positive(dim, "dim");
        positive(mean_loss, "mean_loss");
        if (!(n1 >= 1.0) || !std::isfinite(n1)) throw input_error("n1 must be at least 1");
        if (!(M >= 0.0) || !std::isfinite(M) || !(v >= 0.0) || !std::isfinite(v))
            throw input_error("Bernstein numbers must be nonnegative and finite");
        if (covering_count && (!(*covering_count >= 0.0) || std::isnan(*covering_count)))
            throw input_error("covering count must be nonnegative");
        if (finite_family && !covering_count) throw input_error("finite-family mode needs the family size");
    }
};

struct CoveringBound {
    double value = 0.0;      ///< +inf when it overflows a double
    double log_value = 0.0;  ///< natural log, always finite for finite inputs
    bool overflow = false;
};

/// (4 ell K sqrt(dim) / eps)^dim, bounding the number of eps/ell-balls needed.
inline CoveringBound covering_upper_bound(double ell, double K, double dim, double eps) {
    if (!(ell > 0.0 && K > 0.0 && dim > 0.0 && eps > 0.0))
        throw input_error("covering bound inputs must be positive");
    CoveringBound b;
    b.log_value = dim * std::log(4.0 * ell * K * std::sqrt(dim) / eps);
    b.value = std::pow(4.0 * ell * K * std::sqrt(dim) / eps, dim);
    b.overflow = !std::isfinite(b.value);
    if (b.overflow) b.value = std::numeric_limits<double>::infinity();
    return b;
}

namespace detail {

/// log(1 + N + extra) using the log-domain value when N overflows.
inline double log_count(const BoundInputs& in, double extra) {
    if (in.covering_count) return std::log1p(*in.covering_count + extra);
    const CoveringBound b = covering_upper_bound(in.ell, in.K, in.dim, in.eps_n1);
    if (b.overflow) return b.log_value + std::log1p((1.0 + extra) * std::exp(-b.log_value));
    return std::log1p(b.value + extra);
}

inline double bound_bf_with_log(const BoundInputs& in, double log_term) {
    const double p = in.p;
    const double first = in.M / std::pow(in.n1, 1.0 - 1.0 / p);
    const double second = std::pow(in.v / std::pow(in.delta * in.mean_loss, 2.0 - p), 1.0 / p);
    return 16.0 * (first + second) * log_term / std::pow(in.n1, 1.0 / p - 0.5);
}

} // namespace detail

/// The covering count actually used: the supplied one, or the derived upper bound.
inline double effective_covering_count(const BoundInputs& in) {
    if (in.covering_count) return *in.covering_count;
    return covering_upper_bound(in.ell, in.K, in.dim, in.eps_n1).value;
}

inline double bound_Bf(const BoundInputs& in) {
    in.validate();
    return detail::bound_bf_with_log(in, detail::log_count(in, 0.0));
}

struct OracleBound {
    double oracle_term = 0.0;
    double bf_term = 0.0;
    double eps_term = 0.0;
    double covering_count = 0.0;
    bool covering_derived = false;

    double total() const noexcept { return oracle_term + bf_term + eps_term; }
};

/// Breakdown of the inequality's right-hand side. `extra_algorithms` adds the base
/// learners to the count inside the log, extending the guarantee to them.
inline OracleBound oracle_bound(const BoundInputs& in, double oracle_loss, double extra_algorithms = 0.0) {
    in.validate();
    if (!(oracle_loss >= 0.0) || !std::isfinite(oracle_loss)) throw input_error("oracle loss must be nonnegative");
    if (!(extra_algorithms >= 0.0)) throw input_error("extra algorithm count must be nonnegative");
    OracleBound b;
    b.covering_derived = !in.covering_count;
    b.covering_count = effective_covering_count(in);
    b.oracle_term = (1.0 + 2.0 * in.delta) * oracle_loss;
    b.bf_term = detail::bound_bf_with_log(in, detail::log_count(in, extra_algorithms));
    if (!in.finite_family) {
        const double rn = std::sqrt(in.n1);
        b.eps_term = 2.0 * ((1.0 + in.delta) * rn + 1.0 / rn) * in.eps_n1;
    }
    return b;
}

inline double oracle_rhs(const BoundInputs& in, double oracle_loss, double extra_algorithms = 0.0) {
    return oracle_bound(in, oracle_loss, extra_algorithms).total();
}

} // namespace stackcast
