#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stackcast/data.hpp"
#include "stackcast/errors.hpp"

namespace stackcast {

/// Quantile (pinball) loss max{tau (z - zhat), (1 - tau)(zhat - z)}.
inline double pinball(double z, double zhat, double tau) noexcept {
    const double d = z - zhat;
    return std::max(tau * d, (tau - 1.0) * d);
}

/// Per-quantile weighted quantile losses 2 sum_ij pinball / sum_ij |z|.
/// Their average over quantiles is the mean weighted quantile loss.
struct LossReport {
    std::string strategy;
    std::string window;
    double mean_wql = 0.0;
    std::vector<double> per_quantile;
};

inline double abs_sum(const Matrix& actuals) {
    double s = 0.0;
    for (double v : actuals.values()) s += std::abs(v);
    return s;
}

inline void check_loss_shapes(const Tensor3& pred, const Matrix& actuals, const QuantileSpec& taus) {
    if (pred.items() != actuals.rows() || pred.steps() != actuals.cols() || pred.quantiles() != taus.size())
        throw dimension_mismatch("prediction tensor " + std::to_string(pred.items()) + "x" +
                                 std::to_string(pred.steps()) + "x" + std::to_string(pred.quantiles()) +
                                 " does not match actuals " + std::to_string(actuals.rows()) + "x" +
                                 std::to_string(actuals.cols()) + " and " + std::to_string(taus.size()) +
                                 " quantiles");
}

inline std::vector<double> wql_per_quantile(const Tensor3& pred, const Matrix& actuals, const QuantileSpec& taus) {
    check_loss_shapes(pred, actuals, taus);
    const double denom = abs_sum(actuals);
    if (!(denom > 0.0)) throw zero_denominator("all actual values are zero; weighted quantile loss undefined");
    std::vector<double> num(taus.size(), 0.0);
    for (std::size_t i = 0; i < pred.items(); ++i)
        for (std::size_t j = 0; j < pred.steps(); ++j) {
            const double z = actuals(i, j);
            for (std::size_t k = 0; k < taus.size(); ++k) num[k] += pinball(z, pred(i, j, k), taus[k]);
        }
    for (double& v : num) v = 2.0 * v / denom;
    return num;
}

/// (2/q) sum_ijk pinball / sum_ij |z|.
inline double mean_wql(const Tensor3& pred, const Matrix& actuals, const QuantileSpec& taus) {
    check_loss_shapes(pred, actuals, taus);
    const double denom = abs_sum(actuals);
    if (!(denom > 0.0)) throw zero_denominator("all actual values are zero; weighted quantile loss undefined");
    double num = 0.0;
    for (std::size_t i = 0; i < pred.items(); ++i)
        for (std::size_t j = 0; j < pred.steps(); ++j) {
            const double z = actuals(i, j);
            for (std::size_t k = 0; k < taus.size(); ++k) num += pinball(z, pred(i, j, k), taus[k]);
        }
    return 2.0 / static_cast<double>(taus.size()) * num / denom;
}

inline LossReport loss_report(std::string strategy, std::string window, const Tensor3& pred, const Matrix& actuals,
                              const QuantileSpec& taus) {
    LossReport r{std::move(strategy), std::move(window), mean_wql(pred, actuals, taus),
                 wql_per_quantile(pred, actuals, taus)};
    return r;
}

} // namespace stackcast
