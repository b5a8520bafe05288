#pragma once

// Weighted ensemble combination over learners, the entropy-of-softmax and L1
// regularizers, and the regularized mean weighted quantile loss with its
// subgradient in the unconstrained (logit) parameterization.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stackcast/data.hpp"
#include "stackcast/errors.hpp"
#include "stackcast/loss.hpp"

namespace stackcast {

/// Item / timestamp / quantile grid shared by every learner.
struct CellShape {
    std::size_t items = 0, steps = 0, quantiles = 0;

    std::size_t cells() const noexcept { return items * steps * quantiles; }
    static CellShape of(const Tensor3& t) { return {t.items(), t.steps(), t.quantiles()}; }
    friend bool operator==(const CellShape&, const CellShape&) = default;
};

/// m x N x h x q tensor laid out learner-major, then the cube layout.
template <class Tag>
class LearnerTensor {
public:
    LearnerTensor() = default;
    LearnerTensor(std::size_t learners, CellShape shape, double fill = 0.0)
        : m_(learners), shape_(shape), data_(learners * shape.cells(), fill) {}

    std::size_t learners() const noexcept { return m_; }
    const CellShape& shape() const noexcept { return shape_; }
    std::size_t cells() const noexcept { return shape_.cells(); }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t l, std::size_t i, std::size_t j, std::size_t k) {
        return data_[l * cells() + (i * shape_.steps + j) * shape_.quantiles + k];
    }
    double operator()(std::size_t l, std::size_t i, std::size_t j, std::size_t k) const {
        return data_[l * cells() + (i * shape_.steps + j) * shape_.quantiles + k];
    }

    /// Learner l's slab in cube layout.
    std::span<double> learner(std::size_t l) { return {data_.data() + l * cells(), cells()}; }
    std::span<const double> learner(std::size_t l) const { return {data_.data() + l * cells(), cells()}; }

    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    friend bool operator==(const LearnerTensor&, const LearnerTensor&) = default;

private:
    std::size_t m_ = 0;
    CellShape shape_{};
    std::vector<double> data_;
};

struct logit_tag;
struct weight_tag;
struct gradient_tag;

/// Unconstrained parameters; weights are their softmax across learners.
using LogitTensor = LearnerTensor<logit_tag>;
/// Ensemble weights; for every cell the learner axis lies on the simplex.
using WeightTensor = LearnerTensor<weight_tag>;
/// Derivative of the objective with respect to a LogitTensor.
using LogitGradient = LearnerTensor<gradient_tag>;

/// Regularization strengths: entropy along items, timestamps, quantiles; then L1.
struct Alpha {
    std::array<double, 4> values{};

    Alpha() = default;
    Alpha(double items, double steps, double quantiles, double l1) : values{items, steps, quantiles, l1} {}

    double operator[](std::size_t d) const { return values[d]; }
    double& operator[](std::size_t d) { return values[d]; }

    bool valid() const noexcept {
        return std::all_of(values.begin(), values.end(), [](double a) { return std::isfinite(a) && a >= 0.0; });
    }
    void validate() const {
        if (!valid()) throw input_error("alpha coordinates must be finite and nonnegative");
    }

    friend bool operator==(const Alpha&, const Alpha&) = default;
    friend auto operator<=>(const Alpha& a, const Alpha& b) { return a.values <=> b.values; }
};

enum class Axis { items = 1, steps = 2, quantiles = 3 };

/// Which tensor the alpha_4 penalty sums absolute values over. On softmax weights
/// the sum is the constant N*h*q, so `weights` only shifts the objective.
enum class L1Target { logits, weights };

inline WeightTensor weights_from_logits(const LogitTensor& theta) {
    const std::size_t m = theta.learners(), C = theta.cells();
    WeightTensor w(m, theta.shape());
    const auto& t = theta.values();
    auto& out = w.values();
    for (std::size_t c = 0; c < C; ++c) {
        double mx = t[c];
        for (std::size_t l = 1; l < m; ++l) mx = std::max(mx, t[l * C + c]);
        double sum = 0.0;
        for (std::size_t l = 0; l < m; ++l) {
            const double e = std::exp(t[l * C + c] - mx);
            out[l * C + c] = e;
            sum += e;
        }
        for (std::size_t l = 0; l < m; ++l) out[l * C + c] /= sum;
    }
    return w;
}

inline void check_cubes(std::span<const Tensor3> cubes, const CellShape& shape, std::size_t learners) {
    if (cubes.size() != learners)
        throw dimension_mismatch(std::to_string(cubes.size()) + " cubes for " + std::to_string(learners) +
                                 " learners");
    for (const Tensor3& c : cubes)
        if (!(CellShape::of(c) == shape)) throw dimension_mismatch("cube shape does not match weight tensor");
}

/// Z(i,j,k) = sum_l w(l,i,j,k) zhat_l(i,j,k).
inline Tensor3 combine(const WeightTensor& w, std::span<const Tensor3> cubes) {
    check_cubes(cubes, w.shape(), w.learners());
    const CellShape& s = w.shape();
    Tensor3 out(s.items, s.steps, s.quantiles);
    auto& o = out.values();
    for (std::size_t l = 0; l < w.learners(); ++l) {
        auto wl = w.learner(l);
        const auto& z = cubes[l].values();
        for (std::size_t c = 0; c < o.size(); ++c) o[c] += wl[c] * z[c];
    }
    return out;
}

namespace detail {

struct AxisLayout {
    std::size_t size;
    std::size_t stride;
};

inline AxisLayout axis_layout(const CellShape& s, Axis d) {
    switch (d) {
    case Axis::items: return {s.items, s.steps * s.quantiles};
    case Axis::steps: return {s.steps, s.quantiles};
    case Axis::quantiles: return {s.quantiles, 1};
    }
    throw input_error("axis selector must be 1, 2 or 3");
}

/// Calls fn(offset) for every cell whose coordinate along `d` is zero.
template <class Fn>
void for_each_group(const CellShape& s, Axis d, Fn&& fn) {
    const std::size_t ni = d == Axis::items ? 1 : s.items;
    const std::size_t nj = d == Axis::steps ? 1 : s.steps;
    const std::size_t nk = d == Axis::quantiles ? 1 : s.quantiles;
    for (std::size_t i = 0; i < ni; ++i)
        for (std::size_t j = 0; j < nj; ++j)
            for (std::size_t k = 0; k < nk; ++k) fn((i * s.steps + j) * s.quantiles + k);
}

/// Sum over groups of sum sigma log sigma, sigma the softmax of w along `d`.
/// When `grad` is non-null, adds scale * dH/dw into it.
inline double axis_entropy_impl(const WeightTensor& w, Axis d, double scale, std::vector<double>* grad) {
    const CellShape& s = w.shape();
    const AxisLayout ax = axis_layout(s, d);
    if (ax.size <= 1) return 0.0;
    const std::size_t C = s.cells();
    const auto& v = w.values();
    std::vector<double> sig(ax.size), logsig(ax.size);
    double total = 0.0;
    for (std::size_t l = 0; l < w.learners(); ++l) {
        const std::size_t base_l = l * C;
        for_each_group(s, d, [&](std::size_t off) {
            const std::size_t base = base_l + off;
            double mx = v[base];
            for (std::size_t a = 1; a < ax.size; ++a) mx = std::max(mx, v[base + a * ax.stride]);
            double sum = 0.0;
            for (std::size_t a = 0; a < ax.size; ++a) {
                sig[a] = std::exp(v[base + a * ax.stride] - mx);
                sum += sig[a];
            }
            const double logsum = std::log(sum);
            double h = 0.0;
            for (std::size_t a = 0; a < ax.size; ++a) {
                logsig[a] = v[base + a * ax.stride] - mx - logsum;
                sig[a] /= sum;
                h += sig[a] * logsig[a];
            }
            total += h;
            if (grad) {
                for (std::size_t a = 0; a < ax.size; ++a)
                    (*grad)[base + a * ax.stride] += scale * sig[a] * (logsig[a] - h);
            }
        });
    }
    return total;
}

} // namespace detail

/// Entropy of the softmax of w taken along one axis (natural log), summed over all
/// groups and learners. Ranges over [-G log S, 0]; the minimum means w is constant
/// along the axis.
inline double axis_entropy(const WeightTensor& w, Axis d) { return detail::axis_entropy_impl(w, d, 0.0, nullptr); }

inline double l1_term(const LogitTensor& theta, const WeightTensor& w, L1Target target) {
    double s = 0.0;
    for (double v : target == L1Target::logits ? theta.values() : w.values()) s += std::abs(v);
    return s;
}

/// Cubes and actuals of one backtest window bound to the quantile levels. The cubes
/// are borrowed and must outlive the problem; actuals and levels are copied.
class ObjectiveProblem {
public:
    ObjectiveProblem(std::span<const Tensor3> cubes, const Matrix& actuals, const QuantileSpec& taus)
        : cubes_(cubes), actuals_(actuals), taus_(taus) {
        if (cubes.empty()) throw dimension_mismatch("objective needs at least one learner");
        shape_ = CellShape::of(cubes.front());
        check_cubes(cubes, shape_, cubes.size());
        check_loss_shapes(cubes.front(), actuals, taus);
        const double denom = abs_sum(actuals);
        if (!(denom > 0.0)) throw zero_denominator("all actual values are zero; weighted quantile loss undefined");
        denom_ = denom;
        scale_ = 2.0 / static_cast<double>(taus.size()) / denom;
    }

    std::size_t learners() const noexcept { return cubes_.size(); }
    const CellShape& shape() const noexcept { return shape_; }
    std::span<const Tensor3> cubes() const noexcept { return cubes_; }
    const Matrix& actuals() const noexcept { return actuals_; }
    const QuantileSpec& taus() const noexcept { return taus_; }
    /// 2 / (q sum|z|): the loss is scale * sum of pinball terms.
    double scale() const noexcept { return scale_; }
    double denominator() const noexcept { return denom_; }

    void check(const LogitTensor& theta) const {
        if (theta.learners() != learners() || !(theta.shape() == shape_))
            throw dimension_mismatch("logit tensor does not match the problem's learners and cells");
    }

private:
    std::span<const Tensor3> cubes_;
    Matrix actuals_;
    QuantileSpec taus_;
    CellShape shape_{};
    double scale_ = 0.0;
    double denom_ = 0.0;
};

/// f_alpha and, when `grad` is non-null, a subgradient in theta. Pinball ties take the
/// -tau branch; the constant L1-on-weights term contributes nothing to the gradient.
inline double evaluate_objective(const LogitTensor& theta, const Alpha& alpha, const ObjectiveProblem& prob,
                                 L1Target l1, LogitGradient* grad) {
    prob.check(theta);
    const std::size_t m = theta.learners(), C = theta.cells();
    const CellShape& s = prob.shape();
    const WeightTensor w = weights_from_logits(theta);
    const Tensor3 pred = combine(w, prob.cubes());
    const QuantileSpec& taus = prob.taus();
    const Matrix& z = prob.actuals();

    std::vector<double> gw;
    if (grad) gw.assign(m * C, 0.0);

    double pin = 0.0;
    for (std::size_t i = 0; i < s.items; ++i)
        for (std::size_t j = 0; j < s.steps; ++j) {
            const double zij = z(i, j);
            for (std::size_t k = 0; k < s.quantiles; ++k) {
                const std::size_t c = (i * s.steps + j) * s.quantiles + k;
                const double zhat = pred.values()[c];
                pin += pinball(zij, zhat, taus[k]);
                if (grad) {
                    const double slope = prob.scale() * (zhat > zij ? 1.0 - taus[k] : -taus[k]);
                    for (std::size_t l = 0; l < m; ++l) gw[l * C + c] = slope * prob.cubes()[l].values()[c];
                }
            }
        }
    // Same operation order as mean_wql so that alpha = 0 reproduces it bit for bit.
    double f = 2.0 / static_cast<double>(s.quantiles) * pin / prob.denominator();

    static constexpr Axis axes[3] = {Axis::items, Axis::steps, Axis::quantiles};
    for (std::size_t d = 0; d < 3; ++d)
        if (alpha[d] != 0.0) f += alpha[d] * detail::axis_entropy_impl(w, axes[d], alpha[d], grad ? &gw : nullptr);
    if (alpha[3] != 0.0) f += alpha[3] * l1_term(theta, w, l1);

    if (grad) {
        *grad = LogitGradient(m, s);
        auto& g = grad->values();
        const auto& wv = w.values();
        for (std::size_t c = 0; c < C; ++c) {
            double avg = 0.0;
            for (std::size_t l = 0; l < m; ++l) avg += wv[l * C + c] * gw[l * C + c];
            for (std::size_t l = 0; l < m; ++l) g[l * C + c] = wv[l * C + c] * (gw[l * C + c] - avg);
        }
        if (alpha[3] != 0.0 && l1 == L1Target::logits) {
            const auto& t = theta.values();
            for (std::size_t x = 0; x < g.size(); ++x)
                g[x] += alpha[3] * static_cast<double>((t[x] > 0.0) - (t[x] < 0.0));
        }
    }
    return f;
}

inline double objective(const LogitTensor& theta, const Alpha& alpha, const ObjectiveProblem& prob,
                        L1Target l1 = L1Target::logits) {
    return evaluate_objective(theta, alpha, prob, l1, nullptr);
}

inline LogitGradient objective_gradient(const LogitTensor& theta, const Alpha& alpha, const ObjectiveProblem& prob,
                                        L1Target l1 = L1Target::logits) {
    LogitGradient g;
    evaluate_objective(theta, alpha, prob, l1, &g);
    return g;
}

} // namespace stackcast
