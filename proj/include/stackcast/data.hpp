#pragma once

// Data model: quantile levels, panels, backtest splits, forecast cubes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "stackcast/errors.hpp"

namespace stackcast {

/// Strictly increasing quantile levels, each in the open interval (0, 1).
class QuantileSpec {
public:
    QuantileSpec() = default;

    explicit QuantileSpec(std::vector<double> taus) : taus_(std::move(taus)) {
        if (taus_.empty())
            throw input_error("quantile spec needs at least one level");
        for (std::size_t k = 0; k < taus_.size(); ++k) {
            double t = taus_[k];
            if (!(t > 0.0 && t < 1.0))
                throw input_error("quantile level " + std::to_string(t) + " outside (0,1)");
            if (k > 0 && !(t > taus_[k - 1]))
                throw input_error("quantile levels must be strictly increasing");
        }
    }

    static QuantileSpec standard() { return QuantileSpec({0.1, 0.5, 0.9}); }

    std::size_t size() const noexcept { return taus_.size(); }
    double operator[](std::size_t k) const { return taus_[k]; }
    const std::vector<double>& taus() const noexcept { return taus_; }

    /// Index of the level whose 6-decimal rendering equals `tau`'s, or -1.
    long find(double tau) const noexcept {
        const long long key = std::llround(tau * 1e6);
        for (std::size_t k = 0; k < taus_.size(); ++k)
            if (std::llround(taus_[k] * 1e6) == key) return static_cast<long>(k);
        return -1;
    }

    friend bool operator==(const QuantileSpec&, const QuantileSpec&) = default;

private:
    std::vector<double> taus_;
};

/// Dense N x h x q array, quantile index fastest.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t items, std::size_t steps, std::size_t quantiles, double fill = 0.0)
        : n_(items), h_(steps), q_(quantiles), data_(items * steps * quantiles, fill) {}

    std::size_t items() const noexcept { return n_; }
    std::size_t steps() const noexcept { return h_; }
    std::size_t quantiles() const noexcept { return q_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return (i * h_ + j) * q_ + k;
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[index(i, j, k)]; }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const { return data_[index(i, j, k)]; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool same_shape(const Tensor3& o) const noexcept { return n_ == o.n_ && h_ == o.h_ && q_ == o.q_; }

    friend bool operator==(const Tensor3&, const Tensor3&) = default;

private:
    std::size_t n_ = 0, h_ = 0, q_ = 0;
    std::vector<double> data_;
};

/// Row-major rows x cols matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    const std::vector<double>& values() const noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

/// N equal-length series z(i, t), t = 0..T-1 (1-based t+1 in files).
struct PanelDataset {
    std::vector<std::string> items;
    Matrix values;

    std::size_t size() const noexcept { return items.size(); }
    std::size_t length() const noexcept { return values.cols(); }

    friend bool operator==(const PanelDataset&, const PanelDataset&) = default;
};

/// Closed range of 1-based timestamps. Empty when last < first.
struct TimeRange {
    std::size_t first = 1;
    std::size_t last = 0;

    std::size_t length() const noexcept { return last >= first ? last - first + 1 : 0; }
    bool contains(std::size_t t) const noexcept { return t >= first && t <= last; }

    friend bool operator==(const TimeRange&, const TimeRange&) = default;
};

/// Three trailing backtest windows carved from the observed tail:
/// D_n = [1, T-(3-n)h], BW_n = [T-(3-n)h+1, T-(2-n)h].
struct BacktestSplit {
    std::size_t horizon = 0;
    std::size_t length = 0;
    TimeRange train[3];
    TimeRange window[3];
};

inline BacktestSplit make_backtest_splits(std::size_t length, std::size_t horizon) {
    if (horizon < 1) throw invalid_horizon("horizon must be at least 1");
    if (length < 3 * horizon + 1)
        throw split_too_short("series length " + std::to_string(length) + " cannot hold three windows of " +
                              std::to_string(horizon) + " plus a non-empty history (need T >= 3h+1)");
    BacktestSplit s;
    s.horizon = horizon;
    s.length = length;
    for (std::size_t n = 0; n < 3; ++n) {
        const std::size_t cut = length - (3 - n) * horizon;
        s.train[n] = {1, cut};
        s.window[n] = {cut + 1, cut + horizon};
    }
    return s;
}

inline BacktestSplit make_backtest_splits(const PanelDataset& panel, std::size_t horizon) {
    return make_backtest_splits(panel.length(), horizon);
}

/// One learner's N x h x q quantile predictions on one backtest window.
struct ForecastCube {
    std::string learner;
    int window = 0;
    Tensor3 values;
};

/// True values z(i, j) on one backtest window, N x h.
struct ActualsWindow {
    int window = 0;
    Matrix values;
};

inline ActualsWindow actuals_for(const PanelDataset& panel, const BacktestSplit& split, int window) {
    const TimeRange r = split.window[window];
    ActualsWindow a{window, Matrix(panel.size(), r.length())};
    for (std::size_t i = 0; i < panel.size(); ++i)
        for (std::size_t j = 0; j < r.length(); ++j) a.values(i, j) = panel.values(i, r.first - 1 + j);
    return a;
}

/// All learners' cubes for one window, aligned by learner index.
struct WindowData {
    std::vector<Tensor3> cubes;
    Matrix actuals;
};

inline void check_window(const WindowData& w, std::size_t q) {
    if (w.cubes.empty()) throw dimension_mismatch("no learner cubes supplied");
    const Tensor3& first = w.cubes.front();
    if (first.quantiles() != q)
        throw dimension_mismatch("cube has " + std::to_string(first.quantiles()) + " quantiles, expected " +
                                 std::to_string(q));
    for (const Tensor3& c : w.cubes)
        if (!c.same_shape(first)) throw dimension_mismatch("learner cubes differ in shape");
    if (w.actuals.rows() != first.items() || w.actuals.cols() != first.steps())
        throw dimension_mismatch("actuals are " + std::to_string(w.actuals.rows()) + "x" +
                                 std::to_string(w.actuals.cols()) + ", cubes are " +
                                 std::to_string(first.items()) + "x" + std::to_string(first.steps()));
}

/// Quantile crossings (z(k) > z(k+1)) in a cube; allowed, but worth a warning.
inline std::size_t count_crossings(const Tensor3& cube) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < cube.items(); ++i)
        for (std::size_t j = 0; j < cube.steps(); ++j)
            for (std::size_t k = 0; k + 1 < cube.quantiles(); ++k)
                if (cube(i, j, k) > cube(i, j, k + 1)) ++n;
    return n;
}

} // namespace stackcast
