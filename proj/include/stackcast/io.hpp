#pragma once

// CSV ingestion and emission for panels, forecast cubes, weights and predictions.
//
//   panel:       item,t,value                        (t is 1-based)
//   cubes:       learner,window,item,step,tau,value  (window in {0,1,2}, step in [1,h])
//   predictions: item,step,tau,value
//   weights:     learner,item,step,tau,weight

#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stackcast/data.hpp"
#include "stackcast/errors.hpp"

namespace stackcast {

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> to_double(std::string_view s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<long long> to_integer(std::string_view s) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

class CsvReader {
public:
    CsvReader(std::istream& in, std::string source, std::string_view header)
        : in_(in), source_(std::move(source)) {
        std::string line;
        if (!std::getline(in_, line)) fail("empty file, expected header '" + std::string(header) + "'");
        ++line_;
        if (!line.empty() && static_cast<unsigned char>(line[0]) == 0xEF && line.size() >= 3)
            line.erase(0, 3); // UTF-8 BOM
        if (trim(line) != header) fail("expected header '" + std::string(header) + "'");
        width_ = split_fields(header).size();
    }

    /// Next non-blank row, or false at end of input.
    bool next(std::vector<std::string_view>& fields) {
        while (std::getline(in_, buf_)) {
            ++line_;
            if (trim(buf_).empty()) continue;
            fields = split_fields(buf_);
            if (fields.size() != width_)
                fail("expected " + std::to_string(width_) + " fields, got " + std::to_string(fields.size()));
            return true;
        }
        return false;
    }

    double number(std::string_view s, const char* what) const {
        auto v = to_double(s);
        if (!v) fail(std::string("bad ") + what + " '" + std::string(s) + "'");
        return *v;
    }

    long long integer(std::string_view s, const char* what) const {
        auto v = to_integer(s);
        if (!v) fail(std::string("bad ") + what + " '" + std::string(s) + "'");
        return *v;
    }

    [[noreturn]] void fail(const std::string& what) const { throw parse_error(source_, line_, what); }

    std::size_t line() const noexcept { return line_; }

private:
    std::istream& in_;
    std::string source_;
    std::string buf_;
    std::size_t line_ = 0;
    std::size_t width_ = 0;
};

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open " + path.string());
    return in;
}

} // namespace detail

/// Shortest round-trippable-enough rendering with `digits` significant digits.
inline std::string format_number(double x, int digits = 12) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x == 0.0 ? 0.0 : x);
    return buf;
}

inline std::string format_tau(double tau) { return format_number(tau, 6); }

// ---------------------------------------------------------------------------
// Panels

inline PanelDataset read_panel(std::istream& in, const std::string& source = "<panel>") {
    detail::CsvReader reader(in, source, "item,t,value");
    std::vector<std::string> items;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::map<long long, double>> series;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        std::string item(f[0]);
        if (item.empty()) reader.fail("empty item identifier");
        long long t = reader.integer(f[1], "timestamp");
        if (t < 1) reader.fail("timestamp must be >= 1, got " + std::to_string(t));
        double v = reader.number(f[2], "value");
        auto [it, fresh] = index.emplace(item, items.size());
        if (fresh) {
            items.push_back(item);
            series.emplace_back();
        }
        if (!series[it->second].emplace(t, v).second)
            reader.fail("duplicate row for item '" + item + "' t=" + std::to_string(t));
    }
    if (items.empty()) throw input_error(source + ": panel has no rows");

    for (std::size_t i = 0; i < items.size(); ++i) {
        long long expect = 1;
        for (const auto& [t, v] : series[i]) {
            if (t != expect)
                throw input_error(source + ": item '" + items[i] + "' is missing t=" + std::to_string(expect));
            ++expect;
        }
    }
    const std::size_t T = series[0].size();
    for (std::size_t i = 1; i < items.size(); ++i)
        if (series[i].size() != T)
            throw ragged_series(source + ": item '" + items[i] + "' has " + std::to_string(series[i].size()) +
                                " points, item '" + items[0] + "' has " + std::to_string(T));

    PanelDataset panel{items, Matrix(items.size(), T)};
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::size_t t = 0;
        for (const auto& [ts, v] : series[i]) panel.values(i, t++) = v;
    }
    return panel;
}

inline PanelDataset load_panel(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    return read_panel(in, path.string());
}

inline void write_panel(std::ostream& out, const PanelDataset& panel) {
    out << "item,t,value\n";
    for (std::size_t i = 0; i < panel.size(); ++i)
        for (std::size_t t = 0; t < panel.length(); ++t)
            out << panel.items[i] << ',' << (t + 1) << ',' << format_number(panel.values(i, t), 17) << '\n';
}

// ---------------------------------------------------------------------------
// Forecast cubes

/// Cubes grouped by learner (first-appearance order) and window.
struct CubeSet {
    std::vector<std::string> learners;
    std::vector<std::array<std::optional<Tensor3>, 3>> cubes;

    std::size_t size() const noexcept { return learners.size(); }

    std::size_t count() const noexcept {
        std::size_t n = 0;
        for (const auto& w : cubes)
            for (const auto& c : w) n += c.has_value();
        return n;
    }

    const Tensor3& at(std::size_t learner, int window) const {
        const auto& c = cubes.at(learner).at(static_cast<std::size_t>(window));
        if (!c)
            throw missing_window("no cube for learner '" + learners[learner] + "' window " + std::to_string(window));
        return *c;
    }

    /// The m cubes of one window, in learner order.
    std::vector<Tensor3> window(int n) const {
        std::vector<Tensor3> out;
        out.reserve(learners.size());
        for (std::size_t l = 0; l < learners.size(); ++l) out.push_back(at(l, n));
        return out;
    }

    void add(const std::string& learner, int window, Tensor3 values) {
        std::size_t l = 0;
        while (l < learners.size() && learners[l] != learner) ++l;
        if (l == learners.size()) {
            learners.push_back(learner);
            cubes.emplace_back();
        }
        cubes[l][static_cast<std::size_t>(window)] = std::move(values);
    }
};

/// Parses one cube CSV stream into `into`. Every (learner, window) group that appears
/// must be dense over items x steps x quantiles.
inline void read_cubes(std::istream& in, const std::vector<std::string>& items, std::size_t horizon,
                       const QuantileSpec& taus, CubeSet& into, const std::string& source = "<cubes>") {
    detail::CsvReader reader(in, source, "learner,window,item,step,tau,value");
    std::unordered_map<std::string, std::size_t> item_index;
    for (std::size_t i = 0; i < items.size(); ++i) item_index.emplace(items[i], i);

    struct Group {
        std::string learner;
        int window;
        Tensor3 values;
        std::vector<char> seen;
    };
    std::vector<Group> groups;
    std::map<std::pair<std::string, int>, std::size_t> group_index;

    std::vector<std::string_view> f;
    while (reader.next(f)) {
        std::string learner(f[0]);
        if (learner.empty()) reader.fail("empty learner identifier");
        long long w = reader.integer(f[1], "window");
        if (w < 0 || w > 2) reader.fail("window must be 0, 1 or 2, got " + std::to_string(w));
        auto it = item_index.find(std::string(f[2]));
        if (it == item_index.end())
            throw dimension_mismatch(source + ":" + std::to_string(reader.line()) + ": unknown item '" +
                                     std::string(f[2]) + "'");
        long long step = reader.integer(f[3], "step");
        if (step < 1 || static_cast<std::size_t>(step) > horizon)
            throw dimension_mismatch(source + ":" + std::to_string(reader.line()) + ": step " +
                                     std::to_string(step) + " outside [1," + std::to_string(horizon) + "]");
        double tau = reader.number(f[4], "tau");
        long k = taus.find(tau);
        if (k < 0)
            throw dimension_mismatch(source + ":" + std::to_string(reader.line()) + ": tau " + std::string(f[4]) +
                                     " is not one of the configured quantiles");
        double v = reader.number(f[5], "value");

        auto key = std::make_pair(learner, static_cast<int>(w));
        auto [git, fresh] = group_index.emplace(key, groups.size());
        if (fresh)
            groups.push_back({learner, static_cast<int>(w), Tensor3(items.size(), horizon, taus.size()),
                              std::vector<char>(items.size() * horizon * taus.size(), 0)});
        Group& g = groups[git->second];
        std::size_t idx = g.values.index(it->second, static_cast<std::size_t>(step - 1), static_cast<std::size_t>(k));
        if (g.seen[idx])
            reader.fail("duplicate row for learner '" + learner + "' window " + std::to_string(w) + " item '" +
                        std::string(f[2]) + "' step " + std::to_string(step) + " tau " + std::string(f[4]));
        g.seen[idx] = 1;
        g.values.values()[idx] = v;
    }

    for (Group& g : groups) {
        for (std::size_t i = 0; i < items.size(); ++i)
            for (std::size_t j = 0; j < horizon; ++j)
                for (std::size_t k = 0; k < taus.size(); ++k)
                    if (!g.seen[g.values.index(i, j, k)])
                        throw missing_cell(source + ": missing cell learner '" + g.learner + "' window " +
                                           std::to_string(g.window) + " item '" + items[i] + "' step " +
                                           std::to_string(j + 1) + " tau " + format_tau(taus[k]));
        into.add(g.learner, g.window, std::move(g.values));
    }
}

inline CubeSet load_cubes(const std::vector<std::filesystem::path>& paths, const std::vector<std::string>& items,
                          std::size_t horizon, const QuantileSpec& taus) {
    CubeSet set;
    for (const auto& p : paths) {
        auto in = detail::open_input(p);
        read_cubes(in, items, horizon, taus, set, p.string());
    }
    return set;
}

inline void write_cubes(std::ostream& out, const CubeSet& set, const std::vector<std::string>& items,
                        const QuantileSpec& taus) {
    out << "learner,window,item,step,tau,value\n";
    for (std::size_t l = 0; l < set.size(); ++l)
        for (int w = 0; w < 3; ++w) {
            const auto& c = set.cubes[l][static_cast<std::size_t>(w)];
            if (!c) continue;
            for (std::size_t i = 0; i < c->items(); ++i)
                for (std::size_t j = 0; j < c->steps(); ++j)
                    for (std::size_t k = 0; k < c->quantiles(); ++k)
                        out << set.learners[l] << ',' << w << ',' << items[i] << ',' << (j + 1) << ','
                            << format_tau(taus[k]) << ',' << format_number((*c)(i, j, k), 17) << '\n';
        }
}

// ---------------------------------------------------------------------------
// Predictions

inline void write_predictions(std::ostream& out, const Tensor3& pred, const std::vector<std::string>& items,
                              const QuantileSpec& taus) {
    out << "item,step,tau,value\n";
    for (std::size_t i = 0; i < pred.items(); ++i)
        for (std::size_t j = 0; j < pred.steps(); ++j)
            for (std::size_t k = 0; k < pred.quantiles(); ++k)
                out << items[i] << ',' << (j + 1) << ',' << format_tau(taus[k]) << ','
                    << format_number(pred(i, j, k), 12) << '\n';
}

inline Tensor3 read_predictions(std::istream& in, const std::vector<std::string>& items, std::size_t horizon,
                                const QuantileSpec& taus, const std::string& source = "<predictions>") {
    detail::CsvReader reader(in, source, "item,step,tau,value");
    std::unordered_map<std::string, std::size_t> item_index;
    for (std::size_t i = 0; i < items.size(); ++i) item_index.emplace(items[i], i);
    Tensor3 pred(items.size(), horizon, taus.size());
    std::vector<char> seen(pred.size(), 0);
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        auto it = item_index.find(std::string(f[0]));
        if (it == item_index.end()) reader.fail("unknown item '" + std::string(f[0]) + "'");
        long long step = reader.integer(f[1], "step");
        if (step < 1 || static_cast<std::size_t>(step) > horizon)
            throw dimension_mismatch(source + ":" + std::to_string(reader.line()) + ": step " +
                                     std::to_string(step) + " outside [1," + std::to_string(horizon) + "]");
        long k = taus.find(reader.number(f[2], "tau"));
        if (k < 0)
            throw dimension_mismatch(source + ":" + std::to_string(reader.line()) + ": tau " + std::string(f[2]) +
                                     " is not one of the configured quantiles");
        std::size_t idx = pred.index(it->second, static_cast<std::size_t>(step - 1), static_cast<std::size_t>(k));
        if (seen[idx]) reader.fail("duplicate prediction row");
        seen[idx] = 1;
        pred.values()[idx] = reader.number(f[3], "value");
    }
    for (std::size_t i = 0; i < items.size(); ++i)
        for (std::size_t j = 0; j < horizon; ++j)
            for (std::size_t k = 0; k < taus.size(); ++k)
                if (!seen[pred.index(i, j, k)])
                    throw missing_cell(source + ": missing prediction item '" + items[i] + "' step " +
                                       std::to_string(j + 1) + " tau " + format_tau(taus[k]));
    return pred;
}

inline Tensor3 load_predictions(const std::filesystem::path& path, const std::vector<std::string>& items,
                                std::size_t horizon, const QuantileSpec& taus) {
    auto in = detail::open_input(path);
    return read_predictions(in, items, horizon, taus, path.string());
}

// ---------------------------------------------------------------------------
// Output files

/// Writes `content` to `path` through a sibling temporary and a rename, so the target
/// is either complete or untouched.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace stackcast
