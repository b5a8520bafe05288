#pragma once

#include <stdexcept>
#include <string>

namespace stackcast {

/// Base of every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Problems with caller-supplied data or parameters. The CLI maps these to exit code 2.
class input_error : public error {
public:
    using error::error;
};

class parse_error : public input_error {
public:
    parse_error(const std::string& source, std::size_t line, const std::string& what)
        : input_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ragged_series : public input_error {
public:
    using input_error::input_error;
};

class missing_cell : public input_error {
public:
    using input_error::input_error;
};

class missing_window : public input_error {
public:
    using input_error::input_error;
};

class dimension_mismatch : public input_error {
public:
    using input_error::input_error;
};

class split_too_short : public input_error {
public:
    using input_error::input_error;
};

class invalid_horizon : public input_error {
public:
    using input_error::input_error;
};

class zero_denominator : public input_error {
public:
    using input_error::input_error;
};

class too_many_learners : public input_error {
public:
    using input_error::input_error;
};

class invalid_p : public input_error {
public:
    using input_error::input_error;
};

/// Raised by the inner optimizer when the objective stops being finite.
class non_finite_objective : public error {
public:
    non_finite_objective(std::size_t iteration)
        : error("objective became non-finite at iteration " + std::to_string(iteration)),
          iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

} // namespace stackcast
