#pragma once

#include <stdexcept>
#include <string>

namespace spillbreak {

/// Base class for every error raised by the estimation library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t row, const std::string& what)
        : Error("parse error on row " + std::to_string(row) + ": " + what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// The (unit, time) grid of a long-format panel is incomplete.
class BalancedPanelError : public Error {
public:
    BalancedPanelError(std::string unit, long long time)
        : Error("unbalanced panel: missing cell unit=" + unit + " time=" + std::to_string(time)),
          unit_(std::move(unit)), time_(time) {}
    const std::string& unit() const noexcept { return unit_; }
    long long time() const noexcept { return time_; }

private:
    std::string unit_;
    long long time_;
};

class InvalidPanel : public Error {
public:
    using Error::Error;
};

class InvalidBreakpoint : public Error {
public:
    InvalidBreakpoint(int b, int periods)
        : Error("breakpoint " + std::to_string(b) + " outside [1, " + std::to_string(periods - 1) + "]") {}
};

class RegimeTooShort : public Error {
public:
    using Error::Error;
};

enum class Regime { before, after, full };

inline const char* to_string(Regime r) {
    switch (r) {
    case Regime::before: return "before";
    case Regime::after: return "after";
    case Regime::full: return "full";
    }
    return "?";
}

/// A spillover covariate has zero second moment over a regime, so its adaptive weight is undefined.
class DegenerateCovariate : public Error {
public:
    DegenerateCovariate(int column, Regime regime)
        : Error("covariate " + std::to_string(column) + " has zero second moment in regime " +
                to_string(regime)),
          column_(column), regime_(regime) {}
    int column() const noexcept { return column_; }
    Regime regime() const noexcept { return regime_; }

private:
    int column_;
    Regime regime_;
};

class DegenerateResidual : public Error {
public:
    using Error::Error;
};

class TrimTooAggressive : public Error {
public:
    using Error::Error;
};

class TooManyGroups : public Error {
public:
    TooManyGroups(int groups, int units)
        : Error("requested " + std::to_string(groups) + " groups for " + std::to_string(units) + " units") {}
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace spillbreak
