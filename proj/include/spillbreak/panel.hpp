#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spillbreak/errors.hpp"

namespace spillbreak {

/// Balanced N x T panel: outcome y, spillover covariate x and private covariate z.
/// Row i is unit i, column t is period t (0-based). Immutable once built.
class PanelData {
public:
    PanelData() = default;

    /// Validates shapes and finiteness. Unit labels default to "0".."N-1" and times to 1..T.
    PanelData(Eigen::MatrixXd y, Eigen::MatrixXd x, Eigen::MatrixXd z,
              std::vector<std::string> unit_labels = {}, std::vector<long long> times = {});

    int n_units() const noexcept { return static_cast<int>(y_.rows()); }
    int n_periods() const noexcept { return static_cast<int>(y_.cols()); }

    const Eigen::MatrixXd& y() const noexcept { return y_; }
    const Eigen::MatrixXd& x() const noexcept { return x_; }
    const Eigen::MatrixXd& z() const noexcept { return z_; }
    const std::vector<std::string>& unit_labels() const noexcept { return labels_; }
    const std::vector<long long>& times() const noexcept { return times_; }

    /// Periods [first, first + count) as a new panel.
    PanelData slice_periods(int first, int count) const;

private:
    Eigen::MatrixXd y_, x_, z_;
    std::vector<std::string> labels_;
    std::vector<long long> times_;
};

/// Throws InvalidPanel unless N >= 2 and T >= 8, the smallest panel that supports a
/// two-regime, two-fold split with two observations per cell.
void require_estimable(const PanelData& panel);

/// Reads a long-format CSV with header `unit,time,y,x,z`. Units keep their order of first
/// appearance; times are sorted ascending.
PanelData load_csv(const std::filesystem::path& path);

/// Writes the panel back in long format (units in index order, times ascending).
void write_csv(const PanelData& panel, const std::filesystem::path& path);

/// Writes {"label": index, ...} for the unit dictionary.
void write_unit_index_json(const PanelData& panel, const std::filesystem::path& path);

/// Subtracts each unit's full-sample mean from y, x and z.
PanelData demean_within(const PanelData& panel);

/// Subtracts each unit's full-sample mean from y only. Regressors keep their levels: once
/// x is split by regime, only the centring of each split column is exact.
PanelData demean_outcome(const PanelData& panel);

/// Regressor rows W_it(b) = (x_t 1(t<b), x_t 1(t>=b), z-terms), stacked unit-major:
/// row i*T + t. `breakpoint` is the number of pre-break periods.
struct RegimeDesign {
    int breakpoint = 0;
    bool split_z = false;
    int n_units = 0;
    int n_periods = 0;
    Eigen::MatrixXd rows;

    int regressor_count() const noexcept { return static_cast<int>(rows.cols()); }
    auto row(int unit, int period) const { return rows.row(unit * n_periods + period); }
};

RegimeDesign build_regime_design(const PanelData& panel, int breakpoint, bool split_z);

/// Column layout of the spillover block X_t(b): either x_t split at `breakpoint` into
/// (x_t 1(t<b), x_t 1(t>=b)) or the unsplit x_t.
struct SpilloverLayout {
    int n_units = 0;
    int breakpoint = 0;
    bool gamma_split = true;

    int columns() const noexcept { return gamma_split ? 2 * n_units : n_units; }
};

/// Rows of X_t(b) for the listed periods.
Eigen::MatrixXd spillover_design(const PanelData& panel, const SpilloverLayout& layout,
                                 std::span<const int> periods);

/// All periods 0..T-1.
std::vector<int> all_periods(int periods);

/// Main and auxiliary period sets (0-based, ascending).
struct SampleSplit {
    std::vector<int> main;
    std::vector<int> aux;
};

/// Splits each regime into its first ceil(len/2) periods (main) and the remainder (aux).
SampleSplit split_regimes(int periods, int breakpoint);

/// Splits the contiguous segment [first, first + count) the same way.
SampleSplit split_segment(int first, int count);

}  // namespace spillbreak
