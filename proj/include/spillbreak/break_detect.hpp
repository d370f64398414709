#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spillbreak/lasso.hpp"
#include "spillbreak/panel.hpp"

namespace spillbreak {

/// Breakpoints b (pre-break period counts) with ceil(trim T) <= b <= floor((1 - trim) T)
/// that leave at least four periods in each regime.
std::vector<int> candidate_grid(int periods, double trim);

/// Which coefficient blocks carry a regime split in the first-step design.
struct BreakDesign {
    bool gamma_split = true;
    bool z_split = false;
};

struct PenaltyConfig {
    BreakDesign design;
    SolverSettings solver;
    LambdaGridSettings grid;
    int threads = 1;
};

/// One unit's first-step coefficients expanded to both regimes; unsplit blocks are
/// repeated so that fitted values are x_t'gamma_r + z_it delta_r + intercept.
struct UnitCoefficients {
    double intercept = 0.0;
    Eigen::VectorXd gamma_before;
    Eigen::VectorXd gamma_after;
    double delta_before = 0.0;
    double delta_after = 0.0;
};

struct ProfilePoint {
    int breakpoint = 0;
    double penalized = 0.0;   ///< V_NT(beta_hat(b), b); NaN when the candidate was aborted
    double least_squares = 0.0;  ///< refinement criterion at the preliminary coefficients
};

struct BreakEstimate {
    int b_preliminary = 0;
    int b_refined = 0;
    std::vector<ProfilePoint> profile;
    std::vector<UnitCoefficients> beta_hat;
    std::vector<double> unit_lambdas;  ///< per-unit penalty levels chosen at the grid midpoint
    std::vector<std::string> warnings;
};

/// Profile search over `grid`: one adaptive-Lasso problem per unit
/// and candidate, with unit-specific unpenalized private-effect coefficients and an
/// intercept. Penalty levels are chosen by BIC once at b = ceil(T/2) and held fixed.
/// Returns b_preliminary, beta_hat and the penalized profile; b_refined is left equal
/// to b_preliminary until refine_breakpoint runs.
BreakEstimate preliminary_estimate(const PanelData& panel, std::span<const int> grid,
                                   const PenaltyConfig& config = {});

struct RefinedBreak {
    int breakpoint = 0;
    std::vector<double> criterion;  ///< aligned with the grid
};

/// argmin_b (1/NT) sum_it (y_it - W_it(b)'beta_hat_i)^2 with beta_hat held fixed; ties
/// go to the smallest b.
RefinedBreak refine_breakpoint(const PanelData& panel, std::span<const UnitCoefficients> beta_hat,
                               std::span<const int> grid);

/// preliminary_estimate followed by refine_breakpoint.
BreakEstimate estimate_breakpoint(const PanelData& panel, std::span<const int> grid,
                                  const PenaltyConfig& config = {});

void write_profile_csv(const BreakEstimate& estimate, const std::string& path);

}  // namespace spillbreak
