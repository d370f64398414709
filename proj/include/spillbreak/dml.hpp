#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spillbreak/lasso.hpp"
#include "spillbreak/panel.hpp"

namespace spillbreak {

/// How the second-pass penalty loadings are formed from first-pass residuals e*:
/// sum of squares (1/|F|) sum_t (x_jt e*_t)^2, or the square of the sum
/// (1/|F|) (sum_t x_jt e*_t)^2.
enum class LoadingForm { sum_of_squares, square_of_sum };

/// Penalty level for the nuisance selections: BIC over the lasso path, BIC with the RSS of
/// the post-lasso refit at each path point, or the heteroscedastic plug-in level
/// 2 c Phi^{-1}(1 - q / (2p)) / sqrt(n) with c = 1.1 and q = 0.1 / log(n).
enum class PenaltyRule { bic, bic_refit, plug_in };

struct DmlSettings {
    SolverSettings solver;
    LambdaGridSettings grid;
    LoadingForm loading = LoadingForm::sum_of_squares;
    PenaltyRule rule = PenaltyRule::plug_in;
    /// The outcome selection also carries the private covariate as an unpenalized regressor.
    bool private_in_outcome = true;
    /// Optional per-unit columns added to every combined support (empty, or one entry per unit).
    std::vector<std::vector<int>> extra_support;
};

struct UnitSupport {
    std::vector<int> from_z;  ///< selected in the z-on-X regression
    std::vector<int> from_y;  ///< selected in the y-on-X regression
    std::vector<int> combined;  ///< union with any extra support, ascending
};

struct SelectedSupport {
    std::vector<UnitSupport> units;
};

/// Per unit, adaptive-Lasso selection for z_i and y_i regressed on X_t(b) over `fold`
/// (fold-demeaned). Loadings come in two passes: conservative
/// sqrt(sum_F x_jt^2 var_F(response) / |F|), then residual-based loadings from the
/// first-pass fit. Penalty levels are chosen by BIC.
SelectedSupport double_lasso_select(const PanelData& panel, const SpilloverLayout& layout,
                                    std::span<const int> fold, const DmlSettings& settings = {});

struct UnitNuisance {
    Eigen::VectorXd nu;          ///< z-on-X slopes, zero off the support
    double eta = 0.0;            ///< z intercept
    Eigen::VectorXd gamma_star;  ///< y-on-X slopes, zero off the support
    double alpha_star = 0.0;     ///< y intercept
    bool rank_warning = false;
};

struct NuisanceFit {
    SpilloverLayout layout;
    std::vector<UnitNuisance> units;
};

/// OLS refits of both auxiliary regressions restricted to each unit's combined support.
NuisanceFit post_double_fit(const PanelData& panel, const SpilloverLayout& layout, std::span<const int> fold,
                            const SelectedSupport& support);

/// Orthogonal-score evaluation on one fold.
struct FoldScore {
    double delta = 0.0;
    double numerator = 0.0;    ///< sum_i sum_t zres * yres
    double denominator = 0.0;  ///< sum_i sum_t zres^2
    Eigen::VectorXd unit_numerator;
    Eigen::VectorXd unit_denominator;
    std::vector<int> periods;
    Eigen::MatrixXd z_residual;  ///< N x |fold|
    Eigen::MatrixXd y_residual;  ///< N x |fold|
};

/// delta = sum(zres * yres) / sum(zres^2) over the units and the periods of `main_fold`,
/// where zres = z - eta - X'nu and yres = y - alpha* - X'gamma*.
FoldScore neyman_delta(const PanelData& panel, std::span<const int> main_fold, const NuisanceFit& nuisance);

/// Closed form for already-residualized data.
double neyman_ratio(const Eigen::MatrixXd& z_residual, const Eigen::MatrixXd& y_residual);

struct DMLFit {
    double delta_m = 0.0;  ///< nuisances from aux, score on main
    double delta_a = 0.0;  ///< nuisances from main, score on aux
    double delta = 0.0;
    double std_error = 0.0;
    double e2_mean = 0.0;    ///< mean zres^2 over both evaluation folds
    double u2e2_mean = 0.0;  ///< mean (yres - zres delta)^2 zres^2
    int n_obs = 0;
    SampleSplit split;
    SelectedSupport support_aux;   ///< selected on aux (used for delta_m)
    SelectedSupport support_main;  ///< selected on main (used for delta_a)
    FoldScore score_m;
    FoldScore score_a;
    int rank_warnings = 0;
};

/// Cross-fitted orthogonal-score estimate with a sandwich standard error
/// sqrt(mean(u^2 e^2) / mean(e^2)^2 / n_obs).
DMLFit cross_fit_delta(const PanelData& panel, const SpilloverLayout& layout, const SampleSplit& split,
                       const DmlSettings& settings = {});

/// Per unit (row), the columns of `layout` where either N x N coefficient matrix is nonzero.
std::vector<std::vector<int>> support_columns(const Eigen::MatrixXd& gamma_before, const Eigen::MatrixXd& gamma_after,
                                              const SpilloverLayout& layout);

/// Standard constant-private-effect case: X_t(b) split at b, each regime halved.
DMLFit cross_fit_delta(const PanelData& panel, int breakpoint, const DmlSettings& settings = {});

/// Unit-level cross-fitted estimates (delta_i^m + delta_i^a) / 2 from a pooled fit.
Eigen::VectorXd unit_deltas(const DMLFit& fit);

/// Unit-level estimate for one unit; nuisance fits are per unit so this runs only that unit's regressions.
double per_unit_delta(const PanelData& panel, int breakpoint, int unit, const DmlSettings& settings = {});

/// Cross-fitted estimate pooled over the units with membership[i] == group.
double group_delta(const DMLFit& fit, std::span<const int> membership, int group);

}  // namespace spillbreak
