#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spillbreak/panel.hpp"

namespace spillbreak {

/// Sufficient statistics of a least-squares problem: X'X, X'y, y'y and the row count.
/// Every solver in this module works on these, so designs that share X'X across
/// units or candidate breakpoints are assembled once.
struct GramSystem {
    Eigen::MatrixXd gram;
    Eigen::VectorXd xty;
    double yty = 0.0;
    int n = 0;

    int dim() const noexcept { return static_cast<int>(xty.size()); }
};

/// With `centre` the columns and response are demeaned first, which is the same as
/// fitting an unpenalized intercept.
GramSystem make_gram(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, bool centre = false);

/// Residual sum of squares of `coef` computed from the sufficient statistics.
double residual_ss(const GramSystem& sys, const Eigen::VectorXd& coef);

struct SolverSettings {
    double tol = 1e-7;
    int max_iter = 10000;
};

/// min (1/n)||y - Xc||^2 + penalty_level * sum_k weights_k |c_k|. A zero weight leaves
/// the coefficient unpenalized.
struct LassoProblem {
    Eigen::MatrixXd design;
    Eigen::VectorXd response;
    double penalty_level = 0.0;
    Eigen::VectorXd weights;
    double tol = 1e-7;
    int max_iter = 10000;
};

struct LassoSolution {
    Eigen::VectorXd coefficients;
    std::vector<int> active_set;
    double objective_value = 0.0;
    double rss = 0.0;
    int iterations = 0;
    bool converged = false;
};

LassoSolution solve_lasso(const LassoProblem& problem,
                          const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

/// Cyclic coordinate descent on the sufficient statistics. Coordinates are visited in
/// index order; a sweep stops the iteration once every coordinate moved by less than
/// tol in fitted-value units and the relative objective decrease fell below tol.
LassoSolution solve_lasso(const GramSystem& sys, double penalty_level, const Eigen::VectorXd& weights,
                          const SolverSettings& settings = {}, const Eigen::VectorXd* warm_start = nullptr);

/// Smallest penalty level at which every penalized coefficient is zero. Unpenalized
/// columns are partialled out first.
double lambda_max(const GramSystem& sys, const Eigen::VectorXd& weights);

/// `count` log-spaced values from `lmax` down to `min_ratio * lmax`.
std::vector<double> lambda_grid(double lmax, int count = 50, double min_ratio = 1e-3);

struct LambdaGridSettings {
    int count = 50;
    double min_ratio = 1e-3;
};

struct LambdaPath {
    std::vector<double> lambdas;
    std::vector<LassoSolution> solutions;
    std::vector<double> bic;
    std::size_t chosen = 0;

    double chosen_lambda() const { return lambdas.at(chosen); }
    const LassoSolution& chosen_solution() const { return solutions.at(chosen); }
};

/// BIC(lambda) = n log(RSS/n) + |active| log n over a descending grid, warm-starting
/// along the path; ties go to the larger lambda. An empty grid means the default
/// 50-point grid below lambda_max.
LambdaPath select_lambda(const GramSystem& sys, const Eigen::VectorXd& weights,
                         std::span<const double> grid = {}, const SolverSettings& settings = {},
                         const LambdaGridSettings& grid_settings = {});

LambdaPath select_lambda(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                         const Eigen::VectorXd& weights, std::span<const double> grid = {});

struct RefitResult {
    Eigen::VectorXd coefficients;   ///< full length, zero off the kept support
    std::vector<int> kept;          ///< support columns actually used
    std::vector<int> dropped;       ///< collinear support columns removed
    bool rank_warning = false;
};

/// OLS restricted to `support`. Columns that are (numerically) linear combinations of
/// earlier support columns are dropped and flagged.
RefitResult post_lasso_refit(const GramSystem& sys, std::span<const int> support);

RefitResult post_lasso_refit(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                             std::span<const int> support);

/// phi_B(j) = (sum_{t<b} x_jt^2 / b)^(-1/2) and phi_A(j) over t >= b. The weight depends
/// on the covariate j only, so unit i is not stored.
struct RegimeWeights {
    Eigen::VectorXd before;
    Eigen::VectorXd after;

    double operator()(int /*unit*/, int covariate, Regime regime) const {
        return regime == Regime::after ? after(covariate) : before(covariate);
    }
};

RegimeWeights regime_adaptive_weights(const PanelData& panel, int breakpoint);

/// Full-sample analogue (sum_t x_jt^2 / T)^(-1/2) for designs without a regime split.
Eigen::VectorXd full_sample_weights(const PanelData& panel);

}  // namespace spillbreak
