#include "spillbreak/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spillbreak {

namespace {

double soft_threshold(double value, double threshold) {
    if (value > threshold) return value - threshold;
    if (value < -threshold) return value + threshold;
    return 0.0;
}

constexpr double kZeroColumn = 1e-12;

}  // namespace

GramSystem make_gram(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, bool centre) {
    if (design.rows() != response.size()) throw InvalidArgument("design and response row counts differ");
    GramSystem sys;
    sys.n = static_cast<int>(design.rows());
    if (centre && design.rows() > 0) {
        const Eigen::MatrixXd xc = design.rowwise() - design.colwise().mean();
        const Eigen::VectorXd yc = response.array() - response.mean();
        sys.gram = xc.transpose() * xc;
        sys.xty = xc.transpose() * yc;
        sys.yty = yc.squaredNorm();
    } else {
        sys.gram = design.transpose() * design;
        sys.xty = design.transpose() * response;
        sys.yty = response.squaredNorm();
    }
    return sys;
}

double residual_ss(const GramSystem& sys, const Eigen::VectorXd& coef) {
    const double v = sys.yty - 2.0 * coef.dot(sys.xty) + coef.dot(sys.gram * coef);
    return std::max(v, 0.0);
}

LassoSolution solve_lasso(const GramSystem& sys, double penalty_level, const Eigen::VectorXd& weights,
                          const SolverSettings& settings, const Eigen::VectorXd* warm_start) {
    const int p = sys.dim();
    if (weights.size() != p) throw InvalidArgument("weight vector length does not match design");
    if (!(penalty_level >= 0.0) || !std::isfinite(penalty_level))
        throw InvalidArgument("penalty level must be finite and >= 0");
    if (!weights.allFinite() || (weights.array() < 0.0).any())
        throw InvalidArgument("weights must be finite and >= 0");
    if (sys.n < 1 || p < 1) throw InvalidArgument("lasso needs n >= 1 and p >= 1");

    const double n = sys.n;
    LassoSolution sol;
    sol.coefficients = Eigen::VectorXd::Zero(p);
    if (warm_start != nullptr && warm_start->size() == p) sol.coefficients = *warm_start;

    Eigen::VectorXd diag = sys.gram.diagonal();
    for (int k = 0; k < p; ++k)
        if (diag(k) <= kZeroColumn) sol.coefficients(k) = 0.0;

    // grad = X'(y - Xc)
    Eigen::VectorXd grad = sys.xty - sys.gram * sol.coefficients;
    auto objective = [&]() {
        const double rss = std::max(sys.yty - sol.coefficients.dot(sys.xty) - sol.coefficients.dot(grad), 0.0);
        return rss / n + penalty_level * (weights.array() * sol.coefficients.array().abs()).sum();
    };

    const double scale = sys.yty / n;
    double obj = objective();
    for (int sweep = 1; sweep <= settings.max_iter; ++sweep) {
        double max_change = 0.0;
        for (int k = 0; k < p; ++k) {
            if (diag(k) <= kZeroColumn) continue;
            const double old = sol.coefficients(k);
            const double rho = grad(k) + diag(k) * old;
            const double updated = soft_threshold(rho, 0.5 * n * penalty_level * weights(k)) / diag(k);
            const double delta = updated - old;
            if (delta != 0.0) {
                sol.coefficients(k) = updated;
                grad.noalias() -= sys.gram.col(k) * delta;
                max_change = std::max(max_change, diag(k) / n * delta * delta);
            }
        }
        const double next = objective();
        const double decrease = obj - next;
        obj = next;
        sol.iterations = sweep;
        if (max_change <= settings.tol * settings.tol * scale &&
            decrease <= settings.tol * std::max(std::abs(next), std::numeric_limits<double>::min())) {
            sol.converged = true;
            break;
        }
    }
    // A fresh gradient removes drift accumulated by the rank-one updates.
    grad = sys.xty - sys.gram * sol.coefficients;
    sol.rss = std::max(sys.yty - sol.coefficients.dot(sys.xty) - sol.coefficients.dot(grad), 0.0);
    sol.objective_value = objective();
    for (int k = 0; k < p; ++k)
        if (sol.coefficients(k) != 0.0) sol.active_set.push_back(k);
    return sol;
}

LassoSolution solve_lasso(const LassoProblem& problem, const std::optional<Eigen::VectorXd>& warm_start) {
    const GramSystem sys = make_gram(problem.design, problem.response);
    SolverSettings settings{problem.tol, problem.max_iter};
    return solve_lasso(sys, problem.penalty_level, problem.weights, settings,
                       warm_start ? &*warm_start : nullptr);
}

double lambda_max(const GramSystem& sys, const Eigen::VectorXd& weights) {
    const int p = sys.dim();
    std::vector<int> free_cols;
    for (int k = 0; k < p; ++k)
        if (weights(k) == 0.0) free_cols.push_back(k);

    Eigen::VectorXd grad = sys.xty;
    if (!free_cols.empty()) {
        const RefitResult ols = post_lasso_refit(sys, free_cols);
        grad -= sys.gram * ols.coefficients;
    }
    double lmax = 0.0;
    for (int k = 0; k < p; ++k) {
        if (weights(k) == 0.0 || sys.gram(k, k) <= kZeroColumn) continue;
        lmax = std::max(lmax, std::abs(2.0 * grad(k) / (sys.n * weights(k))));
    }
    return lmax;
}

std::vector<double> lambda_grid(double lmax, int count, double min_ratio) {
    if (count < 1) throw InvalidArgument("lambda grid needs at least one value");
    std::vector<double> grid(count);
    if (count == 1 || lmax <= 0.0) {
        std::fill(grid.begin(), grid.end(), lmax);
        if (lmax <= 0.0) grid.assign(1, 0.0);
        return grid;
    }
    const double step = std::log(min_ratio) / (count - 1);
    for (int k = 0; k < count; ++k) grid[k] = lmax * std::exp(step * k);
    return grid;
}

LambdaPath select_lambda(const GramSystem& sys, const Eigen::VectorXd& weights, std::span<const double> grid,
                         const SolverSettings& settings, const LambdaGridSettings& grid_settings) {
    LambdaPath path;
    if (grid.empty())
        path.lambdas = lambda_grid(lambda_max(sys, weights), grid_settings.count, grid_settings.min_ratio);
    else
        path.lambdas.assign(grid.begin(), grid.end());

    const double n = sys.n;
    const double rss_floor = std::max(1e-12 * sys.yty, std::numeric_limits<double>::min());
    double best = std::numeric_limits<double>::infinity();
    const Eigen::VectorXd* warm = nullptr;
    for (std::size_t k = 0; k < path.lambdas.size(); ++k) {
        path.solutions.push_back(solve_lasso(sys, path.lambdas[k], weights, settings, warm));
        const auto& s = path.solutions.back();
        const double bic = n * std::log(std::max(s.rss, rss_floor) / n) +
                           static_cast<double>(s.active_set.size()) * std::log(n);
        path.bic.push_back(bic);
        if (bic < best) {
            best = bic;
            path.chosen = k;
        }
        warm = &path.solutions.back().coefficients;
    }
    return path;
}

LambdaPath select_lambda(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                         const Eigen::VectorXd& weights, std::span<const double> grid) {
    return select_lambda(make_gram(design, response), weights, grid);
}

RefitResult post_lasso_refit(const GramSystem& sys, std::span<const int> support) {
    RefitResult out;
    out.coefficients = Eigen::VectorXd::Zero(sys.dim());
    for (int k : support) {
        if (k < 0 || k >= sys.dim()) throw InvalidArgument("support index out of range");
        const double gkk = sys.gram(k, k);
        bool independent = gkk > kZeroColumn;
        if (independent && !out.kept.empty()) {
            const int m = static_cast<int>(out.kept.size());
            Eigen::MatrixXd sub(m, m);
            Eigen::VectorXd cross(m);
            for (int a = 0; a < m; ++a) {
                cross(a) = sys.gram(out.kept[a], k);
                for (int b = 0; b < m; ++b) sub(a, b) = sys.gram(out.kept[a], out.kept[b]);
            }
            const double residual = gkk - cross.dot(sub.ldlt().solve(cross));
            independent = residual > 1e-10 * gkk;
        }
        if (independent)
            out.kept.push_back(k);
        else
            out.dropped.push_back(k);
    }
    out.rank_warning = !out.dropped.empty();
    const int m = static_cast<int>(out.kept.size());
    if (m == 0) return out;
    Eigen::MatrixXd sub(m, m);
    Eigen::VectorXd rhs(m);
    for (int a = 0; a < m; ++a) {
        rhs(a) = sys.xty(out.kept[a]);
        for (int b = 0; b < m; ++b) sub(a, b) = sys.gram(out.kept[a], out.kept[b]);
    }
    const Eigen::VectorXd c = sub.ldlt().solve(rhs);
    for (int a = 0; a < m; ++a) out.coefficients(out.kept[a]) = c(a);
    return out;
}

RefitResult post_lasso_refit(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                             std::span<const int> support) {
    return post_lasso_refit(make_gram(design, response), support);
}

RegimeWeights regime_adaptive_weights(const PanelData& panel, int breakpoint) {
    const int periods = panel.n_periods();
    if (breakpoint < 1 || breakpoint > periods - 1) throw InvalidBreakpoint(breakpoint, periods);
    const int n = panel.n_units();
    RegimeWeights w{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (int j = 0; j < n; ++j) {
        const double pre = panel.x().row(j).head(breakpoint).squaredNorm() / breakpoint;
        const double post = panel.x().row(j).tail(periods - breakpoint).squaredNorm() / (periods - breakpoint);
        if (!(pre > 0.0)) throw DegenerateCovariate(j, Regime::before);
        if (!(post > 0.0)) throw DegenerateCovariate(j, Regime::after);
        w.before(j) = 1.0 / std::sqrt(pre);
        w.after(j) = 1.0 / std::sqrt(post);
    }
    return w;
}

Eigen::VectorXd full_sample_weights(const PanelData& panel) {
    const int n = panel.n_units();
    Eigen::VectorXd w(n);
    for (int j = 0; j < n; ++j) {
        const double m = panel.x().row(j).squaredNorm() / panel.n_periods();
        if (!(m > 0.0)) throw DegenerateCovariate(j, Regime::full);
        w(j) = 1.0 / std::sqrt(m);
    }
    return w;
}

}  // namespace spillbreak
