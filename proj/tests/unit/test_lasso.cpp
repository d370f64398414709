#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "spillbreak/lasso.hpp"

using namespace spillbreak;

namespace {

struct Random {
    std::mt19937_64 rng;
    explicit Random(std::uint64_t seed) : rng(seed) {}
    Eigen::MatrixXd matrix(int r, int c) {
        std::normal_distribution<double> g;
        Eigen::MatrixXd m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = g(rng);
        return m;
    }
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
    int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); }
};

LassoProblem problem(Eigen::MatrixXd x, Eigen::VectorXd y, double lambda, double tol = 1e-12) {
    const auto p = x.cols();
    return {std::move(x), std::move(y), lambda, Eigen::VectorXd::Ones(p), tol, 100000};
}

}  // namespace

TEST_CASE("one-coefficient example under the library objective") {
    Eigen::MatrixXd x(2, 1);
    x << 1, -1;
    Eigen::VectorXd y(2);
    y << 2, -2;
    // (1/2)||y - xc||^2 + 0.5 |c| is minimised where 2(2 - c) = 0.5.
    CHECK(solve_lasso(problem(x, y, 0.5)).coefficients(0) == doctest::Approx(1.75).epsilon(1e-10));
    // The half-RSS convention, where the condition reads 2 - c = 0.5, is the same objective at twice the level.
    CHECK(solve_lasso(problem(x, y, 1.0)).coefficients(0) == doctest::Approx(1.5).epsilon(1e-10));
}

TEST_CASE("zero penalty reproduces OLS") {
    Random r(1);
    Eigen::MatrixXd x = r.matrix(6, 6) + 4.0 * Eigen::MatrixXd::Identity(6, 6);
    const Eigen::VectorXd y = r.matrix(6, 1);
    const Eigen::VectorXd ols = x.colPivHouseholderQr().solve(y);
    const LassoSolution s = solve_lasso(problem(x, y, 0.0, 1e-14));
    CHECK((s.coefficients - ols).norm() < 1e-8);

    const Eigen::MatrixXd tall = r.matrix(30, 5);
    const Eigen::VectorXd yt = r.matrix(30, 1);
    const Eigen::VectorXd ols_t = tall.colPivHouseholderQr().solve(yt);
    CHECK((solve_lasso(problem(tall, yt, 0.0, 1e-14)).coefficients - ols_t).norm() < 1e-8);
}

TEST_CASE("lambda_max zeroes every penalized coefficient") {
    Random r(2);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::MatrixXd x = r.matrix(25, 8);
        const Eigen::VectorXd y = r.matrix(25, 1);
        Eigen::VectorXd w(8);
        for (int k = 0; k < 8; ++k) w(k) = r.uniform(0.5, 2.0);
        const GramSystem sys = make_gram(x, y);
        const double lmax = lambda_max(sys, w);
        double expected = 0.0;
        for (int k = 0; k < 8; ++k) expected = std::max(expected, std::abs(2.0 * x.col(k).dot(y) / (25.0 * w(k))));
        CHECK(lmax == doctest::Approx(expected).epsilon(1e-12));
        CHECK(solve_lasso(sys, lmax * (1 + 1e-12), w).active_set.empty());
        CHECK(!solve_lasso(sys, 0.9 * lmax, w).active_set.empty());

        // An unpenalized column is partialled out and stays free.
        w(0) = 0.0;
        const double lmax_free = lambda_max(sys, w);
        const LassoSolution s = solve_lasso(sys, lmax_free * (1 + 1e-9), w);
        CHECK(s.active_set.size() <= 1);
        for (int k = 1; k < 8; ++k) CHECK(s.coefficients(k) == 0.0);
    }
}

TEST_CASE("zero-variance column with positive weight stays at zero") {
    Random r(3);
    Eigen::MatrixXd x = r.matrix(10, 3);
    x.col(1).setZero();
    const LassoSolution s = solve_lasso(problem(x, r.matrix(10, 1), 0.0));
    CHECK(s.coefficients(1) == 0.0);
}

TEST_CASE("max_iter exhaustion returns converged = false") {
    Random r(4);
    LassoProblem p = problem(r.matrix(20, 10), r.matrix(20, 1), 0.01, 1e-15);
    p.max_iter = 1;
    const LassoSolution s = solve_lasso(p);
    CHECK_FALSE(s.converged);
    CHECK(s.iterations == 1);
}

TEST_CASE("KKT conditions hold on 200 random problems") {
    Random r(2024);
    int checked = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const int n = r.integer(1, 30);
        const int p = r.integer(1, 30);
        const Eigen::MatrixXd x = r.matrix(n, p);
        const Eigen::VectorXd y = r.matrix(n, 1);
        Eigen::VectorXd w(p);
        for (int k = 0; k < p; ++k) w(k) = r.integer(0, 9) == 0 ? 0.0 : r.uniform(0.2, 3.0);
        const GramSystem sys = make_gram(x, y);
        const double lmax = std::max(lambda_max(sys, w), 1e-3);
        const double lambda = lmax * r.uniform(0.01, 1.2);
        const LassoSolution s = solve_lasso(sys, lambda, w, {1e-10, 100000});
        if (!s.converged) continue;
        ++checked;
        const double scale = std::max(1.0, (2.0 / n) * (x.transpose() * y).cwiseAbs().maxCoeff());
        CHECK(oracle::kkt_violation(x, y, lambda, w, s.coefficients) <= 1e-5 * scale);
    }
    CHECK(checked >= 190);
}

TEST_CASE("objective is nonincreasing across sweeps") {
    Random r(6);
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::MatrixXd x = r.matrix(30, 12);
        const Eigen::VectorXd y = r.matrix(30, 1);
        const GramSystem sys = make_gram(x, y);
        const Eigen::VectorXd w = Eigen::VectorXd::Ones(12);
        const double lambda = 0.1 * lambda_max(sys, w);
        double previous = std::numeric_limits<double>::infinity();
        for (int sweeps = 1; sweeps <= 30; ++sweeps) {
            const LassoSolution s = solve_lasso(sys, lambda, w, {0.0, sweeps});
            CHECK(s.objective_value <= previous + 1e-14);
            previous = s.objective_value;
        }
    }
}

TEST_CASE("solution is invariant to column permutation") {
    Random r(7);
    for (int rep = 0; rep < 20; ++rep) {
        const int p = 10;
        const Eigen::MatrixXd x = r.matrix(30, p);
        const Eigen::VectorXd y = x.col(0) * 2.0 - x.col(3) + r.matrix(30, 1);
        std::vector<int> perm(p);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), r.rng);
        Eigen::MatrixXd xp(30, p);
        for (int k = 0; k < p; ++k) xp.col(k) = x.col(perm[k]);
        const double lambda = 0.2;
        const Eigen::VectorXd a = solve_lasso(problem(x, y, lambda)).coefficients;
        const Eigen::VectorXd b = solve_lasso(problem(xp, y, lambda)).coefficients;
        for (int k = 0; k < p; ++k) CHECK(std::abs(b(k) - a(perm[k])) < 1e-6);
    }
}

TEST_CASE("rescaling a column with a matching weight leaves fitted values unchanged") {
    Random r(8);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::MatrixXd x = r.matrix(25, 6);
        const Eigen::VectorXd y = x.col(1) - 0.5 * x.col(4) + r.matrix(25, 1);
        const int k = rep % 6;
        const double c = r.uniform(0.2, 5.0);
        LassoProblem base = problem(x, y, 0.15);
        LassoProblem scaled = base;
        scaled.design.col(k) *= c;
        // A coefficient on the scaled column shrinks by c, so its weight grows by c.
        scaled.weights(k) *= c;
        const Eigen::VectorXd fa = x * solve_lasso(base).coefficients;
        const Eigen::VectorXd fb = scaled.design * solve_lasso(scaled).coefficients;
        CHECK((fa - fb).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("warm start reaches the same solution") {
    Random r(9);
    const Eigen::MatrixXd x = r.matrix(30, 8);
    const Eigen::VectorXd y = r.matrix(30, 1);
    const LassoProblem p = problem(x, y, 0.05);
    const Eigen::VectorXd cold = solve_lasso(p).coefficients;
    const Eigen::VectorXd warm = solve_lasso(p, Eigen::VectorXd::Constant(8, 3.0)).coefficients;
    CHECK((cold - warm).norm() < 1e-6);
}

TEST_CASE("regime adaptive weights examples") {
    Eigen::MatrixXd x(3, 4);
    x << 1, 1, 1, 1,
         2, 2, 2, 2,
         1, 2, 3, 1;
    const PanelData p(Eigen::MatrixXd::Zero(3, 4), x, Eigen::MatrixXd::Zero(3, 4));
    const RegimeWeights w = regime_adaptive_weights(p, 2);
    CHECK(w.before(0) == doctest::Approx(1.0));
    CHECK(w.after(1) == doctest::Approx(0.5));
    CHECK(w(0, 1, Regime::before) == w(2, 1, Regime::before));

    Eigen::MatrixXd x3(1, 4);
    x3 << 1, 2, 3, 5;
    const PanelData q(Eigen::MatrixXd::Zero(1, 4), x3, Eigen::MatrixXd::Zero(1, 4));
    CHECK(regime_adaptive_weights(q, 3).before(0) == doctest::Approx(std::pow(14.0 / 3.0, -0.5)));
    CHECK(regime_adaptive_weights(q, 3).before(0) == doctest::Approx(0.4629).epsilon(1e-4));

    Eigen::MatrixXd xz = x;
    xz.row(1).tail(2).setZero();
    const PanelData d(Eigen::MatrixXd::Zero(3, 4), xz, Eigen::MatrixXd::Zero(3, 4));
    try {
        regime_adaptive_weights(d, 2);
        FAIL("expected DegenerateCovariate");
    } catch (const DegenerateCovariate& e) {
        CHECK(e.column() == 1);
        CHECK(e.regime() == Regime::after);
    }
}

TEST_CASE("BIC selection examples") {
    Random r(10);
    // Pure noise: the empty model wins at the top of the grid.
    int empty = 0;
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::MatrixXd x = r.matrix(100, 10);
        const Eigen::VectorXd y = r.matrix(100, 1);
        const LambdaPath path = select_lambda(x, y, Eigen::VectorXd::Ones(10));
        empty += path.chosen_solution().active_set.empty() ? 1 : 0;
        if (path.chosen == 0) CHECK(path.bic[0] <= *std::min_element(path.bic.begin(), path.bic.end()));
    }
    CHECK(empty >= 16);

    // Strong planted signal with tiny noise: exactly the true covariate survives.
    const Eigen::MatrixXd x = r.matrix(100, 10);
    const Eigen::VectorXd y = 10.0 * x.col(4) + 0.01 * r.matrix(100, 1);
    const LambdaPath path = select_lambda(x, y, Eigen::VectorXd::Ones(10));
    CHECK(path.chosen_solution().active_set == std::vector<int>{4});

    const std::vector<double> single{0.3};
    const LambdaPath one = select_lambda(x, y, Eigen::VectorXd::Ones(10), single);
    CHECK(one.lambdas.size() == 1);
    CHECK(one.chosen_lambda() == 0.3);
}

TEST_CASE("BIC ties go to the larger penalty") {
    // Every grid point yields the same empty model, so the first (largest) must win.
    Eigen::MatrixXd x(4, 1);
    x << 1, -1, 1, -1;
    Eigen::VectorXd y(4);
    y << 1, 1, 1, 1;
    const std::vector<double> grid{3.0, 2.0, 1.0};
    const LambdaPath path = select_lambda(x, y, Eigen::VectorXd::Ones(1), grid);
    CHECK(path.chosen == 0);
}

TEST_CASE("post-lasso refit examples") {
    Random r(11);
    const Eigen::MatrixXd x = r.matrix(5, 5) + 3.0 * Eigen::MatrixXd::Identity(5, 5);
    const Eigen::VectorXd y = r.matrix(5, 1);
    const std::vector<int> all{0, 1, 2, 3, 4};
    CHECK((post_lasso_refit(x, y, all).coefficients - x.colPivHouseholderQr().solve(y)).norm() < 1e-10);

    const RefitResult none = post_lasso_refit(x, y, std::vector<int>{});
    CHECK(none.coefficients.isZero(0.0));
    CHECK(residual_ss(make_gram(x, y), none.coefficients) == doctest::Approx(y.squaredNorm()));

    Eigen::MatrixXd orth(4, 2);
    orth << 1, 1, 1, -1, -1, 1, -1, -1;
    Eigen::VectorXd yo(4);
    yo << 3, 1, -2, 0.5;
    const RefitResult uni = post_lasso_refit(orth, yo, std::vector<int>{0});
    CHECK(uni.coefficients(0) == doctest::Approx(orth.col(0).dot(yo) / orth.col(0).squaredNorm()));
    CHECK(uni.coefficients(1) == 0.0);
}

TEST_CASE("post-lasso refit drops collinear columns") {
    Random r(12);
    Eigen::MatrixXd x = r.matrix(20, 3);
    x.col(2) = 2.0 * x.col(0) - x.col(1);
    const Eigen::VectorXd y = r.matrix(20, 1);
    const RefitResult fit = post_lasso_refit(x, y, std::vector<int>{0, 1, 2});
    CHECK(fit.rank_warning);
    CHECK(fit.dropped == std::vector<int>{2});
    CHECK(fit.kept == std::vector<int>{0, 1});
    CHECK(fit.coefficients(2) == 0.0);
}
