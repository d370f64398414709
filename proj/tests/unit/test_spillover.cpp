#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "spillbreak/simulate.hpp"
#include "spillbreak/spillover.hpp"

using namespace spillbreak;

TEST_CASE("network density examples") {
    CHECK(network_density(Eigen::MatrixXd::Zero(4, 4)) == 0.0);
    Eigen::MatrixXd dense = Eigen::MatrixXd::Ones(4, 4);
    dense.diagonal().setZero();
    CHECK(network_density(dense) == 1.0);
    Eigen::MatrixXd three = Eigen::MatrixXd::Zero(3, 3);
    three(0, 1) = 0.4;
    three(2, 0) = -1.0;
    three(1, 1) = 5.0;  // own effect, not an edge
    CHECK(network_density(three) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("private effect modes") {
    CHECK(PrivateEffect::constant(2.0).at(3, 50, 10) == 2.0);
    const PrivateEffect split = PrivateEffect::regime_split(1.5, -1.5);
    CHECK(split.at(0, 9, 10) == 1.5);
    CHECK(split.at(0, 10, 10) == -1.5);
    const PrivateEffect grouped = PrivateEffect::grouped({0, 1, 1}, {-1.0, 2.0});
    CHECK(grouped.at(0, 0, 1) == -1.0);
    CHECK(grouped.at(2, 0, 1) == 2.0);
    CHECK_THROWS_AS(PrivateEffect::grouped({0, 2}, {1.0, 2.0}), InvalidArgument);
}

TEST_CASE("noiseless panel with the true private effect recovers the networks") {
    for (const char* label : {"1.1", "1.3"}) {
        for (NetworkKind kind : {NetworkKind::erdos_renyi, NetworkKind::continuous}) {
            DgpConfig c = DgpConfig::from_label(label, kind, 8, 90, 17);
            c.noise_scale = 0.0;
            const SimulatedPanel sim = gen_dgp(c);
            const PanelData p = demean_outcome(sim.panel);
            const PrivateEffect effect = PrivateEffect::regime_split(sim.delta_before(0), sim.delta_after(0));
            const SpilloverFit fit = estimate_spillover(p, sim.breakpoint, effect);
            CHECK((fit.networks.gamma_before - sim.gamma_before).cwiseAbs().maxCoeff() < 1e-6);
            CHECK((fit.networks.gamma_after - sim.gamma_after).cwiseAbs().maxCoeff() < 1e-6);
            CHECK(fit.networks.support_before == (sim.gamma_before.array() != 0.0).matrix());
            CHECK(fit.networks.support_after == (sim.gamma_after.array() != 0.0).matrix());
        }
    }
}

TEST_CASE("final networks are OLS on their own selected support") {
    const SimulatedPanel sim = gen_dgp(DgpConfig::from_label("1.1", NetworkKind::continuous, 6, 60, 3));
    const PanelData p = demean_outcome(sim.panel);
    const int b = sim.breakpoint;
    const SpilloverFit fit = estimate_spillover(p, b, PrivateEffect::constant(1.5));
    const SpilloverLayout layout{6, b, true};
    const Eigen::MatrixXd design = spillover_design(p, layout, all_periods(60));
    for (int i = 0; i < 6; ++i) {
        Eigen::VectorXd coef(12);
        coef << fit.networks.gamma_before.row(i).transpose(), fit.networks.gamma_after.row(i).transpose();
        std::vector<int> support;
        for (int k = 0; k < 12; ++k)
            if (coef(k) != 0.0) support.push_back(k);
        const Eigen::VectorXd partial = p.y().row(i).transpose() - 1.5 * p.z().row(i).transpose();
        Eigen::MatrixXd restricted(60, support.size());
        for (std::size_t k = 0; k < support.size(); ++k) restricted.col(k) = design.col(support[k]);
        const Eigen::VectorXd ols = support.empty() ? Eigen::VectorXd() : oracle::dummy_ols(restricted, partial);
        for (std::size_t k = 0; k < support.size(); ++k) CHECK(std::abs(ols(k) - coef(support[k])) < 1e-8);
        // Residuals are the partial outcome net of the fit and intercept.
        const Eigen::VectorXd r = partial - design * coef - Eigen::VectorXd::Constant(60, fit.intercepts(i));
        CHECK((r.transpose() - fit.residuals.row(i)).norm() < 1e-10);
    }
}

TEST_CASE("rows depend only on their own outcome") {
    const SimulatedPanel sim = gen_dgp(DgpConfig::from_label("1.1", NetworkKind::erdos_renyi, 5, 60, 4));
    const PanelData p = demean_outcome(sim.panel);
    Eigen::MatrixXd y = p.y(), z = p.z();
    y.row(3) = -2.0 * y.row(3);
    z.row(3).reverseInPlace();
    const PanelData q(y, p.x(), z);
    const SpilloverFit a = estimate_spillover(p, 20, PrivateEffect::constant(1.5));
    const SpilloverFit b = estimate_spillover(q, 20, PrivateEffect::constant(1.5));
    for (int i : {0, 1, 2, 4}) {
        CHECK(a.networks.gamma_before.row(i) == b.networks.gamma_before.row(i));
        CHECK(a.networks.gamma_after.row(i) == b.networks.gamma_after.row(i));
    }
}

TEST_CASE("own effects are estimated alongside cross effects") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    const int n = 4, periods = 120;
    Eigen::MatrixXd x(n, periods), y(n, periods), z(n, periods);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < periods; ++t) {
            x(i, t) = g(rng);
            z(i, t) = g(rng);
        }
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < periods; ++t) y(i, t) = 2.0 * x(i, t) - 2.0 * x((i + 1) % n, t) + 0.5 * g(rng);
    const SpilloverFit fit = estimate_spillover(PanelData(y, x, z), 60, PrivateEffect::constant(0.0));
    for (int i = 0; i < n; ++i) {
        for (const Eigen::MatrixXd* m : {&fit.networks.gamma_before, &fit.networks.gamma_after}) {
            CHECK((*m)(i, i) == doctest::Approx(2.0).epsilon(0.1));
            CHECK((*m)(i, (i + 1) % n) == doctest::Approx(-2.0).epsilon(0.1));
        }
    }
}

TEST_CASE("unsplit networks are shared across regimes") {
    const SimulatedPanel sim = gen_dgp(DgpConfig::from_label("1.2", NetworkKind::erdos_renyi, 5, 60, 6));
    const PanelData p = demean_outcome(sim.panel);
    const SpilloverFit fit = estimate_spillover(p, 60, PrivateEffect::regime_split(1.5, -1.5), false);
    CHECK(fit.networks.gamma_before == fit.networks.gamma_after);
}

TEST_CASE("matrix and edge CSV layout") {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
    g(0, 1) = 0.25;
    SpilloverNetworks net{g, Eigen::MatrixXd::Zero(2, 2), g.array() != 0.0, BoolMatrix::Constant(2, 2, false)};
    const auto dir = std::filesystem::temp_directory_path();
    write_matrix_csv(g, {"a", "b"}, (dir / "spillbreak_m.csv").string());
    write_edges_csv(net, {"a", "b"}, (dir / "spillbreak_e.csv").string());
    std::ifstream m(dir / "spillbreak_m.csv"), e(dir / "spillbreak_e.csv");
    std::stringstream ms, es;
    ms << m.rdbuf();
    es << e.rdbuf();
    CHECK(ms.str() == "a,b\n0,0.25\n0,0\n");
    CHECK(es.str() == "src,dst,regime,weight\nb,a,before,0.25\n");
}
