#include "spillbreak/spillover.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace spillbreak {

PrivateEffect PrivateEffect::constant(double d) {
    PrivateEffect e;
    e.mode = PrivateMode::constant;
    e.delta = e.delta_before = e.delta_after = d;
    return e;
}

PrivateEffect PrivateEffect::regime_split(double before, double after) {
    PrivateEffect e;
    e.mode = PrivateMode::regime_split;
    e.delta_before = before;
    e.delta_after = after;
    e.delta = before;
    return e;
}

PrivateEffect PrivateEffect::grouped(std::vector<int> membership, std::vector<double> group_deltas) {
    for (int g : membership)
        if (g < 0 || g >= static_cast<int>(group_deltas.size()))
            throw InvalidArgument("group label without a matching group delta");
    PrivateEffect e;
    e.mode = PrivateMode::grouped;
    e.membership = std::move(membership);
    e.group_deltas = std::move(group_deltas);
    return e;
}

double PrivateEffect::at(int unit, int period, int breakpoint) const {
    switch (mode) {
    case PrivateMode::constant: return delta;
    case PrivateMode::regime_split: return period < breakpoint ? delta_before : delta_after;
    case PrivateMode::grouped: return group_deltas.at(membership.at(unit));
    }
    return delta;
}

SpilloverFit estimate_spillover(const PanelData& panel, int breakpoint, const PrivateEffect& effect,
                                bool gamma_split, const SpilloverSettings& settings) {
    const int n = panel.n_units();
    const int periods = panel.n_periods();
    if (effect.mode == PrivateMode::grouped && static_cast<int>(effect.membership.size()) != n)
        throw InvalidArgument("grouped private effect needs one label per unit");
    if (gamma_split && (breakpoint < 1 || breakpoint > periods - 1)) throw InvalidBreakpoint(breakpoint, periods);

    const SpilloverLayout layout{n, breakpoint, gamma_split};
    const Eigen::MatrixXd design = spillover_design(panel, layout, all_periods(periods));
    const Eigen::RowVectorXd col_mean = design.colwise().mean();
    const Eigen::MatrixXd centred = design.rowwise() - col_mean;
    const Eigen::MatrixXd gram = centred.transpose() * centred;

    Eigen::VectorXd weights(layout.columns());
    if (gamma_split) {
        const RegimeWeights rw = regime_adaptive_weights(panel, breakpoint);
        weights << rw.before, rw.after;
    } else {
        weights = full_sample_weights(panel);
    }

    SpilloverFit fit;
    fit.networks.gamma_before = Eigen::MatrixXd::Zero(n, n);
    fit.networks.gamma_after = Eigen::MatrixXd::Zero(n, n);
    fit.intercepts = Eigen::VectorXd::Zero(n);
    fit.residuals.resize(n, periods);
    fit.unit_lambdas.resize(n);

    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd partial(periods);
        for (int t = 0; t < periods; ++t)
            partial(t) = panel.y()(i, t) - panel.z()(i, t) * effect.at(i, t, breakpoint);
        const double ymean = partial.mean();
        const Eigen::VectorXd yc = partial.array() - ymean;

        GramSystem sys;
        sys.gram = gram;
        sys.xty = centred.transpose() * yc;
        sys.yty = yc.squaredNorm();
        sys.n = periods;
        const LambdaPath path = select_lambda(sys, weights, {}, settings.solver, settings.grid);
        fit.unit_lambdas[i] = path.chosen_lambda();
        const RefitResult refit = post_lasso_refit(sys, path.chosen_solution().active_set);
        fit.rank_warnings += refit.rank_warning ? 1 : 0;

        Eigen::VectorXd coef = refit.coefficients;
        for (int k = 0; k < coef.size(); ++k)
            if (std::abs(coef(k)) < settings.zero_threshold) coef(k) = 0.0;

        fit.intercepts(i) = ymean - col_mean.dot(coef);
        fit.residuals.row(i) = (partial - design * coef).array() - fit.intercepts(i);
        if (gamma_split) {
            fit.networks.gamma_before.row(i) = coef.head(n).transpose();
            fit.networks.gamma_after.row(i) = coef.tail(n).transpose();
        } else {
            fit.networks.gamma_before.row(i) = coef.transpose();
            fit.networks.gamma_after.row(i) = coef.transpose();
        }
    }
    fit.networks.support_before = fit.networks.gamma_before.array() != 0.0;
    fit.networks.support_after = fit.networks.gamma_after.array() != 0.0;
    return fit;
}

double network_density(const Eigen::MatrixXd& gamma) {
    const auto n = gamma.rows();
    if (n < 2) return 0.0;
    long count = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j && gamma(i, j) != 0.0) ++count;
    return static_cast<double>(count) / static_cast<double>(n * (n - 1));
}

double network_density(const SpilloverNetworks& net, Regime regime) { return network_density(net.gamma(regime)); }

void write_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t j = 0; j < labels.size(); ++j) out << (j ? "," : "") << labels[j];
    out << '\n';
    char buf[40];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            out << (j ? "," : "") << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

void write_edges_csv(const SpilloverNetworks& net, const std::vector<std::string>& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "src,dst,regime,weight\n";
    char buf[40];
    for (Regime r : {Regime::before, Regime::after}) {
        const auto& g = net.gamma(r);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            for (Eigen::Index j = 0; j < g.cols(); ++j) {
                if (g(i, j) == 0.0) continue;
                std::snprintf(buf, sizeof buf, "%.17g", g(i, j));
                out << labels[j] << ',' << labels[i] << ',' << to_string(r) << ',' << buf << '\n';
            }
        }
    }
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace spillbreak
