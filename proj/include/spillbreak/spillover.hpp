#pragma once

#include <vector>

#include <Eigen/Dense>

#include "spillbreak/lasso.hpp"
#include "spillbreak/panel.hpp"

namespace spillbreak {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Pre- and post-break spillover matrices; entry (i, j) links x_j to y_i and the
/// diagonal holds own effects. Without a spillover break both matrices are equal.
struct SpilloverNetworks {
    Eigen::MatrixXd gamma_before;
    Eigen::MatrixXd gamma_after;
    BoolMatrix support_before;
    BoolMatrix support_after;

    const Eigen::MatrixXd& gamma(Regime r) const { return r == Regime::after ? gamma_after : gamma_before; }
    const BoolMatrix& support(Regime r) const { return r == Regime::after ? support_after : support_before; }
};

enum class PrivateMode { constant, regime_split, grouped };

struct PrivateEffect {
    PrivateMode mode = PrivateMode::constant;
    double delta = 0.0;
    double delta_before = 0.0;
    double delta_after = 0.0;
    std::vector<int> membership;      ///< grouped: unit -> group label
    std::vector<double> group_deltas;  ///< grouped: group label -> delta

    static PrivateEffect constant(double d);
    static PrivateEffect regime_split(double before, double after);
    static PrivateEffect grouped(std::vector<int> membership, std::vector<double> group_deltas);

    /// Coefficient on z_it for unit i in period t given breakpoint b.
    double at(int unit, int period, int breakpoint) const;
};

struct SpilloverSettings {
    SolverSettings solver;
    LambdaGridSettings grid;
    double zero_threshold = 1e-10;
};

struct SpilloverFit {
    SpilloverNetworks networks;
    Eigen::VectorXd intercepts;
    Eigen::MatrixXd residuals;  ///< N x T, partial outcome minus the post-Lasso fit
    std::vector<double> unit_lambdas;
    int rank_warnings = 0;
};

/// Per unit: partial outcome y_it - z_it delta(i, t), adaptive Lasso on X_t(b) with
/// regime weights and a BIC-chosen penalty, then OLS on the selected columns.
/// `gamma_split == false` fits a single network over all periods.
SpilloverFit estimate_spillover(const PanelData& panel, int breakpoint, const PrivateEffect& effect,
                                bool gamma_split = true, const SpilloverSettings& settings = {});

/// Share of nonzero off-diagonal entries: |{i != j : gamma_ij != 0}| / (N (N - 1)).
double network_density(const Eigen::MatrixXd& gamma);
double network_density(const SpilloverNetworks& net, Regime regime);

/// N x N matrix with unit labels as header row.
void write_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& labels, const std::string& path);

/// Nonzero entries as `src,dst,regime,weight` where src = j (the covariate's unit) and dst = i.
void write_edges_csv(const SpilloverNetworks& net, const std::vector<std::string>& labels, const std::string& path);

}  // namespace spillbreak
