#include "spillbreak/break_detect.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

#include "spillbreak/parallel.hpp"

namespace spillbreak {

std::vector<int> candidate_grid(int periods, double trim) {
    if (!(trim > 0.0) || !(trim < 0.5))
        throw TrimTooAggressive("trim fraction must lie in (0, 0.5), got " + std::to_string(trim));
    constexpr int kMinRegime = 4;
    const int lo = std::max(static_cast<int>(std::ceil(trim * periods - 1e-9)), kMinRegime);
    const int hi = std::min(static_cast<int>(std::floor((1.0 - trim) * periods + 1e-9)), periods - kMinRegime);
    std::vector<int> grid;
    for (int b = std::max(lo, 1); b <= hi; ++b) grid.push_back(b);
    if (grid.empty())
        throw TrimTooAggressive("no admissible breakpoint for T=" + std::to_string(periods) +
                                " and trim=" + std::to_string(trim));
    return grid;
}

namespace {

enum class Segment { all, before, after };

struct Column {
    int var;  // 0..N-1 spillover covariates, N = z
    Segment seg;
};

std::optional<Segment> intersect(Segment a, Segment b) {
    if (a == Segment::all) return b;
    if (b == Segment::all) return a;
    if (a == b) return a;
    return std::nullopt;
}

// Prefix sums of v_t v_t' with v_t = (x_1t .. x_Nt, z_it, y_it) for one unit, so any
// contiguous segment's cross moments cost one subtraction.
class UnitMoments {
public:
    UnitMoments(const PanelData& panel, int unit) : n_(panel.n_units()), periods_(panel.n_periods()) {
        const int d = n_ + 2;
        outer_.assign(periods_ + 1, Eigen::MatrixXd::Zero(d, d));
        sums_.assign(periods_ + 1, Eigen::VectorXd::Zero(d));
        Eigen::VectorXd v(d);
        for (int t = 0; t < periods_; ++t) {
            v.head(n_) = panel.x().col(t);
            v(n_) = panel.z()(unit, t);
            v(n_ + 1) = panel.y()(unit, t);
            outer_[t + 1] = outer_[t];
            outer_[t + 1].selfadjointView<Eigen::Lower>().rankUpdate(v);
            sums_[t + 1] = sums_[t] + v;
        }
        for (auto& m : outer_) m.triangularView<Eigen::StrictlyUpper>() = m.transpose();
    }

    // Centred sufficient statistics of the design `cols` at breakpoint b (intercept
    // absorbed); also returns column sums for the intercept.
    GramSystem system(const std::vector<Column>& cols, int b, Eigen::VectorXd& col_sums) const {
        const Eigen::MatrixXd pre = outer_[b] - outer_[0];
        const Eigen::MatrixXd post = outer_[periods_] - outer_[b];
        const Eigen::MatrixXd& all = outer_[periods_];
        const Eigen::VectorXd spre = sums_[b];
        const Eigen::VectorXd spost = sums_[periods_] - sums_[b];
        const Eigen::VectorXd& sall = sums_[periods_];
        auto moment = [&](Segment s) -> const Eigen::MatrixXd& {
            return s == Segment::before ? pre : (s == Segment::after ? post : all);
        };
        auto total = [&](Segment s) -> const Eigen::VectorXd& {
            return s == Segment::before ? spre : (s == Segment::after ? spost : sall);
        };

        const int p = static_cast<int>(cols.size());
        const int yv = n_ + 1;
        const double T = periods_;
        const double ysum = sall(yv);
        GramSystem sys;
        sys.n = periods_;
        sys.gram.resize(p, p);
        sys.xty.resize(p);
        col_sums.resize(p);
        for (int a = 0; a < p; ++a) col_sums(a) = total(cols[a].seg)(cols[a].var);
        for (int a = 0; a < p; ++a) {
            for (int c = 0; c <= a; ++c) {
                const auto seg = intersect(cols[a].seg, cols[c].seg);
                const double raw = seg ? moment(*seg)(cols[a].var, cols[c].var) : 0.0;
                sys.gram(a, c) = sys.gram(c, a) = raw - col_sums(a) * col_sums(c) / T;
            }
            sys.xty(a) = moment(cols[a].seg)(cols[a].var, yv) - col_sums(a) * ysum / T;
        }
        sys.yty = all(yv, yv) - ysum * ysum / T;
        return sys;
    }

    double y_mean() const { return sums_[periods_](n_ + 1) / periods_; }

private:
    int n_, periods_;
    std::vector<Eigen::MatrixXd> outer_;
    std::vector<Eigen::VectorXd> sums_;
};

std::vector<Column> step_one_columns(int n, const BreakDesign& design) {
    std::vector<Column> cols;
    if (design.gamma_split) {
        for (int j = 0; j < n; ++j) cols.push_back({j, Segment::before});
        for (int j = 0; j < n; ++j) cols.push_back({j, Segment::after});
    } else {
        for (int j = 0; j < n; ++j) cols.push_back({j, Segment::all});
    }
    if (design.z_split) {
        cols.push_back({n, Segment::before});
        cols.push_back({n, Segment::after});
    } else {
        cols.push_back({n, Segment::all});
    }
    return cols;
}

Eigen::VectorXd step_one_weights(const PanelData& panel, int b, const BreakDesign& design) {
    const int n = panel.n_units();
    const int p = (design.gamma_split ? 2 * n : n) + (design.z_split ? 2 : 1);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
    if (design.gamma_split) {
        const RegimeWeights rw = regime_adaptive_weights(panel, b);
        w.head(n) = rw.before;
        w.segment(n, n) = rw.after;
    } else {
        w.head(n) = full_sample_weights(panel);
    }
    return w;
}

UnitCoefficients expand(const Eigen::VectorXd& c, double intercept, int n, const BreakDesign& design) {
    UnitCoefficients u;
    u.intercept = intercept;
    int k = 0;
    if (design.gamma_split) {
        u.gamma_before = c.segment(0, n);
        u.gamma_after = c.segment(n, n);
        k = 2 * n;
    } else {
        u.gamma_before = u.gamma_after = c.segment(0, n);
        k = n;
    }
    if (design.z_split) {
        u.delta_before = c(k);
        u.delta_after = c(k + 1);
    } else {
        u.delta_before = u.delta_after = c(k);
    }
    return u;
}

}  // namespace

BreakEstimate preliminary_estimate(const PanelData& panel, std::span<const int> grid, const PenaltyConfig& config) {
    if (grid.empty()) throw InvalidArgument("candidate grid is empty");
    const int n = panel.n_units();
    const int periods = panel.n_periods();
    for (int b : grid)
        if (b < 1 || b > periods - 1) throw InvalidBreakpoint(b, periods);

    std::vector<UnitMoments> moments;
    moments.reserve(n);
    for (int i = 0; i < n; ++i) moments.emplace_back(panel, i);
    const auto cols = step_one_columns(n, config.design);

    // Penalty levels: BIC per unit at the middle of the sample, then frozen.
    const int mid = std::clamp((periods + 1) / 2, 1, periods - 1);
    BreakEstimate est;
    est.unit_lambdas.resize(n);
    std::vector<Eigen::VectorXd> warm(n);
    {
        const Eigen::VectorXd w = step_one_weights(panel, mid, config.design);
        Eigen::VectorXd sums;
        for (int i = 0; i < n; ++i) {
            const GramSystem sys = moments[i].system(cols, mid, sums);
            const LambdaPath path = select_lambda(sys, w, {}, config.solver, config.grid);
            est.unit_lambdas[i] = path.chosen_lambda();
            warm[i] = path.chosen_solution().coefficients;
        }
    }

    struct CandidateResult {
        double penalized = std::numeric_limits<double>::quiet_NaN();
        std::vector<UnitCoefficients> coefs;
        std::vector<std::string> warnings;
    };
    std::vector<CandidateResult> results(grid.size());

    parallel_for(static_cast<int>(grid.size()), config.threads, [&](int k) {
        const int b = grid[k];
        auto& res = results[k];
        Eigen::VectorXd w;
        try {
            w = step_one_weights(panel, b, config.design);
        } catch (const DegenerateCovariate& e) {
            res.warnings.push_back("b=" + std::to_string(b) + ": " + e.what());
            return;
        }
        double total = 0.0;
        Eigen::VectorXd sums;
        res.coefs.reserve(n);
        for (int i = 0; i < n; ++i) {
            const GramSystem sys = moments[i].system(cols, b, sums);
            const LassoSolution sol = solve_lasso(sys, est.unit_lambdas[i], w, config.solver, &warm[i]);
            if (!sol.converged)
                res.warnings.push_back("b=" + std::to_string(b) + " unit=" + std::to_string(i) +
                                       ": lasso did not converge");
            total += sol.objective_value;
            const double intercept = moments[i].y_mean() - sums.dot(sol.coefficients) / periods;
            res.coefs.push_back(expand(sol.coefficients, intercept, n, config.design));
        }
        res.penalized = total / n;
    });

    int best = -1;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        est.profile.push_back({grid[k], results[k].penalized, std::numeric_limits<double>::quiet_NaN()});
        est.warnings.insert(est.warnings.end(), results[k].warnings.begin(), results[k].warnings.end());
        if (std::isnan(results[k].penalized)) continue;
        if (best < 0 || results[k].penalized < results[best].penalized) best = static_cast<int>(k);
    }
    if (best < 0) throw Error("no candidate breakpoint could be evaluated");
    est.b_preliminary = est.b_refined = grid[best];
    est.beta_hat = std::move(results[best].coefs);
    return est;
}

RefinedBreak refine_breakpoint(const PanelData& panel, std::span<const UnitCoefficients> beta_hat,
                               std::span<const int> grid) {
    const int n = panel.n_units();
    const int periods = panel.n_periods();
    if (static_cast<int>(beta_hat.size()) != n) throw InvalidArgument("one coefficient set per unit required");
    if (grid.empty()) throw InvalidArgument("candidate grid is empty");

    // cost_pre[t] / cost_post[t]: squared residual summed over units when period t is
    // assigned to the pre- or post-break coefficients.
    Eigen::VectorXd cost_pre = Eigen::VectorXd::Zero(periods);
    Eigen::VectorXd cost_post = Eigen::VectorXd::Zero(periods);
    for (int i = 0; i < n; ++i) {
        const auto& c = beta_hat[i];
        const Eigen::VectorXd fit_pre = panel.x().transpose() * c.gamma_before;
        const Eigen::VectorXd fit_post = panel.x().transpose() * c.gamma_after;
        for (int t = 0; t < periods; ++t) {
            const double base = panel.y()(i, t) - c.intercept;
            const double r_pre = base - fit_pre(t) - panel.z()(i, t) * c.delta_before;
            const double r_post = base - fit_post(t) - panel.z()(i, t) * c.delta_after;
            cost_pre(t) += r_pre * r_pre;
            cost_post(t) += r_post * r_post;
        }
    }
    Eigen::VectorXd prefix_pre = Eigen::VectorXd::Zero(periods + 1);
    Eigen::VectorXd suffix_post = Eigen::VectorXd::Zero(periods + 1);
    for (int t = 0; t < periods; ++t) prefix_pre(t + 1) = prefix_pre(t) + cost_pre(t);
    for (int t = periods - 1; t >= 0; --t) suffix_post(t) = suffix_post(t + 1) + cost_post(t);

    RefinedBreak out;
    const double scale = 1.0 / (static_cast<double>(n) * periods);
    double best = std::numeric_limits<double>::infinity();
    for (int b : grid) {
        if (b < 1 || b > periods - 1) throw InvalidBreakpoint(b, periods);
        const double v = (prefix_pre(b) + suffix_post(b)) * scale;
        out.criterion.push_back(v);
        if (v < best || (v == best && b < out.breakpoint)) {
            best = v;
            out.breakpoint = b;
        }
    }
    return out;
}

BreakEstimate estimate_breakpoint(const PanelData& panel, std::span<const int> grid, const PenaltyConfig& config) {
    BreakEstimate est = preliminary_estimate(panel, grid, config);
    const RefinedBreak refined = refine_breakpoint(panel, est.beta_hat, grid);
    est.b_refined = refined.breakpoint;
    for (std::size_t k = 0; k < est.profile.size(); ++k) est.profile[k].least_squares = refined.criterion[k];
    return est;
}

void write_profile_csv(const BreakEstimate& estimate, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "b,penalized_objective,ls_objective\n";
    char buf[96];
    for (const auto& p : estimate.profile) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", p.breakpoint, p.penalized, p.least_squares);
        out << buf;
    }
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace spillbreak
