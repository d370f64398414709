#include "spillbreak/dml.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include <boost/math/distributions/normal.hpp>

namespace spillbreak {

namespace {

struct FoldDesign {
    Eigen::MatrixXd raw;     // |F| x p
    Eigen::RowVectorXd mean;
    Eigen::MatrixXd centred;
    Eigen::MatrixXd gram;
};

FoldDesign fold_design(const PanelData& panel, const SpilloverLayout& layout, std::span<const int> fold) {
    FoldDesign d;
    d.raw = spillover_design(panel, layout, fold);
    d.mean = d.raw.colwise().mean();
    d.centred = d.raw.rowwise() - d.mean;
    d.gram = d.centred.transpose() * d.centred;
    for (int k = 0; k < d.gram.cols(); ++k) {
        if (!(d.gram(k, k) > 0.0)) {
            const bool after = layout.gamma_split && k >= layout.n_units;
            throw DegenerateCovariate(k % layout.n_units,
                                      layout.gamma_split ? (after ? Regime::after : Regime::before) : Regime::full);
        }
    }
    return d;
}

Eigen::VectorXd fold_values(const Eigen::MatrixXd& m, int unit, std::span<const int> fold) {
    Eigen::VectorXd v(fold.size());
    for (std::size_t r = 0; r < fold.size(); ++r) v(static_cast<Eigen::Index>(r)) = m(unit, fold[r]);
    return v;
}

GramSystem unit_system(const FoldDesign& d, const Eigen::VectorXd& centred_response) {
    GramSystem sys;
    sys.gram = d.gram;
    sys.xty = d.centred.transpose() * centred_response;
    sys.yty = centred_response.squaredNorm();
    sys.n = static_cast<int>(centred_response.size());
    return sys;
}

double plug_in_level(int n, int p) {
    const double q = 0.1 / std::log(static_cast<double>(n));
    const boost::math::normal_distribution<double> std_normal;
    return 2.0 * 1.1 * boost::math::quantile(std_normal, 1.0 - q / (2.0 * p)) / std::sqrt(static_cast<double>(n));
}

std::vector<int> active_for(const GramSystem& sys, const Eigen::VectorXd& loadings, const DmlSettings& settings) {
    switch (settings.rule) {
    case PenaltyRule::plug_in: {
        const double level = plug_in_level(sys.n, static_cast<int>(loadings.size()));
        return solve_lasso(sys, level, loadings, settings.solver, nullptr).active_set;
    }
    case PenaltyRule::bic_refit: {
        const LambdaPath path = select_lambda(sys, loadings, {}, settings.solver, settings.grid);
        const double nf = static_cast<double>(sys.n);
        double best = std::numeric_limits<double>::infinity();
        std::size_t pick = 0;
        for (std::size_t k = 0; k < path.solutions.size(); ++k) {
            const auto& active = path.solutions[k].active_set;
            if (static_cast<int>(active.size()) >= sys.n - 1) break;
            const RefitResult refit = post_lasso_refit(sys, active);
            const double rss = std::max(residual_ss(sys, refit.coefficients), 1e-12 * sys.yty);
            const double bic = nf * std::log(rss / nf) + static_cast<double>(refit.kept.size()) * std::log(nf);
            if (bic < best) {
                best = bic;
                pick = k;
            }
        }
        return path.solutions[pick].active_set;
    }
    case PenaltyRule::bic: break;
    }
    return select_lambda(sys, loadings, {}, settings.solver, settings.grid).chosen_solution().active_set;
}

std::vector<int> select_one(const FoldDesign& d, const Eigen::VectorXd& response, const DmlSettings& settings,
                            const Eigen::VectorXd* control = nullptr) {
    const Eigen::VectorXd rc = response.array() - response.mean();
    const double nf = static_cast<double>(rc.size());
    const double var = rc.squaredNorm() / nf;
    if (!(var > 0.0)) return {};
    const int p = static_cast<int>(d.centred.cols());

    // An optional control enters as a last, unpenalized column.
    Eigen::MatrixXd x = d.centred;
    if (control) {
        const Eigen::VectorXd cc = control->array() - control->mean();
        if (cc.squaredNorm() > 0.0) {
            x.conservativeResize(Eigen::NoChange, p + 1);
            x.col(p) = cc;
        }
    }
    GramSystem sys;
    sys.gram = x.transpose() * x;
    sys.xty = x.transpose() * rc;
    sys.yty = rc.squaredNorm();
    sys.n = static_cast<int>(rc.size());

    Eigen::VectorXd conservative = (sys.gram.diagonal().array() * var / nf).sqrt();
    if (x.cols() > p) conservative(p) = 0.0;
    const std::vector<int> first = active_for(sys, conservative, settings);
    const Eigen::VectorXd resid = rc - x * post_lasso_refit(sys, first).coefficients;

    Eigen::VectorXd refined(conservative.size());
    for (int k = 0; k < refined.size(); ++k) {
        if (k == p) {
            refined(k) = 0.0;
            continue;
        }
        double v = 0.0;
        if (settings.loading == LoadingForm::sum_of_squares) {
            v = (x.col(k).array() * resid.array()).square().sum() / nf;
        } else {
            const double s = x.col(k).dot(resid);
            v = s * s / nf;
        }
        // Exact first-pass fits leave nothing to scale by; keep the conservative loading.
        refined(k) = v > 1e-24 * conservative(k) * conservative(k) ? std::sqrt(v) : conservative(k);
    }
    std::vector<int> active = active_for(sys, refined, settings);
    std::erase(active, p);
    return active;
}

}  // namespace

SelectedSupport double_lasso_select(const PanelData& panel, const SpilloverLayout& layout,
                                    std::span<const int> fold, const DmlSettings& settings) {
    if (!settings.extra_support.empty() && static_cast<int>(settings.extra_support.size()) != panel.n_units())
        throw InvalidArgument("extra support must list every unit");
    const FoldDesign d = fold_design(panel, layout, fold);
    SelectedSupport out;
    out.units.resize(panel.n_units());
    for (int i = 0; i < panel.n_units(); ++i) {
        auto& u = out.units[i];
        const Eigen::VectorXd z = fold_values(panel.z(), i, fold);
        u.from_z = select_one(d, z, settings);
        u.from_y = select_one(d, fold_values(panel.y(), i, fold), settings, settings.private_in_outcome ? &z : nullptr);
        std::set_union(u.from_z.begin(), u.from_z.end(), u.from_y.begin(), u.from_y.end(),
                       std::back_inserter(u.combined));
        if (!settings.extra_support.empty()) {
            std::vector<int> extra = settings.extra_support[i];
            std::sort(extra.begin(), extra.end());
            std::vector<int> merged;
            std::set_union(u.combined.begin(), u.combined.end(), extra.begin(), extra.end(),
                           std::back_inserter(merged));
            merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
            u.combined = std::move(merged);
        }
    }
    return out;
}

std::vector<std::vector<int>> support_columns(const Eigen::MatrixXd& gamma_before, const Eigen::MatrixXd& gamma_after,
                                              const SpilloverLayout& layout) {
    const int n = layout.n_units;
    std::vector<std::vector<int>> out(gamma_before.rows());
    for (int i = 0; i < gamma_before.rows(); ++i) {
        for (int j = 0; j < n; ++j) {
            const bool pre = gamma_before(i, j) != 0.0;
            const bool post = gamma_after(i, j) != 0.0;
            if (layout.gamma_split) {
                if (pre) out[i].push_back(j);
            } else if (pre || post) {
                out[i].push_back(j);
            }
        }
        if (layout.gamma_split)
            for (int j = 0; j < n; ++j)
                if (gamma_after(i, j) != 0.0) out[i].push_back(n + j);
    }
    return out;
}

NuisanceFit post_double_fit(const PanelData& panel, const SpilloverLayout& layout, std::span<const int> fold,
                            const SelectedSupport& support) {
    if (static_cast<int>(support.units.size()) != panel.n_units())
        throw InvalidArgument("support must list every unit");
    const FoldDesign d = fold_design(panel, layout, fold);
    NuisanceFit fit;
    fit.layout = layout;
    fit.units.resize(panel.n_units());
    for (int i = 0; i < panel.n_units(); ++i) {
        const auto& s = support.units[i].combined;
        auto& u = fit.units[i];
        const Eigen::VectorXd z = fold_values(panel.z(), i, fold);
        const Eigen::VectorXd y = fold_values(panel.y(), i, fold);
        const RefitResult zfit = post_lasso_refit(unit_system(d, z.array() - z.mean()), s);
        const RefitResult yfit = post_lasso_refit(unit_system(d, y.array() - y.mean()), s);
        u.nu = zfit.coefficients;
        u.gamma_star = yfit.coefficients;
        u.eta = z.mean() - d.mean.dot(u.nu);
        u.alpha_star = y.mean() - d.mean.dot(u.gamma_star);
        u.rank_warning = zfit.rank_warning || yfit.rank_warning;
    }
    return fit;
}

FoldScore neyman_delta(const PanelData& panel, std::span<const int> main_fold, const NuisanceFit& nuisance) {
    const int n = panel.n_units();
    if (static_cast<int>(nuisance.units.size()) != n) throw InvalidArgument("nuisance fit must cover every unit");
    const Eigen::MatrixXd design = spillover_design(panel, nuisance.layout, main_fold);
    const auto m = static_cast<Eigen::Index>(main_fold.size());

    FoldScore s;
    s.periods.assign(main_fold.begin(), main_fold.end());
    s.z_residual.resize(n, m);
    s.y_residual.resize(n, m);
    s.unit_numerator.resize(n);
    s.unit_denominator.resize(n);
    for (int i = 0; i < n; ++i) {
        const auto& u = nuisance.units[i];
        const Eigen::VectorXd zfit = design * u.nu;
        const Eigen::VectorXd yfit = design * u.gamma_star;
        for (Eigen::Index r = 0; r < m; ++r) {
            const int t = main_fold[r];
            s.z_residual(i, r) = panel.z()(i, t) - u.eta - zfit(r);
            s.y_residual(i, r) = panel.y()(i, t) - u.alpha_star - yfit(r);
        }
        s.unit_numerator(i) = s.z_residual.row(i).dot(s.y_residual.row(i));
        s.unit_denominator(i) = s.z_residual.row(i).squaredNorm();
    }
    s.numerator = s.unit_numerator.sum();
    s.denominator = s.unit_denominator.sum();
    if (!(s.denominator > 0.0)) throw DegenerateResidual("private covariate residuals are identically zero");
    s.delta = s.numerator / s.denominator;
    return s;
}

double neyman_ratio(const Eigen::MatrixXd& z_residual, const Eigen::MatrixXd& y_residual) {
    if (z_residual.rows() != y_residual.rows() || z_residual.cols() != y_residual.cols())
        throw InvalidArgument("residual shapes differ");
    const double den = z_residual.squaredNorm();
    if (!(den > 0.0)) throw DegenerateResidual("private covariate residuals are identically zero");
    return (z_residual.array() * y_residual.array()).sum() / den;
}

DMLFit cross_fit_delta(const PanelData& panel, const SpilloverLayout& layout, const SampleSplit& split,
                       const DmlSettings& settings) {
    DMLFit fit;
    fit.split = split;
    fit.support_aux = double_lasso_select(panel, layout, split.aux, settings);
    const NuisanceFit from_aux = post_double_fit(panel, layout, split.aux, fit.support_aux);
    fit.score_m = neyman_delta(panel, split.main, from_aux);

    fit.support_main = double_lasso_select(panel, layout, split.main, settings);
    const NuisanceFit from_main = post_double_fit(panel, layout, split.main, fit.support_main);
    fit.score_a = neyman_delta(panel, split.aux, from_main);

    for (const auto* nf : {&from_aux, &from_main})
        for (const auto& u : nf->units) fit.rank_warnings += u.rank_warning ? 1 : 0;

    fit.delta_m = fit.score_m.delta;
    fit.delta_a = fit.score_a.delta;
    fit.delta = (fit.delta_m + fit.delta_a) / 2.0;

    double e2 = 0.0;
    double u2e2 = 0.0;
    int count = 0;
    for (const FoldScore* s : {&fit.score_m, &fit.score_a}) {
        const Eigen::ArrayXXd e = s->z_residual.array();
        const Eigen::ArrayXXd u = s->y_residual.array() - e * fit.delta;
        e2 += e.square().sum();
        u2e2 += (u.square() * e.square()).sum();
        count += static_cast<int>(e.size());
    }
    fit.n_obs = count;
    fit.e2_mean = e2 / count;
    fit.u2e2_mean = u2e2 / count;
    fit.std_error = std::sqrt(fit.u2e2_mean / (fit.e2_mean * fit.e2_mean) / count);
    return fit;
}

DMLFit cross_fit_delta(const PanelData& panel, int breakpoint, const DmlSettings& settings) {
    const SpilloverLayout layout{panel.n_units(), breakpoint, true};
    return cross_fit_delta(panel, layout, split_regimes(panel.n_periods(), breakpoint), settings);
}

Eigen::VectorXd unit_deltas(const DMLFit& fit) {
    const auto n = fit.score_m.unit_numerator.size();
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dm = fit.score_m.unit_denominator(i);
        const double da = fit.score_a.unit_denominator(i);
        if (!(dm > 0.0) || !(da > 0.0))
            throw DegenerateResidual("unit " + std::to_string(i) + " has zero private covariate residuals");
        out(i) = (fit.score_m.unit_numerator(i) / dm + fit.score_a.unit_numerator(i) / da) / 2.0;
    }
    return out;
}

double per_unit_delta(const PanelData& panel, int breakpoint, int unit, const DmlSettings& settings) {
    if (unit < 0 || unit >= panel.n_units()) throw InvalidArgument("unit index out of range");
    const SpilloverLayout layout{panel.n_units(), breakpoint, true};
    const SampleSplit split = split_regimes(panel.n_periods(), breakpoint);

    // Nuisances from `fit_fold`, score summed over `eval_fold` for this unit only.
    auto fold_estimate = [&](std::span<const int> fit_fold, std::span<const int> eval_fold) {
        const FoldDesign d = fold_design(panel, layout, fit_fold);
        const Eigen::VectorXd z = fold_values(panel.z(), unit, fit_fold);
        const Eigen::VectorXd y = fold_values(panel.y(), unit, fit_fold);
        std::vector<int> from_z = select_one(d, z, settings);
        std::vector<int> from_y = select_one(d, y, settings, settings.private_in_outcome ? &z : nullptr);
        std::vector<int> support;
        std::set_union(from_z.begin(), from_z.end(), from_y.begin(), from_y.end(), std::back_inserter(support));
        if (!settings.extra_support.empty()) {
            support.insert(support.end(), settings.extra_support[unit].begin(), settings.extra_support[unit].end());
            std::sort(support.begin(), support.end());
            support.erase(std::unique(support.begin(), support.end()), support.end());
        }
        const Eigen::VectorXd nu = post_lasso_refit(unit_system(d, z.array() - z.mean()), support).coefficients;
        const Eigen::VectorXd gs = post_lasso_refit(unit_system(d, y.array() - y.mean()), support).coefficients;
        const double eta = z.mean() - d.mean.dot(nu);
        const double alpha = y.mean() - d.mean.dot(gs);

        const Eigen::MatrixXd design = spillover_design(panel, layout, eval_fold);
        const Eigen::VectorXd zres = fold_values(panel.z(), unit, eval_fold).array() - eta - (design * nu).array();
        const Eigen::VectorXd yres = fold_values(panel.y(), unit, eval_fold).array() - alpha - (design * gs).array();
        const double den = zres.squaredNorm();
        if (!(den > 0.0))
            throw DegenerateResidual("unit " + std::to_string(unit) + " has zero private covariate residuals");
        return zres.dot(yres) / den;
    };
    const double m = fold_estimate(split.aux, split.main);
    const double a = fold_estimate(split.main, split.aux);
    return (m + a) / 2.0;
}

double group_delta(const DMLFit& fit, std::span<const int> membership, int group) {
    if (static_cast<Eigen::Index>(membership.size()) != fit.score_m.unit_numerator.size())
        throw InvalidArgument("membership must list every unit");
    double nm = 0.0, dm = 0.0, na = 0.0, da = 0.0;
    for (std::size_t i = 0; i < membership.size(); ++i) {
        if (membership[i] != group) continue;
        const auto k = static_cast<Eigen::Index>(i);
        nm += fit.score_m.unit_numerator(k);
        dm += fit.score_m.unit_denominator(k);
        na += fit.score_a.unit_numerator(k);
        da += fit.score_a.unit_denominator(k);
    }
    if (!(dm > 0.0) || !(da > 0.0))
        throw DegenerateResidual("group " + std::to_string(group) + " has zero private covariate residuals");
    return (nm / dm + na / da) / 2.0;
}

}  // namespace spillbreak
