#include "spillbreak/model_select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "spillbreak/parallel.hpp"

namespace spillbreak {

int parameter_count(BreakVariant variant, int n_units, int groups) {
    const int n2 = n_units * n_units;
    switch (variant) {
    case BreakVariant::none: return n2 + n_units + groups;
    case BreakVariant::gamma_only: return 2 * n2 + n_units + groups;
    case BreakVariant::delta_only: return n2 + n_units + 2;
    case BreakVariant::both: return 2 * n2 + n_units + 2;
    }
    return 0;
}

ICResult information_criterion(double q_hat, double n_p, int n_units, int n_periods) {
    const double nt = static_cast<double>(n_units) * n_periods;
    return {q_hat, n_p, std::log(q_hat) + n_p * std::log(nt) / nt};
}

ICResult information_criterion(const ModelFit& fit, ParameterCount count, int groups) {
    double n_p = parameter_count(fit.spec.variant, fit.n_units, groups);
    if (count == ParameterCount::nonzero) {
        const auto& net = fit.spillover.networks;
        double selected = static_cast<double>(net.support_before.count());
        if (fit.spec.gamma_split()) selected += static_cast<double>(net.support_after.count());
        const int deltas = fit.spec.delta_split() ? 2 : groups;
        n_p = selected + fit.n_units + deltas;
    }
    return information_criterion(fit.q_hat, n_p, fit.n_units, fit.n_periods);
}

std::vector<BreakTypeSpec> all_break_types() {
    return {{BreakVariant::none}, {BreakVariant::gamma_only}, {BreakVariant::delta_only}, {BreakVariant::both}};
}

BreakSelection select_break_type(const PanelData& panel, std::span<const BreakTypeSpec> candidates,
                                 const SelectionOptions& options) {
    if (candidates.empty()) throw InvalidArgument("no candidate break specifications");
    const int count = static_cast<int>(candidates.size());
    const int outer = std::min(options.estimation.threads, count);
    EstimationOptions inner = options.estimation;
    if (outer > 1) inner.threads = std::max(1, options.estimation.threads / outer);

    BreakSelection out;
    out.fits.resize(candidates.size());
    parallel_for(count, outer, [&](int k) { out.fits[k] = estimate_model(panel, candidates[k], inner); });

    int best = 0;
    for (int k = 0; k < count; ++k) {
        const ModelFit& fit = out.fits[k];
        out.rows.push_back({candidates[k], fit.breakpoint, information_criterion(fit, options.count)});
        if (k == 0) continue;
        const ICResult& a = out.rows[k].ic;
        const ICResult& b = out.rows[best].ic;
        if (a.value < b.value || (a.value == b.value && a.n_p < b.n_p)) best = k;
    }
    out.chosen = candidates[best];
    return out;
}

namespace {

double segment_ss(const std::vector<double>& v, int first, int last) {
    if (last - first < 2) return 0.0;
    double mean = 0.0;
    for (int k = first; k < last; ++k) mean += v[k];
    mean /= (last - first);
    double ss = 0.0;
    for (int k = first; k < last; ++k) ss += (v[k] - mean) * (v[k] - mean);
    return ss;
}

}  // namespace

GroupStructure sbsa_cluster(std::span<const double> deltas, int groups) {
    const int n = static_cast<int>(deltas.size());
    if (groups < 1) throw InvalidArgument("group count must be at least 1");
    if (groups > n) throw TooManyGroups(groups, n);
    for (double d : deltas)
        if (!std::isfinite(d)) throw InvalidArgument("per-unit deltas must be finite");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return deltas[a] < deltas[b]; });
    std::vector<double> sorted(n);
    for (int k = 0; k < n; ++k) sorted[k] = deltas[order[k]];

    std::vector<int> cuts{0, n};  // segment s spans [cuts[s], cuts[s+1])
    while (static_cast<int>(cuts.size()) - 1 < groups) {
        double best_gain = -1.0;
        int best_cut = -1;
        for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
            const int lo = cuts[s], hi = cuts[s + 1];
            const double whole = segment_ss(sorted, lo, hi);
            for (int k = lo + 1; k < hi; ++k) {
                const double gain = whole - segment_ss(sorted, lo, k) - segment_ss(sorted, k, hi);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_cut = k;
                }
            }
        }
        cuts.insert(std::upper_bound(cuts.begin(), cuts.end(), best_cut), best_cut);
    }

    GroupStructure gs;
    gs.groups = groups;
    gs.membership.assign(n, 0);
    for (int s = 0; s < groups; ++s) {
        double sum = 0.0;
        for (int k = cuts[s]; k < cuts[s + 1]; ++k) {
            gs.membership[order[k]] = s + 1;
            sum += sorted[k];
        }
        gs.group_deltas.push_back(sum / (cuts[s + 1] - cuts[s]));
        gs.within_ss += segment_ss(sorted, cuts[s], cuts[s + 1]);
    }
    return gs;
}

GroupSelection select_num_groups(const PanelData& raw, int breakpoint, int max_groups,
                                 const SelectionOptions& options) {
    require_estimable(raw);
    if (max_groups < 1) throw InvalidArgument("max_groups must be at least 1");
    if (max_groups > raw.n_units()) throw TooManyGroups(max_groups, raw.n_units());
    const PanelData panel = demean_outcome(raw);
    const int n = panel.n_units();
    const EstimationOptions& est = options.estimation;

    const DMLFit fit = cross_fit_delta(panel, breakpoint, est.dml());
    const Eigen::VectorXd per_unit = unit_deltas(fit);
    const std::vector<double> unit_values(per_unit.data(), per_unit.data() + per_unit.size());

    GroupSelection out;
    out.rows.resize(max_groups);
    parallel_for(max_groups, est.threads, [&](int k) {
        const int groups = k + 1;
        GroupStructure gs = sbsa_cluster(unit_values, groups);
        std::vector<int> zero_based(n);
        for (int i = 0; i < n; ++i) zero_based[i] = gs.membership[i] - 1;
        for (int g = 0; g < groups; ++g) gs.group_deltas[g] = group_delta(fit, zero_based, g);

        const PrivateEffect effect = PrivateEffect::grouped(zero_based, gs.group_deltas);
        const SpilloverFit spill = estimate_spillover(panel, breakpoint, effect, true, est.spillover());
        const double q_hat = spill.residuals.squaredNorm() / (static_cast<double>(n) * panel.n_periods());
        double n_p = parameter_count(BreakVariant::gamma_only, n, groups);
        if (options.count == ParameterCount::nonzero)
            n_p = static_cast<double>(spill.networks.support_before.count() + spill.networks.support_after.count()) +
                  n + groups;
        out.rows[k] = {groups, information_criterion(q_hat, n_p, n, panel.n_periods()), std::move(gs)};
    });

    for (const auto& row : out.rows)
        if (row.ic.value < out.rows[out.best_groups - 1].ic.value) out.best_groups = row.groups;
    return out;
}

std::vector<int> detect_breaks_sequential(const PanelData& panel, int max_breaks, const SelectionOptions& options) {
    if (max_breaks < 0) throw InvalidArgument("max_breaks must be non-negative");
    const std::vector<BreakTypeSpec> pair{{BreakVariant::none}, {BreakVariant::gamma_only}};

    std::vector<int> cuts{0, panel.n_periods()};
    while (static_cast<int>(cuts.size()) - 2 < max_breaks) {
        double best_gain = 0.0;
        int best_break = -1;
        for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
            const int first = cuts[s], count = cuts[s + 1] - cuts[s];
            try {
                const PanelData segment = panel.slice_periods(first, count);
                const BreakSelection sel = select_break_type(segment, pair, options);
                const double gain = sel.rows[0].ic.value - sel.rows[1].ic.value;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_break = first + sel.rows[1].breakpoint;
                }
            } catch (const Error&) {
                continue;  // segment too short to host another break
            }
        }
        if (best_break < 0) break;
        cuts.insert(std::upper_bound(cuts.begin(), cuts.end(), best_break), best_break);
    }
    return {cuts.begin() + 1, cuts.end() - 1};
}

namespace {

std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_ic_breaks_csv(const BreakSelection& selection, const std::string& path) {
    auto out = open_for_write(path);
    out << "spec,n_p,Q_hat,IC\n";
    for (const auto& row : selection.rows)
        out << to_string(row.spec.variant) << ',' << num(row.ic.n_p) << ',' << num(row.ic.q_hat) << ','
            << num(row.ic.value) << '\n';
    if (!out) throw IoError("failed writing " + path);
}

void write_ic_groups_csv(const GroupSelection& selection, const std::string& path) {
    auto out = open_for_write(path);
    out << "G,n_p,Q_hat,IC\n";
    for (const auto& row : selection.rows)
        out << row.groups << ',' << num(row.ic.n_p) << ',' << num(row.ic.q_hat) << ',' << num(row.ic.value) << '\n';
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace spillbreak
