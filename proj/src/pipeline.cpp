#include "spillbreak/pipeline.hpp"

namespace spillbreak {

const char* to_string(BreakVariant v) {
    switch (v) {
    case BreakVariant::none: return "none";
    case BreakVariant::gamma_only: return "gamma_only";
    case BreakVariant::delta_only: return "delta_only";
    case BreakVariant::both: return "both";
    }
    return "?";
}

std::optional<BreakVariant> parse_break_variant(std::string_view s) {
    for (BreakVariant v : {BreakVariant::none, BreakVariant::gamma_only, BreakVariant::delta_only, BreakVariant::both})
        if (s == to_string(v)) return v;
    return std::nullopt;
}

ModelFit estimate_model(const PanelData& raw, BreakTypeSpec spec, const EstimationOptions& options) {
    require_estimable(raw);
    const PanelData panel = demean_outcome(raw);
    const int n = panel.n_units();
    const int periods = panel.n_periods();

    ModelFit fit;
    fit.spec = spec;
    fit.n_units = n;
    fit.n_periods = periods;
    fit.breakpoint = periods;

    if (spec.n_breaks() == 1) {
        const auto grid = candidate_grid(periods, options.trim);
        fit.breaks = estimate_breakpoint(panel, grid, options.penalty({spec.gamma_split(), spec.delta_split()}));
        fit.breakpoint = fit.breaks->b_refined;
    }
    const int b = fit.breakpoint;

    if (spec.delta_split()) {
        const SpilloverLayout layout{n, b, false};
        fit.dml_before = cross_fit_delta(panel, layout, split_segment(0, b), options.dml());
        fit.dml_after = cross_fit_delta(panel, layout, split_segment(b, periods - b), options.dml());
        fit.private_effect = PrivateEffect::regime_split(fit.dml_before->delta, fit.dml_after->delta);
    } else {
        const SpilloverLayout layout{n, b, spec.gamma_split()};
        const SampleSplit split = spec.gamma_split() ? split_regimes(periods, b) : split_segment(0, periods);
        fit.dml = cross_fit_delta(panel, layout, split, options.dml());
        fit.private_effect = PrivateEffect::constant(fit.dml->delta);
    }

    fit.spillover = estimate_spillover(panel, b, fit.private_effect, spec.gamma_split(), options.spillover());
    fit.q_hat = fit.spillover.residuals.squaredNorm() / (static_cast<double>(n) * periods);
    return fit;
}

}  // namespace spillbreak
