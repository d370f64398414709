#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "spillbreak/break_detect.hpp"
#include "spillbreak/dml.hpp"
#include "spillbreak/panel.hpp"
#include "spillbreak/spillover.hpp"

namespace spillbreak {

/// Which coefficients change at the (single) break.
enum class BreakVariant { none, gamma_only, delta_only, both };

const char* to_string(BreakVariant v);
std::optional<BreakVariant> parse_break_variant(std::string_view s);

struct BreakTypeSpec {
    BreakVariant variant = BreakVariant::gamma_only;

    int n_breaks() const noexcept { return variant == BreakVariant::none ? 0 : 1; }
    bool gamma_split() const noexcept {
        return variant == BreakVariant::gamma_only || variant == BreakVariant::both;
    }
    bool delta_split() const noexcept {
        return variant == BreakVariant::delta_only || variant == BreakVariant::both;
    }
    friend bool operator==(const BreakTypeSpec&, const BreakTypeSpec&) = default;
};

struct EstimationOptions {
    double trim = 0.15;
    SolverSettings solver;
    LambdaGridSettings grid;
    LoadingForm loading = LoadingForm::sum_of_squares;
    PenaltyRule rule = PenaltyRule::plug_in;
    bool private_in_outcome = true;
    double zero_threshold = 1e-10;
    int threads = 1;

    PenaltyConfig penalty(const BreakDesign& design) const { return {design, solver, grid, threads}; }
    DmlSettings dml() const { return {solver, grid, loading, rule, private_in_outcome, {}}; }
    SpilloverSettings spillover() const { return {solver, grid, zero_threshold}; }
};

/// Everything the estimator produces for one break specification.
struct ModelFit {
    BreakTypeSpec spec;
    int n_units = 0;
    int n_periods = 0;
    int breakpoint = 0;  ///< refined breakpoint; equals T when the spec has no break
    std::optional<BreakEstimate> breaks;
    std::optional<DMLFit> dml;         ///< constant private effect
    std::optional<DMLFit> dml_before;  ///< regime-split private effect
    std::optional<DMLFit> dml_after;
    PrivateEffect private_effect;
    SpilloverFit spillover;
    double q_hat = 0.0;  ///< mean squared residual of the final fit
};

/// Demeans the outcome and runs breakpoint search and refinement, cross-fitted DML for
/// the private effect (per regime when it breaks), and the final post-Lasso networks.
ModelFit estimate_model(const PanelData& panel, BreakTypeSpec spec = {}, const EstimationOptions& options = {});

}  // namespace spillbreak
