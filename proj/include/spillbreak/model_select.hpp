#pragma once

#include <span>
#include <string>
#include <vector>

#include "spillbreak/pipeline.hpp"

namespace spillbreak {

/// How many parameters the information criterion charges for.
enum class ParameterCount {
    full_dimension,  ///< N^2 per network plus intercepts and private effects
    nonzero,         ///< selected spillover entries plus intercepts and private effects
};

/// Full-dimension count for a break variant; `groups > 1` replaces the single private
/// effect of an unsplit-delta model by one effect per group.
int parameter_count(BreakVariant variant, int n_units, int groups = 1);

struct ICResult {
    double q_hat = 0.0;
    double n_p = 0.0;
    double value = 0.0;
};

/// log(q_hat) + n_p * ln(NT) / (NT).
ICResult information_criterion(double q_hat, double n_p, int n_units, int n_periods);
ICResult information_criterion(const ModelFit& fit, ParameterCount count = ParameterCount::full_dimension,
                               int groups = 1);

struct SelectionOptions {
    EstimationOptions estimation;
    ParameterCount count = ParameterCount::full_dimension;
};

struct BreakSelection {
    struct Row {
        BreakTypeSpec spec;
        int breakpoint = 0;
        ICResult ic;
    };
    BreakTypeSpec chosen;
    std::vector<Row> rows;    ///< in candidate order
    std::vector<ModelFit> fits;  ///< matches rows
};

/// Fits every candidate (re-estimating the breakpoint per spec) and keeps the smallest
/// IC; ties go to the spec with fewer parameters, then to the earlier candidate.
BreakSelection select_break_type(const PanelData& panel, std::span<const BreakTypeSpec> candidates,
                                 const SelectionOptions& options = {});

/// Default candidates: none, gamma_only, delta_only, both.
std::vector<BreakTypeSpec> all_break_types();

struct GroupStructure {
    int groups = 0;
    std::vector<int> membership;       ///< labels 1..G, ascending in group mean
    std::vector<double> group_deltas;  ///< indexed by label - 1
    double within_ss = 0.0;
};

/// Sequential binary segmentation of the sorted per-unit deltas into `groups` segments.
GroupStructure sbsa_cluster(std::span<const double> deltas, int groups);

struct GroupSelection {
    struct Row {
        int groups = 0;
        ICResult ic;
        GroupStructure structure;  ///< group_deltas hold the pooled per-group estimates
    };
    int best_groups = 1;
    std::vector<Row> rows;
};

/// For G = 1..max_groups: cluster per-unit cross-fitted deltas, re-estimate one delta per
/// group, refit the networks (spillover break at `breakpoint`) and score by IC.
GroupSelection select_num_groups(const PanelData& panel, int breakpoint, int max_groups,
                                 const SelectionOptions& options = {});

/// Breaks located one at a time: the whole sample first, then each segment, each new break
/// accepted only when the spillover-break fit beats the no-break fit by IC on that segment.
/// Returned breakpoints are ascending pre-break counts within the full sample.
std::vector<int> detect_breaks_sequential(const PanelData& panel, int max_breaks,
                                          const SelectionOptions& options = {});

void write_ic_breaks_csv(const BreakSelection& selection, const std::string& path);
void write_ic_groups_csv(const GroupSelection& selection, const std::string& path);

}  // namespace spillbreak
