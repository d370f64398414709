#include "spillbreak/io.hpp"

#include <fstream>

namespace spillbreak {

Json to_json(const ModelFit& fit, const PanelData& panel) {
    Json j;
    j["spec"] = to_string(fit.spec.variant);
    j["n_units"] = fit.n_units;
    j["n_periods"] = fit.n_periods;
    j["breakpoint"] = fit.breakpoint;
    if (fit.breaks) {
        const BreakEstimate& be = *fit.breaks;
        j["b_preliminary"] = be.b_preliminary;
        j["b_refined"] = be.b_refined;
        const auto& times = panel.times();
        if (fit.breakpoint >= 1 && fit.breakpoint <= static_cast<int>(times.size()))
            j["last_pre_break_time"] = times[fit.breakpoint - 1];
        j["candidates"] = {be.profile.front().breakpoint, be.profile.back().breakpoint};
        j["unit_lambdas"] = be.unit_lambdas;
        j["warnings"] = be.warnings;
    } else {
        j["b_preliminary"] = nullptr;
        j["b_refined"] = nullptr;
    }
    j["q_hat"] = fit.q_hat;
    j["density_before"] = network_density(fit.spillover.networks, Regime::before);
    j["density_after"] = network_density(fit.spillover.networks, Regime::after);
    return j;
}

Json to_json(const DMLFit& fit) {
    Json j;
    j["delta"] = fit.delta;
    j["delta_m"] = fit.delta_m;
    j["delta_a"] = fit.delta_a;
    j["std_error"] = fit.std_error;
    j["n_obs"] = fit.n_obs;
    Json sizes = Json::object();
    std::vector<int> aux, main;
    for (const auto& u : fit.support_aux.units) aux.push_back(static_cast<int>(u.combined.size()));
    for (const auto& u : fit.support_main.units) main.push_back(static_cast<int>(u.combined.size()));
    sizes["aux"] = aux;
    sizes["main"] = main;
    j["per_unit_support_sizes"] = sizes;
    j["rank_warnings"] = fit.rank_warnings;
    return j;
}

Json dml_json(const ModelFit& fit) {
    Json j;
    if (fit.dml) {
        j["mode"] = "constant";
        const Json body = to_json(*fit.dml);
        for (const auto& [key, value] : body.items()) j[key] = value;
    } else {
        j["mode"] = "regime_split";
        j["delta_before"] = fit.dml_before->delta;
        j["delta_after"] = fit.dml_after->delta;
        j["before"] = to_json(*fit.dml_before);
        j["after"] = to_json(*fit.dml_after);
    }
    return j;
}

Json to_json(const DgpConfig& c) {
    Json j;
    j["n_units"] = c.n_units;
    j["n_periods"] = c.n_periods;
    j["network"] = to_string(c.network);
    j["error"] = to_string(c.error);
    j["break_kind"] = to_string(c.break_kind);
    j["seed"] = c.seed;
    j["breakpoint"] = c.breakpoint();
    j["er_prob"] = c.er_prob;
    j["sparsity"] = {c.sparsity_before, c.sparsity_after};
    j["coef_mean"] = c.coef_mean;
    j["coef_variance"] = c.coef_variance;
    j["delta_values"] = {c.delta_before, c.delta_after};
    j["ar_rho"] = c.ar_rho;
    return j;
}

Json to_json(const ReplicationReport& r) {
    Json j;
    j["config"] = to_json(r.config);
    j["n_reps"] = r.n_reps;
    j["completed"] = r.completed;
    j["failed"] = r.failed;
    j["hd_ratio"] = r.hd_ratio;
    j["exact_break_rate"] = r.exact_break_rate;
    const char* names[] = {"before", "after"};
    for (int k = 0; k < 2; ++k) {
        const RegimeSummary& s = r.regimes[k];
        Json g;
        g["prop_z_to_z"] = s.prop_zero_to_zero;
        g["prop_nz_to_nz"] = s.prop_nonzero_to_nonzero;
        g["rmse_gamma"] = s.rmse;
        g["mse_gamma"] = s.mse;
        g["bias_delta"] = s.bias_delta;
        g["rmse_delta"] = s.rmse_delta;
        g["coverage"] = s.coverage;
        j[names[k]] = g;
    }
    j["ic_selection_freq"] = r.ic_selection_freq;
    Json failures = Json::array();
    for (const auto& row : r.rows)
        if (!row.ok) failures.push_back({{"rep", row.rep}, {"seed", row.seed}, {"reason", row.failure}});
    j["failures"] = failures;
    return j;
}

void write_json(const Json& value, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << value.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace spillbreak
