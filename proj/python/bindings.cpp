#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spillbreak/io.hpp"

namespace py = pybind11;
using namespace spillbreak;

namespace {

BreakTypeSpec spec_from(const std::string& name) {
    const auto v = parse_break_variant(name);
    if (!v) throw InvalidArgument("unknown break specification '" + name + "'");
    return {*v};
}

EstimationOptions options_from(double trim, int threads, const std::string& dml_penalty = "plug_in") {
    EstimationOptions o;
    o.trim = trim;
    o.threads = threads;
    if (dml_penalty == "bic")
        o.rule = PenaltyRule::bic;
    else if (dml_penalty == "bic_refit")
        o.rule = PenaltyRule::bic_refit;
    else if (dml_penalty != "plug_in")
        throw InvalidArgument("unknown DML penalty rule '" + dml_penalty + "'");
    return o;
}

py::dict fit_dict(const ModelFit& fit) {
    py::dict d;
    d["spec"] = to_string(fit.spec.variant);
    d["breakpoint"] = fit.breakpoint;
    d["q_hat"] = fit.q_hat;
    d["gamma_before"] = fit.spillover.networks.gamma_before;
    d["gamma_after"] = fit.spillover.networks.gamma_after;
    d["intercepts"] = fit.spillover.intercepts;
    d["residuals"] = fit.spillover.residuals;
    if (fit.dml) {
        d["delta"] = fit.dml->delta;
        d["std_error"] = fit.dml->std_error;
    } else {
        d["delta_before"] = fit.dml_before->delta;
        d["delta_after"] = fit.dml_after->delta;
        d["std_error_before"] = fit.dml_before->std_error;
        d["std_error_after"] = fit.dml_after->std_error;
    }
    if (fit.breaks) {
        d["b_preliminary"] = fit.breaks->b_preliminary;
        std::vector<int> b;
        std::vector<double> pen, ls;
        for (const auto& p : fit.breaks->profile) {
            b.push_back(p.breakpoint);
            pen.push_back(p.penalized);
            ls.push_back(p.least_squares);
        }
        d["profile_breakpoints"] = b;
        d["profile_penalized"] = pen;
        d["profile_least_squares"] = ls;
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Spillover network estimation with a structural break";

    py::register_exception<Error>(m, "SpillbreakError");

    py::class_<PanelData>(m, "PanelData")
        .def(py::init<Eigen::MatrixXd, Eigen::MatrixXd, Eigen::MatrixXd, std::vector<std::string>,
                      std::vector<long long>>(),
             py::arg("y"), py::arg("x"), py::arg("z"), py::arg("unit_labels") = std::vector<std::string>{},
             py::arg("times") = std::vector<long long>{})
        .def_property_readonly("n_units", &PanelData::n_units)
        .def_property_readonly("n_periods", &PanelData::n_periods)
        .def_property_readonly("y", &PanelData::y)
        .def_property_readonly("x", &PanelData::x)
        .def_property_readonly("z", &PanelData::z)
        .def_property_readonly("unit_labels", &PanelData::unit_labels)
        .def_property_readonly("times", &PanelData::times);

    m.def("load_csv", [](const std::string& path) { return load_csv(path); }, py::arg("path"));
    m.def("demean_within", &demean_within, py::arg("panel"));
    m.def("demean_outcome", &demean_outcome, py::arg("panel"));
    m.def("candidate_grid", &candidate_grid, py::arg("n_periods"), py::arg("trim") = 0.15);

    m.def(
        "solve_lasso",
        [](const Eigen::MatrixXd& design, const Eigen::VectorXd& response, double penalty,
           std::optional<Eigen::VectorXd> weights) {
            LassoProblem p{design, response, penalty,
                           weights.value_or(Eigen::VectorXd::Ones(design.cols())), 1e-7, 10000};
            return solve_lasso(p).coefficients;
        },
        py::arg("design"), py::arg("response"), py::arg("penalty"), py::arg("weights") = py::none(),
        "Minimise (1/n)||y - Xc||^2 + penalty * sum_k w_k |c_k| by coordinate descent.");

    m.def(
        "estimate",
        [](const PanelData& panel, const std::string& spec, double trim, int threads, const std::string& dml_penalty) {
            const EstimationOptions options = options_from(trim, threads, dml_penalty);
            ModelFit fit;
            {
                py::gil_scoped_release release;
                fit = estimate_model(panel, spec_from(spec), options);
            }
            return fit_dict(fit);
        },
        py::arg("panel"), py::arg("spec") = "gamma_only", py::arg("trim") = 0.15, py::arg("threads") = 1,
        py::arg("dml_penalty") = "plug_in");

    m.def(
        "select_break_type",
        [](const PanelData& panel, double trim, bool nonzero_count) {
            SelectionOptions o{options_from(trim, 1),
                               nonzero_count ? ParameterCount::nonzero : ParameterCount::full_dimension};
            const auto candidates = all_break_types();
            const BreakSelection sel = select_break_type(panel, candidates, o);
            py::list rows;
            for (const auto& r : sel.rows) {
                py::dict d;
                d["spec"] = to_string(r.spec.variant);
                d["breakpoint"] = r.breakpoint;
                d["n_p"] = r.ic.n_p;
                d["q_hat"] = r.ic.q_hat;
                d["ic"] = r.ic.value;
                rows.append(d);
            }
            return py::make_tuple(to_string(sel.chosen.variant), rows);
        },
        py::arg("panel"), py::arg("trim") = 0.15, py::arg("nonzero_count") = false);

    m.def(
        "information_criterion",
        [](double q_hat, double n_p, int n_units, int n_periods) {
            return information_criterion(q_hat, n_p, n_units, n_periods).value;
        },
        py::arg("q_hat"), py::arg("n_p"), py::arg("n_units"), py::arg("n_periods"));
    m.def("parameter_count", [](const std::string& spec, int n, int groups) {
        return parameter_count(spec_from(spec).variant, n, groups);
    }, py::arg("spec"), py::arg("n_units"), py::arg("groups") = 1);

    m.def(
        "sbsa_cluster",
        [](const std::vector<double>& deltas, int groups) {
            const GroupStructure g = sbsa_cluster(deltas, groups);
            return py::make_tuple(g.membership, g.group_deltas);
        },
        py::arg("deltas"), py::arg("groups"));

    m.def(
        "gen_dgp",
        [](const std::string& label, const std::string& network, int n_units, int n_periods, std::uint64_t seed) {
            const auto kind = parse_network_kind(network);
            if (!kind) throw InvalidArgument("unknown network kind '" + network + "'");
            const SimulatedPanel sim = gen_dgp(DgpConfig::from_label(label, *kind, n_units, n_periods, seed));
            py::dict d;
            d["panel"] = sim.panel;
            d["gamma_before"] = sim.gamma_before;
            d["gamma_after"] = sim.gamma_after;
            d["delta_before"] = sim.delta_before;
            d["delta_after"] = sim.delta_after;
            d["breakpoint"] = sim.breakpoint;
            d["errors"] = sim.errors;
            return d;
        },
        py::arg("label"), py::arg("network") = "er", py::arg("n_units") = 15, py::arg("n_periods") = 100,
        py::arg("seed") = 1);

    m.def("hausdorff_ratio", &hausdorff_ratio, py::arg("b_est"), py::arg("b_true"), py::arg("n_periods"));

    m.def(
        "run_replications",
        [](const std::string& label, const std::string& network, int n_units, int n_periods, std::uint64_t seed,
           int reps, int threads) {
            const auto kind = parse_network_kind(network);
            if (!kind) throw InvalidArgument("unknown network kind '" + network + "'");
            ReplicationOptions o;
            o.threads = threads;
            std::string text;
            {
                py::gil_scoped_release release;
                const auto report =
                    run_replications(DgpConfig::from_label(label, *kind, n_units, n_periods, seed), reps, o);
                text = to_json(report).dump();
            }
            return py::module_::import("json").attr("loads")(text);
        },
        py::arg("label") = "1.1", py::arg("network") = "er", py::arg("n_units") = 15, py::arg("n_periods") = 100,
        py::arg("seed") = 1, py::arg("reps") = 10, py::arg("threads") = 1);
}
