#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "spillbreak/io.hpp"

namespace fs = std::filesystem;
using namespace spillbreak;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
    std::string out = ".";
    double trim = 0.15;
    int threads = 1;
    std::string loading = "sum_of_squares";
    std::string penalty = "plug_in";
    std::string count = "full";
    int grid_size = 50;
    double grid_ratio = 1e-3;
    bool no_private_control = false;

    EstimationOptions estimation() const {
        EstimationOptions o;
        o.trim = trim;
        o.threads = threads;
        o.grid.count = grid_size;
        o.grid.min_ratio = grid_ratio;
        o.loading = loading == "square_of_sum" ? LoadingForm::square_of_sum : LoadingForm::sum_of_squares;
        o.rule = penalty == "bic" ? PenaltyRule::bic : penalty == "bic_refit" ? PenaltyRule::bic_refit
                                                                               : PenaltyRule::plug_in;
        o.private_in_outcome = !no_private_control;
        return o;
    }
    ParameterCount parameter_count() const {
        return count == "nonzero" ? ParameterCount::nonzero : ParameterCount::full_dimension;
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--out,-o", c.out, "Output directory")->capture_default_str();
    cmd->add_option("--trim", c.trim, "Breakpoint trimming fraction")->capture_default_str();
    cmd->add_option("--threads", c.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--loading", c.loading, "Second-pass DML loading form")
        ->capture_default_str()
        ->check(CLI::IsMember({"sum_of_squares", "square_of_sum"}));
    cmd->add_option("--dml-penalty", c.penalty, "DML nuisance penalty rule")
        ->capture_default_str()
        ->check(CLI::IsMember({"plug_in", "bic", "bic_refit"}));
    cmd->add_option("--ic-count", c.count, "IC parameter count")
        ->capture_default_str()
        ->check(CLI::IsMember({"full", "nonzero"}));
    cmd->add_option("--grid-size", c.grid_size, "Lambda grid length")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--grid-ratio", c.grid_ratio, "Smallest lambda as a fraction of lambda_max")
        ->capture_default_str();
    cmd->add_flag("--no-private-control", c.no_private_control,
                  "Select outcome controls without the private covariate as an unpenalized regressor");
}

void write_manifest(const CLI::App& app, const CLI::App& cmd, const fs::path& dir, std::uint64_t seed,
                    const std::vector<std::string>& outputs) {
    Json m;
    m["tool"] = "spillbreak";
    m["version"] = kVersion;
    m["command"] = cmd.get_name();
    m["config"] = app.config_to_str(true, false);
    m["seed"] = seed;
    m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    m["compiler"] = __VERSION__;
    m["outputs"] = outputs;
    write_json(m, dir / "manifest.json");
}

fs::path prepare_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
    return fs::path(out);
}

std::vector<std::string> labels_of(const PanelData& panel) {
    if (!panel.unit_labels().empty()) return panel.unit_labels();
    std::vector<std::string> l;
    for (int i = 0; i < panel.n_units(); ++i) l.push_back(std::to_string(i + 1));
    return l;
}

void write_profile(const ModelFit& fit, const fs::path& path) {
    if (fit.breaks) {
        write_profile_csv(*fit.breaks, path.string());
        return;
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "b,penalized_objective,ls_objective\n";
}

std::string fmt(double v, int prec = 3) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw InvalidArgument("bad integer list '" + s + "'");
        }
    }
    if (out.empty()) throw InvalidArgument("empty integer list");
    return out;
}

struct TableRun {
    std::string dgp;
    NetworkKind network;
    int periods;
    ReplicationReport report;
};

std::string render_table(int table, const std::vector<TableRun>& runs, const std::vector<int>& periods) {
    std::ostringstream os;
    char line[256];
    auto header = [&](const char* first, std::initializer_list<const char*> cols) {
        os << first;
        for (int t : periods)
            for (const char* c : cols) {
                std::snprintf(line, sizeof line, " %16s", (std::string(c) + "@T" + std::to_string(t)).c_str());
                os << line;
            }
        os << '\n';
    };
    auto find = [&](const std::string& dgp, NetworkKind k, int t) -> const ReplicationReport& {
        for (const auto& r : runs)
            if (r.dgp == dgp && r.network == k && r.periods == t) return r.report;
        throw InvalidArgument("missing run");
    };
    std::vector<std::string> dgps;
    for (const auto& r : runs)
        if (std::find(dgps.begin(), dgps.end(), r.dgp) == dgps.end()) dgps.push_back(r.dgp);
    std::vector<NetworkKind> kinds;
    for (const auto& r : runs)
        if (std::find(kinds.begin(), kinds.end(), r.network) == kinds.end()) kinds.push_back(r.network);

    switch (table) {
    case 1:
        os << "Table 1: 100 x HD(b, b0) / T\n";
        header("dgp  network    ", {"hd"});
        for (auto k : kinds)
            for (const auto& d : dgps) {
                std::snprintf(line, sizeof line, "%-4s %-11s", d.c_str(), to_string(k));
                os << line;
                for (int t : periods) os << ' ' << std::setw(16) << fmt(find(d, k, t).hd_ratio, 4);
                os << '\n';
            }
        break;
    case 2:
    case 3:
        os << "Table " << table << ": network recovery (" << to_string(kinds.front()) << ")\n";
        header("dgp  regime ", {"z->z", "nz->nz", "rmse"});
        for (const auto& d : dgps)
            for (int r = 0; r < 2; ++r) {
                std::snprintf(line, sizeof line, "%-4s %-7s", d.c_str(), r ? "after" : "before");
                os << line;
                for (int t : periods) {
                    const auto& g = find(d, kinds.front(), t).regimes[r];
                    os << ' ' << std::setw(16) << fmt(g.prop_zero_to_zero) << ' ' << std::setw(16)
                       << fmt(g.prop_nonzero_to_nonzero) << ' ' << std::setw(16) << fmt(g.rmse);
                }
                os << '\n';
            }
        break;
    case 4:
        os << "Table 4: private effect bias and RMSE\n";
        header("dgp  regime ", {"bias", "rmse"});
        for (const auto& d : dgps)
            for (int r = 0; r < 2; ++r) {
                std::snprintf(line, sizeof line, "%-4s %-7s", d.c_str(), r ? "after" : "before");
                os << line;
                for (int t : periods) {
                    const auto& g = find(d, kinds.front(), t).regimes[r];
                    os << ' ' << std::setw(16) << fmt(g.bias_delta) << ' ' << std::setw(16) << fmt(g.rmse_delta);
                }
                os << '\n';
            }
        break;
    case 5:
        os << "Table 5: IC selection frequency\n";
        header("dgp  ", {"gamma_only", "delta_only", "both"});
        for (const auto& d : dgps) {
            std::snprintf(line, sizeof line, "%-5s", d.c_str());
            os << line;
            for (int t : periods) {
                const auto& f = find(d, kinds.front(), t).ic_selection_freq;
                for (const char* name : {"gamma_only", "delta_only", "both"}) {
                    const auto it = f.find(name);
                    os << ' ' << std::setw(16) << fmt(it == f.end() ? 0.0 : it->second);
                }
            }
            os << '\n';
        }
        break;
    }
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Panel spillover networks with a structural break: estimation, selection and simulation"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "Flat key = value file; command-line flags take precedence");
    app.require_subcommand(1);

    Common est_common;
    std::string input, spec_name = "gamma_only";
    bool unit_index = false;
    auto* est = app.add_subcommand("estimate", "Estimate breakpoint, private effect and spillover networks");
    est->add_option("--input,-i", input, "Long-format CSV with header unit,time,y,x,z")->required();
    est->add_option("--spec", spec_name, "Break specification")
        ->capture_default_str()
        ->check(CLI::IsMember({"none", "gamma_only", "delta_only", "both"}));
    est->add_flag("--unit-index", unit_index, "Also write unit_index.json");
    add_common(est, est_common);

    Common sim_common;
    std::string dgp = "1.1", network = "er";
    int n_units = 15, n_periods = 100, reps = 10;
    std::uint64_t seed = 1;
    bool with_selection = false;
    auto* sim = app.add_subcommand("simulate", "Monte Carlo replications of a labelled simulation design");
    sim->add_option("--dgp", dgp, "DGP label: 1.0-1.3 (iid errors) or 2.0-2.3 (AR(1) errors)")->capture_default_str();
    sim->add_option("--network", network, "Network kind")
        ->capture_default_str()
        ->check(CLI::IsMember({"er", "continuous"}));
    sim->add_option("--n", n_units, "Units")->capture_default_str();
    sim->add_option("--t", n_periods, "Periods")->capture_default_str();
    sim->add_option("--reps", reps, "Replications")->capture_default_str();
    sim->add_option("--seed", seed, "Master seed")->capture_default_str();
    sim->add_flag("--select", with_selection, "Also record the IC-selected break type per replication");
    add_common(sim, sim_common);

    Common sel_common;
    std::string sel_input;
    int gmax = 5, max_breaks = 2;
    auto* sel = app.add_subcommand("select", "Information criteria over break types and group counts");
    sel->add_option("--input,-i", sel_input, "Long-format CSV with header unit,time,y,x,z")->required();
    sel->add_option("--gmax", gmax, "Largest group count")->capture_default_str();
    sel->add_option("--max-breaks", max_breaks, "Largest number of sequential breaks")->capture_default_str();
    add_common(sel, sel_common);

    Common rep_common;
    int table = 1, rep_reps = 20, rep_n = 15;
    std::uint64_t rep_seed = 1;
    std::string rep_t = "50,100", rep_network = "";
    auto* rep = app.add_subcommand("reproduce", "Regenerate a simulation table at desk scale");
    rep->add_option("--table", table, "Table number")->required()->check(CLI::Range(1, 5));
    rep->add_option("--reps", rep_reps, "Replications per cell")->capture_default_str();
    rep->add_option("--n", rep_n, "Units")->capture_default_str();
    rep->add_option("--t", rep_t, "Comma-separated period counts")->capture_default_str();
    rep->add_option("--seed", rep_seed, "Master seed")->capture_default_str();
    rep->add_option("--network", rep_network, "Restrict to one network kind (er or continuous)");
    add_common(rep, rep_common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::FileError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*est) {
            const PanelData panel = load_csv(input);
            const BreakTypeSpec spec{*parse_break_variant(spec_name)};
            const ModelFit fit = estimate_model(panel, spec, est_common.estimation());
            const fs::path dir = prepare_dir(est_common.out);
            const auto labels = labels_of(panel);
            write_json(to_json(fit, panel), dir / "break_estimate.json");
            write_json(dml_json(fit), dir / "dml_fit.json");
            write_matrix_csv(fit.spillover.networks.gamma_before, labels, (dir / "gamma_B.csv").string());
            write_matrix_csv(fit.spillover.networks.gamma_after, labels, (dir / "gamma_A.csv").string());
            write_edges_csv(fit.spillover.networks, labels, (dir / "edges.csv").string());
            write_profile(fit, dir / "profile.csv");
            std::vector<std::string> outputs{"break_estimate.json", "dml_fit.json", "gamma_B.csv",
                                             "gamma_A.csv",         "edges.csv",    "profile.csv"};
            if (unit_index) {
                write_unit_index_json(panel, dir / "unit_index.json");
                outputs.push_back("unit_index.json");
            }
            write_manifest(app, *est, dir, 0, outputs);
            std::cout << "breakpoint " << fit.breakpoint << " of " << fit.n_periods << ", q_hat " << fit.q_hat
                      << '\n';
        } else if (*sim) {
            if (reps < 1) throw InvalidArgument("--reps must be at least 1");
            const DgpConfig cfg = DgpConfig::from_label(dgp, *parse_network_kind(network), n_units, n_periods, seed);
            ReplicationOptions opts;
            opts.estimation = sim_common.estimation();
            opts.count = sim_common.parameter_count();
            opts.threads = sim_common.threads;
            if (with_selection)
                opts.selection_candidates = {{BreakVariant::gamma_only}, {BreakVariant::delta_only}, {BreakVariant::both}};
            const ReplicationReport report = run_replications(cfg, reps, opts);
            const fs::path dir = prepare_dir(sim_common.out);
            write_replications_csv(report, (dir / "replications.csv").string());
            write_json(to_json(report), dir / "report.json");
            write_manifest(app, *sim, dir, seed, {"replications.csv", "report.json"});
            std::cout << "completed " << report.completed << "/" << report.n_reps << ", hd_ratio " << report.hd_ratio
                      << '\n';
        } else if (*sel) {
            const PanelData panel = load_csv(sel_input);
            SelectionOptions opts{sel_common.estimation(), sel_common.parameter_count()};
            const auto candidates = all_break_types();
            const BreakSelection breaks = select_break_type(panel, candidates, opts);
            int b_gamma = breaks.rows[1].breakpoint;
            const GroupSelection groups = select_num_groups(panel, b_gamma, gmax, opts);
            const std::vector<int> sequential = detect_breaks_sequential(panel, max_breaks, opts);
            const fs::path dir = prepare_dir(sel_common.out);
            write_ic_breaks_csv(breaks, (dir / "ic_breaks.csv").string());
            write_ic_groups_csv(groups, (dir / "ic_groups.csv").string());
            Json s;
            s["variant"] = to_string(breaks.chosen.variant);
            for (std::size_t k = 0; k < breaks.rows.size(); ++k)
                if (breaks.rows[k].spec == breaks.chosen) s["breakpoint"] = breaks.rows[k].breakpoint;
            s["groups"] = groups.best_groups;
            s["membership"] = groups.rows[groups.best_groups - 1].structure.membership;
            s["group_deltas"] = groups.rows[groups.best_groups - 1].structure.group_deltas;
            s["sequential_breaks"] = sequential;
            s["ic_count"] = sel_common.count;
            write_json(s, dir / "selection.json");
            write_manifest(app, *sel, dir, 0, {"ic_breaks.csv", "ic_groups.csv", "selection.json"});
            std::cout << "selected " << to_string(breaks.chosen.variant) << ", G = " << groups.best_groups << '\n';
        } else if (*rep) {
            const std::vector<int> periods = parse_int_list(rep_t);
            std::vector<std::string> dgps;
            std::vector<NetworkKind> kinds;
            switch (table) {
            case 1:
                dgps = {"1.1", "1.2", "1.3", "2.1", "2.2", "2.3"};
                kinds = {NetworkKind::erdos_renyi, NetworkKind::continuous};
                break;
            case 2: dgps = {"1.1", "1.3", "2.1", "2.3"}; kinds = {NetworkKind::erdos_renyi}; break;
            case 3: dgps = {"1.1", "1.3", "2.1", "2.3"}; kinds = {NetworkKind::continuous}; break;
            case 4: dgps = {"1.1", "1.2", "1.3", "2.1", "2.2", "2.3"}; kinds = {NetworkKind::erdos_renyi}; break;
            default: dgps = {"1.1", "1.2", "1.3"}; kinds = {NetworkKind::erdos_renyi}; break;
            }
            if (!rep_network.empty()) {
                const auto k = parse_network_kind(rep_network);
                if (!k) throw InvalidArgument("unknown network kind '" + rep_network + "'");
                kinds = {*k};
            }
            ReplicationOptions opts;
            opts.estimation = rep_common.estimation();
            opts.count = rep_common.parameter_count();
            opts.threads = rep_common.threads;
            if (table == 5)
                opts.selection_candidates = {{BreakVariant::gamma_only}, {BreakVariant::delta_only}, {BreakVariant::both}};
            std::vector<TableRun> runs;
            Json cells = Json::array();
            for (auto k : kinds)
                for (const auto& d : dgps)
                    for (int t : periods) {
                        const auto cfg = DgpConfig::from_label(d, k, rep_n, t, rep_seed);
                        runs.push_back({d, k, t, run_replications(cfg, rep_reps, opts)});
                        cells.push_back(to_json(runs.back().report));
                    }
            const std::string text = render_table(table, runs, periods);
            const fs::path dir = prepare_dir(rep_common.out);
            const std::string stem = "table" + std::to_string(table);
            {
                std::ofstream out(dir / (stem + ".txt"));
                if (!out) throw IoError("cannot write " + (dir / (stem + ".txt")).string());
                out << text;
            }
            write_json(cells, dir / (stem + ".json"));
            write_manifest(app, *rep, dir, rep_seed, {stem + ".txt", stem + ".json"});
            std::cout << text;
        }
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
