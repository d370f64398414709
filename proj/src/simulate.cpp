#include "spillbreak/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "spillbreak/parallel.hpp"

namespace spillbreak {

const char* to_string(NetworkKind k) { return k == NetworkKind::continuous ? "continuous" : "er"; }
const char* to_string(ErrorKind k) { return k == ErrorKind::ar1 ? "ar1" : "iid"; }

std::optional<NetworkKind> parse_network_kind(std::string_view s) {
    if (s == "er" || s == "erdos_renyi") return NetworkKind::erdos_renyi;
    if (s == "continuous" || s == "cont") return NetworkKind::continuous;
    return std::nullopt;
}

void DgpConfig::validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (n_units < 1 || n_periods < 2) throw InvalidArgument("DGP needs N >= 1 and T >= 2");
    if (!prob(er_prob) || !prob(sparsity_before) || !prob(sparsity_after))
        throw InvalidArgument("DGP probabilities must lie in [0, 1]");
    if (!(coef_variance >= 0.0)) throw InvalidArgument("coefficient variance must be non-negative");
    if (!(std::abs(ar_rho) < 1.0)) throw InvalidArgument("AR coefficient must lie in (-1, 1)");
    if (!unit_deltas.empty() && static_cast<int>(unit_deltas.size()) != n_units)
        throw InvalidArgument("unit_deltas must have one entry per unit");
}

DgpConfig DgpConfig::from_label(const std::string& label, NetworkKind network, int n_units, int n_periods,
                                std::uint64_t seed) {
    int family = 0, kind = -1;
    char tail = 0;
    if (std::sscanf(label.c_str(), "%d.%d%c", &family, &kind, &tail) != 2 || family < 1 || family > 2 || kind < 0 ||
        kind > 3)
        throw InvalidArgument("unknown DGP label '" + label + "' (expected 1.0-1.3 or 2.0-2.3)");
    DgpConfig c;
    c.n_units = n_units;
    c.n_periods = n_periods;
    c.network = network;
    c.seed = seed;
    c.error = family == 2 ? ErrorKind::ar1 : ErrorKind::iid;
    constexpr BreakVariant kinds[] = {BreakVariant::none, BreakVariant::gamma_only, BreakVariant::delta_only,
                                      BreakVariant::both};
    c.break_kind = kinds[kind];
    if (BreakTypeSpec{c.break_kind}.delta_split()) c.delta_after = -1.5;
    return c;
}

namespace {

Eigen::MatrixXd draw_network(const DgpConfig& c, double sparsity, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> coef(c.coef_mean, std::sqrt(c.coef_variance));
    Eigen::MatrixXd g(c.n_units, c.n_units);
    for (int i = 0; i < c.n_units; ++i) {
        for (int j = 0; j < c.n_units; ++j) {
            const double draw = unif(rng);
            if (c.network == NetworkKind::erdos_renyi) {
                g(i, j) = draw < c.er_prob ? c.er_weight : 0.0;
            } else {
                const double value = coef(rng);
                g(i, j) = draw < sparsity ? 0.0 : value;
            }
        }
    }
    return g;
}

}  // namespace

SimulatedPanel gen_dgp(const DgpConfig& c) {
    c.validate();
    const int n = c.n_units;
    const int periods = c.n_periods;
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> std_normal(0.0, 1.0);

    Eigen::MatrixXd x(n, periods), z(n, periods), u(n, periods), y(n, periods);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < periods; ++t) x(i, t) = std_normal(rng);
    for (int i = 0; i < n; ++i) {
        const double avg = x.row(i).mean();
        for (int t = 0; t < periods; ++t) z(i, t) = avg + std_normal(rng);
    }

    SimulatedPanel sim;
    sim.breakpoint = c.breakpoint();
    const BreakTypeSpec kind{c.break_kind};
    sim.gamma_before = draw_network(c, c.sparsity_before, rng);
    sim.gamma_after = kind.gamma_split() ? draw_network(c, c.sparsity_after, rng) : sim.gamma_before;

    if (c.unit_deltas.empty()) {
        sim.delta_before = Eigen::VectorXd::Constant(n, c.delta_before);
        sim.delta_after = Eigen::VectorXd::Constant(n, kind.delta_split() ? c.delta_after : c.delta_before);
    } else {
        sim.delta_before = Eigen::Map<const Eigen::VectorXd>(c.unit_deltas.data(), n);
        sim.delta_after = sim.delta_before;
    }

    const double stationary_sd = 1.0 / std::sqrt(1.0 - c.ar_rho * c.ar_rho);
    for (int i = 0; i < n; ++i) {
        double prev = c.error == ErrorKind::ar1 ? stationary_sd * std_normal(rng) : 0.0;
        for (int t = 0; t < periods; ++t) {
            const double shock = std_normal(rng);
            const double e = c.error == ErrorKind::ar1 ? c.ar_rho * prev + shock : shock;
            prev = e;
            u(i, t) = c.noise_scale * e;
        }
    }

    for (int t = 0; t < periods; ++t) {
        const bool pre = t < sim.breakpoint;
        const Eigen::MatrixXd& g = pre ? sim.gamma_before : sim.gamma_after;
        const Eigen::VectorXd& d = pre ? sim.delta_before : sim.delta_after;
        const Eigen::VectorXd signal = g * x.col(t);
        for (int i = 0; i < n; ++i) y(i, t) = signal(i) + z(i, t) * d(i) + u(i, t);
    }
    sim.errors = u;
    sim.panel = PanelData(y, x, z);
    return sim;
}

double hausdorff_ratio(int b_est, int b_true, int n_periods) {
    return 100.0 * std::abs(b_est - b_true) / static_cast<double>(n_periods);
}

NetworkMetrics network_metrics(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
    if (est.rows() != truth.rows() || est.cols() != truth.cols()) throw InvalidArgument("network shapes differ");
    long zeros = 0, zero_hits = 0, nonzeros = 0, nonzero_hits = 0, cells = 0;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
        for (Eigen::Index j = 0; j < truth.cols(); ++j) {
            if (i == j) continue;
            ++cells;
            const double diff = est(i, j) - truth(i, j);
            ss += diff * diff;
            if (truth(i, j) == 0.0) {
                ++zeros;
                zero_hits += est(i, j) == 0.0;
            } else {
                ++nonzeros;
                nonzero_hits += est(i, j) != 0.0;
            }
        }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    NetworkMetrics m;
    m.prop_zero_to_zero = zeros ? static_cast<double>(zero_hits) / zeros : nan;
    m.prop_nonzero_to_nonzero = nonzeros ? static_cast<double>(nonzero_hits) / nonzeros : nan;
    m.mse = cells ? ss / cells : 0.0;
    m.rmse = std::sqrt(m.mse);
    return m;
}

std::uint64_t replication_seed(std::uint64_t master, int rep) {
    std::uint64_t s = master + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(rep) + 1);
    s = (s ^ (s >> 30)) * 0xBF58476D1CE4E5B9ULL;
    s = (s ^ (s >> 27)) * 0x94D049BB133111EBULL;
    return s ^ (s >> 31);
}

namespace {

ReplicationRow run_one(const DgpConfig& base, int rep, const ReplicationOptions& options) {
    ReplicationRow row;
    row.rep = rep;
    row.seed = replication_seed(base.seed, rep);
    DgpConfig cfg = base;
    cfg.seed = row.seed;
    row.b_true = cfg.breakpoint();
    try {
        const SimulatedPanel sim = gen_dgp(cfg);
        SelectionOptions sel_opts{options.estimation, options.count};
        sel_opts.estimation.threads = 1;
        const BreakTypeSpec target{options.estimation_variant.value_or(cfg.break_kind)};

        std::optional<ModelFit> fit;
        if (!options.selection_candidates.empty()) {
            BreakSelection sel = select_break_type(sim.panel, options.selection_candidates, sel_opts);
            row.selected = to_string(sel.chosen.variant);
            for (std::size_t k = 0; k < sel.rows.size(); ++k)
                if (sel.rows[k].spec == target) fit = std::move(sel.fits[k]);
        }
        if (!fit) fit = estimate_model(sim.panel, target, sel_opts.estimation);

        row.b_tilde = fit->breakpoint;
        row.hd_ratio = hausdorff_ratio(row.b_tilde, row.b_true, cfg.n_periods);
        row.network[0] = network_metrics(fit->spillover.networks.gamma_before, sim.gamma_before);
        row.network[1] = network_metrics(fit->spillover.networks.gamma_after, sim.gamma_after);
        row.delta_true = {sim.delta_before.mean(), sim.delta_after.mean()};
        const DMLFit* fits[2] = {fit->dml ? &*fit->dml : &*fit->dml_before, fit->dml ? &*fit->dml : &*fit->dml_after};
        for (int r = 0; r < 2; ++r) {
            row.delta[r] = fits[r]->delta;
            row.delta_se[r] = fits[r]->std_error;
            row.covers[r] = std::abs(row.delta[r] - row.delta_true[r]) <= 1.96 * row.delta_se[r];
        }
        row.ok = true;
    } catch (const std::exception& e) {
        row.ok = false;
        row.failure = e.what();
    }
    return row;
}

struct NanMean {
    double sum = 0.0;
    long count = 0;
    void add(double v) {
        if (std::isnan(v)) return;
        sum += v;
        ++count;
    }
    double value() const { return count ? sum / count : std::numeric_limits<double>::quiet_NaN(); }
};

}  // namespace

ReplicationReport run_replications(const DgpConfig& config, int n_reps, const ReplicationOptions& options) {
    if (n_reps < 1) throw InvalidArgument("n_reps must be at least 1");
    config.validate();
    std::vector<ReplicationRow> rows(n_reps);
    parallel_for(n_reps, options.threads, [&](int rep) { rows[rep] = run_one(config, rep, options); });
    return summarize_replications(config, std::move(rows), options.selection_candidates);
}

ReplicationReport summarize_replications(const DgpConfig& config, std::vector<ReplicationRow> rows,
                                         std::span<const BreakTypeSpec> candidates) {
    ReplicationReport report;
    report.config = config;
    report.n_reps = static_cast<int>(rows.size());
    report.rows = std::move(rows);

    NanMean hd, exact;
    std::array<NanMean, 2> z2z, nz2nz, rmse, mse, bias, sq, cover;
    std::map<std::string, long> picks;
    for (const auto& c : candidates) picks[to_string(c.variant)] = 0;
    for (const auto& row : report.rows) {
        if (!row.ok) {
            ++report.failed;
            continue;
        }
        ++report.completed;
        hd.add(row.hd_ratio);
        exact.add(row.b_tilde == row.b_true ? 1.0 : 0.0);
        for (int r = 0; r < 2; ++r) {
            z2z[r].add(row.network[r].prop_zero_to_zero);
            nz2nz[r].add(row.network[r].prop_nonzero_to_nonzero);
            rmse[r].add(row.network[r].rmse);
            mse[r].add(row.network[r].mse);
            const double err = row.delta[r] - row.delta_true[r];
            bias[r].add(err);
            sq[r].add(err * err);
            cover[r].add(row.covers[r] ? 1.0 : 0.0);
        }
        if (!row.selected.empty()) ++picks[row.selected];
    }
    report.hd_ratio = hd.value();
    report.exact_break_rate = exact.value();
    for (int r = 0; r < 2; ++r) {
        report.regimes[r] = {z2z[r].value(), nz2nz[r].value(), rmse[r].value(), mse[r].value(),
                             bias[r].value(),  std::sqrt(sq[r].value()), cover[r].value()};
    }
    for (const auto& [name, count] : picks)
        report.ic_selection_freq[name] = report.completed ? static_cast<double>(count) / report.completed : 0.0;
    return report;
}

void write_replications_csv(const ReplicationReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "rep,seed,b_tilde,hd_ratio,b_true,ok,z2z_before,nz2nz_before,rmse_before,mse_before,"
           "z2z_after,nz2nz_after,rmse_after,mse_after,delta_before,delta_after,se_before,se_after,"
           "covers_before,covers_after,selected,failure\n";
    char buf[40];
    auto num = [&](double v) -> const char* {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    };
    for (const auto& row : report.rows) {
        out << row.rep << ',' << row.seed << ',' << row.b_tilde << ',' << num(row.hd_ratio) << ',' << row.b_true
            << ',' << (row.ok ? 1 : 0);
        for (int r = 0; r < 2; ++r) {
            out << ',' << num(row.network[r].prop_zero_to_zero);
            out << ',' << num(row.network[r].prop_nonzero_to_nonzero);
            out << ',' << num(row.network[r].rmse);
            out << ',' << num(row.network[r].mse);
        }
        out << ',' << num(row.delta[0]);
        out << ',' << num(row.delta[1]);
        out << ',' << num(row.delta_se[0]);
        out << ',' << num(row.delta_se[1]);
        out << ',' << row.covers[0] << ',' << row.covers[1] << ',' << row.selected << ',';
        std::string reason = row.failure;
        for (char& ch : reason)
            if (ch == ',' || ch == '\n') ch = ';';
        out << reason << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace spillbreak
