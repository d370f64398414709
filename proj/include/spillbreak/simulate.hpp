#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spillbreak/model_select.hpp"

namespace spillbreak {

enum class NetworkKind { erdos_renyi, continuous };
enum class ErrorKind { iid, ar1 };

const char* to_string(NetworkKind k);
const char* to_string(ErrorKind k);
std::optional<NetworkKind> parse_network_kind(std::string_view s);

struct DgpConfig {
    int n_units = 15;
    int n_periods = 100;
    NetworkKind network = NetworkKind::erdos_renyi;
    ErrorKind error = ErrorKind::iid;
    BreakVariant break_kind = BreakVariant::gamma_only;
    std::uint64_t seed = 1;
    double er_prob = 0.25;
    double er_weight = 1.0;
    double sparsity_before = 0.7;  ///< continuous networks: probability an entry is zero
    double sparsity_after = 0.5;
    double coef_mean = 1.0;
    double coef_variance = 0.5;
    double delta_before = 1.5;
    double delta_after = 1.5;
    double ar_rho = 0.6;
    double noise_scale = 1.0;  ///< multiplies the outcome error; 0 gives a noiseless panel
    std::vector<double> unit_deltas;  ///< when non-empty, a constant per-unit private effect

    int breakpoint() const noexcept { return n_periods / 3; }
    void validate() const;

    /// Design labels: "k.m" with k = 1 (iid) or 2 (AR errors) and m = 1 (spillover
    /// break), 2 (private-effect break) or 3 (both).
    static DgpConfig from_label(const std::string& label, NetworkKind network, int n_units, int n_periods,
                                std::uint64_t seed);
};

struct SimulatedPanel {
    PanelData panel;
    Eigen::MatrixXd gamma_before;
    Eigen::MatrixXd gamma_after;
    Eigen::VectorXd delta_before;  ///< per unit
    Eigen::VectorXd delta_after;
    int breakpoint = 0;
    Eigen::MatrixXd errors;  ///< N x T outcome errors
};

SimulatedPanel gen_dgp(const DgpConfig& config);

/// 100 |b_est - b_true| / T.
double hausdorff_ratio(int b_est, int b_true, int n_periods);

struct NetworkMetrics {
    double prop_zero_to_zero = 0.0;  ///< NaN when the truth has no off-diagonal zeros
    double prop_nonzero_to_nonzero = 0.0;  ///< NaN when the truth has no off-diagonal nonzeros
    double rmse = 0.0;
    double mse = 0.0;
};

/// Off-diagonal support and error metrics of one estimated network against the truth.
NetworkMetrics network_metrics(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth);

/// Child seed of replication `rep`; independent of scheduling.
std::uint64_t replication_seed(std::uint64_t master, int rep);

struct ReplicationOptions {
    EstimationOptions estimation;  ///< `threads` is ignored inside replications
    std::optional<BreakVariant> estimation_variant;  ///< defaults to the DGP's break kind
    std::vector<BreakTypeSpec> selection_candidates;  ///< non-empty: record IC choice per rep
    ParameterCount count = ParameterCount::full_dimension;
    int threads = 1;
};

struct ReplicationRow {
    int rep = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string failure;
    int b_true = 0;
    int b_tilde = 0;
    double hd_ratio = 0.0;
    std::array<NetworkMetrics, 2> network{};  ///< before, after
    std::array<double, 2> delta{};
    std::array<double, 2> delta_true{};
    std::array<double, 2> delta_se{};
    std::array<bool, 2> covers{};
    std::string selected;
};

struct RegimeSummary {
    double prop_zero_to_zero = 0.0;
    double prop_nonzero_to_nonzero = 0.0;
    double rmse = 0.0;
    double mse = 0.0;
    double bias_delta = 0.0;
    double rmse_delta = 0.0;
    double coverage = 0.0;
};

struct ReplicationReport {
    DgpConfig config;
    int n_reps = 0;
    int completed = 0;
    int failed = 0;
    double hd_ratio = 0.0;
    double exact_break_rate = 0.0;
    std::array<RegimeSummary, 2> regimes{};
    std::map<std::string, double> ic_selection_freq;
    std::vector<ReplicationRow> rows;
};

ReplicationReport run_replications(const DgpConfig& config, int n_reps, const ReplicationOptions& options = {});

/// Aggregates already-computed rows; selection frequencies are reported for `candidates`.
ReplicationReport summarize_replications(const DgpConfig& config, std::vector<ReplicationRow> rows,
                                         std::span<const BreakTypeSpec> candidates = {});

void write_replications_csv(const ReplicationReport& report, const std::string& path);

}  // namespace spillbreak
