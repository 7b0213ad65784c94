#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsrnet/network.hpp"
#include "qsrnet/riccati.hpp"
#include "qsrnet/sim.hpp"

namespace qsrnet {

/// Vehicle fleet: `count` copies of `nominal` with mass and arm length each
/// scaled by an independent uniform draw from [spread_lo, spread_hi].
struct FleetConfig {
    int count = 9;
    uint64_t seed = 7;
    QuadrotorParams nominal;
    double spread_lo = 2.0 / 3.0;
    double spread_hi = 4.0 / 3.0;
};

/// Diagonal LQR weights for the 12-state, 4-input vehicle model.
struct LqrConfig {
    std::vector<double> q_diag = {100, 100, 100, 100, 100, 100, 10, 10, 10, 10, 10, 10};
    std::vector<double> r_diag = {1, 1, 1, 1};
};

/// Either a named builtin mode family or explicit interconnection matrices
/// (mode ids assigned 1..n in listing order).
struct TopologyConfig {
    std::string builtin = "uav-formation-4modes";
    std::vector<Matrix> modes;
};

struct SimulateConfig {
    double dt = 1.0 / 24.0;
    double horizon = 180.0;
    int n_switches = 15;
    double min_dwell = 1.0;
    uint64_t switch_seed = 21;
    uint64_t disturbance_seed = 22;
    double rotor_scale = 1000.0;     ///< extra scale on the plant-input channels
    std::vector<double> x0;          ///< empty means the origin
};

struct BenchConfig {
    int repetitions = 3;
};

/// Full run settings.  `agents`, when nonempty, replaces the generated fleet
/// with an explicit agent list (for non-vehicle networks).
struct RunConfig {
    FleetConfig fleet;
    LqrConfig lqr;
    std::vector<Agent> agents;
    TopologyConfig topology;
    CertifyOptions certify;
    SimulateConfig simulate;
    BenchConfig bench;
};

/// Parse a strict JSON run configuration: unknown keys, type mismatches, and
/// out-of-range values raise ConfigError with an `origin:line` locator.
RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig load_run_config(const std::string& path);

/// Instantiate the configured network (generated fleet + LQR gains, or the
/// explicit agent list) wired into the configured mode family.
NetworkSpec build_network(const RunConfig& cfg);

/// Lossless JSON round trip for certificates (numbers keep their exact
/// binary values through save/load).
std::string certificate_to_json(const Certificate& cert);
Certificate certificate_from_json(const std::string& text, const std::string& origin);
void save_certificate(const std::string& path, const Certificate& cert);
Certificate load_certificate(const std::string& path);

/// Independent re-verification of a certificate against a network: the
/// per-agent dissipation constraints are rebuilt and re-checked at the
/// certified values, and every mode's coupling matrix is recomputed.
struct RecheckReport {
    std::vector<double> agent_margins;     ///< lambda_max + margin per rebuilt constraint
    std::vector<double> coupling_max_eig;  ///< recomputed per-mode lambda_max(Qhat)
    bool passed = false;
};
RecheckReport recheck_certificate(const NetworkSpec& spec, const Certificate& cert,
                                  double margin_kyp = 1e-7);

/// Two-column CSV `t,<name>` (UTF-8, LF).
void write_series_csv(const std::string& path, const std::string& name,
                      const std::vector<double>& t, const std::vector<double>& v);

/// Extended record: header `t,x0..,u0..`, one row per sample.
void write_trajectory_csv(const std::string& path, const TrajectoryRecord& rec);

/// Switch schedule as `t,mode` rows.
void write_events_csv(const std::string& path, const SwitchingSignal& sig);

/// Parse a CSV written by the helpers above; validates the expected header
/// and rectangular shape, returning one column vector per header field.
std::vector<std::vector<double>> read_csv(const std::string& path, const std::string& header);

}  // namespace qsrnet
