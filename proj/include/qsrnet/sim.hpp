#pragma once

#include <cstdint>
#include <vector>

#include "qsrnet/network.hpp"
#include "qsrnet/trajectory.hpp"

namespace qsrnet {

struct SwitchEvent {
    double t = 0.0;
    int mode = 0;  ///< index into the mode list
};

/// Piecewise-constant mode schedule: the active mode at time t is the one of
/// the last event at or before t.  The first event must sit at t = 0.
struct SwitchingSignal {
    std::vector<SwitchEvent> events;
    double horizon = 0.0;

    int mode_at(double t) const;
    /// Structural checks: first event at 0, strictly increasing times within
    /// the horizon, consecutive events at least min_separation apart.
    void validate(double min_separation) const;
};

/// Random schedule over [0, horizon]: n_switches switch times with every
/// dwell interval (including the first and last) at least min_dwell, each
/// event picking a uniformly random mode different from the previous one.
SwitchingSignal gen_switching(uint64_t seed, double horizon, int n_switches, int n_modes,
                              double min_dwell);

enum class DistKind { Bump, Sinc, Decay };

/// Unit-energy disturbance shapes on t >= 0: sqrt(4/3) t^2 e^-t,
/// sqrt(2/pi) sin(t)/t (continuously extended at t = 0), and 1/(1+t).
double l2_disturbance(DistKind kind, double t);

/// Per-channel disturbance: channel c produces scale[c] * shape kind[c].
struct DisturbanceProfile {
    std::vector<DistKind> kind;
    std::vector<double> scale;

    int channels() const { return static_cast<int>(kind.size()); }
    double value(int channel, double t) const;
};

/// Uniformly random shape per channel, all scales 1.
DisturbanceProfile random_disturbance(uint64_t seed, int channels);

struct SimResult {
    /// Sampled network record: x the stacked plant states, u the exogenous
    /// inputs e, y the stacked agent outputs (x, K(e_c + Hc x)), mode the
    /// active mode index per sample.
    TrajectoryRecord network;
    /// Realized agent inputs e + H_sigma y (row per sample): plant inputs
    /// e_p - y_c followed by gain inputs e_c + Hc x.
    Matrix agent_u;
    bool diverged = false;
    double divergence_time = -1.0;  ///< first sample time with ||x|| > 1e12
};

/// Fixed-step fourth-order integration of the switched closed loop under the
/// disturbance profile (one channel per exogenous input).  Switch times snap
/// to the sample grid, the mode is held constant within each step, and the
/// state carries continuously across switches.  Integration stops early --
/// with the record truncated and the divergence flagged -- as soon as the
/// state norm exceeds 1e12.
SimResult simulate(const ClosedLoopFamily& fam, const SwitchingSignal& sig,
                   const DisturbanceProfile& dist, double dt, const std::vector<double>& x0);

/// Unswitched convenience form for a single system x' = Ax + Be with y = x.
TrajectoryRecord simulate(const StateSpace& ss, const DisturbanceProfile& dist, double dt,
                          double horizon, const std::vector<double>& x0);

/// Pointwise Euclidean norm of the state columns [col_begin, col_end).
std::vector<double> state_error(const TrajectoryRecord& traj, int col_begin, int col_end);
std::vector<double> state_error(const TrajectoryRecord& traj);

struct GainReport {
    bool passed = false;
    double gain_estimate = 0.0;    ///< max over T of (||y_T|| - beta) / ||u_T||
    double worst_violation = 0.0;  ///< max over T of ||y_T|| - gamma ||u_T|| - beta
    double worst_time = 0.0;
};

/// Check the truncated L2 bound ||y_T|| <= gamma ||u_T|| + beta at every grid
/// time T (trapezoid norms); truncations with ||u_T|| = 0 are checked against
/// beta alone and excluded from the gain estimate.
GainReport empirical_gain(const TrajectoryRecord& traj, double gamma, double beta);

/// One agent's sampled record out of a closed-loop simulation: its state
/// block (empty for static agents), realized input, output, and the shared
/// mode schedule.
TrajectoryRecord agent_view(const SimResult& sim, const NetworkSpec& spec, int agent);

}  // namespace qsrnet
