#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qsrnet/dissipativity.hpp"
#include "qsrnet/lmi.hpp"
#include "qsrnet/matrix.hpp"
#include "qsrnet/riccati.hpp"

namespace qsrnet {

/// One admissible interconnection pattern u = e + H y.
struct TopologyMode {
    int id = 0;
    Matrix H;  ///< total_nu x total_ny
};

enum class AgentKind { Dynamic, Static };

/// Network node: either a full-state-output system x' = Ax + Bu, y = x, or a
/// memoryless gain y = K u.
struct Agent {
    AgentKind kind = AgentKind::Dynamic;
    StateSpace ss;  ///< dynamic agents only
    Matrix K;       ///< static agents only

    int nx() const { return kind == AgentKind::Dynamic ? ss.A.rows : 0; }
    int ny() const { return kind == AgentKind::Dynamic ? ss.A.rows : K.rows; }
    int nu() const { return kind == AgentKind::Dynamic ? ss.B.cols : K.cols; }

    static Agent dynamic(StateSpace s);
    static Agent static_gain(Matrix k);
};

/// Agents in stacking order (their outputs and inputs are stacked in the
/// same order on both sides of every mode's H) plus the admissible modes.
struct NetworkSpec {
    std::vector<Agent> agents;
    std::vector<TopologyMode> modes;

    int total_ny() const;
    int total_nu() const;

    /// Shape consistency of agents and modes (throws InvalidArgument).
    void validate() const;
};

/// Supply-rate transform under the interconnection u = e + H y:
///   Qhat = Q + S H + H'S' + H'R H,  Shat = S + H'R,  Rhat = R,
/// where (Q, S, R) is the block-diagonal stack of the agent triples.
QsrTriple coupling_matrices(const Matrix& Q, const Matrix& S, const Matrix& R, const Matrix& H);
QsrTriple coupling_matrices(const QsrTriple& stacked, const Matrix& H);

/// Dissipativity data certified for one agent.
struct AgentCertificate {
    QsrTriple qsr;
    QuadStorage storage;  ///< empty P for static agents
};

/// Switching-independent L2 certificate for the closed network.
struct Certificate {
    std::vector<AgentCertificate> agents;
    std::vector<double> coupling_max_eig;  ///< per-mode lambda_max(Qhat), all < 0
    CommonSupply supply;                   ///< derived from the per-mode network triples
    std::vector<double> solve_margins;     ///< independently verified constraint margins
    double solve_seconds = 0.0;
    int iterations = 0;
    std::string diagnostics;
};

struct CertifyOptions {
    double margin_kyp = 1e-7;   ///< strictness of the per-agent dissipation conditions
    double margin_qhat = 1e-6;  ///< strictness of the per-mode coupling conditions
    double box_bound = 1e10;    ///< entry bound for all certificate variables
    double stage_margin = 0.1;  ///< contraction target of the warm-start Lyapunov stage
    double tol = 1e-9;
    int iter_cap = 4000;
    bool use_warm_start = true;  ///< attempt the compositional warm start
};

struct CertifyResult {
    FeasStatus status = FeasStatus::Undecided;
    Certificate certificate;  ///< meaningful only when status == Feasible
    std::string diagnostics;
};

/// Assemble the joint feasibility problem (per-dynamic-agent dissipation
/// conditions, per-static-agent gain conditions, per-mode coupling
/// conditions Qhat <= -margin I), solve it, independently re-verify every
/// mode's Qhat at the solution, and derive the mode-independent supply.
/// Solver Infeasible/Undecided verdicts pass through with diagnostics; a
/// post-solve verification failure raises NumericalFailure so an unverified
/// certificate is never emitted.
CertifyResult certify(const NetworkSpec& spec, const CertifyOptions& opts = {});

/// Stacked closed-loop realization of a network of plants followed by their
/// static output feedbacks: per mode i the loop closes as
///   x' = (A - B K Hc[i]) x + [B, -B K] e,   y = (x, K(e_c + Hc[i] x)),
/// where e = (e_p, e_c) are the exogenous agent inputs.
struct ClosedLoopFamily {
    int pairs = 0;           ///< number of plant/gain pairs
    Matrix A;                ///< block-diagonal plant dynamics
    Matrix B;
    Matrix K;                ///< block-diagonal gain stack
    std::vector<Matrix> Hc;  ///< per-mode plant output coupling
    std::vector<Matrix> Acl;
    std::vector<int> nx;     ///< per-plant state sizes
    std::vector<int> off;    ///< per-plant state offsets
};

/// Extract the closed-loop family, or nullopt when the spec lacks the paired
/// shape: the first half of the agents dynamic, the second half their static
/// gains with matching stacked dimensions, and every mode exactly of the
/// form [[0, -I],[Hc, 0]].
std::optional<ClosedLoopFamily> closed_loop_family(const NetworkSpec& spec);

/// Fixed four-mode topology of the nine-vehicle formation case study:
/// three groups of three vehicles, intra-group chain H, inter-group leader
/// link Htilde, plant-level couplings Hc[0..3], and the closed network maps
/// Hhat[i] = [[0, -I],[Hc[i], 0]] acting on stacked (plant, controller)
/// outputs.
struct UavTopology {
    Matrix H;                  ///< 36x36 intra-group pattern
    Matrix Htilde;             ///< 36x36 inter-group leader link
    std::vector<Matrix> Hc;    ///< four 108x108 plant couplings
    std::vector<Matrix> Hhat;  ///< four 144x144 network modes
};
UavTopology canonical_uav_modes();

/// Nine randomized quadrotors closed with their LQR full-state gains and
/// wired into the four canonical modes; plants first, then controllers.
NetworkSpec uav_network(uint64_t seed);

}  // namespace qsrnet
