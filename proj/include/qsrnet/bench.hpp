#pragma once

#include <string>
#include <vector>

#include "qsrnet/dissipativity.hpp"
#include "qsrnet/lmi.hpp"
#include "qsrnet/network.hpp"

namespace qsrnet {

/// Per-mode closed-loop realizations (A_cl,i, [B, -BK]) of a paired family,
/// the input shape shared by the monolithic baselines.
std::vector<StateSpace> closed_loop_modes(const ClosedLoopFamily& fam);

enum class StorageShape { Full, BlockDiag };

/// Joint switched-dissipativity baseline: one storage P (full symmetric or
/// block-diagonal) and one supply w = -q ||y||^2 + r ||u||^2 common to all
/// modes, imposed through the per-mode state-space dissipation condition
///   [[A'P + PA + q I, PB], [B'P, -r I]] <= -eps I
/// with P >= 1e-3 I and floors q >= 1e-4, r >= 1e-6, solved cold.
struct MonolithicResult {
    FeasStatus status = FeasStatus::Undecided;
    double seconds = 0.0;
    int iterations = 0;
    int dofs = 0;                  ///< decision-variable count
    QuadStorage storage;           ///< assembled storage (meaningful when Feasible)
    double q_common = 0.0;
    double r_common = 0.0;
    std::vector<double> margins;   ///< verified constraint margins
    std::string diagnostics;
};

/// `blocks` gives the storage block sizes for BlockDiag (must sum to the
/// state dimension) and is ignored for Full.
MonolithicResult monolithic_certify(const std::vector<StateSpace>& modes, StorageShape shape,
                                    const std::vector<int>& blocks = {});

/// Inertia of one mode's supply-rate matrix W = [[Q, S],[S', R]].
struct ModeInertia {
    int n_neg = 0;
    int n_zero = 0;
    int n_pos = 0;
    std::vector<double> eigs;  ///< ascending spectrum of W
};

/// Eigen-analysis step of the scattering-based comparison: per-mode
/// eigendecomposition and inertia of the supply-rate matrices.  The cost of
/// producing the triples themselves (parameter identification) is the
/// caller's to measure; this records only the eigen step.
struct ScatteringReport {
    std::vector<ModeInertia> modes;
    double eigen_seconds = 0.0;
};

ScatteringReport scattering_eig_analysis(const std::vector<QsrTriple>& modes);

struct BenchRecord {
    std::string method;
    double time_s = 0.0;    ///< median wall time over the repetitions
    std::string verdict;    ///< feasible | infeasible | undecided | ok | skipped
    int dofs = 0;
};

/// Timing table over five methods in fixed row order: compositional,
/// monolithic-block, monolithic-full, scattering-eigen,
/// scattering-identify.  `consistent` drops to false when the compositional
/// method certifies but a monolithic baseline fails to -- the compositional
/// solution induces a monolithic one, so disagreement indicates a solver
/// bug, not a property of the instance.
struct BenchTable {
    std::vector<BenchRecord> rows;
    bool consistent = true;
    std::string notes;

    std::string csv() const;  ///< "method,time_s,verdict" rows
};

/// Run every method `repetitions` times on the paired-network instance and
/// report median times.  Throws InvalidArgument when the spec lacks the
/// closed-loop paired structure or repetitions < 1.
BenchTable bench_table(const NetworkSpec& spec, int repetitions);

}  // namespace qsrnet
