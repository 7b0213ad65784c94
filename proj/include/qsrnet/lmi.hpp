#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsrnet/matrix.hpp"
#include "qsrnet/riccati.hpp"

namespace qsrnet {

enum class VarKind { Symmetric, Rectangular };

/// Decision variable of an LMI feasibility problem.  Every entry is box
/// bounded: |X_ij| <= box_bound.
struct LmiVariable {
    int id = 0;
    VarKind kind = VarKind::Symmetric;
    int rows = 0;
    int cols = 0;
    double box_bound = 1e3;
};

/// One affine contribution L * X * R; when `sym` is set the transpose
/// R' X' L' is added as well.  For 1x1 variables the inner dimensions of L
/// and R may exceed 1: the term then reads x * (L * R) (scalar broadcast),
/// which keeps identity-scaled blocks as single terms.
struct LmiTerm {
    int var = 0;
    Matrix L;
    Matrix R;
    bool sym = false;
};

/// constant + sum of terms; must evaluate symmetric (1e-12 relative to the
/// largest summand).
struct AffineMatrixExpr {
    int dim = 0;
    Matrix constant;  ///< dim x dim symmetric (empty means zero)
    std::vector<LmiTerm> terms;
};

/// F(x) <= -margin * I.
struct LmiConstraint {
    AffineMatrixExpr expr;
    double margin = 0.0;
};

struct LmiProblem {
    std::vector<LmiVariable> vars;
    std::vector<LmiConstraint> cons;

    int add_symmetric(int n, double box_bound = 1e3);
    int add_rectangular(int r, int c, double box_bound = 1e3);
    int add_scalar(double box_bound = 1e3) { return add_symmetric(1, box_bound); }

    /// Append F(x) <= -margin I after shape validation.
    void add_constraint(AffineMatrixExpr expr, double margin = 0.0);

    /// Positive semidefiniteness of a symmetric variable: -X <= -margin I.
    void add_psd(int var_id, double margin = 0.0);
};

/// Values for every variable, indexed by id.
using Assignment = std::vector<Matrix>;

/// Evaluate an expression; raises InvalidArgument when the result is not
/// symmetric to 1e-12 relative (malformed problem).
Matrix eval_expr(const AffineMatrixExpr& expr, const Assignment& x);

/// Per-constraint margins lambda_max(F_j(x)) + eps_j via the Jacobi
/// eigensolver; the trust anchor for every Feasible verdict.
std::vector<double> verify_assignment(const LmiProblem& prob, const Assignment& x);

enum class FeasStatus { Feasible, Infeasible, Undecided };

struct FeasibilityResult {
    FeasStatus status = FeasStatus::Undecided;
    Assignment assignment;
    double t_star = 0.0;           ///< max_j lambda_max(F_j) + eps_j at the assignment
    std::vector<double> margins;   ///< per-constraint, from verify_assignment
    int iterations = 0;
    std::string diagnostics;
};

struct SolveOptions {
    double tol = 1e-9;
    int iter_cap = 4000;
    uint64_t seed = 0;
    Assignment warm_start;      ///< optional; empty = built-in start
    int smoothing_budget = 120; ///< iterations for the annealed spectral phase
    double mu0 = 1.0;           ///< initial barrier weight
    double mu_mult = 30.0;      ///< barrier weight growth per stage
    double mu_max = 1e12;
    double newton_tol = 1e-7;   ///< stage exit on squared Newton decrement
    int newton_inner_cap = 40;  ///< damped steps per barrier stage
    int polish_sweeps = 25;     ///< alternating-projection fallback budget
    bool verbose = false;
};

/// Decide feasibility of { F_j(x) <= -eps_j I, |entries| <= box } by a
/// staged search: (1) annealed log-sum-exp spectral descent, (2) damped
/// Newton on a log-det barrier with increasing objective weight, (3) an
/// alternating-projections polish, (4) a homogeneous ray rescale.  Feasible
/// is only ever returned after verify_assignment confirms the margins;
/// Infeasible requires a stalled, converged relaxation (best-effort
/// certificate in diagnostics, not a mathematical proof); anything else is
/// Undecided.
FeasibilityResult solve_feasibility(const LmiProblem& prob, const SolveOptions& opts = {});
FeasibilityResult solve_feasibility(const LmiProblem& prob, double tol, int iter_cap);

/// Append the (n+m)-dim state-space dissipativity condition
///   [[A'P + PA - Q, PB - S], [*, -R]] <= -margin I
/// plus P >= 0, for the full-state-output system (A, B).
void assemble_agent_kyp(LmiProblem& prob, const StateSpace& ss, int p_id, int q_id, int s_id,
                        int r_id, double margin = 0.0);

/// Append the static-gain condition for the map y = K x:
///   -(K'Q~K + K'S~ + S~'K + R~) <= -margin I.
void assemble_static_gain(LmiProblem& prob, const Matrix& K, int qt_id, int st_id, int rt_id,
                          double margin = 0.0);

namespace detail {

/// Slot layout: all variables flattened (symmetric: upper triangle row-wise;
/// rectangular: row-major), then one trailing slot for the relaxation level t.
int slot_count(const LmiProblem& prob);
std::vector<double> pack(const LmiProblem& prob, const Assignment& x, double t);
Assignment unpack(const LmiProblem& prob, const std::vector<double>& z);

/// Log-det barrier (constraints shifted by their margins, box walls
/// included); +infinity outside the domain.  White-box hooks for tests.
double barrier_value(const LmiProblem& prob, const std::vector<double>& z);
void barrier_grad_hess(const LmiProblem& prob, const std::vector<double>& z,
                       std::vector<double>& grad, Matrix& hess);

}  // namespace detail

}  // namespace qsrnet
