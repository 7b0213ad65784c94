#pragma once

#include <cstdint>
#include <vector>

#include "qsrnet/matrix.hpp"
#include "qsrnet/trajectory.hpp"

namespace qsrnet {

/// Quadratic supply rate w(u, y) = y'Qy + y'Su + u'S'y + u'Ru.
struct QsrTriple {
    Matrix Q;  ///< l x l, symmetric
    Matrix S;  ///< l x m
    Matrix R;  ///< m x m, symmetric
};

/// Storage function V(x) = x'Px.
struct QuadStorage {
    Matrix P;

    double value(const std::vector<double>& x) const;

    /// Enforce the numerical-PSD invariant P >= -1e-9 I (throws InvalidArgument).
    void validate() const;
};

/// Mode-independent bounding supply -q||y||^2 + r||u||^2 with the L2 data
/// derived from it.
struct CommonSupply {
    double q = 0.0;
    double r = 0.0;
    std::vector<double> epsilons;
    double gamma = 0.0;
    double beta_coeff = 0.0;  ///< beta(x0) = sqrt(V(x0)) * beta_coeff
};

double supply_rate(const QsrTriple& qsr, const std::vector<double>& y,
                   const std::vector<double>& u);

struct DissipationReport {
    bool passed = false;
    double worst_violation = 0.0;  ///< max over pairs of V(t)-V(s)-integral(w)
    double tolerance = 0.0;
    double worst_s = 0.0;
    double worst_t = 0.0;
    uint64_t pairs_checked = 0;
};

/// Verify V(x(t)) - V(x(s)) <= integral_s^t w dt + tol for every sampled
/// pair s < t lying inside one mode's dwell interval (all pairs when the
/// record is unswitched).  Trapezoid quadrature on the uniform grid.
DissipationReport check_dissipation(const TrajectoryRecord& traj, const QuadStorage& storage,
                                    const QsrTriple& qsr, double tol);

/// Theorem-style common supply across modes:
///   q = -max_i lambda_max(Q_i + eps_i I),  r = max_i lambda_max((1/eps_i) S_i'S_i + R_i)
/// with eps_i defaulting to -lambda_max(Q_i)/2.  Requires every Q_i < 0
/// (NotApplicable otherwise); a supplied eps_i must satisfy eps_i > 0 and
/// Q_i + eps_i I < 0 (InvalidEpsilon otherwise).
CommonSupply derive_common_supply(const std::vector<QsrTriple>& modes,
                                  const std::vector<double>& epsilons = {});

struct L2BoundReport {
    bool passed = false;
    double worst_violation = 0.0;  ///< max over T of ||y_T|| - gamma ||u_T|| - beta
    double max_ratio = 0.0;        ///< max over T of ||y_T|| / (gamma ||u_T|| + beta)
    double tolerance = 0.0;
    double worst_time = 0.0;
};

/// Check the truncated L2 bound ||y_T|| <= gamma ||u_T|| + sqrt(V0/q) + tol
/// at every grid time T.
L2BoundReport l2_bound_check(const TrajectoryRecord& traj, const CommonSupply& cs, double V0,
                             double tol);

}  // namespace qsrnet
