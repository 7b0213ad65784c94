#include "qsrnet/dissipativity.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace qsrnet {

double grid_step(const TrajectoryRecord& traj) {
    const int n = traj.samples();
    if (n < 2) throw InvalidArgument("grid_step: need at least two samples");
    const double dt = traj.t[1] - traj.t[0];
    if (dt <= 0.0) throw InvalidArgument("grid_step: non-increasing time grid");
    for (int k = 1; k + 1 < n; ++k)
        if (std::fabs(traj.t[k + 1] - traj.t[k] - dt) > 1e-9 * (1.0 + std::fabs(dt)))
            throw InvalidArgument("grid_step: grid is not uniform");
    return dt;
}

double QuadStorage::value(const std::vector<double>& x) const {
    const int n = P.rows;
    if (static_cast<int>(x.size()) != n)
        throw InvalidArgument("QuadStorage::value: state dimension mismatch");
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* pi = P.row(i);
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += pi[j] * x[j];
        v += x[i] * acc;
    }
    return v;
}

void QuadStorage::validate() const {
    if (!is_symmetric(P, 1e-12))
        throw InvalidArgument("QuadStorage: P not symmetric");
    if (sym_eigvals_fast(P).front() < -1e-9)
        throw InvalidArgument("QuadStorage: P has an eigenvalue below -1e-9");
}

double supply_rate(const QsrTriple& qsr, const std::vector<double>& y,
                   const std::vector<double>& u) {
    const int l = qsr.Q.rows, m = qsr.R.rows;
    if (static_cast<int>(y.size()) != l || static_cast<int>(u.size()) != m ||
        qsr.S.rows != l || qsr.S.cols != m)
        throw InvalidArgument("supply_rate: dimension mismatch");
    double w = 0.0;
    for (int i = 0; i < l; ++i) {
        const double* qi = qsr.Q.row(i);
        const double* si = qsr.S.row(i);
        double qy = 0.0, su = 0.0;
        for (int j = 0; j < l; ++j) qy += qi[j] * y[j];
        for (int j = 0; j < m; ++j) su += si[j] * u[j];
        w += y[i] * (qy + 2.0 * su);
    }
    for (int i = 0; i < m; ++i) {
        const double* ri = qsr.R.row(i);
        double ru = 0.0;
        for (int j = 0; j < m; ++j) ru += ri[j] * u[j];
        w += u[i] * ru;
    }
    return w;
}

DissipationReport check_dissipation(const TrajectoryRecord& traj, const QuadStorage& storage,
                                    const QsrTriple& qsr, double tol) {
    const int n = traj.samples();
    const double dt = grid_step(traj);
    if (traj.x.rows != n || traj.u.rows != n || traj.y.rows != n)
        throw InvalidArgument("check_dissipation: sample count mismatch across fields");
    const bool switched = !traj.mode.empty();
    if (switched && static_cast<int>(traj.mode.size()) != n)
        throw InvalidArgument("check_dissipation: mode vector length mismatch");

    // g(k) = V(x_k) - W(k) with W the running trapezoid integral of the
    // supply.  The pairwise inequality V(t)-V(s) <= W(t)-W(s)+tol over a
    // dwell interval reduces to max_t [g(t) - min_{s<=t} g(s)] <= tol.
    std::vector<double> yk(traj.y.cols), uk(traj.u.cols), xk(traj.x.cols);
    auto fetch = [&](int k) {
        for (int j = 0; j < traj.y.cols; ++j) yk[j] = traj.y(k, j);
        for (int j = 0; j < traj.u.cols; ++j) uk[j] = traj.u(k, j);
        for (int j = 0; j < traj.x.cols; ++j) xk[j] = traj.x(k, j);
    };

    DissipationReport rep;
    rep.tolerance = tol;
    rep.worst_violation = -std::numeric_limits<double>::infinity();

    double W = 0.0, w_prev = 0.0;
    double g_min = 0.0, g_min_time = traj.t.empty() ? 0.0 : traj.t[0];
    uint64_t seg_len = 0;
    for (int k = 0; k < n; ++k) {
        fetch(k);
        const double w_now = supply_rate(qsr, yk, uk);
        const bool new_segment = (k == 0) || (switched && traj.mode[k] != traj.mode[k - 1]);
        if (k > 0) W += 0.5 * dt * (w_prev + w_now);
        w_prev = w_now;

        const double g = storage.value(xk) - W;
        if (new_segment) {
            g_min = g;
            g_min_time = traj.t[k];
            seg_len = 1;
        } else {
            ++seg_len;
            rep.pairs_checked += seg_len - 1;
        }
        const double viol = g - g_min;
        if (viol > rep.worst_violation) {
            rep.worst_violation = viol;
            rep.worst_s = g_min_time;
            rep.worst_t = traj.t[k];
        }
        if (g < g_min) {
            g_min = g;
            g_min_time = traj.t[k];
        }
    }
    if (!std::isfinite(rep.worst_violation)) rep.worst_violation = 0.0;
    rep.passed = rep.worst_violation <= tol;
    return rep;
}

CommonSupply derive_common_supply(const std::vector<QsrTriple>& modes,
                                  const std::vector<double>& epsilons) {
    if (modes.empty()) throw InvalidArgument("derive_common_supply: no modes");
    if (!epsilons.empty() && epsilons.size() != modes.size())
        throw InvalidArgument("derive_common_supply: epsilon count mismatch");

    CommonSupply cs;
    cs.epsilons.reserve(modes.size());
    double worst_shifted = -std::numeric_limits<double>::infinity();
    double worst_r = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < modes.size(); ++i) {
        const QsrTriple& m = modes[i];
        if (!is_negdef(m.Q, 0.0))
            throw NotApplicable("derive_common_supply: mode " + std::to_string(i) +
                                " has Q not negative definite");
        const double lam_max = sym_eig(m.Q).w.back();
        double eps;
        if (epsilons.empty()) {
            eps = -lam_max / 2.0;
            if (!(eps > 0.0))
                throw InvalidEpsilon("derive_common_supply: default epsilon degenerate for mode " +
                                     std::to_string(i));
        } else {
            eps = epsilons[i];
            if (!(eps > 0.0))
                throw InvalidEpsilon("derive_common_supply: epsilon must be positive (mode " +
                                     std::to_string(i) + ")");
            Matrix shifted = m.Q;
            for (int d = 0; d < shifted.rows; ++d) shifted(d, d) += eps;
            if (!is_negdef(shifted, 0.0) || lam_max + eps >= 0.0)
                throw InvalidEpsilon("derive_common_supply: epsilon too large for mode " +
                                     std::to_string(i));
        }
        cs.epsilons.push_back(eps);
        worst_shifted = std::max(worst_shifted, lam_max + eps);

        Matrix bound = transpose(m.S) * m.S;
        bound = (1.0 / eps) * bound + m.R;
        worst_r = std::max(worst_r, sym_eig(symmetrize(bound)).w.back());
    }
    cs.q = -worst_shifted;
    if (!(cs.q > 0.0))
        throw InvalidEpsilon("derive_common_supply: derived q is not positive");
    cs.r = std::max(0.0, worst_r);
    cs.gamma = std::sqrt(cs.r / cs.q);
    cs.beta_coeff = 1.0 / std::sqrt(cs.q);
    return cs;
}

L2BoundReport l2_bound_check(const TrajectoryRecord& traj, const CommonSupply& cs, double V0,
                             double tol) {
    const int n = traj.samples();
    const double dt = grid_step(traj);
    if (V0 < 0.0) throw InvalidArgument("l2_bound_check: negative initial storage");

    const double beta = std::sqrt(std::max(0.0, V0)) * cs.beta_coeff;
    L2BoundReport rep;
    rep.tolerance = tol;
    rep.worst_violation = -std::numeric_limits<double>::infinity();

    double Y = 0.0, U = 0.0, y_prev = 0.0, u_prev = 0.0;
    for (int k = 0; k < n; ++k) {
        double y2 = 0.0, u2 = 0.0;
        for (int j = 0; j < traj.y.cols; ++j) y2 += traj.y(k, j) * traj.y(k, j);
        for (int j = 0; j < traj.u.cols; ++j) u2 += traj.u(k, j) * traj.u(k, j);
        if (k > 0) {
            Y += 0.5 * dt * (y_prev + y2);
            U += 0.5 * dt * (u_prev + u2);
        }
        y_prev = y2;
        u_prev = u2;

        const double lhs = std::sqrt(Y);
        const double rhs = cs.gamma * std::sqrt(U) + beta;
        const double viol = lhs - rhs;
        if (viol > rep.worst_violation) {
            rep.worst_violation = viol;
            rep.worst_time = traj.t[k];
        }
        rep.max_ratio = std::max(rep.max_ratio, lhs / (rhs + 1e-300));
    }
    if (!std::isfinite(rep.worst_violation)) rep.worst_violation = 0.0;
    rep.passed = rep.worst_violation <= tol;
    return rep;
}

}  // namespace qsrnet
