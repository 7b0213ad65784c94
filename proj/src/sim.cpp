#include "qsrnet/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "qsrnet/errors.hpp"
#include "qsrnet/rng.hpp"

namespace qsrnet {

namespace {

/// out = A v on raw row-major data.
void mav(const Matrix& A, const double* v, double* out) {
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row(i);
        double acc = 0.0;
        for (int j = 0; j < A.cols; ++j) acc += ai[j] * v[j];
        out[i] = acc;
    }
}

/// out += A v.
void mav_acc(const Matrix& A, const double* v, double* out) {
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row(i);
        double acc = 0.0;
        for (int j = 0; j < A.cols; ++j) acc += ai[j] * v[j];
        out[i] += acc;
    }
}

struct RkTrace {
    Matrix X;           ///< n_valid x nx sampled states
    int n_valid = 0;
    bool diverged = false;
    double t_div = -1.0;
};

constexpr double kDivergenceNorm = 1e12;

/// Classic fixed-step RK4 over N samples; f(k, t, x, dx) evaluates the
/// derivative of the interval starting at sample k.  Stops early when the
/// state norm exceeds the divergence threshold or turns non-finite.
template <typename Deriv>
RkTrace rk4_drive(int N, double dt, int nx, std::vector<double> x, Deriv&& f) {
    RkTrace tr;
    tr.X = Matrix(N, nx);
    tr.n_valid = N;
    std::vector<double> k1(nx), k2(nx), k3(nx), k4(nx), xt(nx);
    for (int k = 0; k < N; ++k) {
        const double tk = k * dt;
        bool finite = true;
        double nrm2 = 0.0;
        for (double v : x) {
            if (!std::isfinite(v)) {
                finite = false;
                break;
            }
            nrm2 += v * v;
        }
        if (!finite) {
            tr.n_valid = k;
            tr.diverged = true;
            tr.t_div = tk;
            break;
        }
        for (int j = 0; j < nx; ++j) tr.X(k, j) = x[j];
        if (std::sqrt(nrm2) > kDivergenceNorm) {
            tr.n_valid = k + 1;
            tr.diverged = true;
            tr.t_div = tk;
            break;
        }
        if (k == N - 1) break;
        f(k, tk, x, k1);
        for (int j = 0; j < nx; ++j) xt[j] = x[j] + 0.5 * dt * k1[j];
        f(k, tk + 0.5 * dt, xt, k2);
        for (int j = 0; j < nx; ++j) xt[j] = x[j] + 0.5 * dt * k2[j];
        f(k, tk + 0.5 * dt, xt, k3);
        for (int j = 0; j < nx; ++j) xt[j] = x[j] + dt * k3[j];
        f(k, tk + dt, xt, k4);
        for (int j = 0; j < nx; ++j)
            x[j] += dt / 6.0 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]);
    }
    if (tr.n_valid < N) tr.X = get_block(tr.X, 0, 0, tr.n_valid, nx);
    return tr;
}

}  // namespace

int SwitchingSignal::mode_at(double t) const {
    if (events.empty()) throw InvalidArgument("SwitchingSignal::mode_at: no events");
    int mode = events.front().mode;
    for (const SwitchEvent& ev : events) {
        if (ev.t > t) break;
        mode = ev.mode;
    }
    return mode;
}

void SwitchingSignal::validate(double min_separation) const {
    if (events.empty()) throw InvalidArgument("SwitchingSignal: no events");
    if (events.front().t != 0.0)
        throw InvalidArgument("SwitchingSignal: first event must sit at t = 0");
    if (!(horizon > 0.0)) throw InvalidArgument("SwitchingSignal: horizon must be positive");
    for (size_t k = 0; k < events.size(); ++k) {
        if (events[k].mode < 0) throw InvalidArgument("SwitchingSignal: negative mode index");
        if (k == 0) continue;
        if (events[k].t >= horizon)
            throw InvalidArgument("SwitchingSignal: switch at or beyond the horizon");
        const double gap = events[k].t - events[k - 1].t;
        if (!(gap > 0.0) || gap < min_separation)
            throw InvalidArgument("SwitchingSignal: events out of order or closer than the minimum separation");
    }
}

SwitchingSignal gen_switching(uint64_t seed, double horizon, int n_switches, int n_modes,
                              double min_dwell) {
    if (!(horizon > 0.0)) throw InvalidArgument("gen_switching: horizon must be positive");
    if (n_switches < 0) throw InvalidArgument("gen_switching: negative switch count");
    if (n_modes < 1) throw InvalidArgument("gen_switching: need at least one mode");
    if (n_switches > 0 && n_modes < 2)
        throw InvalidArgument("gen_switching: switching requires at least two modes");
    if (!(min_dwell > 0.0)) throw InvalidArgument("gen_switching: min_dwell must be positive");
    if (!(n_switches * min_dwell < horizon))
        throw InvalidArgument("gen_switching: dwell packing does not fit the horizon");

    Rng rng(seed);
    const double slack = (horizon - n_switches * min_dwell) * (1.0 - 1e-12);
    std::vector<double> raw(n_switches);
    for (double& v : raw) v = rng.uniform(0.0, slack);
    std::sort(raw.begin(), raw.end());

    SwitchingSignal sig;
    sig.horizon = horizon;
    int mode = rng.uniform_int(n_modes);
    sig.events.push_back({0.0, mode});
    for (int k = 0; k < n_switches; ++k) {
        mode = (mode + 1 + rng.uniform_int(n_modes - 1)) % n_modes;
        sig.events.push_back({raw[k] + (k + 1) * min_dwell, mode});
    }
    return sig;
}

double l2_disturbance(DistKind kind, double t) {
    switch (kind) {
        case DistKind::Bump:
            return std::sqrt(4.0 / 3.0) * t * t * std::exp(-t);
        case DistKind::Sinc: {
            const double c = std::sqrt(2.0 / std::numbers::pi);
            return t == 0.0 ? c : c * std::sin(t) / t;
        }
        case DistKind::Decay:
            return 1.0 / (1.0 + t);
    }
    throw InvalidArgument("l2_disturbance: unknown kind");
}

double DisturbanceProfile::value(int channel, double t) const {
    if (channel < 0 || channel >= channels())
        throw InvalidArgument("DisturbanceProfile::value: channel out of range");
    return scale[channel] * l2_disturbance(kind[channel], t);
}

DisturbanceProfile random_disturbance(uint64_t seed, int channels) {
    if (channels < 0) throw InvalidArgument("random_disturbance: negative channel count");
    Rng rng(seed);
    DisturbanceProfile dist;
    dist.kind.resize(channels);
    dist.scale.assign(channels, 1.0);
    for (int c = 0; c < channels; ++c) {
        const int pick = rng.uniform_int(3);
        dist.kind[c] = pick == 0 ? DistKind::Bump : pick == 1 ? DistKind::Sinc : DistKind::Decay;
    }
    return dist;
}

SimResult simulate(const ClosedLoopFamily& fam, const SwitchingSignal& sig,
                   const DisturbanceProfile& dist, double dt, const std::vector<double>& x0) {
    const int nx = fam.A.rows;
    const int nep = fam.B.cols;
    const int nec = fam.K.cols;
    const int ne = nep + nec;
    const int nyc = fam.K.rows;
    const int n_modes = static_cast<int>(fam.Acl.size());
    if (!(dt > 0.0)) throw InvalidArgument("simulate: dt must be positive");
    if (n_modes == 0 || static_cast<int>(fam.Hc.size()) != n_modes)
        throw InvalidArgument("simulate: family without consistent modes");
    if (nyc != nep)
        throw InvalidArgument("simulate: gain outputs do not match plant inputs");
    if (static_cast<int>(x0.size()) != nx) throw InvalidArgument("simulate: x0 dimension mismatch");
    if (dist.scale.size() != dist.kind.size() || dist.channels() != ne)
        throw InvalidArgument("simulate: disturbance profile must cover every exogenous channel");
    sig.validate(dt * (1.0 - 1e-9));
    for (const SwitchEvent& ev : sig.events)
        if (ev.mode >= n_modes) throw InvalidArgument("simulate: mode index out of range");

    const int steps = static_cast<int>(std::llround(sig.horizon / dt));
    if (steps < 1) throw InvalidArgument("simulate: horizon shorter than one step");
    const int N = steps + 1;

    // Snap events to the grid, keeping them distinct and inside the record.
    std::vector<std::pair<int, int>> snaps;
    int prev = -1;
    for (const SwitchEvent& ev : sig.events) {
        int k = static_cast<int>(std::llround(ev.t / dt));
        if (k <= prev) k = prev + 1;
        if (k >= N) break;
        snaps.emplace_back(k, ev.mode);
        prev = k;
    }
    std::vector<int> mode_of(N);
    size_t j = 0;
    for (int k = 0; k < N; ++k) {
        while (j + 1 < snaps.size() && snaps[j + 1].first <= k) ++j;
        mode_of[k] = snaps[j].second;
    }

    Matrix Bhat(nx, ne);
    set_block(Bhat, 0, 0, fam.B);
    {
        const Matrix BK = fam.B * fam.K;
        for (int i = 0; i < nx; ++i)
            for (int c = 0; c < nec; ++c) Bhat(i, nep + c) = -BK(i, c);
    }

    std::vector<double> e(ne);
    auto fill_e = [&](double t) {
        for (int c = 0; c < ne; ++c) e[c] = dist.scale[c] * l2_disturbance(dist.kind[c], t);
    };
    auto deriv = [&](int k, double t, const std::vector<double>& xs, std::vector<double>& out) {
        fill_e(t);
        mav(fam.Acl[mode_of[k]], xs.data(), out.data());
        mav_acc(Bhat, e.data(), out.data());
    };
    RkTrace tr = rk4_drive(N, dt, nx, x0, deriv);

    SimResult sr;
    sr.diverged = tr.diverged;
    sr.divergence_time = tr.t_div;
    TrajectoryRecord& rec = sr.network;
    const int nv = tr.n_valid;
    rec.x = std::move(tr.X);
    rec.t.resize(nv);
    rec.mode.resize(nv);
    rec.u = Matrix(nv, ne);
    rec.y = Matrix(nv, nx + nyc);
    sr.agent_u = Matrix(nv, ne);
    std::vector<double> uc(nec), yc(nyc);
    for (int k = 0; k < nv; ++k) {
        const double tk = k * dt;
        rec.t[k] = tk;
        rec.mode[k] = mode_of[k];
        fill_e(tk);
        for (int c = 0; c < ne; ++c) rec.u(k, c) = e[c];
        const double* xr = rec.x.row(k);
        mav(fam.Hc[mode_of[k]], xr, uc.data());
        for (int c = 0; c < nec; ++c) uc[c] += e[nep + c];
        mav(fam.K, uc.data(), yc.data());
        for (int c = 0; c < nx; ++c) rec.y(k, c) = xr[c];
        for (int c = 0; c < nyc; ++c) rec.y(k, nx + c) = yc[c];
        for (int c = 0; c < nep; ++c) sr.agent_u(k, c) = e[c] - yc[c];
        for (int c = 0; c < nec; ++c) sr.agent_u(k, nep + c) = uc[c];
    }
    return sr;
}

TrajectoryRecord simulate(const StateSpace& ss, const DisturbanceProfile& dist, double dt,
                          double horizon, const std::vector<double>& x0) {
    const int nx = ss.A.rows;
    const int m = ss.B.cols;
    if (ss.A.cols != nx || ss.B.rows != nx)
        throw InvalidArgument("simulate: inconsistent state-space dimensions");
    if (!(dt > 0.0)) throw InvalidArgument("simulate: dt must be positive");
    if (static_cast<int>(x0.size()) != nx) throw InvalidArgument("simulate: x0 dimension mismatch");
    if (dist.scale.size() != dist.kind.size() || dist.channels() != m)
        throw InvalidArgument("simulate: disturbance profile must cover every input channel");
    const int steps = static_cast<int>(std::llround(horizon / dt));
    if (steps < 1) throw InvalidArgument("simulate: horizon shorter than one step");
    const int N = steps + 1;

    std::vector<double> e(m);
    auto deriv = [&](int, double t, const std::vector<double>& xs, std::vector<double>& out) {
        for (int c = 0; c < m; ++c) e[c] = dist.scale[c] * l2_disturbance(dist.kind[c], t);
        mav(ss.A, xs.data(), out.data());
        mav_acc(ss.B, e.data(), out.data());
    };
    RkTrace tr = rk4_drive(N, dt, nx, x0, deriv);

    TrajectoryRecord rec;
    const int nv = tr.n_valid;
    rec.t.resize(nv);
    rec.u = Matrix(nv, m);
    rec.x = std::move(tr.X);
    for (int k = 0; k < nv; ++k) {
        const double tk = k * dt;
        rec.t[k] = tk;
        for (int c = 0; c < m; ++c) rec.u(k, c) = dist.scale[c] * l2_disturbance(dist.kind[c], tk);
    }
    rec.y = rec.x;
    return rec;
}

std::vector<double> state_error(const TrajectoryRecord& traj, int col_begin, int col_end) {
    if (col_begin < 0 || col_end < col_begin || col_end > traj.x.cols)
        throw InvalidArgument("state_error: column range out of bounds");
    std::vector<double> err(traj.samples());
    for (int k = 0; k < traj.samples(); ++k) {
        const double* xr = traj.x.row(k);
        double acc = 0.0;
        for (int j = col_begin; j < col_end; ++j) acc += xr[j] * xr[j];
        err[k] = std::sqrt(acc);
    }
    return err;
}

std::vector<double> state_error(const TrajectoryRecord& traj) {
    return state_error(traj, 0, traj.x.cols);
}

GainReport empirical_gain(const TrajectoryRecord& traj, double gamma, double beta) {
    if (traj.samples() < 2) throw InvalidArgument("empirical_gain: need at least two samples");
    if (!(gamma >= 0.0) || !(beta >= 0.0))
        throw InvalidArgument("empirical_gain: bounds must be nonnegative");
    const double dt = grid_step(traj);
    const int N = traj.samples();
    auto row2 = [](const Matrix& M, int k) {
        const double* r = M.row(k);
        double s = 0.0;
        for (int j = 0; j < M.cols; ++j) s += r[j] * r[j];
        return s;
    };

    GainReport rep;
    rep.worst_violation = -beta;  // the T = t_0 truncation has ||y_T|| = 0
    rep.worst_time = traj.t.front();
    double best_gain = std::numeric_limits<double>::lowest();
    double y2 = 0.0, u2 = 0.0;
    double py = row2(traj.y, 0), pu = row2(traj.u, 0);
    for (int k = 1; k < N; ++k) {
        const double cy = row2(traj.y, k), cu = row2(traj.u, k);
        y2 += 0.5 * dt * (py + cy);
        u2 += 0.5 * dt * (pu + cu);
        py = cy;
        pu = cu;
        const double yT = std::sqrt(std::max(0.0, y2));
        const double uT = std::sqrt(std::max(0.0, u2));
        const double excess = yT - gamma * uT - beta;
        if (excess > rep.worst_violation) {
            rep.worst_violation = excess;
            rep.worst_time = traj.t[k];
        }
        if (uT > 0.0) best_gain = std::max(best_gain, (yT - beta) / uT);
    }
    rep.gain_estimate = best_gain == std::numeric_limits<double>::lowest() ? 0.0 : best_gain;
    rep.passed = rep.worst_violation <= 0.0;
    return rep;
}

TrajectoryRecord agent_view(const SimResult& sim, const NetworkSpec& spec, int agent) {
    const int n = static_cast<int>(spec.agents.size());
    if (agent < 0 || agent >= n) throw InvalidArgument("agent_view: agent index out of range");
    if (sim.network.y.cols != spec.total_ny() || sim.agent_u.cols != spec.total_nu())
        throw InvalidArgument("agent_view: record does not match the network spec");
    int oy = 0, ou = 0, ox = 0;
    for (int j = 0; j < agent; ++j) {
        oy += spec.agents[j].ny();
        ou += spec.agents[j].nu();
        if (spec.agents[j].kind == AgentKind::Dynamic) ox += spec.agents[j].nx();
    }
    const Agent& ag = spec.agents[agent];
    const int N = sim.network.samples();
    TrajectoryRecord out;
    out.t = sim.network.t;
    out.mode = sim.network.mode;
    out.u = get_block(sim.agent_u, 0, ou, N, ag.nu());
    out.y = get_block(sim.network.y, 0, oy, N, ag.ny());
    out.x = ag.kind == AgentKind::Dynamic ? get_block(sim.network.x, 0, ox, N, ag.nx())
                                          : Matrix(N, 0);
    return out;
}

}  // namespace qsrnet
