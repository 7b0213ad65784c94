#include "qsrnet/network.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>

#include "qsrnet/errors.hpp"

namespace qsrnet {

namespace {

Matrix selector(int len, int offset, int total) {
    Matrix U(len, total);
    for (int i = 0; i < len; ++i) U(i, offset + i) = 1.0;
    return U;
}

/// Largest singular value via the symmetric eigenproblem of M'M.
double spectral_norm(const Matrix& M) {
    if (M.rows == 0 || M.cols == 0) return 0.0;
    return std::sqrt(std::max(0.0, sym_eig_max(symmetrize(transpose(M) * M))));
}

/// Joint-problem variable ids of one agent (p unused for static agents).
struct AgentVars {
    int p = -1;
    int q = -1;
    int s = -1;
    int r = -1;
};

/// Find P_j > 0 with Acl_i' P + P Acl_i <= -margin I across all modes,
/// P = diag(P_1..P_m); warm-started from the per-plant closed-loop
/// Lyapunov solutions (the diagonal blocks of any mode's Acl).
std::optional<std::vector<Matrix>> stage_lyapunov(const ClosedLoopFamily& ps, double margin,
                                                  double tol, int iter_cap) {
    constexpr double kStageBox = 1e3;
    constexpr double kStageFloor = 1e-3;
    const int nxP = ps.A.rows;

    LmiProblem prob;
    std::vector<int> pid;
    for (int j = 0; j < ps.pairs; ++j) pid.push_back(prob.add_symmetric(ps.nx[j], kStageBox));
    for (const Matrix& Acl : ps.Acl) {
        AffineMatrixExpr e;
        e.dim = nxP;
        for (int j = 0; j < ps.pairs; ++j) {
            Matrix U = selector(ps.nx[j], ps.off[j], nxP);
            e.terms.push_back({pid[j], transpose(Acl) * transpose(U), std::move(U), true});
        }
        prob.add_constraint(std::move(e), margin);
    }
    for (int j = 0; j < ps.pairs; ++j) prob.add_psd(pid[j], kStageFloor);

    SolveOptions so;
    so.tol = tol;
    so.iter_cap = iter_cap;
    so.warm_start.assign(prob.vars.size(), Matrix());
    for (int j = 0; j < ps.pairs; ++j) {
        Matrix blk = get_block(ps.Acl[0], ps.off[j], ps.off[j], ps.nx[j], ps.nx[j]);
        Matrix P0;
        try {
            P0 = symmetrize(lyap_sign(blk, Matrix::identity(ps.nx[j])));
        } catch (const std::runtime_error&) {
            P0 = Matrix::identity(ps.nx[j]);
        }
        so.warm_start[pid[j]] = std::move(P0);
    }

    FeasibilityResult res = solve_feasibility(prob, so);
    if (res.status != FeasStatus::Feasible) return std::nullopt;
    std::vector<Matrix> P;
    for (int j = 0; j < ps.pairs; ++j) P.push_back(symmetrize(res.assignment[pid[j]]));
    return P;
}

/// Exact dissipativity lift from the common Lyapunov certificate.  With
/// budget a = 0.8 alpha, the plant triples (A'P + PA + mu I, PB, rho I) and
/// gain triples (-(rho+delta) I, delta K, (rho-delta) K'K + nu I) make every
/// agent condition an identity and push every mode's coupling matrix below
/// -(alpha - a) I; a uniform rescale then centers the entries in the box.
Assignment build_lift(size_t nvars, const std::vector<AgentVars>& av, const NetworkSpec& spec,
                      const ClosedLoopFamily& ps, const std::vector<Matrix>& P, double box_bound,
                      std::string& note) {
    Matrix Pd = block_diag(P);
    double alpha = std::numeric_limits<double>::infinity();
    for (const Matrix& Acl : ps.Acl) {
        const double lam = sym_eig_max(symmetrize(transpose(Acl) * Pd + Pd * Acl));
        alpha = std::min(alpha, -lam);
    }
    if (!(alpha > 0.0)) return {};

    const double a = 0.8 * alpha;
    double kh = 0.0, hn = 0.0;
    for (const Matrix& Hc : ps.Hc) {
        kh = std::max(kh, spectral_norm(ps.K * Hc));
        hn = std::max(hn, spectral_norm(Hc));
    }
    const double pb = spectral_norm(Pd * ps.B);
    const double mu = a / 6.0;
    const double delta = pb > 0.0 ? 6.0 * pb * pb / a : 1.0;
    const double rho = kh > 0.0 ? (a / 2.0) / (kh * kh) : 1.0;
    const double nu = hn > 0.0 ? (a / 6.0) / (hn * hn) : 1.0;

    Assignment x(nvars);
    for (int j = 0; j < ps.pairs; ++j) {
        const Agent& plant = spec.agents[j];
        const Agent& gain = spec.agents[ps.pairs + j];
        const Matrix& A = plant.ss.A;
        const Matrix& B = plant.ss.B;
        x[av[j].p] = P[j];
        x[av[j].q] = symmetrize(transpose(A) * P[j] + P[j] * A) + mu * Matrix::identity(plant.nx());
        x[av[j].s] = P[j] * B;
        x[av[j].r] = rho * Matrix::identity(plant.nu());
        const Matrix& K = gain.K;
        x[av[ps.pairs + j].q] = -(rho + delta) * Matrix::identity(gain.ny());
        x[av[ps.pairs + j].s] = delta * K;
        x[av[ps.pairs + j].r] =
            symmetrize((rho - delta) * (transpose(K) * K)) + nu * Matrix::identity(gain.nu());
    }

    double peak = 0.0;
    for (const Matrix& M : x)
        if (M.rows > 0) peak = std::max(peak, max_abs(M));
    const double scale = peak > 0.0 ? box_bound / (10.0 * peak) : 1.0;
    for (Matrix& M : x)
        if (M.rows > 0) M = scale * M;

    std::ostringstream os;
    os << "compositional warm start: alpha=" << alpha << ", scale=" << scale << "; ";
    note += os.str();
    return x;
}

}  // namespace

Agent Agent::dynamic(StateSpace s) {
    Agent a;
    a.kind = AgentKind::Dynamic;
    a.ss = std::move(s);
    return a;
}

Agent Agent::static_gain(Matrix k) {
    Agent a;
    a.kind = AgentKind::Static;
    a.K = std::move(k);
    return a;
}

int NetworkSpec::total_ny() const {
    int n = 0;
    for (const Agent& a : agents) n += a.ny();
    return n;
}

int NetworkSpec::total_nu() const {
    int n = 0;
    for (const Agent& a : agents) n += a.nu();
    return n;
}

void NetworkSpec::validate() const {
    if (agents.empty()) throw InvalidArgument("NetworkSpec: agent list is empty");
    for (size_t i = 0; i < agents.size(); ++i) {
        const Agent& a = agents[i];
        const std::string tag = "NetworkSpec: agent " + std::to_string(i);
        if (a.kind == AgentKind::Dynamic) {
            if (a.ss.A.rows <= 0 || a.ss.A.rows != a.ss.A.cols)
                throw InvalidArgument(tag + " has a non-square dynamics matrix");
            if (a.ss.B.rows != a.ss.A.rows || a.ss.B.cols <= 0)
                throw InvalidArgument(tag + " has an input matrix inconsistent with its state");
        } else {
            if (a.K.rows <= 0 || a.K.cols <= 0) throw InvalidArgument(tag + " has an empty gain");
        }
    }
    if (modes.empty()) throw InvalidArgument("NetworkSpec: no topology modes");
    const int ny = total_ny();
    const int nu = total_nu();
    for (const TopologyMode& m : modes) {
        if (m.H.rows != nu || m.H.cols != ny)
            throw InvalidArgument("NetworkSpec: mode " + std::to_string(m.id) + " has a " +
                                  std::to_string(m.H.rows) + "x" + std::to_string(m.H.cols) +
                                  " coupling map, expected " + std::to_string(nu) + "x" +
                                  std::to_string(ny));
    }
}

QsrTriple coupling_matrices(const Matrix& Q, const Matrix& S, const Matrix& R, const Matrix& H) {
    const int l = Q.rows;
    const int m = R.rows;
    if (Q.cols != l || R.cols != m || S.rows != l || S.cols != m)
        throw InvalidArgument("coupling_matrices: inconsistent Q/S/R shapes");
    if (!is_symmetric(Q) || !is_symmetric(R))
        throw InvalidArgument("coupling_matrices: Q and R must be symmetric");
    if (H.rows != m || H.cols != l)
        throw InvalidArgument("coupling_matrices: H must be " + std::to_string(m) + "x" +
                              std::to_string(l));
    Matrix SH = S * H;
    QsrTriple out;
    out.Q = symmetrize(Q + SH + transpose(SH) + transpose(H) * (R * H));
    out.S = S + transpose(H) * R;
    out.R = R;
    return out;
}

std::optional<ClosedLoopFamily> closed_loop_family(const NetworkSpec& spec) {
    const int n = static_cast<int>(spec.agents.size());
    if (n < 2 || n % 2 != 0) return std::nullopt;
    const int m = n / 2;
    for (int j = 0; j < m; ++j)
        if (spec.agents[j].kind != AgentKind::Dynamic) return std::nullopt;
    for (int j = m; j < n; ++j)
        if (spec.agents[j].kind != AgentKind::Static) return std::nullopt;

    int nyP = 0, nuP = 0, nyC = 0, nuC = 0;
    for (int j = 0; j < m; ++j) {
        nyP += spec.agents[j].ny();
        nuP += spec.agents[j].nu();
    }
    for (int j = m; j < n; ++j) {
        nyC += spec.agents[j].ny();
        nuC += spec.agents[j].nu();
    }
    if (nyC != nuP || nuC != nyP) return std::nullopt;

    ClosedLoopFamily fam;
    fam.pairs = m;
    std::vector<Matrix> as, bs, ks;
    int off = 0;
    for (int j = 0; j < m; ++j) {
        as.push_back(spec.agents[j].ss.A);
        bs.push_back(spec.agents[j].ss.B);
        fam.nx.push_back(spec.agents[j].nx());
        fam.off.push_back(off);
        off += spec.agents[j].nx();
    }
    for (int j = m; j < n; ++j) ks.push_back(spec.agents[j].K);
    fam.A = block_diag(as);
    fam.B = block_diag(bs);
    fam.K = block_diag(ks);

    for (const TopologyMode& mode : spec.modes) {
        const Matrix& H = mode.H;
        for (int i = 0; i < nuP; ++i) {
            for (int j = 0; j < nyP; ++j)
                if (H(i, j) != 0.0) return std::nullopt;
            for (int j = 0; j < nyC; ++j)
                if (H(i, nyP + j) != (i == j ? -1.0 : 0.0)) return std::nullopt;
        }
        for (int i = 0; i < nuC; ++i)
            for (int j = 0; j < nyC; ++j)
                if (H(nuP + i, nyP + j) != 0.0) return std::nullopt;
        Matrix Hc = get_block(H, nuP, 0, nuC, nyP);
        Matrix Acl = fam.A - fam.B * (fam.K * Hc);
        fam.Hc.push_back(std::move(Hc));
        fam.Acl.push_back(std::move(Acl));
    }
    return fam;
}

QsrTriple coupling_matrices(const QsrTriple& stacked, const Matrix& H) {
    return coupling_matrices(stacked.Q, stacked.S, stacked.R, H);
}

CertifyResult certify(const NetworkSpec& spec, const CertifyOptions& opts) {
    spec.validate();
    const auto t0 = std::chrono::steady_clock::now();

    LmiProblem prob;
    std::vector<AgentVars> av(spec.agents.size());
    for (size_t i = 0; i < spec.agents.size(); ++i) {
        const Agent& a = spec.agents[i];
        if (a.kind == AgentKind::Dynamic) {
            av[i].p = prob.add_symmetric(a.nx(), opts.box_bound);
            av[i].q = prob.add_symmetric(a.ny(), opts.box_bound);
            av[i].s = prob.add_rectangular(a.ny(), a.nu(), opts.box_bound);
            av[i].r = prob.add_symmetric(a.nu(), opts.box_bound);
            assemble_agent_kyp(prob, a.ss, av[i].p, av[i].q, av[i].s, av[i].r, opts.margin_kyp);
        } else {
            av[i].q = prob.add_symmetric(a.ny(), opts.box_bound);
            av[i].s = prob.add_rectangular(a.ny(), a.nu(), opts.box_bound);
            av[i].r = prob.add_symmetric(a.nu(), opts.box_bound);
            assemble_static_gain(prob, a.K, av[i].q, av[i].s, av[i].r, opts.margin_kyp);
        }
    }

    const int NY = spec.total_ny();
    std::vector<int> oy(spec.agents.size(), 0), ou(spec.agents.size(), 0);
    for (size_t i = 1; i < spec.agents.size(); ++i) {
        oy[i] = oy[i - 1] + spec.agents[i - 1].ny();
        ou[i] = ou[i - 1] + spec.agents[i - 1].nu();
    }
    for (const TopologyMode& mode : spec.modes) {
        AffineMatrixExpr e;
        e.dim = NY;
        for (size_t i = 0; i < spec.agents.size(); ++i) {
            const int ny = spec.agents[i].ny();
            const int nu = spec.agents[i].nu();
            Matrix Uy = selector(ny, oy[i], NY);
            Matrix Hrows = get_block(mode.H, ou[i], 0, nu, NY);
            e.terms.push_back({av[i].q, transpose(Uy), std::move(Uy), false});
            if (max_abs(Hrows) > 0.0) {
                e.terms.push_back({av[i].s, transpose(selector(ny, oy[i], NY)), Hrows, true});
                e.terms.push_back({av[i].r, transpose(Hrows), std::move(Hrows), false});
            }
        }
        prob.add_constraint(std::move(e), opts.margin_qhat);
    }

    SolveOptions so;
    so.tol = opts.tol;
    so.iter_cap = opts.iter_cap;
    std::string note;
    if (opts.use_warm_start) {
        std::optional<ClosedLoopFamily> fam = closed_loop_family(spec);
        if (fam) {
            for (const Matrix& Acl : fam->Acl)
                if (!is_hurwitz(Acl)) {
                    fam.reset();
                    note = "warm start abandoned (a mode's closed loop is not Hurwitz); ";
                    break;
                }
        } else {
            note = "cold start (no paired closed-loop structure); ";
        }
        if (fam) {
            std::optional<std::vector<Matrix>> P;
            double sm = opts.stage_margin;
            for (int attempt = 0; attempt < 2 && !P; ++attempt, sm *= 0.1)
                P = stage_lyapunov(*fam, sm, opts.tol, opts.iter_cap);
            if (P)
                so.warm_start = build_lift(prob.vars.size(), av, spec, *fam, *P, opts.box_bound, note);
            else
                note = "warm start abandoned (Lyapunov stage not feasible); ";
        }
    }

    FeasibilityResult res = solve_feasibility(prob, so);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    CertifyResult out;
    out.status = res.status;
    out.diagnostics = note + res.diagnostics;
    if (res.status != FeasStatus::Feasible) return out;

    Certificate cert;
    cert.solve_margins = res.margins;
    cert.iterations = res.iterations;
    cert.solve_seconds = seconds;
    cert.diagnostics = out.diagnostics;
    std::vector<Matrix> qb, sb, rb;
    for (size_t i = 0; i < spec.agents.size(); ++i) {
        AgentCertificate ac;
        ac.qsr.Q = symmetrize(res.assignment[av[i].q]);
        ac.qsr.S = res.assignment[av[i].s];
        ac.qsr.R = symmetrize(res.assignment[av[i].r]);
        if (spec.agents[i].kind == AgentKind::Dynamic) {
            ac.storage.P = symmetrize(res.assignment[av[i].p]);
            ac.storage.validate();
        }
        qb.push_back(ac.qsr.Q);
        sb.push_back(ac.qsr.S);
        rb.push_back(ac.qsr.R);
        cert.agents.push_back(std::move(ac));
    }

    const Matrix Qf = block_diag(qb);
    const Matrix Sf = block_diag(sb);
    const Matrix Rf = block_diag(rb);
    std::vector<QsrTriple> hatted;
    for (const TopologyMode& mode : spec.modes) {
        QsrTriple h = coupling_matrices(Qf, Sf, Rf, mode.H);
        const double lam = sym_eig_max(h.Q);
        if (!(lam < 0.0)) {
            std::ostringstream os;
            os << "certify: coupling matrix of mode " << mode.id
               << " is not negative definite at the solution (lambda_max=" << lam << ")";
            throw NumericalFailure(os.str());
        }
        cert.coupling_max_eig.push_back(lam);
        hatted.push_back(std::move(h));
    }
    cert.supply = derive_common_supply(hatted);

    out.certificate = std::move(cert);
    return out;
}

UavTopology canonical_uav_modes() {
    const Matrix I12 = Matrix::identity(12);
    Matrix H(36, 36);
    set_block(H, 0, 0, I12);
    set_block(H, 12, 0, -I12);
    set_block(H, 12, 12, I12);
    set_block(H, 24, 0, -I12);
    set_block(H, 24, 24, I12);
    Matrix Ht(36, 36);
    set_block(Ht, 0, 0, -I12);

    UavTopology topo;
    topo.H = H;
    topo.Htilde = Ht;
    const Matrix Z = Matrix::zeros(36, 36);
    const auto plant_coupling = [&](const Matrix& X, const Matrix& Y) {
        Matrix C(108, 108);
        set_block(C, 0, 0, H);
        set_block(C, 36, 36, H);
        set_block(C, 72, 72, H);
        set_block(C, 36, 0, X);
        set_block(C, 72, 0, Y);
        return C;
    };
    topo.Hc = {plant_coupling(Ht, Ht), plant_coupling(Z, Ht), plant_coupling(Ht, Z),
               plant_coupling(Z, Z)};
    for (const Matrix& C : topo.Hc) {
        Matrix Hh(144, 144);
        set_block(Hh, 0, 108, -Matrix::identity(36));
        set_block(Hh, 36, 0, C);
        topo.Hhat.push_back(std::move(Hh));
    }
    return topo;
}

NetworkSpec uav_network(uint64_t seed) {
    UavTopology topo = canonical_uav_modes();
    Matrix Qw(12, 12);
    for (int i = 0; i < 6; ++i) Qw(i, i) = 100.0;
    for (int i = 6; i < 12; ++i) Qw(i, i) = 10.0;
    const Matrix Rw = Matrix::identity(4);

    NetworkSpec spec;
    std::vector<Matrix> gains;
    for (const QuadrotorParams& params : randomize_fleet(9, seed)) {
        StateSpace ss = quadrotor_linearize(params);
        gains.push_back(lqr_gain(ss.A, ss.B, Qw, Rw).K);
        spec.agents.push_back(Agent::dynamic(std::move(ss)));
    }
    for (Matrix& K : gains) spec.agents.push_back(Agent::static_gain(std::move(K)));
    for (int i = 0; i < 4; ++i) spec.modes.push_back({i + 1, topo.Hhat[i]});
    return spec;
}

}  // namespace qsrnet
