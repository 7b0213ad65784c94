#include "qsrnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <utility>

#include "qsrnet/errors.hpp"

namespace qsrnet {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr double kMonoBox = 1e4;
constexpr double kMonoMarginKyp = 1e-7;
constexpr double kMonoFloorP = 1e-3;
constexpr double kMonoFloorQ = 1e-4;
constexpr double kMonoFloorR = 1e-6;

double median(std::vector<double> v) {
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
        return 0.5 * (v[mid - 1] + hi);
    }
    return hi;
}

std::string verdict_of(FeasStatus s) {
    switch (s) {
        case FeasStatus::Feasible: return "feasible";
        case FeasStatus::Infeasible: return "infeasible";
        case FeasStatus::Undecided: return "undecided";
    }
    return "undecided";
}

/// Stacked per-mode network supply triples of a certificate.
std::vector<QsrTriple> mode_triples(const Certificate& cert, const NetworkSpec& spec) {
    std::vector<Matrix> qs, ss, rs;
    for (const AgentCertificate& ac : cert.agents) {
        qs.push_back(ac.qsr.Q);
        ss.push_back(ac.qsr.S);
        rs.push_back(ac.qsr.R);
    }
    QsrTriple stacked{block_diag(qs), block_diag(ss), block_diag(rs)};
    std::vector<QsrTriple> out;
    out.reserve(spec.modes.size());
    for (const TopologyMode& mode : spec.modes) out.push_back(coupling_matrices(stacked, mode.H));
    return out;
}

int triple_slots(int ny, int nu) {
    return ny * (ny + 1) / 2 + ny * nu + nu * (nu + 1) / 2;
}

int compositional_dofs(const NetworkSpec& spec) {
    int dofs = 0;
    for (const Agent& ag : spec.agents) {
        dofs += triple_slots(ag.ny(), ag.nu());
        if (ag.kind == AgentKind::Dynamic) dofs += ag.nx() * (ag.nx() + 1) / 2;
    }
    return dofs;
}

}  // namespace

std::vector<StateSpace> closed_loop_modes(const ClosedLoopFamily& fam) {
    const int n = fam.A.rows;
    const Matrix BK = fam.B * fam.K;
    Matrix Bhat(n, fam.B.cols + BK.cols);
    set_block(Bhat, 0, 0, fam.B);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < BK.cols; ++j) Bhat(i, fam.B.cols + j) = -BK(i, j);
    std::vector<StateSpace> modes;
    modes.reserve(fam.Acl.size());
    for (const Matrix& Acl : fam.Acl) modes.push_back({Acl, Bhat});
    return modes;
}

MonolithicResult monolithic_certify(const std::vector<StateSpace>& modes, StorageShape shape,
                                    const std::vector<int>& blocks) {
    if (modes.empty()) throw InvalidArgument("monolithic_certify: no modes");
    const int n = modes.front().A.rows;
    const int m = modes.front().B.cols;
    for (const StateSpace& ss : modes)
        if (ss.A.rows != n || ss.A.cols != n || ss.B.rows != n || ss.B.cols != m)
            throw InvalidArgument("monolithic_certify: inconsistent mode dimensions");
    std::vector<int> part;
    if (shape == StorageShape::BlockDiag) {
        if (blocks.empty())
            throw InvalidArgument("monolithic_certify: block sizes required for BlockDiag");
        int total = 0;
        for (int b : blocks) {
            if (b <= 0) throw InvalidArgument("monolithic_certify: nonpositive block size");
            total += b;
        }
        if (total != n)
            throw InvalidArgument("monolithic_certify: block sizes must sum to the state dimension");
        part = blocks;
    } else {
        part = {n};
    }

    const auto t0 = Clock::now();
    const int d = n + m;
    LmiProblem prob;
    std::vector<int> pids;
    std::vector<int> offs;
    int off = 0;
    for (int b : part) {
        pids.push_back(prob.add_symmetric(b, kMonoBox));
        offs.push_back(off);
        off += b;
    }
    const int qbar = prob.add_scalar(kMonoBox);
    const int rbar = prob.add_scalar(kMonoBox);

    Matrix Eq_l(d, n), Eq_r(n, d), Er_l(d, m), Er_r(m, d);
    for (int i = 0; i < n; ++i) {
        Eq_l(i, i) = 1.0;
        Eq_r(i, i) = 1.0;
    }
    for (int i = 0; i < m; ++i) {
        Er_l(n + i, i) = 1.0;
        Er_r(i, n + i) = -1.0;
    }

    for (const StateSpace& ss : modes) {
        Matrix lead(d, n);  // [A', B']'
        set_block(lead, 0, 0, transpose(ss.A));
        set_block(lead, n, 0, transpose(ss.B));
        AffineMatrixExpr e;
        e.dim = d;
        for (size_t j = 0; j < pids.size(); ++j) {
            Matrix Lj = get_block(lead, 0, offs[j], d, part[j]);
            Matrix Rj(part[j], d);
            for (int i = 0; i < part[j]; ++i) Rj(i, offs[j] + i) = 1.0;
            e.terms.push_back({pids[j], std::move(Lj), std::move(Rj), true});
        }
        e.terms.push_back({qbar, Eq_l, Eq_r, false});
        e.terms.push_back({rbar, Er_l, Er_r, false});
        prob.add_constraint(std::move(e), kMonoMarginKyp);
    }
    for (int pid : pids) prob.add_psd(pid, kMonoFloorP);
    prob.add_psd(qbar, kMonoFloorQ);
    prob.add_psd(rbar, kMonoFloorR);

    FeasibilityResult res = solve_feasibility(prob, SolveOptions{});

    MonolithicResult out;
    out.status = res.status;
    out.iterations = res.iterations;
    out.margins = res.margins;
    out.diagnostics = res.diagnostics;
    out.dofs = 2;
    for (int b : part) out.dofs += b * (b + 1) / 2;
    if (res.status == FeasStatus::Feasible) {
        std::vector<Matrix> pblocks;
        for (int pid : pids) pblocks.push_back(symmetrize(res.assignment[pid]));
        out.storage.P = block_diag(pblocks);
        out.storage.validate();
        out.q_common = res.assignment[qbar](0, 0);
        out.r_common = res.assignment[rbar](0, 0);
    }
    out.seconds = seconds_since(t0);
    return out;
}

ScatteringReport scattering_eig_analysis(const std::vector<QsrTriple>& modes) {
    if (modes.empty()) throw InvalidArgument("scattering_eig_analysis: no modes");
    ScatteringReport rep;
    const auto t0 = Clock::now();
    for (const QsrTriple& tr : modes) {
        const int l = tr.Q.rows;
        const int m = tr.R.rows;
        if (tr.Q.cols != l || tr.R.cols != m || tr.S.rows != l || tr.S.cols != m)
            throw InvalidArgument("scattering_eig_analysis: inconsistent triple dimensions");
        if (!is_symmetric(tr.Q) || !is_symmetric(tr.R))
            throw InvalidArgument("scattering_eig_analysis: Q and R must be symmetric");
        Matrix W(l + m, l + m);
        set_block(W, 0, 0, tr.Q);
        set_block(W, 0, l, tr.S);
        set_block(W, l, 0, transpose(tr.S));
        set_block(W, l, l, tr.R);
        EigResult eig = sym_eig(W);
        ModeInertia mi;
        mi.eigs = eig.w;
        double peak = 0.0;
        for (double w : eig.w) peak = std::max(peak, std::abs(w));
        const double zero_tol = 1e-9 * (1.0 + peak);
        for (double w : eig.w) {
            if (w < -zero_tol)
                ++mi.n_neg;
            else if (w > zero_tol)
                ++mi.n_pos;
            else
                ++mi.n_zero;
        }
        rep.modes.push_back(std::move(mi));
    }
    rep.eigen_seconds = seconds_since(t0);
    return rep;
}

std::string BenchTable::csv() const {
    std::string out = "method,time_s,verdict\n";
    char line[160];
    for (const BenchRecord& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%.6f,%s\n", r.method.c_str(), r.time_s,
                      r.verdict.c_str());
        out += line;
    }
    return out;
}

BenchTable bench_table(const NetworkSpec& spec, int repetitions) {
    if (repetitions < 1) throw InvalidArgument("bench_table: repetitions must be positive");
    std::optional<ClosedLoopFamily> fam = closed_loop_family(spec);
    if (!fam) throw InvalidArgument("bench_table: instance lacks the closed-loop paired structure");
    const std::vector<StateSpace> modes = closed_loop_modes(*fam);

    std::vector<double> t_comp, t_block, t_full, t_eigen, t_ident;
    FeasStatus s_comp = FeasStatus::Undecided;
    FeasStatus s_block = FeasStatus::Undecided;
    FeasStatus s_full = FeasStatus::Undecided;
    bool have_triples = false;
    int w_dim = 0;
    int dofs_block = 0, dofs_full = 0;

    for (int rep = 0; rep < repetitions; ++rep) {
        auto t0 = Clock::now();
        CertifyResult comp = certify(spec);
        t_comp.push_back(seconds_since(t0));
        s_comp = comp.status;

        MonolithicResult mb = monolithic_certify(modes, StorageShape::BlockDiag, fam->nx);
        t_block.push_back(mb.seconds);
        s_block = mb.status;
        dofs_block = mb.dofs;

        MonolithicResult mf = monolithic_certify(modes, StorageShape::Full);
        t_full.push_back(mf.seconds);
        s_full = mf.status;
        dofs_full = mf.dofs;

        // Parameter identification: produce the per-mode supply triples from
        // scratch (the eigen analysis presumes them identified in advance).
        t0 = Clock::now();
        CertifyResult ident = certify(spec);
        if (ident.status == FeasStatus::Feasible) {
            std::vector<QsrTriple> triples = mode_triples(ident.certificate, spec);
            t_ident.push_back(seconds_since(t0));
            ScatteringReport sc = scattering_eig_analysis(triples);
            t_eigen.push_back(sc.eigen_seconds);
            w_dim = static_cast<int>(sc.modes.front().eigs.size());
            have_triples = true;
        } else {
            t_ident.push_back(seconds_since(t0));
        }
    }

    BenchTable table;
    table.rows.push_back(
        {"compositional", median(t_comp), verdict_of(s_comp), compositional_dofs(spec)});
    table.rows.push_back({"monolithic-block", median(t_block), verdict_of(s_block), dofs_block});
    table.rows.push_back({"monolithic-full", median(t_full), verdict_of(s_full), dofs_full});
    table.rows.push_back({"scattering-eigen", have_triples ? median(t_eigen) : 0.0,
                          have_triples ? "ok" : "skipped", w_dim});
    table.rows.push_back({"scattering-identify", median(t_ident),
                          have_triples ? "ok" : "skipped", compositional_dofs(spec)});

    if (s_comp == FeasStatus::Feasible &&
        (s_block != FeasStatus::Feasible || s_full != FeasStatus::Feasible)) {
        table.consistent = false;
        table.notes =
            "verdict inconsistency: compositional certificate exists but a monolithic "
            "baseline failed to find one (solver bug)";
    }
    return table;
}

}  // namespace qsrnet
