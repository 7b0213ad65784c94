#include "qsrnet/lmi.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace qsrnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot_all(const Matrix& A, const Matrix& B) {
    double s = 0.0;
    for (size_t i = 0; i < A.a.size(); ++i) s += A.a[i] * B.a[i];
    return s;
}

double trace_of(const Matrix& A) {
    double s = 0.0;
    for (int i = 0; i < A.rows; ++i) s += A(i, i);
    return s;
}

double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double vec_norm(const std::vector<double>& a) { return std::sqrt(vec_dot(a, a)); }

bool scalar_var(const LmiVariable& v) { return v.rows == 1 && v.cols == 1; }

/// Slot enumeration shared by pack/unpack/compile: symmetric variables store
/// the upper triangle row-wise, rectangular ones are row-major.
std::vector<std::array<int, 2>> slot_entries(const LmiVariable& v) {
    std::vector<std::array<int, 2>> e;
    if (v.kind == VarKind::Symmetric) {
        e.reserve(static_cast<size_t>(v.rows) * (v.rows + 1) / 2);
        for (int i = 0; i < v.rows; ++i)
            for (int j = i; j < v.cols; ++j) e.push_back({i, j});
    } else {
        e.reserve(static_cast<size_t>(v.rows) * v.cols);
        for (int i = 0; i < v.rows; ++i)
            for (int j = 0; j < v.cols; ++j) e.push_back({i, j});
    }
    return e;
}

void validate_variable(const LmiVariable& v, int index) {
    if (v.id != index) throw InvalidArgument("LmiProblem: variable ids must equal their index");
    if (v.rows < 1 || v.cols < 1) throw InvalidArgument("LmiProblem: empty variable");
    if (v.kind == VarKind::Symmetric && v.rows != v.cols)
        throw InvalidArgument("LmiProblem: symmetric variable must be square");
    if (!(v.box_bound > 0.0)) throw InvalidArgument("LmiProblem: box bound must be positive");
}

void validate_term(const LmiTerm& t, const std::vector<LmiVariable>& vars, int dim) {
    if (t.var < 0 || t.var >= static_cast<int>(vars.size()))
        throw InvalidArgument("AffineMatrixExpr: term references unknown variable");
    const LmiVariable& v = vars[t.var];
    if (t.L.rows != dim || t.R.cols != dim)
        throw InvalidArgument("AffineMatrixExpr: term factors do not match constraint dimension");
    if (scalar_var(v)) {
        if (t.L.cols != t.R.rows)
            throw InvalidArgument("AffineMatrixExpr: scalar term inner dimensions disagree");
    } else {
        if (t.L.cols != v.rows || t.R.rows != v.cols)
            throw InvalidArgument("AffineMatrixExpr: term factors do not match variable shape");
    }
}

void validate_problem(const LmiProblem& prob) {
    for (size_t i = 0; i < prob.vars.size(); ++i) validate_variable(prob.vars[i], static_cast<int>(i));
    for (const LmiConstraint& c : prob.cons) {
        if (c.expr.dim < 1) throw InvalidArgument("LmiProblem: constraint dimension must be positive");
        if (!(c.margin >= 0.0)) throw InvalidArgument("LmiProblem: constraint margin must be nonnegative");
        if (c.expr.constant.rows != 0 &&
            (c.expr.constant.rows != c.expr.dim || c.expr.constant.cols != c.expr.dim))
            throw InvalidArgument("LmiProblem: constant does not match constraint dimension");
        for (const LmiTerm& t : c.expr.terms) validate_term(t, prob.vars, c.expr.dim);
    }
}

// ---------------------------------------------------------------------------
// Compiled form: margins folded into the constants, scalar terms coalesced
// into a single symmetric coefficient matrix, every matrix term carrying a
// symmetrisation weight (1 for flagged terms, 1/2 for plain ones).
// ---------------------------------------------------------------------------

struct VarInfo {
    int off = 0;
    int slots = 0;
    int rows = 0;
    int cols = 0;
    double box = 0.0;
    std::vector<int> ei, ej;
    std::vector<char> dup;  ///< mirrored entry (symmetric off-diagonal slot)
};

struct MTerm {
    int var = 0;
    double w = 1.0;
    Matrix L, R;
};

struct STerm {
    int var = 0;
    Matrix M;  ///< coalesced symmetric coefficient of the scalar value
};

struct CCon {
    int dim = 0;
    double margin = 0.0;
    Matrix cst;  ///< symmetrised constant + margin * I
    std::vector<MTerm> mt;
    std::vector<STerm> st;
};

struct Compiled {
    std::vector<VarInfo> v;
    int nslots = 0;
    int nz = 0;  ///< nslots + 1, trailing slot is the relaxation level t
    std::vector<CCon> con;
    double scale = 1.0;  ///< 1 + largest constant norm, for thresholds
};

Compiled compile(const LmiProblem& prob) {
    validate_problem(prob);
    Compiled C;
    C.v.resize(prob.vars.size());
    int off = 0;
    for (size_t i = 0; i < prob.vars.size(); ++i) {
        const LmiVariable& pv = prob.vars[i];
        VarInfo& vi = C.v[i];
        vi.rows = pv.rows;
        vi.cols = pv.cols;
        vi.box = pv.box_bound;
        vi.off = off;
        auto entries = slot_entries(pv);
        vi.slots = static_cast<int>(entries.size());
        vi.ei.resize(entries.size());
        vi.ej.resize(entries.size());
        vi.dup.resize(entries.size());
        for (size_t s = 0; s < entries.size(); ++s) {
            vi.ei[s] = entries[s][0];
            vi.ej[s] = entries[s][1];
            vi.dup[s] = pv.kind == VarKind::Symmetric && entries[s][0] != entries[s][1];
        }
        off += vi.slots;
    }
    C.nslots = off;
    C.nz = off + 1;
    C.con.reserve(prob.cons.size());
    for (const LmiConstraint& c : prob.cons) {
        CCon cc;
        cc.dim = c.expr.dim;
        cc.margin = c.margin;
        cc.cst = c.expr.constant.rows == 0 ? Matrix::zeros(cc.dim, cc.dim)
                                           : symmetrize(c.expr.constant);
        for (int i = 0; i < cc.dim; ++i) cc.cst(i, i) += c.margin;
        std::vector<Matrix> coal(prob.vars.size());
        for (const LmiTerm& t : c.expr.terms) {
            const double w = t.sym ? 1.0 : 0.5;
            if (scalar_var(prob.vars[t.var])) {
                Matrix M = t.L * t.R;
                if (coal[t.var].rows == 0) coal[t.var] = Matrix::zeros(cc.dim, cc.dim);
                Matrix sym = w * (M + transpose(M));
                coal[t.var] += sym;
            } else {
                cc.mt.push_back({t.var, w, t.L, t.R});
            }
        }
        for (size_t v = 0; v < coal.size(); ++v)
            if (coal[v].rows != 0) cc.st.push_back({static_cast<int>(v), coal[v]});
        C.scale = std::max(C.scale, 1.0 + frob_norm(cc.cst));
        C.con.push_back(std::move(cc));
    }
    return C;
}

std::vector<Matrix> materialize(const Compiled& C, const std::vector<double>& z) {
    std::vector<Matrix> X(C.v.size());
    for (size_t v = 0; v < C.v.size(); ++v) {
        const VarInfo& vi = C.v[v];
        Matrix M(vi.rows, vi.cols);
        for (int s = 0; s < vi.slots; ++s) {
            M(vi.ei[s], vi.ej[s]) = z[vi.off + s];
            if (vi.dup[s]) M(vi.ej[s], vi.ei[s]) = z[vi.off + s];
        }
        X[v] = std::move(M);
    }
    return X;
}

/// Symmetrised constraint matrix (margin already folded into the constant).
Matrix con_matrix(const CCon& cc, const std::vector<Matrix>& X) {
    Matrix F = cc.cst;
    for (const MTerm& t : cc.mt) {
        Matrix P = t.L * X[t.var] * t.R;
        for (int i = 0; i < F.rows; ++i) {
            const double* pr = P.row(i);
            for (int j = 0; j < F.cols; ++j) F(i, j) += t.w * (pr[j] + P(j, i));
        }
    }
    for (const STerm& s : cc.st) {
        const double x = X[s.var](0, 0);
        for (size_t i = 0; i < F.a.size(); ++i) F.a[i] += x * s.M.a[i];
    }
    return F;
}

/// Worst margined eigenvalue max_j lambda_max(F_j(x)) + eps_j (QL, internal
/// progress tracking only).
double worst_margin(const Compiled& C, const std::vector<double>& z,
                    std::vector<double>* per = nullptr) {
    auto X = materialize(C, z);
    double worst = -kInf;
    if (per) per->clear();
    for (const CCon& cc : C.con) {
        const double m = sym_eigvals_fast(con_matrix(cc, X)).back();
        if (per) per->push_back(m);
        worst = std::max(worst, m);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Log-det barrier with box walls.
// ---------------------------------------------------------------------------

double bval(const Compiled& C, const std::vector<double>& z) {
    double val = 0.0;
    for (const VarInfo& vi : C.v)
        for (int s = 0; s < vi.slots; ++s) {
            const double x = z[vi.off + s];
            if (!(std::abs(x) < vi.box)) return kInf;
            val -= std::log(vi.box - x) + std::log(vi.box + x);
        }
    const double t = z[C.nslots];
    auto X = materialize(C, z);
    for (const CCon& cc : C.con) {
        Matrix Y = -con_matrix(cc, X);
        for (int i = 0; i < Y.rows; ++i) Y(i, i) += t;
        CholResult ch = cholesky(Y);
        if (!ch.ok) return kInf;
        val -= ch.logdet;
    }
    return val;
}

/// Accumulate coef * slot-projection of Mg' into a slot-indexed vector;
/// Mg has shape cols(X) x rows(X) (the R*W*L pattern).
void scatter_grad(std::vector<double>& g, const VarInfo& v, const Matrix& Mg, double coef) {
    for (int s = 0; s < v.slots; ++s) {
        double val = Mg(v.ej[s], v.ei[s]);
        if (v.dup[s]) val += Mg(v.ei[s], v.ej[s]);
        g[v.off + s] += coef * val;
    }
}

void scatter_col(Matrix& H, const VarInfo& v, int col, const Matrix& Mg, double coef) {
    for (int s = 0; s < v.slots; ++s) {
        double val = Mg(v.ej[s], v.ei[s]);
        if (v.dup[s]) val += Mg(v.ei[s], v.ej[s]);
        H(v.off + s, col) += coef * val;
    }
}

inline void hup(Matrix& H, int i, int j, double val) {
    if (i <= j)
        H(i, j) += val;
    else
        H(j, i) += val;
}

void scatter_cross_scalar(Matrix& H, const VarInfo& v, int scol, const Matrix& G, double coef) {
    for (int s = 0; s < v.slots; ++s) {
        double val = G(v.ej[s], v.ei[s]);
        if (v.dup[s]) val += G(v.ei[s], v.ej[s]);
        hup(H, v.off + s, scol, coef * val);
    }
}

/// Upper-triangle accumulation of the cross-block between two matrix terms:
///   H[a,b] += c * sum over basis entries of (M1[q,m] M2[n,p] + N1[q,n] N2[p,m])
/// with M1 = R1 W L2, M2 = R2 W L1, N1 = R1 W R2', N2 = L1' W L2.
void scatter_pair(Matrix& H, const VarInfo& v1, const VarInfo& v2, bool same, const Matrix& M1,
                  const Matrix& M2, const Matrix& N1, const Matrix& N2, double c) {
    const int r1 = v1.rows, r2 = v2.rows, c2 = v2.cols;
    const double* m1 = M1.a.data();
    const double* m2 = M2.a.data();
    const double* n1 = N1.a.data();
    const double* n2 = N2.a.data();
    auto f = [&](int p, int q, int m, int n) {
        return m1[static_cast<size_t>(q) * r2 + m] * m2[static_cast<size_t>(n) * r1 + p] +
               n1[static_cast<size_t>(q) * c2 + n] * n2[static_cast<size_t>(p) * r2 + m];
    };
    for (int a = 0; a < v1.slots; ++a) {
        const int p = v1.ei[a], q = v1.ej[a];
        const bool d1 = v1.dup[a];
        double* Hrow = H.row(v1.off + a);
        const int b0 = same ? a : 0;
        for (int b = b0; b < v2.slots; ++b) {
            const int m = v2.ei[b], n = v2.ej[b];
            double s = f(p, q, m, n);
            if (d1) s += f(q, p, m, n);
            if (v2.dup[b]) {
                s += f(p, q, n, m);
                if (d1) s += f(q, p, n, m);
            }
            Hrow[v2.off + b] += c * s;
        }
    }
}

void bgrad(const Compiled& C, const std::vector<double>& z, std::vector<double>& g, Matrix& H) {
    const int ns = C.nslots;
    const int nz = C.nz;
    g.assign(nz, 0.0);
    if (H.rows != nz || H.cols != nz)
        H = Matrix(nz, nz);
    else
        std::fill(H.a.begin(), H.a.end(), 0.0);
    auto X = materialize(C, z);
    const double t = z[ns];
    for (const CCon& cc : C.con) {
        Matrix Y = -con_matrix(cc, X);
        for (int i = 0; i < Y.rows; ++i) Y(i, i) += t;
        CholResult ch = cholesky(Y);
        if (!ch.ok) throw NumericalFailure("lmi barrier: point left the feasible cone");
        Matrix W = chol_inverse(ch.L);
        Matrix WW = W * W;
        g[ns] -= trace_of(W);
        H(ns, ns) += dot_all(W, W);
        const int nt = static_cast<int>(cc.mt.size());
        std::vector<Matrix> WL(nt), WRt(nt);
        for (int i = 0; i < nt; ++i) {
            WL[i] = W * cc.mt[i].L;
            WRt[i] = W * transpose(cc.mt[i].R);
        }
        for (int i = 0; i < nt; ++i) {
            const MTerm& ti = cc.mt[i];
            Matrix Mg = ti.R * WL[i];
            scatter_grad(g, C.v[ti.var], Mg, 2.0 * ti.w);
            Matrix Mg2 = ti.R * (WW * ti.L);
            scatter_col(H, C.v[ti.var], ns, Mg2, -2.0 * ti.w);
        }
        for (int i = 0; i < nt; ++i) {
            const MTerm& ti = cc.mt[i];
            for (int j = 0; j < nt; ++j) {
                const MTerm& tj = cc.mt[j];
                if (ti.var > tj.var) continue;
                Matrix M1 = ti.R * WL[j];
                Matrix M2 = tj.R * WL[i];
                Matrix N1 = ti.R * WRt[j];
                Matrix N2 = transpose(ti.L) * WL[j];
                scatter_pair(H, C.v[ti.var], C.v[tj.var], ti.var == tj.var, M1, M2, N1, N2,
                             2.0 * ti.w * tj.w);
            }
        }
        const int nsc = static_cast<int>(cc.st.size());
        std::vector<Matrix> WMW(nsc);
        for (int k = 0; k < nsc; ++k) {
            const STerm& sk = cc.st[k];
            WMW[k] = W * sk.M * W;
            const int a = C.v[sk.var].off;
            g[a] += dot_all(W, sk.M);
            hup(H, a, ns, -dot_all(WW, sk.M));
        }
        for (int k = 0; k < nsc; ++k)
            for (int l = k; l < nsc; ++l)
                hup(H, C.v[cc.st[k].var].off, C.v[cc.st[l].var].off,
                    dot_all(WMW[k], cc.st[l].M));
        for (int i = 0; i < nt; ++i) {
            const MTerm& ti = cc.mt[i];
            for (int k = 0; k < nsc; ++k) {
                Matrix G = ti.R * (WMW[k] * ti.L);
                scatter_cross_scalar(H, C.v[ti.var], C.v[cc.st[k].var].off, G, 2.0 * ti.w);
            }
        }
    }
    for (const VarInfo& vi : C.v)
        for (int s = 0; s < vi.slots; ++s) {
            const double x = z[vi.off + s];
            const double d1 = 1.0 / (vi.box - x);
            const double d2 = 1.0 / (vi.box + x);
            g[vi.off + s] += d1 - d2;
            H(vi.off + s, vi.off + s) += d1 * d1 + d2 * d2;
        }
    for (int i = 0; i < nz; ++i)
        for (int j = i + 1; j < nz; ++j) H(j, i) = H(i, j);
}

bool solve_spd(const Matrix& H, const std::vector<double>& g, std::vector<double>& d) {
    double md = 1e-300;
    for (int i = 0; i < H.rows; ++i) md = std::max(md, std::abs(H(i, i)));
    double shift = 0.0;
    for (int attempt = 0; attempt < 7; ++attempt) {
        CholResult ch = cholesky(H, shift);
        if (ch.ok) {
            d = chol_solve(ch.L, g);
            for (double& x : d) x = -x;
            return true;
        }
        shift = shift == 0.0 ? 1e-12 * md : shift * 100.0;
    }
    return false;
}

void clamp_box(const Compiled& C, std::vector<double>& z) {
    for (const VarInfo& vi : C.v) {
        const double lim = 0.999 * vi.box;
        for (int s = 0; s < vi.slots; ++s) z[vi.off + s] = std::clamp(z[vi.off + s], -lim, lim);
    }
}

// ---------------------------------------------------------------------------
// Phase 1: annealed log-sum-exp spectral descent on the margined worst
// eigenvalue (no relaxation slot involved).
// ---------------------------------------------------------------------------

void lse_phase(const Compiled& C, std::vector<double>& z, const SolveOptions& o, int& iters,
               double target, std::ostringstream& diag) {
    if (C.nslots == 0 || o.smoothing_budget <= 0) return;
    auto eig_all = [&](const std::vector<double>& zz) {
        auto X = materialize(C, zz);
        std::vector<EigResult> per;
        per.reserve(C.con.size());
        for (const CCon& cc : C.con) per.push_back(sym_eig_fast(con_matrix(cc, X)));
        return per;
    };
    auto vals_only = [&](const std::vector<double>& zz) {
        auto X = materialize(C, zz);
        std::vector<std::vector<double>> per;
        per.reserve(C.con.size());
        for (const CCon& cc : C.con) per.push_back(sym_eigvals_fast(con_matrix(cc, X)));
        return per;
    };
    auto lse_of = [&](const std::vector<std::vector<double>>& per, double tau) {
        double mx = -kInf;
        for (const auto& v : per)
            for (double w : v) mx = std::max(mx, w);
        double s = 0.0;
        for (const auto& v : per)
            for (double w : v) s += std::exp((w - mx) / tau);
        return mx + tau * std::log(s);
    };
    double worst = worst_margin(C, z);
    if (worst <= target) return;
    double tau = 0.25 * std::max(1.0, worst - target);
    const double tau_floor = 1e-8 * std::max(1.0, std::abs(worst));
    int used = 0;
    std::vector<double> g(C.nslots + 1, 0.0);
    while (used < o.smoothing_budget && iters < o.iter_cap) {
        auto per = eig_all(z);
        double mx = -kInf;
        for (const auto& e : per) mx = std::max(mx, e.w.back());
        if (mx <= target) break;
        double Zs = 0.0;
        for (const auto& e : per)
            for (double w : e.w) Zs += std::exp((w - mx) / tau);
        std::fill(g.begin(), g.end(), 0.0);
        for (size_t j = 0; j < C.con.size(); ++j) {
            const CCon& cc = C.con[j];
            const EigResult& e = per[j];
            const int d = cc.dim;
            Matrix Ws(d, d);
            bool any = false;
            for (int k = 0; k < d; ++k) {
                const double wk = std::exp((e.w[k] - mx) / tau) / Zs;
                if (wk < 1e-15) continue;
                any = true;
                for (int r = 0; r < d; ++r) {
                    const double vr = e.V(r, k) * wk;
                    for (int c2 = 0; c2 < d; ++c2) Ws(r, c2) += vr * e.V(c2, k);
                }
            }
            if (!any) continue;
            for (const MTerm& t : cc.mt) {
                Matrix Mg = t.R * (Ws * t.L);
                scatter_grad(g, C.v[t.var], Mg, 2.0 * t.w);
            }
            for (const STerm& s : cc.st) g[C.v[s.var].off] += dot_all(Ws, s.M);
        }
        double gn2 = 0.0;
        for (int a = 0; a < C.nslots; ++a) gn2 += g[a] * g[a];
        if (gn2 < 1e-28) {
            tau *= 0.5;
            if (tau < tau_floor) break;
            continue;
        }
        const double f0 = lse_of(vals_only(z), tau);
        double alpha = 1.0 / std::max(1.0, std::sqrt(gn2));
        bool accepted = false;
        std::vector<double> zn = z;
        for (int h = 0; h < 40; ++h) {
            for (int a = 0; a < C.nslots; ++a) zn[a] = z[a] - alpha * g[a];
            clamp_box(C, zn);
            const double fn = lse_of(vals_only(zn), tau);
            if (fn <= f0 - 1e-4 * alpha * gn2) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        ++used;
        ++iters;
        if (!accepted || std::abs(lse_of(vals_only(zn), tau) - f0) <= 1e-10 * (1.0 + std::abs(f0))) {
            tau *= 0.5;
            if (tau < tau_floor) break;
        }
        if (accepted) z = zn;
    }
    diag << "smoothing: iters=" << used << " worst=" << worst_margin(C, z) << "; ";
}

// ---------------------------------------------------------------------------
// Phase 2: damped Newton on mu * t + barrier, staged in mu.
// ---------------------------------------------------------------------------

struct SumtOutcome {
    double worst = kInf;
    bool stalled = false;
    double gradnorm = 0.0;
    int stages = 0;
    double mu_final = 0.0;
};

SumtOutcome sumt_phase(const Compiled& C, std::vector<double>& z, const SolveOptions& o,
                       int& iters, double target, std::ostringstream& diag) {
    SumtOutcome out;
    double worst = worst_margin(C, z);
    if (worst <= target) {
        out.worst = worst;
        return out;
    }
    const int ns = C.nslots;
    z[ns] = worst + 0.05 * (1.0 + std::abs(worst));
    double mu = o.mu0;
    std::vector<double> hist;
    std::vector<double> g, d;
    Matrix H;
    while (iters < o.iter_cap) {
        ++out.stages;
        bool converged = false;
        double f0 = mu * z[ns] + bval(C, z);
        for (int inner = 0; inner < o.newton_inner_cap && iters < o.iter_cap; ++inner) {
            bgrad(C, z, g, H);
            g[ns] += mu;
            if (!solve_spd(H, g, d)) break;
            const double dec = -vec_dot(g, d);
            if (dec <= o.newton_tol * (1.0 + std::abs(f0))) {
                converged = true;
                break;
            }
            double alpha = 1.0;
            bool accepted = false;
            std::vector<double> zn(z.size());
            double fn = f0;
            for (int h = 0; h < 50; ++h) {
                for (size_t a = 0; a < z.size(); ++a) zn[a] = z[a] + alpha * d[a];
                fn = mu * zn[ns] + bval(C, zn);
                if (fn <= f0 - 1e-4 * alpha * dec) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            ++iters;
            if (!accepted) break;
            z = zn;
            f0 = fn;
        }
        worst = worst_margin(C, z);
        hist.push_back(worst);
        out.worst = worst;
        out.gradnorm = vec_norm(g);
        out.mu_final = mu;
        if (worst <= target) break;
        // A stall is a *ratio* plateau: the positive worst margin stops
        // decreasing even as the objective weight grows.  Absolute-difference
        // tests would misread the geometric decay of boundary-feasible
        // problems as a stall.
        const size_t k = hist.size();
        auto no_decrease = [](double newer, double older) {
            return newer > 0.0 && older > 0.0 && newer >= 0.98 * older;
        };
        const bool plateau = k >= 3 && no_decrease(hist[k - 1], hist[k - 2]) &&
                             no_decrease(hist[k - 2], hist[k - 3]);
        if (mu >= o.mu_max) {
            out.stalled = plateau && converged;
            break;
        }
        mu *= o.mu_mult;
    }
    diag << "barrier: stages=" << out.stages << " mu=" << out.mu_final << " worst=" << out.worst
         << (out.stalled ? " (stalled)" : "") << "; ";
    return out;
}

// ---------------------------------------------------------------------------
// Phase 3: alternating-projections polish.  Eigenvalue-clip the worst
// constraint and pull the correction back to the variables by CG on the
// normal equations of the constraint's linear map.
// ---------------------------------------------------------------------------

Matrix apply_J(const Compiled& C, const CCon& cc, const std::vector<double>& dx) {
    auto X = materialize(C, dx);
    Matrix F = Matrix::zeros(cc.dim, cc.dim);
    for (const MTerm& t : cc.mt) {
        Matrix P = t.L * X[t.var] * t.R;
        for (int i = 0; i < F.rows; ++i)
            for (int j = 0; j < F.cols; ++j) F(i, j) += t.w * (P(i, j) + P(j, i));
    }
    for (const STerm& s : cc.st) {
        const double x = X[s.var](0, 0);
        for (size_t i = 0; i < F.a.size(); ++i) F.a[i] += x * s.M.a[i];
    }
    return F;
}

std::vector<double> apply_Jt(const Compiled& C, const CCon& cc, const Matrix& S) {
    std::vector<double> g(C.nslots + 1, 0.0);
    for (const MTerm& t : cc.mt) {
        Matrix Mg = t.R * (S * t.L);
        scatter_grad(g, C.v[t.var], Mg, 2.0 * t.w);
    }
    for (const STerm& s : cc.st) g[C.v[s.var].off] += dot_all(S, s.M);
    g.resize(C.nslots);
    return g;
}

void pocs_phase(const Compiled& C, std::vector<double>& z, const SolveOptions& o, int& iters,
                std::ostringstream& diag) {
    if (C.nslots == 0) return;
    int sweeps = 0;
    const double target = -10.0 * o.tol;
    for (; sweeps < o.polish_sweeps && iters < o.iter_cap; ++sweeps) {
        auto X = materialize(C, z);
        int jworst = -1;
        double worst = -kInf;
        for (size_t j = 0; j < C.con.size(); ++j) {
            const double m = sym_eigvals_fast(con_matrix(C.con[j], X)).back();
            if (m > worst) {
                worst = m;
                jworst = static_cast<int>(j);
            }
        }
        if (worst <= -o.tol) break;
        const CCon& cc = C.con[jworst];
        EigResult e = sym_eig_fast(con_matrix(cc, X));
        Matrix dF(cc.dim, cc.dim);
        for (int k = 0; k < cc.dim; ++k) {
            const double shift = std::min(e.w[k], target) - e.w[k];
            if (shift == 0.0) continue;
            for (int r = 0; r < cc.dim; ++r)
                for (int c2 = 0; c2 < cc.dim; ++c2) dF(r, c2) += shift * e.V(r, k) * e.V(c2, k);
        }
        if (frob_norm(dF) <= 1e-14 * C.scale) break;
        std::vector<double> b = apply_Jt(C, cc, dF);
        const double lam = 1e-10 * (1.0 + frob_norm(dF));
        std::vector<double> x(C.nslots, 0.0), r = b, p = b, Ap(C.nslots);
        double rs = vec_dot(r, r);
        const double rs0 = rs;
        std::vector<double> px(C.nslots + 1, 0.0);
        for (int it = 0; it < 60 && rs > 1e-16 * rs0; ++it) {
            std::copy(p.begin(), p.end(), px.begin());
            std::vector<double> jt = apply_Jt(C, cc, apply_J(C, cc, px));
            for (int a = 0; a < C.nslots; ++a) Ap[a] = jt[a] + lam * p[a];
            const double pap = vec_dot(p, Ap);
            if (!(pap > 0.0)) break;
            const double alpha = rs / pap;
            for (int a = 0; a < C.nslots; ++a) {
                x[a] += alpha * p[a];
                r[a] -= alpha * Ap[a];
            }
            const double rs2 = vec_dot(r, r);
            const double beta = rs2 / rs;
            rs = rs2;
            for (int a = 0; a < C.nslots; ++a) p[a] = r[a] + beta * p[a];
        }
        double dn = 0.0;
        for (double v : x) dn += v * v;
        if (dn <= 1e-30) break;
        for (int a = 0; a < C.nslots; ++a) z[a] += x[a];
        clamp_box(C, z);
        ++iters;
    }
    if (sweeps > 0) diag << "polish: sweeps=" << sweeps << " worst=" << worst_margin(C, z) << "; ";
}

// ---------------------------------------------------------------------------
// Phase 4: homogeneous ray rescale.  When every constant is exactly zero the
// constraints are linear in x, so a uniform scaling converts strictly
// negative raw eigenvalues into any demanded margin the box allows.
// ---------------------------------------------------------------------------

bool ray_phase(const Compiled& C, std::vector<double>& z, std::ostringstream& diag) {
    for (const CCon& cc : C.con)
        for (int i = 0; i < cc.dim; ++i)
            for (int j = 0; j < cc.dim; ++j)
                if (cc.cst(i, j) != (i == j ? cc.margin : 0.0)) return false;
    auto X = materialize(C, z);
    double s_needed = 0.0;
    for (const CCon& cc : C.con) {
        const double raw = sym_eigvals_fast(con_matrix(cc, X)).back() - cc.margin;
        if (cc.margin > 0.0) {
            if (!(raw < 0.0)) return false;
            s_needed = std::max(s_needed, cc.margin / (-raw));
        } else if (raw > 0.0) {
            return false;
        }
    }
    if (s_needed == 0.0) return false;
    const double s = 1.02 * s_needed;
    for (const VarInfo& vi : C.v)
        for (int slot = 0; slot < vi.slots; ++slot)
            if (std::abs(z[vi.off + slot]) * s > 0.999 * vi.box) return false;
    for (const VarInfo& vi : C.v)
        for (int slot = 0; slot < vi.slots; ++slot) z[vi.off + slot] *= s;
    diag << "ray: s=" << s << "; ";
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Problem construction and evaluation.
// ---------------------------------------------------------------------------

int LmiProblem::add_symmetric(int n, double box_bound) {
    LmiVariable v;
    v.id = static_cast<int>(vars.size());
    v.kind = VarKind::Symmetric;
    v.rows = v.cols = n;
    v.box_bound = box_bound;
    validate_variable(v, v.id);
    vars.push_back(v);
    return v.id;
}

int LmiProblem::add_rectangular(int r, int c, double box_bound) {
    LmiVariable v;
    v.id = static_cast<int>(vars.size());
    v.kind = VarKind::Rectangular;
    v.rows = r;
    v.cols = c;
    v.box_bound = box_bound;
    validate_variable(v, v.id);
    vars.push_back(v);
    return v.id;
}

void LmiProblem::add_constraint(AffineMatrixExpr expr, double margin) {
    if (expr.dim < 1) throw InvalidArgument("add_constraint: dimension must be positive");
    if (!(margin >= 0.0)) throw InvalidArgument("add_constraint: margin must be nonnegative");
    if (expr.constant.rows != 0 && (expr.constant.rows != expr.dim || expr.constant.cols != expr.dim))
        throw InvalidArgument("add_constraint: constant does not match dimension");
    for (const LmiTerm& t : expr.terms) validate_term(t, vars, expr.dim);
    cons.push_back({std::move(expr), margin});
}

void LmiProblem::add_psd(int var_id, double margin) {
    if (var_id < 0 || var_id >= static_cast<int>(vars.size()))
        throw InvalidArgument("add_psd: unknown variable");
    const LmiVariable& v = vars[var_id];
    if (v.kind != VarKind::Symmetric) throw InvalidArgument("add_psd: variable must be symmetric");
    AffineMatrixExpr e;
    e.dim = v.rows;
    e.terms.push_back({var_id, -1.0 * Matrix::identity(v.rows), Matrix::identity(v.rows), false});
    add_constraint(std::move(e), margin);
}

Matrix eval_expr(const AffineMatrixExpr& expr, const Assignment& x) {
    Matrix F = expr.constant.rows == 0 ? Matrix::zeros(expr.dim, expr.dim) : expr.constant;
    if (F.rows != expr.dim || F.cols != expr.dim)
        throw InvalidArgument("eval_expr: constant does not match dimension");
    // The symmetry tolerance is relative to the largest summand, not to the
    // (possibly cancelled) result, so rounding noise from well-formed but
    // near-balanced expressions is not mistaken for asymmetry.
    double ref = max_abs(F);
    for (const LmiTerm& t : expr.terms) {
        if (t.var < 0 || t.var >= static_cast<int>(x.size()))
            throw InvalidArgument("eval_expr: assignment missing a variable");
        const Matrix& X = x[t.var];
        if (X.rows == 1 && X.cols == 1) {
            if (t.L.rows != expr.dim || t.R.cols != expr.dim || t.L.cols != t.R.rows)
                throw InvalidArgument("eval_expr: scalar term dimensions disagree");
            Matrix M = t.L * t.R;
            const double v = X(0, 0);
            ref = std::max(ref, std::abs(v) * max_abs(M));
            for (int i = 0; i < expr.dim; ++i)
                for (int j = 0; j < expr.dim; ++j) {
                    F(i, j) += v * M(i, j);
                    if (t.sym) F(i, j) += v * M(j, i);
                }
        } else {
            if (t.L.rows != expr.dim || t.R.cols != expr.dim || t.L.cols != X.rows ||
                t.R.rows != X.cols)
                throw InvalidArgument("eval_expr: term dimensions disagree");
            Matrix P = t.L * X * t.R;
            ref = std::max(ref, max_abs(P));
            for (int i = 0; i < expr.dim; ++i)
                for (int j = 0; j < expr.dim; ++j) {
                    F(i, j) += P(i, j);
                    if (t.sym) F(i, j) += P(j, i);
                }
        }
    }
    if (max_abs(F - transpose(F)) > 1e-12 * (1.0 + ref))
        throw InvalidArgument("eval_expr: expression does not evaluate symmetric");
    return symmetrize(F);
}

std::vector<double> verify_assignment(const LmiProblem& prob, const Assignment& x) {
    validate_problem(prob);
    if (x.size() < prob.vars.size())
        throw InvalidArgument("verify_assignment: assignment missing variables");
    for (const LmiVariable& v : prob.vars)
        if (x[v.id].rows != v.rows || x[v.id].cols != v.cols)
            throw InvalidArgument("verify_assignment: assignment shape mismatch");
    std::vector<double> margins;
    margins.reserve(prob.cons.size());
    for (const LmiConstraint& c : prob.cons) {
        const Matrix F = eval_expr(c.expr, x);
        margins.push_back(sym_eig(F).w.back() + c.margin);
    }
    return margins;
}

// ---------------------------------------------------------------------------
// Solver driver.
// ---------------------------------------------------------------------------

namespace detail {

int slot_count(const LmiProblem& prob) {
    validate_problem(prob);
    int n = 0;
    for (const LmiVariable& v : prob.vars) n += static_cast<int>(slot_entries(v).size());
    return n + 1;
}

std::vector<double> pack(const LmiProblem& prob, const Assignment& x, double t) {
    validate_problem(prob);
    if (x.size() < prob.vars.size()) throw InvalidArgument("pack: assignment missing variables");
    std::vector<double> z;
    for (const LmiVariable& v : prob.vars) {
        const Matrix& X = x[v.id];
        if (X.rows != v.rows || X.cols != v.cols)
            throw InvalidArgument("pack: assignment shape mismatch");
        for (const auto& e : slot_entries(v)) z.push_back(X(e[0], e[1]));
    }
    z.push_back(t);
    return z;
}

Assignment unpack(const LmiProblem& prob, const std::vector<double>& z) {
    validate_problem(prob);
    Assignment x(prob.vars.size());
    size_t k = 0;
    for (const LmiVariable& v : prob.vars) {
        Matrix X(v.rows, v.cols);
        for (const auto& e : slot_entries(v)) {
            X(e[0], e[1]) = z[k];
            if (v.kind == VarKind::Symmetric) X(e[1], e[0]) = z[k];
            ++k;
        }
        x[v.id] = std::move(X);
    }
    return x;
}

double barrier_value(const LmiProblem& prob, const std::vector<double>& z) {
    return bval(compile(prob), z);
}

void barrier_grad_hess(const LmiProblem& prob, const std::vector<double>& z,
                       std::vector<double>& grad, Matrix& hess) {
    bgrad(compile(prob), z, grad, hess);
}

}  // namespace detail

FeasibilityResult solve_feasibility(const LmiProblem& prob, const SolveOptions& opts) {
    Compiled C = compile(prob);
    std::ostringstream diag;
    FeasibilityResult res;
    std::vector<double> z(C.nz, 0.0);
    if (!opts.warm_start.empty()) {
        res.margins = verify_assignment(prob, opts.warm_start);
        double worst = -kInf;
        for (double m : res.margins) worst = std::max(worst, m);
        if (C.con.empty() || worst <= opts.tol) {
            res.status = FeasStatus::Feasible;
            res.assignment = opts.warm_start;
            res.t_star = worst;
            res.diagnostics = "warm start verified";
            return res;
        }
        z = detail::pack(prob, opts.warm_start, 0.0);
        diag << "warm start t*=" << worst << "; ";
    } else {
        for (size_t v = 0; v < C.v.size(); ++v) {
            const VarInfo& vi = C.v[v];
            if (prob.vars[v].kind != VarKind::Symmetric) continue;
            for (int s = 0; s < vi.slots; ++s)
                if (vi.ei[s] == vi.ej[s]) z[vi.off + s] = 1.0;
        }
    }
    clamp_box(C, z);
    int iters = 0;
    const double target = -10.0 * opts.tol;
    SumtOutcome so;
    if (!C.con.empty()) {
        lse_phase(C, z, opts, iters, target, diag);
        so = sumt_phase(C, z, opts, iters, target, diag);
        if (worst_margin(C, z) > -opts.tol) pocs_phase(C, z, opts, iters, diag);
        if (worst_margin(C, z) > -opts.tol) ray_phase(C, z, diag);
    }
    res.assignment = detail::unpack(prob, z);
    res.margins = verify_assignment(prob, res.assignment);
    double worst = -kInf;
    for (double m : res.margins) worst = std::max(worst, m);
    res.t_star = C.con.empty() ? -kInf : worst;
    res.iterations = iters;
    if (C.con.empty() || worst <= opts.tol) {
        res.status = FeasStatus::Feasible;
    } else if (so.stalled && worst > std::max(10.0 * opts.tol, 1e-12 * C.scale)) {
        res.status = FeasStatus::Infeasible;
        diag << "stall certificate: t*=" << worst << " grad=" << so.gradnorm
             << " mu=" << so.mu_final << "; ";
    } else {
        res.status = FeasStatus::Undecided;
        if (iters >= opts.iter_cap) diag << "iteration cap reached; ";
    }
    diag << "verified t*=" << res.t_star;
    res.diagnostics = diag.str();
    return res;
}

FeasibilityResult solve_feasibility(const LmiProblem& prob, double tol, int iter_cap) {
    SolveOptions o;
    o.tol = tol;
    o.iter_cap = iter_cap;
    return solve_feasibility(prob, o);
}

// ---------------------------------------------------------------------------
// Assembly helpers.
// ---------------------------------------------------------------------------

namespace {

void require_var(const LmiProblem& prob, int id, VarKind kind, int rows, int cols,
                 const char* what) {
    if (id < 0 || id >= static_cast<int>(prob.vars.size()))
        throw InvalidArgument(std::string(what) + ": unknown variable");
    const LmiVariable& v = prob.vars[id];
    if (v.rows != rows || v.cols != cols)
        throw InvalidArgument(std::string(what) + ": variable has the wrong shape");
    if (kind == VarKind::Symmetric && v.kind != VarKind::Symmetric)
        throw InvalidArgument(std::string(what) + ": variable must be symmetric");
}

}  // namespace

void assemble_agent_kyp(LmiProblem& prob, const StateSpace& ss, int p_id, int q_id, int s_id,
                        int r_id, double margin) {
    const int n = ss.A.rows;
    const int m = ss.B.cols;
    if (ss.A.cols != n || ss.B.rows != n) throw InvalidArgument("assemble_agent_kyp: bad system");
    require_var(prob, p_id, VarKind::Symmetric, n, n, "assemble_agent_kyp: P");
    require_var(prob, q_id, VarKind::Symmetric, n, n, "assemble_agent_kyp: Q");
    require_var(prob, s_id, VarKind::Rectangular, n, m, "assemble_agent_kyp: S");
    require_var(prob, r_id, VarKind::Symmetric, m, m, "assemble_agent_kyp: R");
    Matrix U1 = Matrix::zeros(n + m, n);
    for (int i = 0; i < n; ++i) U1(i, i) = 1.0;
    Matrix U2 = Matrix::zeros(n + m, m);
    for (int i = 0; i < m; ++i) U2(n + i, i) = 1.0;
    AffineMatrixExpr e;
    e.dim = n + m;
    e.terms.push_back({p_id, U1 * transpose(ss.A), transpose(U1), true});
    e.terms.push_back({p_id, U1, ss.B * transpose(U2), true});
    e.terms.push_back({q_id, -1.0 * U1, transpose(U1), false});
    e.terms.push_back({s_id, -1.0 * U1, transpose(U2), true});
    e.terms.push_back({r_id, -1.0 * U2, transpose(U2), false});
    prob.add_constraint(std::move(e), margin);
    prob.add_psd(p_id);
}

void assemble_static_gain(LmiProblem& prob, const Matrix& K, int qt_id, int st_id, int rt_id,
                          double margin) {
    const int l = K.rows;
    const int n = K.cols;
    if (l < 1 || n < 1) throw InvalidArgument("assemble_static_gain: empty gain");
    require_var(prob, qt_id, VarKind::Symmetric, l, l, "assemble_static_gain: Q");
    require_var(prob, st_id, VarKind::Rectangular, l, n, "assemble_static_gain: S");
    require_var(prob, rt_id, VarKind::Symmetric, n, n, "assemble_static_gain: R");
    AffineMatrixExpr e;
    e.dim = n;
    Matrix Kt = transpose(K);
    e.terms.push_back({qt_id, -1.0 * Kt, K, false});
    e.terms.push_back({st_id, -1.0 * Kt, Matrix::identity(n), true});
    e.terms.push_back({rt_id, -1.0 * Matrix::identity(n), Matrix::identity(n), false});
    prob.add_constraint(std::move(e), margin);
}

}  // namespace qsrnet
