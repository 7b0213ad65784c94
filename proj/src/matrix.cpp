#include "qsrnet/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

namespace qsrnet {

namespace {

void check_same_shape(const Matrix& A, const Matrix& B, const char* op) {
    if (A.rows != B.rows || A.cols != B.cols)
        throw InvalidArgument(std::string(op) + ": shape mismatch");
}

std::string shape_str(const Matrix& A) {
    return std::to_string(A.rows) + "x" + std::to_string(A.cols);
}

}  // namespace

Matrix Matrix::identity(int n) {
    Matrix I(n, n);
    for (int i = 0; i < n; ++i) I(i, i) = 1.0;
    return I;
}

Matrix operator+(const Matrix& A, const Matrix& B) {
    check_same_shape(A, B, "operator+");
    Matrix C = A;
    for (size_t i = 0; i < C.a.size(); ++i) C.a[i] += B.a[i];
    return C;
}

Matrix operator-(const Matrix& A, const Matrix& B) {
    check_same_shape(A, B, "operator-");
    Matrix C = A;
    for (size_t i = 0; i < C.a.size(); ++i) C.a[i] -= B.a[i];
    return C;
}

Matrix operator*(double s, const Matrix& A) {
    Matrix C = A;
    for (double& v : C.a) v *= s;
    return C;
}

Matrix operator-(const Matrix& A) { return -1.0 * A; }

Matrix& operator+=(Matrix& A, const Matrix& B) {
    check_same_shape(A, B, "operator+=");
    for (size_t i = 0; i < A.a.size(); ++i) A.a[i] += B.a[i];
    return A;
}

Matrix& operator-=(Matrix& A, const Matrix& B) {
    check_same_shape(A, B, "operator-=");
    for (size_t i = 0; i < A.a.size(); ++i) A.a[i] -= B.a[i];
    return A;
}

void gemm_acc(const double* A, int lda, const double* B, int ldb, double* C, int ldc,
              int m, int n, int k, double alpha) {
    constexpr int BK = 64;
    constexpr int BJ = 512;
    for (int j0 = 0; j0 < n; j0 += BJ) {
        const int j1 = std::min(n, j0 + BJ);
        for (int k0 = 0; k0 < k; k0 += BK) {
            const int k1 = std::min(k, k0 + BK);
            for (int i = 0; i < m; ++i) {
                const double* ai = A + static_cast<size_t>(i) * lda;
                double* ci = C + static_cast<size_t>(i) * ldc;
                for (int kk = k0; kk < k1; ++kk) {
                    const double aik = alpha * ai[kk];
                    if (aik == 0.0) continue;
                    const double* bk = B + static_cast<size_t>(kk) * ldb;
                    for (int j = j0; j < j1; ++j) ci[j] += aik * bk[j];
                }
            }
        }
    }
}

Matrix operator*(const Matrix& A, const Matrix& B) {
    if (A.cols != B.rows)
        throw InvalidArgument("operator*: inner dimensions " + shape_str(A) + " vs " +
                              shape_str(B));
    Matrix C(A.rows, B.cols);
    gemm_acc(A.a.data(), A.cols, B.a.data(), B.cols, C.a.data(), C.cols, A.rows, B.cols,
             A.cols, 1.0);
    return C;
}

Matrix transpose(const Matrix& A) {
    Matrix T(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
    return T;
}

Matrix symmetrize(const Matrix& A) {
    if (A.rows != A.cols) throw InvalidArgument("symmetrize: matrix not square");
    Matrix S(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) S(i, j) = 0.5 * (A(i, j) + A(j, i));
    return S;
}

double frob_norm(const Matrix& A) {
    double s = 0.0;
    for (double v : A.a) s += v * v;
    return std::sqrt(s);
}

double max_abs(const Matrix& A) {
    double m = 0.0;
    for (double v : A.a) m = std::max(m, std::fabs(v));
    return m;
}

bool is_symmetric(const Matrix& A, double rel_tol) {
    if (A.rows != A.cols) return false;
    double worst = 0.0;
    for (int i = 0; i < A.rows; ++i)
        for (int j = i + 1; j < A.cols; ++j)
            worst = std::max(worst, std::fabs(A(i, j) - A(j, i)));
    return worst <= rel_tol * (1.0 + frob_norm(A));
}

Matrix block_diag(const std::vector<Matrix>& blocks) {
    int r = 0, c = 0;
    for (const Matrix& B : blocks) {
        r += B.rows;
        c += B.cols;
    }
    Matrix D(r, c);
    int i0 = 0, j0 = 0;
    for (const Matrix& B : blocks) {
        set_block(D, i0, j0, B);
        i0 += B.rows;
        j0 += B.cols;
    }
    return D;
}

void set_block(Matrix& A, int i0, int j0, const Matrix& B) {
    if (i0 < 0 || j0 < 0 || i0 + B.rows > A.rows || j0 + B.cols > A.cols)
        throw InvalidArgument("set_block: block exceeds target bounds");
    for (int i = 0; i < B.rows; ++i)
        std::memcpy(A.row(i0 + i) + j0, B.row(i), sizeof(double) * B.cols);
}

Matrix get_block(const Matrix& A, int i0, int j0, int rows, int cols) {
    if (i0 < 0 || j0 < 0 || i0 + rows > A.rows || j0 + cols > A.cols)
        throw InvalidArgument("get_block: block exceeds source bounds");
    Matrix B(rows, cols);
    for (int i = 0; i < rows; ++i)
        std::memcpy(B.row(i), A.row(i0 + i) + j0, sizeof(double) * cols);
    return B;
}

namespace {

void require_symmetric_square(const Matrix& M, const char* who) {
    if (M.rows != M.cols) throw InvalidArgument(std::string(who) + ": matrix not square");
    if (!is_symmetric(M, 1e-12))
        throw InvalidArgument(std::string(who) + ": matrix not symmetric");
}

void sort_eig_ascending(EigResult& r) {
    const int n = static_cast<int>(r.w.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return r.w[a] < r.w[b]; });
    std::vector<double> w2(n);
    Matrix V2(n, n);
    for (int j = 0; j < n; ++j) {
        w2[j] = r.w[idx[j]];
        for (int i = 0; i < n; ++i) V2(i, j) = r.V(i, idx[j]);
    }
    r.w = std::move(w2);
    r.V = std::move(V2);
}

void check_eig_residual(const Matrix& M, const EigResult& r, const char* who) {
    const int n = M.rows;
    Matrix VL = r.V;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) VL(i, j) *= r.w[j];
    const double res = frob_norm(M * r.V - VL);
    if (res > 1e-10 * (1.0 + frob_norm(M)))
        throw NumericalFailure(std::string(who) + ": residual " + std::to_string(res) +
                               " exceeds contract");
}

}  // namespace

EigResult sym_eig(const Matrix& M) {
    require_symmetric_square(M, "sym_eig");
    const int n = M.rows;
    Matrix A = symmetrize(M);
    EigResult r;
    r.V = Matrix::identity(n);
    r.w.assign(n, 0.0);
    if (n == 0) return r;

    const double fnorm = frob_norm(A);
    const double thresh = 1e-13 * fnorm;
    const int max_sweeps = 100;
    bool converged = (fnorm == 0.0);
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += 2.0 * A(p, q) * A(p, q);
        if (std::sqrt(off) <= thresh) {
            converged = true;
            break;
        }
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t;
                if (std::fabs(theta) > 1e150) {
                    t = 1.0 / (2.0 * theta);
                } else {
                    t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                    if (theta < 0.0) t = -t;
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);
                const double app = A(p, p), aqq = A(q, q);
                A(p, p) = app - t * apq;
                A(q, q) = aqq + t * apq;
                A(p, q) = 0.0;
                A(q, p) = 0.0;
                for (int i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    const double aip = A(i, p), aiq = A(i, q);
                    A(i, p) = aip - s * (aiq + tau * aip);
                    A(p, i) = A(i, p);
                    A(i, q) = aiq + s * (aip - tau * aiq);
                    A(q, i) = A(i, q);
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = r.V(i, p), viq = r.V(i, q);
                    r.V(i, p) = vip - s * (viq + tau * vip);
                    r.V(i, q) = viq + s * (vip - tau * viq);
                }
            }
        }
    }
    if (!converged) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += 2.0 * A(p, q) * A(p, q);
        if (std::sqrt(off) > thresh)
            throw NumericalFailure("sym_eig: Jacobi sweep cap reached before convergence");
    }
    for (int i = 0; i < n; ++i) r.w[i] = A(i, i);
    sort_eig_ascending(r);
    check_eig_residual(symmetrize(M), r, "sym_eig");
    return r;
}

namespace {

/// Householder reduction to tridiagonal form (classic EISPACK tred2 layout:
/// V starts as the input, d ends as the diagonal, e as the sub-diagonal).
void tred2(Matrix& V, std::vector<double>& d, std::vector<double>& e) {
    const int n = V.rows;
    for (int j = 0; j < n; ++j) d[j] = V(n - 1, j);

    for (int i = n - 1; i > 0; --i) {
        double scale = 0.0, h = 0.0;
        for (int k = 0; k < i; ++k) scale += std::fabs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (int j = 0; j < i; ++j) {
                d[j] = V(i - 1, j);
                V(i, j) = 0.0;
                V(j, i) = 0.0;
            }
        } else {
            for (int k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = (f > 0.0) ? -std::sqrt(h) : std::sqrt(h);
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for (int j = 0; j < i; ++j) e[j] = 0.0;

            for (int j = 0; j < i; ++j) {
                f = d[j];
                V(j, i) = f;
                g = e[j] + V(j, j) * f;
                for (int k = j + 1; k <= i - 1; ++k) {
                    g += V(k, j) * d[k];
                    e[k] += V(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (int j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (int j = 0; j < i; ++j) e[j] -= hh * d[j];
            for (int j = 0; j < i; ++j) {
                f = d[j];
                g = e[j];
                for (int k = j; k <= i - 1; ++k) V(k, j) -= (f * e[k] + g * d[k]);
                d[j] = V(i - 1, j);
                V(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    for (int i = 0; i < n - 1; ++i) {
        V(n - 1, i) = V(i, i);
        V(i, i) = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            for (int k = 0; k <= i; ++k) d[k] = V(k, i + 1) / h;
            for (int j = 0; j <= i; ++j) {
                double g = 0.0;
                for (int k = 0; k <= i; ++k) g += V(k, i + 1) * V(k, j);
                for (int k = 0; k <= i; ++k) V(k, j) -= g * d[k];
            }
        }
        for (int k = 0; k <= i; ++k) V(k, i + 1) = 0.0;
    }
    for (int j = 0; j < n; ++j) {
        d[j] = V(n - 1, j);
        V(n - 1, j) = 0.0;
    }
    V(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on a symmetric tridiagonal (d, e), accumulating the
/// rotations into V's columns.  Pass V with zero rows to skip vectors.
void tql2(std::vector<double>& d, std::vector<double>& e, Matrix& V) {
    const int n = static_cast<int>(d.size());
    const bool want_vectors = (V.rows == n);
    for (int i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;

    double f = 0.0, tst1 = 0.0;
    const double eps = std::pow(2.0, -52.0);
    for (int l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::fabs(d[l]) + std::fabs(e[l]));
        int m = l;
        while (m < n) {
            if (std::fabs(e[m]) <= eps * tst1) break;
            ++m;
        }
        if (m > l) {
            int iter = 0;
            do {
                if (++iter > 50)
                    throw NumericalFailure("sym_eig_fast: QL iteration cap reached");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0.0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (int i = l + 2; i < n; ++i) d[i] -= h;
                f += h;

                p = d[m];
                double c = 1.0, c2 = c, c3 = c;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (int i = m - 1; i >= l; --i) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = std::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if (want_vectors) {
                        for (int k = 0; k < n; ++k) {
                            h = V(k, i + 1);
                            V(k, i + 1) = s * V(k, i) + c * h;
                            V(k, i) = c * V(k, i) - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::fabs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

}  // namespace

EigResult sym_eig_fast(const Matrix& M) {
    require_symmetric_square(M, "sym_eig_fast");
    const int n = M.rows;
    EigResult r;
    r.V = symmetrize(M);
    r.w.assign(n, 0.0);
    if (n == 0) return r;
    std::vector<double> e(n, 0.0);
    tred2(r.V, r.w, e);
    tql2(r.w, e, r.V);
    sort_eig_ascending(r);
    check_eig_residual(symmetrize(M), r, "sym_eig_fast");
    return r;
}

std::vector<double> sym_eigvals_fast(const Matrix& M) {
    require_symmetric_square(M, "sym_eigvals_fast");
    const int n = M.rows;
    if (n == 0) return {};
    Matrix V = symmetrize(M);
    std::vector<double> d(n, 0.0), e(n, 0.0);
    tred2(V, d, e);
    Matrix none(0, 0);
    tql2(d, e, none);
    std::sort(d.begin(), d.end());
    return d;
}

double sym_eig_max(const Matrix& M) {
    const std::vector<double> w = sym_eigvals_fast(M);
    if (w.empty()) throw InvalidArgument("sym_eig_max: empty matrix");
    return w.back();
}

bool is_negdef(const Matrix& M, double margin) {
    require_symmetric_square(M, "is_negdef");
    if (M.rows == 0) return true;

    const double lam_max = sym_eig(M).w.back();
    const bool by_eig = (lam_max <= -margin);

    const double tau = 1e-12 * (1.0 + frob_norm(M));
    Matrix shifted = -1.0 * symmetrize(M);
    for (int i = 0; i < shifted.rows; ++i) shifted(i, i) -= margin;
    const bool by_chol = cholesky(shifted, tau).ok;

    if (by_eig != by_chol)
        throw NumericalFailure("is_negdef: eigenvalue and Cholesky routes disagree near margin");
    return by_eig;
}

Matrix lu_solve(const Matrix& A, const Matrix& B) {
    if (A.rows != A.cols) throw InvalidArgument("lu_solve: A not square");
    if (A.rows != B.rows) throw InvalidArgument("lu_solve: B row count mismatch");
    const int n = A.rows, m = B.cols;
    Matrix LU = A;
    Matrix X = B;
    const double pivot_floor = 1e-13 * frob_norm(A);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::fabs(LU(k, k));
        for (int i = k + 1; i < n; ++i) {
            const double v = std::fabs(LU(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best < pivot_floor || best == 0.0)
            throw SingularMatrix("lu_solve: pivot " + std::to_string(best) +
                                 " below threshold at column " + std::to_string(k));
        if (piv != k) {
            for (int j = 0; j < n; ++j) std::swap(LU(k, j), LU(piv, j));
            for (int j = 0; j < m; ++j) std::swap(X(k, j), X(piv, j));
        }
        const double inv = 1.0 / LU(k, k);
        for (int i = k + 1; i < n; ++i) {
            const double f = LU(i, k) * inv;
            LU(i, k) = f;
            if (f == 0.0) continue;
            for (int j = k + 1; j < n; ++j) LU(i, j) -= f * LU(k, j);
            for (int j = 0; j < m; ++j) X(i, j) -= f * X(k, j);
        }
    }
    for (int k = n - 1; k >= 0; --k) {
        const double inv = 1.0 / LU(k, k);
        for (int j = 0; j < m; ++j) {
            double s = X(k, j);
            for (int t = k + 1; t < n; ++t) s -= LU(k, t) * X(t, j);
            X(k, j) = s * inv;
        }
    }
    return X;
}

Matrix inverse(const Matrix& A) { return lu_solve(A, Matrix::identity(A.rows)); }

Matrix qr_solve(const Matrix& A, const Matrix& B) {
    const int m = A.rows, n = A.cols;
    if (m < n) throw InvalidArgument("qr_solve: system is underdetermined");
    if (B.rows != m) throw InvalidArgument("qr_solve: right-hand side row mismatch");
    Matrix R = A;
    Matrix Y = B;
    const double floor = 1e-13 * frob_norm(A);

    std::vector<double> v(m);
    for (int k = 0; k < n; ++k) {
        double alpha = 0.0;
        for (int i = k; i < m; ++i) alpha += R(i, k) * R(i, k);
        alpha = std::sqrt(alpha);
        if (R(k, k) > 0.0) alpha = -alpha;
        const double vk = R(k, k) - alpha;
        double vnorm2 = vk * vk;
        v[k] = vk;
        for (int i = k + 1; i < m; ++i) {
            v[i] = R(i, k);
            vnorm2 += v[i] * v[i];
        }
        if (std::fabs(alpha) < floor || alpha == 0.0)
            throw SingularMatrix("qr_solve: rank deficiency at column " + std::to_string(k));
        if (vnorm2 == 0.0) continue;
        const double beta = 2.0 / vnorm2;
        for (int j = k; j < n; ++j) {
            double s = 0.0;
            for (int i = k; i < m; ++i) s += v[i] * R(i, j);
            s *= beta;
            for (int i = k; i < m; ++i) R(i, j) -= s * v[i];
        }
        for (int j = 0; j < Y.cols; ++j) {
            double s = 0.0;
            for (int i = k; i < m; ++i) s += v[i] * Y(i, j);
            s *= beta;
            for (int i = k; i < m; ++i) Y(i, j) -= s * v[i];
        }
    }
    Matrix X(n, B.cols);
    for (int j = 0; j < B.cols; ++j)
        for (int k = n - 1; k >= 0; --k) {
            double s = Y(k, j);
            for (int t = k + 1; t < n; ++t) s -= R(k, t) * X(t, j);
            X(k, j) = s / R(k, k);
        }
    return X;
}

namespace {

/// In-place blocked lower Cholesky of W + shift I (lower triangle of W read,
/// full W overwritten with L, upper zeroed).  Returns false on a bad pivot.
bool chol_factor_inplace(Matrix& W, double shift, double& logdet) {
    const int n = W.rows;
    constexpr int NB = 96;
    logdet = 0.0;
    for (int i = 0; i < n; ++i) W(i, i) += shift;

    for (int k0 = 0; k0 < n; k0 += NB) {
        const int k1 = std::min(n, k0 + NB);
        // Unblocked factor of the panel columns [k0, k1), rows [j, n).
        for (int j = k0; j < k1; ++j) {
            double d = W(j, j);
            const double* wj = W.row(j);
            for (int t = k0; t < j; ++t) d -= wj[t] * wj[t];
            if (!(d > 0.0)) return false;
            const double ljj = std::sqrt(d);
            logdet += 2.0 * std::log(ljj);
            W(j, j) = ljj;
            const double inv = 1.0 / ljj;
            for (int i = j + 1; i < n; ++i) {
                double s = W(i, j);
                const double* wi = W.row(i);
                for (int t = k0; t < j; ++t) s -= wi[t] * wj[t];
                W(i, j) = s * inv;
            }
        }
        // Trailing update: W[k1:, k1:] -= P P^T, lower blocks only.
        if (k1 < n) {
            const int kb = k1 - k0;
            const int rest = n - k1;
            Matrix PT(kb, rest);
            for (int i = 0; i < rest; ++i)
                for (int t = 0; t < kb; ++t) PT(t, i) = W(k1 + i, k0 + t);
            constexpr int RB = 128;
            for (int i0 = 0; i0 < rest; i0 += RB) {
                const int ib = std::min(RB, rest - i0);
                for (int j0 = 0; j0 <= i0; j0 += RB) {
                    const int jb = std::min(RB, rest - j0);
                    gemm_acc(W.row(k1 + i0) + k0, W.cols, PT.a.data() + j0, PT.cols,
                             W.row(k1 + i0) + k1 + j0, W.cols, ib, jb, kb, -1.0);
                }
            }
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) W(i, j) = 0.0;
    return true;
}

}  // namespace

CholResult cholesky(const Matrix& M, double shift) {
    if (M.rows != M.cols) throw InvalidArgument("cholesky: matrix not square");
    CholResult r;
    r.L = M;
    r.ok = chol_factor_inplace(r.L, shift, r.logdet);
    if (!r.ok) {
        r.L = Matrix(0, 0);
        r.logdet = 0.0;
    }
    return r;
}

std::vector<double> chol_solve(const Matrix& L, const std::vector<double>& b) {
    const int n = L.rows;
    if (static_cast<int>(b.size()) != n)
        throw InvalidArgument("chol_solve: right-hand side length mismatch");
    std::vector<double> x(b);
    for (int i = 0; i < n; ++i) {
        double s = x[i];
        const double* li = L.row(i);
        for (int t = 0; t < i; ++t) s -= li[t] * x[t];
        x[i] = s / li[i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = x[i];
        for (int t = i + 1; t < n; ++t) s -= L(t, i) * x[t];
        x[i] = s / L(i, i);
    }
    return x;
}

Matrix chol_inverse(const Matrix& L) {
    const int n = L.rows;
    Matrix X(n, n);
    std::vector<double> e(n, 0.0);
    for (int j = 0; j < n; ++j) {
        e[j] = 1.0;
        std::vector<double> col = chol_solve(L, e);
        e[j] = 0.0;
        for (int i = 0; i < n; ++i) X(i, j) = col[i];
    }
    return symmetrize(X);
}

}  // namespace qsrnet
