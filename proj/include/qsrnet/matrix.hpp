#pragma once

#include <vector>

#include "qsrnet/errors.hpp"

namespace qsrnet {

/// Dense row-major matrix of doubles.  Deliberately plain: public fields,
/// value semantics, bounds left to the caller in release builds.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {
        if (r < 0 || c < 0) throw InvalidArgument("Matrix: negative dimension");
    }

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

    static Matrix identity(int n);
    static Matrix zeros(int r, int c) { return Matrix(r, c); }
};

Matrix operator+(const Matrix& A, const Matrix& B);
Matrix operator-(const Matrix& A, const Matrix& B);
Matrix operator*(const Matrix& A, const Matrix& B);
Matrix operator*(double s, const Matrix& A);
Matrix operator-(const Matrix& A);
Matrix& operator+=(Matrix& A, const Matrix& B);
Matrix& operator-=(Matrix& A, const Matrix& B);

Matrix transpose(const Matrix& A);
Matrix symmetrize(const Matrix& A);
double frob_norm(const Matrix& A);
double max_abs(const Matrix& A);
bool is_symmetric(const Matrix& A, double rel_tol = 1e-12);

/// C (m x n) += A (m x k) * B (k x n), raw pointers with leading dimensions.
/// The one inner kernel every heavy routine funnels through.
void gemm_acc(const double* A, int lda, const double* B, int ldb, double* C, int ldc,
              int m, int n, int k, double alpha);

/// Stitch square blocks along the diagonal.
Matrix block_diag(const std::vector<Matrix>& blocks);

/// Copy `B` into `A` with its top-left corner at (i0, j0).
void set_block(Matrix& A, int i0, int j0, const Matrix& B);
Matrix get_block(const Matrix& A, int i0, int j0, int rows, int cols);

/// Eigendecomposition of a symmetric matrix: M = V diag(w) V^T, w ascending.
struct EigResult {
    std::vector<double> w;
    Matrix V;
};

/// Cyclic Jacobi rotations; off-diagonal threshold 1e-13 * ||M||_F, at most 100
/// sweeps.  Residual contract: ||M V - V diag(w)||_F <= 1e-10 * (1 + ||M||_F).
EigResult sym_eig(const Matrix& M);

/// Householder tridiagonalisation + implicit-shift QL.  Same contract as
/// sym_eig but much faster for n beyond a few dozen; used by iterative solvers
/// for progress tracking.  Public results always come from sym_eig.
EigResult sym_eig_fast(const Matrix& M);
std::vector<double> sym_eigvals_fast(const Matrix& M);

/// Largest eigenvalue of a symmetric matrix (QL, values only).
double sym_eig_max(const Matrix& M);

/// True iff M is symmetric and lambda_max(M) <= -margin.  Two independent
/// routes (Jacobi eigenvalues; Cholesky of -(M + margin I) with a relative
/// tolerance shift) must agree; disagreement raises NumericalFailure.
bool is_negdef(const Matrix& M, double margin = 0.0);

/// Solve A X = B by LU with partial pivoting.  A pivot smaller than
/// 1e-13 * ||A||_F raises SingularMatrix.
Matrix lu_solve(const Matrix& A, const Matrix& B);
Matrix inverse(const Matrix& A);

/// Least-squares solve of the (possibly overdetermined) system A X = B by
/// Householder QR.  A diagonal of R smaller than 1e-13 * ||A||_F raises
/// SingularMatrix (rank deficiency).
Matrix qr_solve(const Matrix& A, const Matrix& B);

/// Blocked lower Cholesky of a symmetric matrix.  ok=false when a pivot
/// (shifted by `shift` on the diagonal) is not positive, i.e. M + shift I
/// is not positive definite.
struct CholResult {
    bool ok = false;
    Matrix L;
    double logdet = 0.0;
};
CholResult cholesky(const Matrix& M, double shift = 0.0);

/// Solve L y = b then L^T x = y for a lower-triangular L (in place on a copy).
std::vector<double> chol_solve(const Matrix& L, const std::vector<double>& b);

/// Inverse from a lower Cholesky factor: (L L^T)^{-1}.
Matrix chol_inverse(const Matrix& L);

}  // namespace qsrnet
