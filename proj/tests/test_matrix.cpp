#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "qsrnet/matrix.hpp"

using namespace qsrnet;

namespace {

std::mt19937_64 rng(12345);

double unif(double lo, double hi) {
    const double u = (rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

Matrix random_matrix(int r, int c, double scale = 1.0) {
    Matrix M(r, c);
    for (double& v : M.a) v = scale * unif(-1.0, 1.0);
    return M;
}

Matrix random_symmetric(int n, double scale = 1.0) {
    return symmetrize(random_matrix(n, n, scale));
}

Matrix random_spd(int n) {
    Matrix A = random_matrix(n, n);
    Matrix M = transpose(A) * A;
    for (int i = 0; i < n; ++i) M(i, i) += n;
    return M;
}

Matrix naive_matmul(const Matrix& A, const Matrix& B) {
    Matrix C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < B.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += A(i, k) * B(k, j);
            C(i, j) = s;
        }
    return C;
}

}  // namespace

TEST_CASE("matmul agrees with the naive triple loop across shapes") {
    for (auto [m, k, n] : {std::tuple{1, 1, 1}, {3, 7, 2}, {64, 64, 64}, {65, 33, 130},
                           {130, 65, 7}, {5, 200, 5}}) {
        Matrix A = random_matrix(m, k), B = random_matrix(k, n);
        Matrix C = A * B, D = naive_matmul(A, B);
        CHECK(frob_norm(C - D) <= 1e-12 * (1.0 + frob_norm(D)));
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Matrix A(2, 3), B(4, 2);
    CHECK_THROWS_AS(A * B, InvalidArgument);
}

TEST_CASE("transpose, symmetrize, block helpers") {
    Matrix A = random_matrix(4, 6);
    Matrix T = transpose(A);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) CHECK(T(j, i) == A(i, j));

    Matrix S = symmetrize(random_matrix(5, 5));
    CHECK(is_symmetric(S));

    Matrix big(7, 9);
    Matrix blk = random_matrix(3, 4);
    set_block(big, 2, 3, blk);
    CHECK(frob_norm(get_block(big, 2, 3, 3, 4) - blk) == 0.0);
    CHECK_THROWS_AS(set_block(big, 6, 8, blk), InvalidArgument);
}

TEST_CASE("sym_eig reproduces analytic 3x3 spectrum") {
    // Tridiagonal [[2,1,0],[1,2,1],[0,1,2]] has eigenvalues 2 - sqrt(2), 2, 2 + sqrt(2).
    Matrix M(3, 3);
    M(0, 0) = 2; M(0, 1) = 1;
    M(1, 0) = 1; M(1, 1) = 2; M(1, 2) = 1;
    M(2, 1) = 1; M(2, 2) = 2;
    EigResult r = sym_eig(M);
    CHECK(r.w[0] == doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-12));
    CHECK(r.w[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.w[2] == doctest::Approx(2.0 + std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("sym_eig satisfies residual, orthogonality and ordering contracts") {
    for (int n : {1, 2, 5, 24, 60}) {
        Matrix M = random_symmetric(n, 3.0);
        EigResult r = sym_eig(M);
        for (size_t i = 1; i < r.w.size(); ++i) CHECK(r.w[i - 1] <= r.w[i]);

        Matrix VL = r.V;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) VL(i, j) *= r.w[j];
        CHECK(frob_norm(M * r.V - VL) <= 1e-10 * (1.0 + frob_norm(M)));
        CHECK(frob_norm(transpose(r.V) * r.V - Matrix::identity(n)) <= 1e-10 * n);
    }
}

TEST_CASE("sym_eig rejects non-symmetric input") {
    Matrix M(2, 2);
    M(0, 1) = 1.0;  // strictly upper entry only
    CHECK_THROWS_AS(sym_eig(M), InvalidArgument);
}

TEST_CASE("sym_eig_fast matches the Jacobi route") {
    for (int n : {2, 7, 40, 120}) {
        Matrix M = random_symmetric(n, 2.0);
        EigResult slow = sym_eig(M);
        EigResult fast = sym_eig_fast(M);
        const std::vector<double> vals = sym_eigvals_fast(M);
        for (int i = 0; i < n; ++i) {
            CHECK(fast.w[i] == doctest::Approx(slow.w[i]).epsilon(1e-9).scale(1.0 + frob_norm(M)));
            CHECK(vals[i] == doctest::Approx(slow.w[i]).epsilon(1e-9).scale(1.0 + frob_norm(M)));
        }
        CHECK(sym_eig_max(M) == doctest::Approx(slow.w.back()).epsilon(1e-9));
    }
}

TEST_CASE("block_diag spectrum is the union of block spectra") {
    Matrix A = random_symmetric(3), B = random_symmetric(4), C = random_symmetric(2);
    Matrix D = block_diag({A, B, C});
    CHECK(D.rows == 9);
    std::vector<double> expect;
    for (const Matrix* M : {&A, &B, &C})
        for (double w : sym_eig(*M).w) expect.push_back(w);
    std::sort(expect.begin(), expect.end());
    EigResult r = sym_eig(D);
    for (int i = 0; i < 9; ++i)
        CHECK(r.w[i] == doctest::Approx(expect[i]).epsilon(1e-11));
}

TEST_CASE("is_negdef basic verdicts") {
    Matrix m1 = -1.0 * Matrix::identity(3);
    CHECK(is_negdef(m1, 0.0));
    CHECK(is_negdef(m1, 0.5));
    CHECK_FALSE(is_negdef(m1, 1.5));

    Matrix z(2, 2);
    CHECK(is_negdef(z, 0.0));  // boundary: zero matrix, zero margin

    Matrix pos = Matrix::identity(2);
    CHECK_FALSE(is_negdef(pos, 0.0));

    Matrix ns(2, 2);
    ns(0, 1) = 1.0;
    CHECK_THROWS_AS(is_negdef(ns, 0.0), InvalidArgument);
}

TEST_CASE("is_negdef dual routes agree on random batches") {
    for (int n : {2, 6, 12}) {
        for (int trial = 0; trial < 1000; ++trial) {
            Matrix M = random_symmetric(n, 2.0);
            const double margin = std::fabs(unif(0.0, 0.5));
            const bool v = is_negdef(M, margin);  // throws on route disagreement
            const bool oracle = (sym_eigvals_fast(M).back() <= -margin);
            CHECK(v == oracle);
        }
    }
}

TEST_CASE("lu_solve hits the residual contract and flags singularity") {
    for (int n : {1, 4, 20, 80}) {
        Matrix A = random_matrix(n, n);
        for (int i = 0; i < n; ++i) A(i, i) += n;  // diagonally dominant: well conditioned
        Matrix X = random_matrix(n, 3);
        Matrix B = A * X;
        Matrix Xs = lu_solve(A, B);
        CHECK(frob_norm(Xs - X) <= 1e-9 * (1.0 + frob_norm(X)));
    }

    Matrix S(3, 3);
    for (int j = 0; j < 3; ++j) {
        S(0, j) = 1.0;
        S(1, j) = 2.0;  // row 1 = 2 * row 0: rank deficient
        S(2, j) = unif(0.0, 1.0);
    }
    CHECK_THROWS_AS(lu_solve(S, Matrix::identity(3)), SingularMatrix);

    Matrix I2 = Matrix::identity(2);
    Matrix Ainv = inverse(random_spd(2));
    CHECK(Ainv.rows == 2);
    CHECK_FALSE(frob_norm(I2 - I2 * I2) > 0.0);
}

TEST_CASE("cholesky factors SPD matrices and rejects indefinite ones") {
    for (int n : {1, 5, 37, 120}) {
        Matrix M = random_spd(n);
        CholResult c = cholesky(M);
        REQUIRE(c.ok);
        CHECK(frob_norm(c.L * transpose(c.L) - M) <= 1e-10 * (1.0 + frob_norm(M)));

        double logdet_eig = 0.0;
        for (double w : sym_eig_fast(M).w) logdet_eig += std::log(w);
        CHECK(c.logdet == doctest::Approx(logdet_eig).epsilon(1e-8));

        std::vector<double> b(n);
        for (double& v : b) v = unif(-1.0, 1.0);
        std::vector<double> x = chol_solve(c.L, b);
        Matrix xv(n, 1);
        for (int i = 0; i < n; ++i) xv(i, 0) = x[i];
        Matrix r = M * xv;
        double err = 0.0;
        for (int i = 0; i < n; ++i) err += (r(i, 0) - b[i]) * (r(i, 0) - b[i]);
        CHECK(std::sqrt(err) <= 1e-9 * (1.0 + frob_norm(M)));

        Matrix Minv = chol_inverse(c.L);
        CHECK(frob_norm(M * Minv - Matrix::identity(n)) <= 1e-8 * n);
    }

    Matrix indef = Matrix::identity(3);
    indef(2, 2) = -0.5;
    CHECK_FALSE(cholesky(indef).ok);
    CHECK(cholesky(indef, 2.0).ok);  // shift rescues it
}

TEST_CASE("qr_solve handles square, overdetermined and rank-deficient systems") {
    Matrix A = random_matrix(6, 6);
    for (int i = 0; i < 6; ++i) A(i, i) += 4.0;
    Matrix X = random_matrix(6, 2);
    Matrix Xs = qr_solve(A, A * X);
    CHECK(frob_norm(Xs - X) <= 1e-10 * (1.0 + frob_norm(X)));

    // Overdetermined consistent system recovers the generator exactly.
    Matrix T = random_matrix(9, 4);
    Matrix W = random_matrix(4, 3);
    Matrix Ws = qr_solve(T, T * W);
    CHECK(frob_norm(Ws - W) <= 1e-9 * (1.0 + frob_norm(W)));

    // Least-squares residual is orthogonal to the column space.
    Matrix b = random_matrix(9, 1);
    Matrix xls = qr_solve(T, b);
    Matrix resid = T * xls - b;
    CHECK(frob_norm(transpose(T) * resid) <= 1e-10 * (1.0 + frob_norm(b)));

    Matrix D(5, 3);
    for (int i = 0; i < 5; ++i) {
        D(i, 0) = unif(-1.0, 1.0);
        D(i, 1) = 2.0 * D(i, 0);  // dependent column
        D(i, 2) = unif(-1.0, 1.0);
    }
    CHECK_THROWS_AS(qr_solve(D, random_matrix(5, 1)), SingularMatrix);
}

TEST_CASE("cholesky shift matches explicit diagonal offset") {
    Matrix M = random_symmetric(9);
    Matrix Moff = M;
    for (int i = 0; i < 9; ++i) Moff(i, i) += 11.0;
    CholResult a = cholesky(M, 11.0);
    CholResult b = cholesky(Moff);
    REQUIRE(a.ok);
    REQUIRE(b.ok);
    CHECK(a.logdet == doctest::Approx(b.logdet).epsilon(1e-12));
}
