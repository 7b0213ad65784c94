#include "qsrnet/riccati.hpp"

#include <cmath>
#include <string>

#include "qsrnet/rng.hpp"

namespace qsrnet {

StateSpace quadrotor_linearize(const QuadrotorParams& p) {
    if (p.mass <= 0.0 || p.arm <= 0.0 || p.ixx <= 0.0 || p.iyy <= 0.0 || p.izz <= 0.0 ||
        p.kf <= 0.0 || p.km <= 0.0 || p.gravity <= 0.0)
        throw InvalidArgument("quadrotor_linearize: parameters must be positive");

    Matrix A(12, 12);
    A(0, 6) = A(1, 7) = A(2, 8) = 1.0;   // position <- velocity
    A(3, 9) = A(4, 10) = A(5, 11) = 1.0; // attitude <- body rate
    A(6, 4) = p.gravity;                 // x'' <- pitch
    A(7, 3) = -p.gravity;                // y'' <- roll

    const double wh = std::sqrt(p.mass * p.gravity / (4.0 * p.kf));
    const double a = 2.0 * p.kf * wh;  // thrust per unit rotor-speed deviation
    const double bm = 2.0 * p.km * wh; // yaw torque per unit rotor-speed deviation

    Matrix B(12, 4);
    for (int j = 0; j < 4; ++j) B(8, j) = a / p.mass;
    B(9, 1) = a * p.arm / p.ixx;
    B(9, 3) = -a * p.arm / p.ixx;
    B(10, 2) = a * p.arm / p.iyy;
    B(10, 0) = -a * p.arm / p.iyy;
    B(11, 0) = -bm / p.izz;
    B(11, 1) = bm / p.izz;
    B(11, 2) = -bm / p.izz;
    B(11, 3) = bm / p.izz;
    return {A, B};
}

std::vector<QuadrotorParams> randomize_fleet(int count, uint64_t seed) {
    if (count <= 0) throw InvalidArgument("randomize_fleet: count must be positive");
    Rng rng(seed);
    std::vector<QuadrotorParams> fleet(count);
    for (QuadrotorParams& p : fleet) {
        p.mass *= rng.uniform(2.0 / 3.0, 4.0 / 3.0);
        p.arm *= rng.uniform(2.0 / 3.0, 4.0 / 3.0);
    }
    return fleet;
}

namespace {

/// Matrix sign of Z by Newton iteration with norm scaling.  Throws
/// NumericalFailure if the iterate goes singular or fails to settle.
Matrix matrix_sign(Matrix Z, int max_steps = 100) {
    const int n = Z.rows;
    for (int step = 0; step < max_steps; ++step) {
        Matrix Zinv;
        try {
            Zinv = inverse(Z);
        } catch (const SingularMatrix&) {
            throw NumericalFailure("matrix_sign: iterate became singular");
        }
        const double nz = frob_norm(Z), ni = frob_norm(Zinv);
        const double c = std::sqrt(ni / nz);
        Matrix Znext(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                Znext(i, j) = 0.5 * (c * Z(i, j) + Zinv(i, j) / c);
        const double drift = frob_norm(Znext - Z);
        Z = Znext;
        if (drift <= 1e-13 * (1.0 + frob_norm(Z))) return Z;
    }
    throw NumericalFailure("matrix_sign: no convergence within step cap");
}

/// Solve the overdetermined stable-subspace system
///   [S12; S22 + I] P = -[S11 + I; S21]
/// by normal equations.  S is the 2n x 2n Hamiltonian sign.
Matrix extract_riccati_solution(const Matrix& S) {
    const int n = S.rows / 2;
    Matrix M(2 * n, n), rhs(2 * n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            M(i, j) = S(i, n + j);
            M(n + i, j) = S(n + i, n + j) + (i == j ? 1.0 : 0.0);
            rhs(i, j) = -(S(i, j) + (i == j ? 1.0 : 0.0));
            rhs(n + i, j) = -S(n + i, j);
        }
    Matrix P;
    try {
        P = qr_solve(M, rhs);
    } catch (const SingularMatrix&) {
        throw NotStabilizable("riccati: stable subspace is not a graph over the state space");
    }
    return symmetrize(P);
}

double care_residual_norm(const Matrix& A, const Matrix& G, const Matrix& Q, const Matrix& P) {
    // G = B Rw^{-1} B'; residual A'P + PA - P G P + Q.
    const Matrix R = transpose(A) * P + P * A - P * (G * P) + Q;
    return frob_norm(R);
}

}  // namespace

Matrix care_sign(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& Rw) {
    const int n = A.rows;
    if (A.cols != n) throw InvalidArgument("care_sign: A not square");
    if (B.rows != n) throw InvalidArgument("care_sign: B row count mismatch");
    if (Q.rows != n || Q.cols != n) throw InvalidArgument("care_sign: Q shape mismatch");
    const int m = B.cols;
    if (Rw.rows != m || Rw.cols != m) throw InvalidArgument("care_sign: Rw shape mismatch");
    if (!is_symmetric(Q)) throw InvalidArgument("care_sign: Q not symmetric");
    if (m > 0 && !is_symmetric(Rw)) throw InvalidArgument("care_sign: Rw not symmetric");

    Matrix G(n, n);
    if (m > 0) {
        const Matrix Bt = transpose(B);
        G = B * lu_solve(Rw, Bt);
        G = symmetrize(G);
    }

    Matrix H(2 * n, 2 * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            H(i, j) = A(i, j);
            H(i, n + j) = -G(i, j);
            H(n + i, j) = -Q(i, j);
            H(n + i, n + j) = -A(j, i);
        }

    const Matrix S = matrix_sign(std::move(H));
    const Matrix P = extract_riccati_solution(S);

    const double res = care_residual_norm(A, G, Q, P);
    if (res > 1e-8 * (1.0 + frob_norm(P) * frob_norm(P)))
        throw NotStabilizable("care_sign: residual " + std::to_string(res) +
                              " rejects the extracted solution");
    return P;
}

Matrix lyap_sign(const Matrix& A, const Matrix& Q) {
    const int n = A.rows;
    if (A.cols != n) throw InvalidArgument("lyap_sign: A not square");
    if (Q.rows != n || Q.cols != n) throw InvalidArgument("lyap_sign: Q shape mismatch");
    if (!is_symmetric(Q)) throw InvalidArgument("lyap_sign: Q not symmetric");

    Matrix H(2 * n, 2 * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            H(i, j) = A(i, j);
            H(n + i, j) = -Q(i, j);
            H(n + i, n + j) = -A(j, i);
        }
    const Matrix S = matrix_sign(std::move(H));

    // For Hurwitz A the sign is [[-I, 0], [-2X, I]].
    double dev = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            dev = std::max(dev, std::fabs(S(i, j) + (i == j ? 1.0 : 0.0)));
            dev = std::max(dev, std::fabs(S(i, n + j)));
        }
    if (dev > 1e-6)
        throw NotStabilizable("lyap_sign: matrix is not Hurwitz (sign block deviation " +
                              std::to_string(dev) + ")");

    Matrix X(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) X(i, j) = -0.5 * S(n + i, j);
    X = symmetrize(X);

    const double res = frob_norm(transpose(A) * X + X * A + Q);
    if (res > 1e-8 * (1.0 + frob_norm(X)))
        throw NumericalFailure("lyap_sign: residual " + std::to_string(res) +
                               " exceeds contract");
    return X;
}

bool is_hurwitz(const Matrix& A) {
    try {
        const Matrix X = lyap_sign(A, Matrix::identity(A.rows));
        return cholesky(X).ok;
    } catch (const NotStabilizable&) {
        return false;
    } catch (const NumericalFailure&) {
        return false;
    }
}

LqrResult lqr_gain(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& Rw) {
    LqrResult r;
    r.P = care_sign(A, B, Q, Rw);
    r.K = lu_solve(Rw, transpose(B) * r.P);

    Matrix G = symmetrize(B * lu_solve(Rw, transpose(B)));
    r.care_residual = care_residual_norm(A, G, Q, r.P);

    const Matrix Acl = A - B * r.K;
    r.closed_loop_lyap = lyap_sign(Acl, Matrix::identity(A.rows));
    if (!cholesky(r.closed_loop_lyap).ok)
        throw NumericalFailure("lqr_gain: closed-loop certificate not positive definite");
    return r;
}

}  // namespace qsrnet
