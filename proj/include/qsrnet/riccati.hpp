#pragma once

#include <cstdint>
#include <vector>

#include "qsrnet/matrix.hpp"

namespace qsrnet {

/// Continuous-time linear system x' = A x + B u.
struct StateSpace {
    Matrix A;
    Matrix B;
};

/// Physical constants of one quadrotor (SI units).
struct QuadrotorParams {
    double mass = 0.5;
    double arm = 0.17;
    double ixx = 3.2e-3;
    double iyy = 3.2e-3;
    double izz = 5.5e-3;
    double kf = 6.11e-8;
    double km = 1.5e-9;
    double gravity = 9.81;
};

/// Hover linearisation of the quadrotor rigid-body model.  State ordering:
/// position (x, y, z), attitude (roll, pitch, yaw), linear velocity, body
/// rates; inputs are the four rotor-speed deviations from hover.
StateSpace quadrotor_linearize(const QuadrotorParams& p);

/// `count` quadrotors with mass and arm length independently scaled by
/// uniform draws from [2/3, 4/3] (mass first, then arm, per vehicle).
std::vector<QuadrotorParams> randomize_fleet(int count, uint64_t seed);

/// Stabilising solution P of A'P + PA - P B Rw^{-1} B' P + Q = 0 via the
/// matrix sign iteration Z <- (cZ + (cZ)^{-1}) / 2 on the Hamiltonian, with
/// determinant-free norm scaling.  Residual contract:
/// ||A'P + PA - P B Rw^{-1} B' P + Q||_F <= 1e-8 * (1 + ||P||_F^2).
/// Raises NumericalFailure when the iteration breaks down and
/// NotStabilizable when no stabilising solution exists.
Matrix care_sign(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& Rw);

/// Solution X of A'X + XA + Q = 0 for Hurwitz A, via the same sign iteration
/// with an empty input channel.  Raises NotStabilizable when A is not Hurwitz.
Matrix lyap_sign(const Matrix& A, const Matrix& Q);

/// True iff every eigenvalue of A has strictly negative real part, certified
/// by a positive definite solution of A'X + XA = -I.
bool is_hurwitz(const Matrix& A);

struct LqrResult {
    Matrix K;                ///< state feedback u = -K x
    Matrix P;                ///< Riccati solution backing K
    Matrix closed_loop_lyap; ///< X > 0 with (A-BK)'X + X(A-BK) = -I
    double care_residual = 0.0;
};

/// LQR state feedback K = Rw^{-1} B' P with a closed-loop Hurwitz
/// certificate attached.
LqrResult lqr_gain(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& Rw);

}  // namespace qsrnet
