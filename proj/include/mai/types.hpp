#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mai {

using cdouble = std::complex<double>;

/// 2x2 complex transfer block, rows/columns ordered (d, q).
using DqBlock = Eigen::Matrix2cd;

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// SVD for square matrices; the QR preconditioner is only needed for
/// rectangular input.
using SquareSvd = Eigen::JacobiSVD<CMatrix, Eigen::NoQRPreconditioner>;

inline constexpr cdouble kJ{0.0, 1.0};

/// dq cross-coupling generator [[0, -1], [1, 0]].
inline DqBlock dq_rotation_generator() {
    DqBlock j;
    j << 0.0, -1.0, 1.0, 0.0;
    return j;
}

/// Bad user input: malformed files, invariant violations, bad selections.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: singular systems, defective matrices, non-convergence.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularMatrixError : public NumericalError {
public:
    SingularMatrixError(const std::string& what, double condition)
        : NumericalError(what + " (condition number " + std::to_string(condition) + ")"),
          condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

class DefectiveMatrixError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Evaluation of a sampled model outside its data range.
class ExtrapolationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// The requested operation needs a state-space realization that an element lacks.
class UnsupportedForOracleError : public InputError {
public:
    using InputError::InputError;
};

/// Rotation T(theta) = [[cos, -sin], [sin, cos]] aligning a local dq frame to the global one.
inline Eigen::Matrix2d frame_rotation(double theta) {
    Eigen::Matrix2d t;
    t << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return t;
}

inline double frobenius(const CMatrix& m) { return m.norm(); }

}  // namespace mai
