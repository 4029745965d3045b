#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace acdc {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RowVector = Eigen::RowVectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Grid file or model does not satisfy the structural invariants.
class GridError : public Error {
public:
    using Error::Error;
};

/// Raised when a dense system cannot be factorized at the current point.
class SingularMatrixError : public Error {
public:
    SingularMatrixError(const std::string& what, int row, double rcond)
        : Error(what), row_(row), rcond_(rcond) {}
    int row() const { return row_; }
    double rcond() const { return rcond_; }

private:
    int row_;
    double rcond_;
};

}  // namespace acdc
