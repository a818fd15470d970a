#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ddec/kernel.hpp"

namespace ddec {

/// The tuple (Lambda_j, A_j, B, g) of a linear difference delay equation
///   x(t) = sum_j A_j x(t - Lambda_j) + int_0^{Lambda_N} g(s) x(t-s) ds + B u(t).
struct DelaySystem {
    int d = 0;                       ///< state dimension
    int m = 0;                       ///< input dimension
    std::vector<double> delays;      ///< 0 < Lambda_1 < ... < Lambda_N
    std::vector<Eigen::MatrixXd> A;  ///< d x d, one per delay
    Eigen::MatrixXd B;               ///< d x m
    PiecewisePolyKernel kernel;      ///< on [0, Lambda_N]

    int N() const { return static_cast<int>(delays.size()); }
    double lambda_max() const { return delays.back(); }
    double lambda_min() const { return delays.front(); }
    const Eigen::MatrixXd& A_last() const { return A.back(); }
};

/// Unvalidated description, as read from a config file or built in code.
struct RawSystem {
    int d = 0;
    int m = 0;
    std::vector<double> delays;
    std::vector<Eigen::MatrixXd> A;
    Eigen::MatrixXd B;
    PiecewisePolyKernel kernel;  // invalid() means "g == 0"
};

/// Checks all DelaySystem invariants; throws std::invalid_argument with a
/// diagnostic on the first violation.
DelaySystem validate_system(const RawSystem& raw);

}  // namespace ddec
