#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <vector>

namespace ddec {

namespace detail {

enum class ExpBranch { Auto, Closed, Taylor };

/// Exact integral of s^k e^{-p s} over [a, b]. The closed form uses the
/// antiderivative -e^{-ps} sum_i k!/(k-i)! s^{k-i} / p^{i+1}; near p = 0
/// (|p| max(|a|,|b|) < 1e-4) it cancels catastrophically, so a truncated
/// Taylor series in p takes over.
std::complex<double> exp_monomial_integral(int k, double a, double b,
                                           std::complex<double> p,
                                           ExpBranch branch = ExpBranch::Auto);

}  // namespace detail

/// Piecewise polynomial matrix kernel g on [0, end], degree <= 3 per piece.
/// Coefficients are in the global variable s: on piece i,
///   g(s) = sum_k pieces[i][k] * s^k.
class PiecewisePolyKernel {
public:
    PiecewisePolyKernel() = default;

    PiecewisePolyKernel(std::vector<double> breakpoints,
                        std::vector<std::vector<Eigen::MatrixXd>> pieces);

    static PiecewisePolyKernel zero(int dim, double end);
    /// Constant kernel g(s) = C on [0, end].
    static PiecewisePolyKernel constant(const Eigen::MatrixXd& C, double end);

    bool valid() const { return dim_ > 0; }
    int dim() const { return dim_; }
    double domain_end() const { return breakpoints_.empty() ? 0.0 : breakpoints_.back(); }
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<std::vector<Eigen::MatrixXd>>& pieces() const { return pieces_; }
    bool is_zero() const;

    /// g(s); pieces are taken left-closed, the right endpoint evaluates the
    /// last piece. Zero outside [0, end].
    Eigen::MatrixXd eval(double s) const;

    /// Exact integral of g over [a, b] ∩ [0, end].
    Eigen::MatrixXd integral(double a, double b) const;

    /// Exact integral of s g(s) over [a, b] ∩ [0, end].
    Eigen::MatrixXd moment_integral(double a, double b) const;

    /// order 0: ∫_0^end g(s) e^{-p s} ds (entire in p).
    /// order 1: its p-derivative, -∫_0^end s g(s) e^{-p s} ds.
    Eigen::MatrixXcd laplace(std::complex<double> p, int order,
                             detail::ExpBranch branch = detail::ExpBranch::Auto) const;

    /// Upper bound on ess sup ||g||_F.
    double ess_sup_bound() const;

    /// Trapezoid estimate of ∫ ||g(s)||_F ds (heuristic uses only).
    double l1_norm_estimate(int samples_per_piece = 512) const;

private:
    int dim_ = 0;
    std::vector<double> breakpoints_;
    std::vector<std::vector<Eigen::MatrixXd>> pieces_;
};

}  // namespace ddec
