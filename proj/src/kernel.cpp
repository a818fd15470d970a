#include "ddec/kernel.hpp"

#include <algorithm>
#include <cmath>

namespace ddec {
namespace detail {

namespace {

// gamma_i(p, w) = int_0^w u^i e^{-pu} du. For |pw| <= 4 the closed form
// cancels catastrophically, so a power series in z = pw takes over there:
//   gamma_i = w^{i+1} sum_n (-z)^n / (n! (i+n+1)).
std::complex<double> exp_monomial_from_zero(int i, double w, std::complex<double> p) {
    const std::complex<double> z = p * w;
    if (std::abs(z) <= 4.0) {
        std::complex<double> acc(0.0, 0.0), c(1.0, 0.0);
        for (int n = 0; n <= 64; ++n) {
            std::complex<double> term = c / double(i + n + 1);
            acc += term;
            if (std::abs(term) <= 1e-20 * std::abs(acc) + 1e-300) break;
            c *= -z / double(n + 1);
        }
        return std::pow(w, i + 1) * acc;
    }
    // i! / p^{i+1} (1 - e^{-z} sum_{n<=i} z^n/n!)
    std::complex<double> poly(0.0, 0.0), zn(1.0, 0.0);
    double fact = 1.0;
    for (int n = 0; n <= i; ++n) {
        poly += zn / fact;
        zn *= z;
        fact *= double(n + 1);
    }
    double ifact = 1.0;
    for (int n = 2; n <= i; ++n) ifact *= double(n);
    return ifact * std::pow(1.0 / p, i + 1) * (1.0 - std::exp(-z) * poly);
}

}  // namespace

std::complex<double> exp_monomial_integral(int k, double a, double b,
                                           std::complex<double> p, ExpBranch branch) {
    if (k < 0) throw std::invalid_argument("exp_monomial_integral: negative power");
    if (a == b) return {0.0, 0.0};
    const double smax = std::max(std::abs(a), std::abs(b));
    if (branch == ExpBranch::Auto)
        branch = (std::abs(p) * smax < 1e-4) ? ExpBranch::Taylor : ExpBranch::Closed;

    if (branch == ExpBranch::Taylor) {
        // sum_n (-p)^n / n! * (b^{k+n+1} - a^{k+n+1}) / (k+n+1)
        std::complex<double> acc(0.0, 0.0), c(1.0, 0.0);
        double pa = std::pow(a, k + 1), pb = std::pow(b, k + 1);
        for (int n = 0; n <= 48; ++n) {
            std::complex<double> term = c * (pb - pa) / double(k + n + 1);
            acc += term;
            if (std::abs(term) <= 1e-22 * std::abs(acc) + 1e-300) break;
            c *= -p / double(n + 1);
            pa *= a;
            pb *= b;
        }
        return acc;
    }

    // shift to u = s - a: int = e^{-pa} sum_i C(k,i) a^{k-i} gamma_i(p, b-a)
    const double w = b - a;
    std::complex<double> acc(0.0, 0.0);
    double binom = 1.0;
    for (int i = k; i >= 0; --i) {
        // binom = C(k, i) built from the top: C(k,k) = 1, C(k,i) = C(k,i+1)*(i+1)/(k-i)
        acc += binom * std::pow(a, k - i) * exp_monomial_from_zero(i, w, p);
        if (i > 0) binom *= double(i) / double(k - i + 1);
    }
    return std::exp(-p * a) * acc;
}

}  // namespace detail

PiecewisePolyKernel::PiecewisePolyKernel(std::vector<double> breakpoints,
                                         std::vector<std::vector<Eigen::MatrixXd>> pieces)
    : breakpoints_(std::move(breakpoints)), pieces_(std::move(pieces)) {
    if (breakpoints_.size() < 2)
        throw std::invalid_argument("kernel: need at least two breakpoints");
    if (pieces_.size() + 1 != breakpoints_.size())
        throw std::invalid_argument("kernel: pieces/breakpoints count mismatch");
    for (size_t i = 0; i + 1 < breakpoints_.size(); ++i)
        if (!(breakpoints_[i] < breakpoints_[i + 1]))
            throw std::invalid_argument("kernel: breakpoints not strictly increasing");
    for (const auto& piece : pieces_) {
        if (piece.empty() || piece.size() > 4)
            throw std::invalid_argument("kernel: piece degree must be 0..3");
        for (const auto& C : piece) {
            if (C.rows() != C.cols()) throw std::invalid_argument("kernel: coefficients not square");
            if (dim_ == 0) dim_ = static_cast<int>(C.rows());
            if (C.rows() != dim_) throw std::invalid_argument("kernel: inconsistent dimensions");
        }
    }
    if (dim_ == 0) throw std::invalid_argument("kernel: empty pieces");
}

PiecewisePolyKernel PiecewisePolyKernel::zero(int dim, double end) {
    return constant(Eigen::MatrixXd::Zero(dim, dim), end);
}

PiecewisePolyKernel PiecewisePolyKernel::constant(const Eigen::MatrixXd& C, double end) {
    if (end <= 0.0) throw std::invalid_argument("kernel: end must be positive");
    return PiecewisePolyKernel({0.0, end}, {{C}});
}

bool PiecewisePolyKernel::is_zero() const {
    for (const auto& piece : pieces_)
        for (const auto& C : piece)
            if (C.cwiseAbs().maxCoeff() != 0.0) return false;
    return true;
}

Eigen::MatrixXd PiecewisePolyKernel::eval(double s) const {
    if (s < 0.0 || s > domain_end()) return Eigen::MatrixXd::Zero(dim_, dim_);
    size_t i = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), s) -
               breakpoints_.begin();
    if (i == 0) i = 1;
    if (i >= breakpoints_.size()) i = breakpoints_.size() - 1;  // s == end: last piece
    const auto& piece = pieces_[i - 1];
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(dim_, dim_);
    double sk = 1.0;
    for (const auto& C : piece) {
        v += sk * C;
        sk *= s;
    }
    return v;
}

Eigen::MatrixXd PiecewisePolyKernel::integral(double a, double b) const {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim_, dim_);
    if (b < a) return acc;
    for (size_t i = 0; i + 1 < breakpoints_.size(); ++i) {
        double lo = std::max(a, breakpoints_[i]);
        double hi = std::min(b, breakpoints_[i + 1]);
        if (hi <= lo) continue;
        const auto& piece = pieces_[i];
        for (size_t k = 0; k < piece.size(); ++k)
            acc += piece[k] * ((std::pow(hi, k + 1) - std::pow(lo, k + 1)) / double(k + 1));
    }
    return acc;
}

Eigen::MatrixXd PiecewisePolyKernel::moment_integral(double a, double b) const {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim_, dim_);
    if (b < a) return acc;
    for (size_t i = 0; i + 1 < breakpoints_.size(); ++i) {
        double lo = std::max(a, breakpoints_[i]);
        double hi = std::min(b, breakpoints_[i + 1]);
        if (hi <= lo) continue;
        const auto& piece = pieces_[i];
        for (size_t k = 0; k < piece.size(); ++k)
            acc += piece[k] * ((std::pow(hi, k + 2) - std::pow(lo, k + 2)) / double(k + 2));
    }
    return acc;
}

Eigen::MatrixXcd PiecewisePolyKernel::laplace(std::complex<double> p, int order,
                                              detail::ExpBranch branch) const {
    if (order != 0 && order != 1) throw std::invalid_argument("kernel laplace: order is 0 or 1");
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(dim_, dim_);
    for (size_t i = 0; i + 1 < breakpoints_.size(); ++i) {
        const double lo = breakpoints_[i], hi = breakpoints_[i + 1];
        const auto& piece = pieces_[i];
        for (size_t k = 0; k < piece.size(); ++k) {
            std::complex<double> w =
                detail::exp_monomial_integral(static_cast<int>(k) + order, lo, hi, p, branch);
            acc += w * piece[k].cast<std::complex<double>>();
        }
    }
    return order == 0 ? acc : Eigen::MatrixXcd(-acc);
}

double PiecewisePolyKernel::ess_sup_bound() const {
    double bound = 0.0;
    for (size_t i = 0; i + 1 < breakpoints_.size(); ++i) {
        double smax = std::max(std::abs(breakpoints_[i]), std::abs(breakpoints_[i + 1]));
        double b = 0.0, sk = 1.0;
        for (const auto& C : pieces_[i]) {
            b += sk * C.norm();
            sk *= smax;
        }
        bound = std::max(bound, b);
    }
    return bound;
}

double PiecewisePolyKernel::l1_norm_estimate(int samples_per_piece) const {
    double acc = 0.0;
    for (size_t i = 0; i + 1 < breakpoints_.size(); ++i) {
        const double lo = breakpoints_[i], hi = breakpoints_[i + 1];
        const double dh = (hi - lo) / samples_per_piece;
        for (int k = 0; k <= samples_per_piece; ++k) {
            double w = (k == 0 || k == samples_per_piece) ? 0.5 * dh : dh;
            acc += w * eval(std::min(lo + k * dh, hi)).norm();
        }
    }
    return acc;
}

}  // namespace ddec
