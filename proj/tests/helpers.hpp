#pragma once

// Shared builders and independent oracles for the test suites. Oracles are
// deliberately written against the math, not the library internals.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "ddec/grid_function.hpp"
#include "ddec/simulate.hpp"
#include "ddec/system.hpp"

namespace helpers {

using Eigen::MatrixXd;
using ddec::DelaySystem;
using ddec::GridFunction;
using ddec::PiecewisePolyKernel;
using ddec::RawSystem;

inline MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

/// d = m = 1, A = 0, g = 0, B = 1: the equation degenerates to x = u.
inline DelaySystem memoryless() {
    RawSystem raw;
    raw.d = raw.m = 1;
    raw.delays = {1.0};
    raw.A = {scalar(0.0)};
    raw.B = scalar(1.0);
    return ddec::validate_system(raw);
}

/// d = 1, x(t) = a x(t-1) + b u(t), g = 0.
inline DelaySystem pure_difference(double a, double b = 0.0) {
    RawSystem raw;
    raw.d = raw.m = 1;
    raw.delays = {1.0};
    raw.A = {scalar(a)};
    raw.B = scalar(b);
    return ddec::validate_system(raw);
}

/// The incommensurate-delays example: y(t) = a1 y(t-1) + a2 y(t-pi)
/// + g_scale * int_0^pi y(t-s) ds + b u(t).
inline DelaySystem scalar_pi(double g_scale = 1.0, double a1 = 0.3, double a2 = 0.2,
                             double b = 1.0) {
    RawSystem raw;
    raw.d = raw.m = 1;
    raw.delays = {1.0, std::numbers::pi};
    raw.A = {scalar(a1), scalar(a2)};
    raw.B = scalar(b);
    if (g_scale != 0.0)
        raw.kernel = PiecewisePolyKernel::constant(scalar(g_scale), std::numbers::pi);
    return ddec::validate_system(raw);
}

/// d = 2 with rank[A_N, B] = 1 (second row of [A_N, B] vanishes).
inline DelaySystem rank_deficient_2d() {
    RawSystem raw;
    raw.d = 2;
    raw.m = 1;
    raw.delays = {1.0, 2.0};
    raw.A = {MatrixXd::Zero(2, 2), (MatrixXd(2, 2) << 0.5, 0.0, 0.0, 0.0).finished()};
    raw.B = (MatrixXd(2, 1) << 1.0, 0.0).finished();
    return ddec::validate_system(raw);
}

/// d = 2, x2(t) = 0.5 x2(t-1) decoupled from x1 and u, but rank[A_N, B] = 2:
/// delays [1/2, 1] put the coupling into A_2 = A_N.
inline DelaySystem decoupled_2d() {
    RawSystem raw;
    raw.d = 2;
    raw.m = 1;
    raw.delays = {0.5, 1.0};
    raw.A = {MatrixXd::Zero(2, 2), (MatrixXd(2, 2) << 0.0, 0.0, 0.0, 0.5).finished()};
    raw.B = (MatrixXd(2, 1) << 1.0, 0.0).finished();
    return ddec::validate_system(raw);
}

/// Small random g = 0 system for root-scan comparisons.
inline DelaySystem random_difference_system(std::mt19937& rng, int d, int N) {
    std::uniform_real_distribution<double> mat(-0.6, 0.6), del(0.4, 2.2);
    RawSystem raw;
    raw.d = d;
    raw.m = 1;
    std::vector<double> delays;
    for (int j = 0; j < N; ++j) delays.push_back(del(rng));
    std::sort(delays.begin(), delays.end());
    for (size_t j = 0; j + 1 < delays.size(); ++j)
        if (delays[j + 1] - delays[j] < 0.05) delays[j + 1] += 0.1;
    raw.delays = delays;
    for (int j = 0; j < N; ++j) {
        MatrixXd A(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) A(r, c) = mat(rng);
        raw.A.push_back(A);
    }
    raw.B = MatrixXd(d, 1);
    for (int r = 0; r < d; ++r) raw.B(r, 0) = mat(rng) + (r == 0 ? 1.0 : 0.0);
    return ddec::validate_system(raw);
}

/// Random desk-scale system with a mild random linear kernel.
inline DelaySystem random_system(std::mt19937& rng, int d, int N, bool with_kernel) {
    DelaySystem base = random_difference_system(rng, d, N);
    if (!with_kernel) return base;
    RawSystem raw;
    raw.d = base.d;
    raw.m = base.m;
    raw.delays = base.delays;
    raw.A = base.A;
    raw.B = base.B;
    std::uniform_real_distribution<double> coef(-0.15, 0.15);
    MatrixXd C0(d, d), C1(d, d);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) {
            C0(r, c) = coef(rng);
            C1(r, c) = coef(rng);
        }
    raw.kernel = PiecewisePolyKernel({0.0, base.lambda_max()}, {{C0, C1}});
    return ddec::validate_system(raw);
}

/// History segment on the right-anchored grid of [-Lambda_N, 0].
inline GridFunction history(const DelaySystem& sys, double h,
                            const std::function<Eigen::VectorXd(double)>& fn) {
    int n = ddec::segment_grid_size(sys.lambda_max(), h);
    return GridFunction::sample(sys.d, 1, -(n - 1) * h, h, n,
                                [&](double t) { return Eigen::MatrixXd(fn(t)); });
}

/// Control on [0, T] with u(0) = 0 (the artifact-wide control convention).
inline GridFunction control(const DelaySystem& sys, double h, double T,
                            const std::function<Eigen::VectorXd(double)>& fn) {
    int n = static_cast<int>(std::ceil(T / h - 1e-9)) + 1;
    return GridFunction::sample(sys.m, 1, 0.0, h, n, [&](double t) {
        return t == 0.0 ? Eigen::MatrixXd(Eigen::VectorXd::Zero(sys.m))
                        : Eigen::MatrixXd(fn(t));
    });
}

/// Smooth-ish random function: random nodal values on a coarse grid,
/// linearly interpolated onto the fine one.
inline GridFunction random_smooth(std::mt19937& rng, int rows, double t0, double t1, double h,
                                  double coarse_step, bool zero_at_start = false) {
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    int nc = std::max(2, static_cast<int>(std::ceil((t1 - t0) / coarse_step)) + 1);
    Eigen::MatrixXd coarse(rows, nc);
    for (int k = 0; k < nc; ++k)
        for (int r = 0; r < rows; ++r) coarse(r, k) = val(rng);
    if (zero_at_start) coarse.col(0).setZero();
    GridFunction cg(rows, 1, t0, (t1 - t0) / (nc - 1), std::move(coarse));
    int n = static_cast<int>(std::round((t1 - t0) / h)) + 1;
    return cg.resampled(t0, h, n);
}

/// Independent fixed-point (Picard) oracle: iterates the integral operator of
/// the equation on the solver grid until the iterates stop moving. The map is
/// applied globally (no forward substitution, no linear solves).
inline GridFunction picard_oracle(const DelaySystem& sys, const GridFunction& phi,
                                  const GridFunction* u, double T, double h, int max_iter = 400,
                                  double tol = 1e-13) {
    const double lam = sys.lambda_max();
    const int n_h = static_cast<int>(std::ceil(lam / h - 1e-9));
    const int n_T = static_cast<int>(std::ceil(T / h - 1e-9));
    const int n = n_h + n_T + 1;
    const double t0 = -n_h * h;
    const int d = sys.d;

    const int M = static_cast<int>(std::floor(lam / h + 1e-9));
    const double rem = lam - M * h;

    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(d, n), Y = X;
    for (int j = 0; j <= n_h; ++j)
        X.col(j) = phi.value(std::max(t0 + j * h, phi.t_start()));
    Y = X;

    auto interp = [&](const Eigen::MatrixXd& Z, double t) -> Eigen::VectorXd {
        double pos = (t - t0) / h;
        int k = static_cast<int>(std::floor(pos));
        double fr = pos - k;
        if (k < 0) return Z.col(0);
        if (k >= n - 1) return Z.col(n - 1);
        if (fr < 1e-12) return Z.col(k);
        return (1 - fr) * Z.col(k) + fr * Z.col(k + 1);
    };

    for (int it = 0; it < max_iter; ++it) {
        for (int j = n_h + 1; j < n; ++j) {
            const double t = (j - n_h) * h;
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
            for (int l = 0; l < sys.N(); ++l)
                acc += sys.A[l] * interp(X, t - sys.delays[l]);
            if (!sys.kernel.is_zero()) {
                for (int i = 0; i <= M; ++i) {
                    double w = (i == 0 || i == M) ? h / 2 : h;
                    if (i == M && rem > 1e-12) w = h / 2 + rem / 2;
                    acc += w * (sys.kernel.eval(i * h) * interp(X, t - i * h));
                }
                if (rem > 1e-12)
                    acc += (rem / 2) * (sys.kernel.eval(lam) * interp(X, t - lam));
            }
            if (u) acc += sys.B * u->value(t);
            Y.col(j) = acc;
        }
        double delta = (Y - X).cwiseAbs().maxCoeff();
        X = Y;
        if (delta < tol) break;
    }
    return GridFunction(d, 1, t0, h, std::move(X));
}

/// Adaptive Simpson quadrature for complex scalar integrands. A minimum
/// subdivision depth guards against deceptive first-level estimates.
inline std::complex<double> adaptive_simpson(
    const std::function<std::complex<double>(double)>& f, double a, double b, double tol,
    int depth = 28) {
    auto simpson = [&](double x0, double x2) {
        double x1 = 0.5 * (x0 + x2);
        return (x2 - x0) / 6.0 * (f(x0) + 4.0 * f(x1) + f(x2));
    };
    std::function<std::complex<double>(double, double, std::complex<double>, int)> rec =
        [&](double x0, double x2, std::complex<double> whole, int dep) {
            double x1 = 0.5 * (x0 + x2);
            std::complex<double> left = simpson(x0, x1), right = simpson(x1, x2);
            if (dep <= 0 ||
                (dep < depth - 4 && std::abs(left + right - whole) < 15.0 * tol))
                return left + right + (left + right - whole) / 15.0;
            return rec(x0, x1, left, dep - 1) + rec(x1, x2, right, dep - 1);
        };
    return rec(a, b, simpson(a, b), depth);
}

/// Quadrature oracle for kernel transforms: adaptive Simpson piece by piece,
/// evaluating each piece's polynomial directly so the integrand is smooth on
/// every subinterval.
inline std::complex<double> kernel_laplace_oracle(const ddec::PiecewisePolyKernel& g, int r,
                                                  int c, std::complex<double> p, double tol) {
    std::complex<double> acc(0.0, 0.0);
    const auto& bps = g.breakpoints();
    for (size_t i = 0; i + 1 < bps.size(); ++i) {
        const auto& coeffs = g.pieces()[i];
        auto poly = [&](double s) {
            double val = 0.0, sk = 1.0;
            for (const auto& C : coeffs) {
                val += sk * C(r, c);
                sk *= s;
            }
            return val;
        };
        acc += adaptive_simpson([&](double s) { return poly(s) * std::exp(-p * s); }, bps[i],
                                bps[i + 1], tol);
    }
    return acc;
}

}  // namespace helpers
