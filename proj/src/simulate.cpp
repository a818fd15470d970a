#include "ddec/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <vector>

namespace ddec {

namespace {

struct QuadPlan {
    // composite trapezoid over s in [0, Lambda_N]; node 0 handled implicitly
    std::vector<double> s;        // s_1 .. (explicit nodes)
    std::vector<Eigen::MatrixXd> gw;  // weight * g(s_i)
    Eigen::MatrixXd g0;           // g(0)
    bool active = false;
};

QuadPlan make_quad_plan(const DelaySystem& sys, double h) {
    QuadPlan plan;
    if (sys.kernel.is_zero()) return plan;
    plan.active = true;
    const double lam = sys.lambda_max();
    const int M = static_cast<int>(std::floor(lam / h + 1e-9));
    const double rem = lam - M * h;
    plan.g0 = sys.kernel.eval(0.0);
    for (int i = 1; i <= M; ++i) {
        double w = (i < M) ? h : (rem > 1e-12 * lam ? h / 2 + rem / 2 : h / 2);
        plan.s.push_back(i * h);
        plan.gw.push_back(w * sys.kernel.eval(i * h));
    }
    if (rem > 1e-12 * lam) {
        plan.s.push_back(lam);
        plan.gw.push_back((rem / 2) * sys.kernel.eval(lam));
    }
    return plan;
}

}  // namespace

GridFunction march_forced(const DelaySystem& sys,
                          const std::function<void(double, Eigen::Ref<Eigen::VectorXd>)>& history,
                          const std::function<void(double, Eigen::Ref<Eigen::VectorXd>)>& forcing,
                          double T, double h, double* max_residual) {
    if (T <= 0.0) throw std::invalid_argument("march: T must be positive");
    if (h <= 0.0) throw std::invalid_argument("march: step must be positive");

    const int d = sys.d;
    const double lam = sys.lambda_max();
    const int n_h = static_cast<int>(std::ceil(lam / h - 1e-9));
    const int n_T = static_cast<int>(std::ceil(T / h - 1e-9));
    const int n = n_h + n_T + 1;
    const double t0 = -n_h * h;

    QuadPlan quad = make_quad_plan(sys, h);

    Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(d, d);
    if (quad.active) {
        if ((0.5 * h * quad.g0).norm() >= 0.5)
            throw std::invalid_argument("march: step too large, (h/2) g(0) not a contraction");
        lhs -= 0.5 * h * quad.g0;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(lhs);

    Eigen::MatrixXd X(d, n);
    Eigen::VectorXd tmp(d), rhs(d);

    auto interp = [&](double t, Eigen::Ref<Eigen::VectorXd> out) {
        const double xpos = (t - t0) / h;
        int k = static_cast<int>(std::floor(xpos));
        double fr = xpos - k;
        if (fr < 1e-12) { out = X.col(std::min(std::max(k, 0), n - 1)); return; }
        if (k < 0) { out = X.col(0); return; }
        if (k >= n - 1) { out = X.col(n - 1); return; }
        out = (1.0 - fr) * X.col(k) + fr * X.col(k + 1);
    };

    for (int j = 0; j <= n_h; ++j) {
        history(t0 + j * h, tmp);
        X.col(j) = tmp;
    }

    double rmax = 0.0;
    const int n_delays = sys.N();
    for (int j = n_h + 1; j < n; ++j) {
        const double t = (j - n_h) * h;
        rhs.setZero();
        for (int l = 0; l < n_delays; ++l) {
            interp(t - sys.delays[l], tmp);
            rhs.noalias() += sys.A[l] * tmp;
        }
        if (quad.active) {
            const size_t ns = quad.s.size();
            for (size_t i = 0; i < ns; ++i) {
                // s-nodes i*h map onto grid nodes exactly; the final partial
                // node falls back to interpolation
                if (i + 1 < ns || quad.s[i] == (i + 1) * h) {
                    tmp = X.col(j - static_cast<int>(i) - 1);
                } else {
                    interp(t - quad.s[i], tmp);
                }
                rhs.noalias() += quad.gw[i] * tmp;
            }
        }
        forcing(t, tmp);
        rhs += tmp;
        X.col(j) = lu.solve(rhs);
        double res = (lhs * X.col(j) - rhs).cwiseAbs().maxCoeff();
        rmax = std::max(rmax, res);
    }
    if (max_residual) *max_residual = rmax;
    return GridFunction(d, 1, t0, h, std::move(X));
}

Trajectory solve_ivp(const DelaySystem& sys, const GridFunction& phi,
                     const std::optional<GridFunction>& u, double T, double h) {
    if (phi.rows() != sys.d || phi.cols() != 1)
        throw std::invalid_argument("solve_ivp: initial segment must be d x 1 valued");
    const double lam = sys.lambda_max();
    if (std::abs(phi.t_start() - (-lam)) > h + 1e-9 || phi.t_end() > 1e-9)
        std::cerr << "[ddec] note: initial segment resampled onto [-Lambda_N, 0]\n";
    if (u && (std::abs(u->step() - h) > 1e-12 * h))
        std::cerr << "[ddec] note: control resampled onto solver grid (step mismatch)\n";

    auto history = [&](double t, Eigen::Ref<Eigen::VectorXd> out) {
        phi.value_into(std::max(t, phi.t_start()), out);
    };

    Trajectory traj;
    traj.system = sys;
    traj.T = T;
    if (u) {
        if (u->rows() != sys.m || u->cols() != 1)
            throw std::invalid_argument("solve_ivp: control must be m x 1 valued");
        const GridFunction& uc = *u;
        const Eigen::MatrixXd& B = sys.B;
        Eigen::VectorXd uval(sys.m);
        auto forcing = [&](double t, Eigen::Ref<Eigen::VectorXd> out) {
            uc.value_into(t, uval);
            out.noalias() = B * uval;
        };
        traj.x = march_forced(sys, history, forcing, T, h, &traj.max_residual);
        traj.control = uc;
    } else {
        auto forcing = [&](double, Eigen::Ref<Eigen::VectorXd> out) { out.setZero(); };
        traj.x = march_forced(sys, history, forcing, T, h, &traj.max_residual);
        traj.control = GridFunction::zeros(sys.m, 1, 0.0, h, 2);
    }
    return traj;
}

int segment_grid_size(double lambda_N, double h) {
    return static_cast<int>(std::floor(lambda_N / h + 1e-9)) + 1;
}

GridFunction state_segment(const Trajectory& traj, double t) {
    if (t < -1e-12 || t > traj.x.t_end() + 1e-12)
        throw std::invalid_argument("state_segment: t outside [0, T]");
    const double h = traj.x.step();
    const double lam = traj.system.lambda_max();
    const int n = segment_grid_size(lam, h);
    const double theta0 = -(n - 1) * h;
    Eigen::MatrixXd data(traj.system.d, n);
    Eigen::VectorXd tmp(traj.system.d);
    for (int k = 0; k < n; ++k) {
        traj.x.value_into(t + theta0 + k * h, tmp);
        data.col(k) = tmp;
    }
    return GridFunction(traj.system.d, 1, theta0, h, std::move(data));
}

GridFunction extend_state(const DelaySystem& sys, const GridFunction& y0, double T, double h) {
    const double lam = sys.lambda_max();
    if (T < lam) throw std::invalid_argument("extend_state: T must be >= Lambda_N");
    if (y0.rows() != sys.d || y0.cols() != 1)
        throw std::invalid_argument("extend_state: y0 must be d x 1 valued");

    // shift y0 from [0, Lambda_N] to an initial segment on [-Lambda_N, 0]
    auto history = [&](double t, Eigen::Ref<Eigen::VectorXd> out) {
        y0.value_into(std::clamp(t + lam, y0.t_start(), y0.t_end()), out);
    };
    auto forcing = [&](double, Eigen::Ref<Eigen::VectorXd> out) { out.setZero(); };

    const int n = static_cast<int>(std::ceil(T / h - 1e-9)) + 1;
    Eigen::MatrixXd data(sys.d, n);
    Eigen::VectorXd tmp(sys.d);

    if (T > lam + 1e-12) {
        GridFunction x = march_forced(sys, history, forcing, T - lam, h, nullptr);
        for (int k = 0; k < n; ++k) {
            double t = k * h;
            if (t <= lam + 1e-12) {
                y0.value_into(std::min(t, y0.t_end()), tmp);
            } else {
                x.value_into(t - lam, tmp);
            }
            data.col(k) = tmp;
        }
    } else {
        for (int k = 0; k < n; ++k) {
            y0.value_into(std::min(k * h, y0.t_end()), tmp);
            data.col(k) = tmp;
        }
    }
    return GridFunction(sys.d, 1, 0.0, h, std::move(data));
}

}  // namespace ddec
