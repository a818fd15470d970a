#pragma once

#include <functional>
#include <optional>

#include "ddec/grid_function.hpp"
#include "ddec/system.hpp"

namespace ddec {

/// Solution of an initial-value problem on [-Lambda_N, T], uniform step h.
/// The grid contains both 0 and every t_k = k h; the node left of
/// -Lambda_N (if any) holds the clamped history value.
struct Trajectory {
    DelaySystem system;
    GridFunction x;        ///< d x 1 samples on [t_start, T_solved]
    GridFunction control;  ///< m x 1 samples, may be all-zero
    double T = 0.0;        ///< requested horizon (grid end >= T)
    double max_residual = 0.0;  ///< max discrete-equation residual over nodes in (0, T]

    Eigen::VectorXd value(double t) const { return x.value(t); }
};

/// Forward implicit-trapezoid march. Delayed values by linear interpolation,
/// distributed term by composite trapezoid over s-nodes {0, h, ...} clamped to
/// [0, Lambda_N]; the s = 0 node makes each step a d x d linear solve.
/// Throws if T <= 0, h <= 0, or the implicit matrix I - (h/2) g(0) is
/// near-singular (step too large).
Trajectory solve_ivp(const DelaySystem& sys, const GridFunction& phi,
                     const std::optional<GridFunction>& u, double T, double h);

/// Generalised march used by the fundamental-solution module: zero history,
/// arbitrary forcing f(t) added to the right-hand side.
GridFunction march_forced(const DelaySystem& sys,
                          const std::function<void(double, Eigen::Ref<Eigen::VectorXd>)>& history,
                          const std::function<void(double, Eigen::Ref<Eigen::VectorXd>)>& forcing,
                          double T, double h, double* max_residual = nullptr);

/// x_t(theta) = x(t + theta) for theta in [-Lambda_N, 0], right-anchored grid
/// (the node theta = 0 is always present). Throws if t is outside [0, T].
GridFunction state_segment(const Trajectory& traj, double t);

/// Number of nodes of the right-anchored segment grid on [-Lambda_N, 0].
int segment_grid_size(double lambda_N, double h);

/// Unique extension of y0 in L^q([0, Lambda_N]) to [0, T] satisfying the
/// homogeneous dynamics for t >= Lambda_N (the state space X^{Q,q}).
/// Requires T >= Lambda_N.
GridFunction extend_state(const DelaySystem& sys, const GridFunction& y0, double T, double h);

}  // namespace ddec
