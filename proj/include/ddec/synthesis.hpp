#pragma once

#include <vector>

#include "ddec/fundamental.hpp"
#include "ddec/grid_function.hpp"
#include "ddec/system.hpp"

namespace ddec {

struct SynthesisResult {
    GridFunction u;         ///< control on [0, T], first sample pinned to 0
    GridFunction achieved;  ///< E(T) u on the segment grid
    double residual = 0.0;  ///< ||E(T)u - psi||_q / ||psi||_q (absolute if psi == 0)
    double lambda = 0.0;
    double q = 2.0;
    double sigma_max_sq = 0.0;     ///< largest eigenvalue of M^T M (power iteration)
    double gram_cond_bound = 0.0;  ///< (sigma_max^2 + lambda) / lambda
};

/// Tikhonov least squares: minimise ||M u - psi||_2^2 + lambda ||u||_2^2 over
/// control samples, M = input_map(sys, T, h). lambda <= 0 selects the default
/// 1e-8 * ||M||^2. The residual is reported in the requested L^q norm.
SynthesisResult synthesize_control(const DelaySystem& sys, const GridFunction& psi, double T,
                                   double h, double lambda, double q,
                                   const BVFundamentalSolution* fund = nullptr);

/// End-to-end residual via the simulator: run solve_ivp(0, u, T), extract x_T,
/// return ||x_T - psi||_q / ||psi||_q. Independent of the operator matrix.
double verify_control(const DelaySystem& sys, const GridFunction& u, const GridFunction& psi,
                      double T, double q);

struct ResidualPoint {
    double T = 0.0;
    double residual = 0.0;
};

/// Residuals of synthesize_control over a sorted list of horizons, shared h
/// and lambda (lambda <= 0: resolved once on the largest horizon). Horizons
/// are snapped to the grid; each solve is safeguarded with the zero-front-
/// extended previous optimum, so the curve is nonincreasing by construction.
std::vector<ResidualPoint> residual_curve(const DelaySystem& sys, const GridFunction& psi,
                                          const std::vector<double>& T_list, double h,
                                          double lambda);

}  // namespace ddec
