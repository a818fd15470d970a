#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ddec/grid_function.hpp"
#include "ddec/lattice.hpp"
#include "ddec/simulate.hpp"
#include "ddec/system.hpp"

namespace ddec {

/// One jump of the fundamental solution: location on the delay lattice plus
/// the jump matrix, with the multi-indices witnessing the lattice membership.
struct FundamentalAtom {
    double tau = 0.0;
    Eigen::MatrixXd J;
    std::vector<std::vector<int>> multi_indices;
};

/// Bounded-variation fundamental solution X on [0, T]:
///   X(t) = sum_{tau_i < t} J_i + int_0^t c(s) ds,  X(t) = 0 for t < 0.
/// Atoms come from the pure renewal recursion on the delay lattice; c is the
/// density of the absolutely continuous part.
struct BVFundamentalSolution {
    double T = 0.0;
    std::vector<FundamentalAtom> atoms;  // ascending tau, atoms[0] = (0, I)
    GridFunction ac_density;             // d x d samples on [0, T_grid]

    /// Left-continuous reconstruction X(t) (cumulative trapezoid for the AC part).
    Eigen::MatrixXd reconstruct(double t) const;
};

BVFundamentalSolution fundamental_solution(const DelaySystem& sys, double T, double h,
                                           int max_atoms = 20000);

/// Dense discretisation of the input map E(T): maps control samples on the
/// nodes {h, 2h, ..., T} (controls vanish at t = 0 by convention) to the
/// state segment on the right-anchored grid of [-Lambda_N, 0].
struct InputMapMatrix {
    double T = 0.0;
    double h = 0.0;
    int d = 0, m = 0;
    int n_theta = 0;  ///< segment nodes
    int n_u = 0;      ///< control nodes (excluding the pinned zero at t = 0)
    double theta0 = 0.0;
    Eigen::MatrixXd M;  ///< (d n_theta) x (m n_u)

    /// Apply to a control given as a GridFunction (resampled to the control grid).
    GridFunction apply(const GridFunction& u) const;
    /// Apply to stacked control samples.
    GridFunction apply(const Eigen::VectorXd& u_stacked) const;

    /// Control samples of u on the matrix's control grid.
    Eigen::VectorXd control_samples(const GridFunction& u) const;
    /// Wrap stacked samples as a control GridFunction on [0, T] (zero at t=0).
    GridFunction control_function(const Eigen::VectorXd& u_stacked) const;
};

InputMapMatrix input_map(const DelaySystem& sys, double T, double h,
                         const BVFundamentalSolution* fund = nullptr);

/// E(T) applied to one control function without materialising the matrix:
///   E(T)u(theta) = sum_i J_i B u(T+theta-tau_i) + int c(s) B u(T+theta-s) ds.
GridFunction apply_input_map(const DelaySystem& sys, const BVFundamentalSolution& fund,
                             const GridFunction& u, double T);

}  // namespace ddec
