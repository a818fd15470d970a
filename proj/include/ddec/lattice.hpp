#pragma once

#include <vector>

namespace ddec {

/// One point of the delay lattice {n_1 L_1 + ... + n_N L_N : n_j in N},
/// together with every multi-index that reaches it (within merge tolerance).
struct LatticePoint {
    double tau = 0.0;
    std::vector<std::vector<int>> multi_indices;
};

/// Default merge tolerance, shared with the measure algebra's atom merging.
inline double default_merge_tol(double scale) { return 1e-12 * (scale < 1.0 ? 1.0 : scale); }

/// All lattice values <= T, ascending, enumerated best-first; values closer
/// than merge_tol are merged (multi-index sets unioned). Throws if the count
/// would exceed max_atoms.
std::vector<LatticePoint> lattice_points(const std::vector<double>& delays, double T,
                                         double merge_tol = -1.0, int max_atoms = 20000);

}  // namespace ddec
