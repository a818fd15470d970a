#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "ddec/grid_function.hpp"
#include "ddec/system.hpp"

namespace ddec {

/// Matrix density sampled on {t0 + i h}. The represented function is the
/// hat-basis sum of the samples: piecewise linear through the nodes, ramping
/// to zero over one cell beyond each end node.
struct DensitySeries {
    double t0 = 0.0;  ///< time of the first node (anchor)
    double h = 0.0;
    int rows = 0, cols = 0;
    Eigen::MatrixXd v;  ///< (rows*cols) x n, column i = vec(value at t0 + i h)

    bool empty() const { return v.cols() == 0; }
    int n() const { return static_cast<int>(v.cols()); }
    double t_end() const { return t0 + (n() - 1) * h; }
    double supp_lo() const { return empty() ? 0.0 : t0 - h; }
    double supp_hi() const { return empty() ? 0.0 : t_end() + h; }

    Eigen::MatrixXd eval(double t) const;
    void eval_into(double t, Eigen::Ref<Eigen::VectorXd> out) const;
    void accumulate(double t, Eigen::Ref<Eigen::VectorXd> out) const;  // out += value

    /// Exact integral of the interpolant over (-inf, x].
    Eigen::MatrixXd prefix_mass(double x) const;
    /// Exact integral of t * interpolant over (-inf, x].
    Eigen::MatrixXd prefix_moment(double x) const;

    double l1() const;  ///< integral of the nodewise Frobenius norm
    Eigen::MatrixXd total_mass() const;
};

/// Matrix-valued distribution of order zero with compact support: a finite
/// atom list plus an integrable density. The density is a sum of blocks that
/// share the step h but may sit on mutually shifted grids; convolutions add
/// anchors exactly, so irrational delay shifts never force a resample.
class CompactMeasure {
public:
    struct Atom {
        double loc;
        Eigen::MatrixXd W;
    };

    CompactMeasure() = default;
    CompactMeasure(int rows, int cols, double h = 0.0) : rows_(rows), cols_(cols), h_(h) {}

    static CompactMeasure dirac(double loc, const Eigen::MatrixXd& W, double h = 0.0);
    static CompactMeasure identity(int d, double h = 0.0);

    /// Density with true support [a, b], anchored at a. Edge node values get
    /// a spread least-norm correction so the represented mass and first
    /// moment of the edge regions match the exact ones.
    static CompactMeasure from_density(
        int rows, int cols, double h, double a, double b,
        const std::function<Eigen::MatrixXd(double)>& value,
        const std::function<Eigen::MatrixXd(double, double)>& mass,
        const std::function<Eigen::MatrixXd(double, double)>& moment);

    static CompactMeasure from_series(DensitySeries s);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double step() const { return h_; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::vector<DensitySeries>& density_blocks() const { return blocks_; }
    bool has_density() const { return !blocks_.empty(); }

    void add_atom(double loc, const Eigen::MatrixXd& W);
    void add_density(DensitySeries s);  // merges into an anchor-compatible block
    void add(const CompactMeasure& o, double scale = 1.0);

    /// infimum / supremum of the support
    double l() const;
    double r() const;

    CompactMeasure restricted(double lo, double hi) const;
    CompactMeasure scaled(double a) const;

    /// Two-sided Laplace transform; atoms exact, density exact for the
    /// interpolant (hat transforms in closed form).
    Eigen::MatrixXcd laplace(std::complex<double> p) const;

    double max_atom_norm() const;
    /// Total density value at t (sum over blocks).
    Eigen::MatrixXd density_value(double t) const;
    /// L1 norm of the summed density over [lo, hi], by half-step sampling.
    double density_l1(double lo, double hi) const;
    double density_l1() const;

    /// Density sampled onto a single uniform grid (for export).
    std::optional<GridFunction> density_grid() const;

private:
    int rows_ = 0, cols_ = 0;
    double h_ = 0.0;
    std::vector<Atom> atoms_;  // sorted by loc, merged
    std::vector<DensitySeries> blocks_;
};

/// Convolution product. Atom x atom products are exact; atom x density terms
/// shift anchors exactly; density x density uses the exact hat-basis
/// convolution (cubic B-spline taps) on the pairwise-shifted grids.
CompactMeasure convolve(const CompactMeasure& a, const CompactMeasure& b);

/// Apply a measure to a function: (a * u)(t) on the grid {t_start + k h}.
GridFunction apply_measure(const CompactMeasure& a, const GridFunction& u, double t_start,
                           int n);

/// Q = delta_{-L_N} I - sum_j delta_{L_j - L_N} A_j - delta_{-L_N} * g~,
/// P = B delta_0. h is the shared density grid step for this computation.
std::pair<CompactMeasure, CompactMeasure> build_QP(const DelaySystem& sys, double h);

struct NeumannReport {
    bool split_skipped = false;
    double epsilon = 0.0;     ///< Lambda_1 - sigma when the split is active
    double sigma = 0.0;       ///< support split point of g~1 / g~2
    double g1_l1 = 0.0;       ///< ||g~1||_1 (must be < 1)
    int g1_terms = 0;         ///< geometric series terms kept
    int G_terms = 0;          ///< Titchmarsh-finite series terms kept
    double window = 0.0;
    double atom_defect = 0.0;
    double density_defect_l1 = 0.0;
};

/// Truncated convolution inverse of Q on [Lambda_N, Lambda_N + window],
/// following the two-stage Neumann construction: split g~ = g~1 + g~2 with
/// ||g~1||_1 <= 1/2, invert I d0 - g~1 by the geometric series, then invert
/// I d0 + G (G = (I d0 - g~1)^{-1} * F2) by the alternating series, which is
/// finite on the window because min supp G > 0.
std::pair<CompactMeasure, NeumannReport> invert_Q(const CompactMeasure& Q, double window,
                                                  double tol);

/// Q * Qinv - delta_0 I on [-window, window]: max atom-weight error and the
/// L1 norm of the residual density.
std::pair<double, double> convolution_defect(const CompactMeasure& Q,
                                             const CompactMeasure& Qinv, double window);

/// y = pi(Qinv * P * u) on [0, T_out]. Throws if the requested output length
/// exceeds the window Qinv was computed on (window < 0 infers it from the
/// stored support extent).
GridFunction transfer_output(const CompactMeasure& Qinv, const CompactMeasure& P,
                             const GridFunction& u, double T_out, double window = -1.0);

}  // namespace ddec
