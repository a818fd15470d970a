#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "ddec/system.hpp"

namespace ddec {

struct Rectangle {
    double re_min = 0.0, re_max = 0.0, im_min = 0.0, im_max = 0.0;
    double width() const { return re_max - re_min; }
    double height() const { return im_max - im_min; }
    double diameter() const;
};

/// H(p) = I - sum_j A_j e^{-p L_j} - g^(p); the e^{p L_N} prefactor of the
/// criterion is dropped (it never vanishes, so ranks are unchanged).
struct CharacteristicEvaluation {
    std::complex<double> p;
    Eigen::MatrixXcd H;
    Eigen::MatrixXcd Hp;  ///< dH/dp
    std::complex<double> detH;
    std::complex<double> detHp;  ///< trace(adj(H) H') (Jacobi)
    double sigma_min_aug = 0.0;  ///< smallest singular value of [H, B]
    double sigma_max_aug = 0.0;
};

CharacteristicEvaluation char_eval(const DelaySystem& sys, std::complex<double> p);

/// Number of zeros of det H inside the rectangle (with multiplicity), by
/// adaptive phase tracking of the boundary winding number. Rectangles with a
/// boundary zero are perturbed by 1e-6 * diameter and retried (max 5 times).
int count_zeros(const DelaySystem& sys, const Rectangle& rect);

struct RootInfo {
    std::complex<double> p;
    int multiplicity = 1;
    double abs_detH = 0.0;
    double margin = 0.0;  ///< sigma_min/sigma_max of [H(p), B]
};

struct RootFindResult {
    std::vector<RootInfo> roots;          // closed under conjugation
    std::vector<Rectangle> unresolved;    // boxes where Newton failed
    int winding = 0;                      // initial winding count of the whole rectangle
};

/// Recursive quadrisection down to single zeros (or a 1e3*tol floor), then
/// Newton polishing on det H / det H'.
RootFindResult find_roots(const DelaySystem& sys, const Rectangle& rect, double tol = 1e-12);

enum class Outcome { UNCONTROLLABLE_RANK_ANB, UNCONTROLLABLE_FREQUENCY, CONTROLLABLE_UP_TO_REGION };

std::string outcome_name(Outcome o);

struct ControllabilityVerdict {
    Outcome outcome = Outcome::CONTROLLABLE_UP_TO_REGION;
    std::optional<std::complex<double>> witness;  // frequency failure point
    double rank_margin_anb = 0.0;   ///< sigma_min/sigma_max of [A_N, B]
    double min_root_margin = 1.0;   ///< min over roots of sigma ratio of [H, B]
    double rank_tol = 1e-8;
    std::vector<RootInfo> roots;
    Rectangle region;
    double time_bound = 0.0;        ///< 2 d Lambda_N
    double right_edge_bound = 0.0;  ///< sum ||A_j|| e^{-re_max L_j} + ||g^(re_max)||
};

/// Re in [-r, ln(sum ||A_j|| + ||g||_1) + 1], Im in [-Omega, Omega] with
/// Omega = omega_mult * 2 pi / Lambda_1.
Rectangle default_rectangle(const DelaySystem& sys, double r = 10.0, double omega_mult = 20.0);

/// The Thm-style frequency test: (b) rank[A_N, B] = d first, then (a)
/// full row rank of [H(p), B] at every characteristic root in the region.
ControllabilityVerdict check_controllability(const DelaySystem& sys,
                                             const std::optional<Rectangle>& region = std::nullopt,
                                             double rank_tol = 1e-8);

}  // namespace ddec
