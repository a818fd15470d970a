#include "ddec/frequency.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ddec {

namespace {

using Complex = std::complex<double>;

Eigen::MatrixXcd adjugate(const Eigen::MatrixXcd& A) {
    const int n = static_cast<int>(A.rows());
    if (n == 1) return Eigen::MatrixXcd::Ones(1, 1);
    Eigen::MatrixXcd adj(n, n);
    Eigen::MatrixXcd minor(n - 1, n - 1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            int mr = 0;
            for (int r = 0; r < n; ++r) {
                if (r == j) continue;  // adj(i,j) = cofactor(j,i)
                int mc = 0;
                for (int c = 0; c < n; ++c) {
                    if (c == i) continue;
                    minor(mr, mc++) = A(r, c);
                }
                ++mr;
            }
            Complex det = minor.rows() == 0 ? Complex(1.0, 0.0)
                                            : minor.fullPivLu().determinant();
            adj(i, j) = (((i + j) % 2) ? -1.0 : 1.0) * det;
        }
    }
    return adj;
}

struct BoundaryZero : std::runtime_error {
    BoundaryZero() : std::runtime_error("boundary zero") {}
};

// phase increment of det H along the straight segment [p0, p1]
double phase_walk(const DelaySystem& sys, Complex p0, Complex p1, Complex v0, Complex v1,
                  int depth) {
    if (std::abs(v0) < 1e-280 || std::abs(v1) < 1e-280) throw BoundaryZero();
    const Complex ratio = v1 / v0;
    const double dphi = std::arg(ratio);
    const double dmag = std::abs(std::log(std::abs(ratio)));
    if (std::abs(dphi) <= std::numbers::pi / 2 && dmag <= 1.0) return dphi;
    if (depth > 60)
        throw std::runtime_error("count_zeros: phase tracking step underflow (zero on or "
                                 "extremely close to the contour)");
    const Complex pm = 0.5 * (p0 + p1);
    const Complex vm = char_eval(sys, pm).detH;
    return phase_walk(sys, p0, pm, v0, vm, depth + 1) +
           phase_walk(sys, pm, p1, vm, v1, depth + 1);
}

double contour_winding(const DelaySystem& sys, const Rectangle& rect) {
    const Complex bl(rect.re_min, rect.im_min), br(rect.re_max, rect.im_min);
    const Complex tr(rect.re_max, rect.im_max), tl(rect.re_min, rect.im_max);
    const Complex corners[5] = {bl, br, tr, tl, bl};

    // initial sampling density: the dominant oscillation of det H along a
    // segment has phase rate at most ~ d * (sum ||A_j|| L_j + ||g||_1 L_N + 1)
    double rate = 1.0;
    for (int j = 0; j < sys.N(); ++j) rate += sys.A[j].norm() * sys.delays[j];
    rate += sys.kernel.l1_norm_estimate(64) * sys.lambda_max();
    rate *= sys.d;

    double total = 0.0;
    for (int e = 0; e < 4; ++e) {
        const Complex a = corners[e], b = corners[e + 1];
        const double len = std::abs(b - a);
        int n0 = std::max(8, static_cast<int>(std::ceil(len * rate / (std::numbers::pi / 4))));
        n0 = std::min(n0, 200000);
        Complex prev_p = a;
        Complex prev_v = char_eval(sys, prev_p).detH;
        for (int i = 1; i <= n0; ++i) {
            Complex p = a + (b - a) * (static_cast<double>(i) / n0);
            Complex v = char_eval(sys, p).detH;
            total += phase_walk(sys, prev_p, p, prev_v, v, 0);
            prev_p = p;
            prev_v = v;
        }
    }
    return total / (2 * std::numbers::pi);
}

}  // namespace

double Rectangle::diameter() const { return std::hypot(width(), height()); }

CharacteristicEvaluation char_eval(const DelaySystem& sys, std::complex<double> p) {
    const int d = sys.d;
    CharacteristicEvaluation ev;
    ev.p = p;
    ev.H = Eigen::MatrixXcd::Identity(d, d);
    ev.Hp = Eigen::MatrixXcd::Zero(d, d);
    for (int j = 0; j < sys.N(); ++j) {
        const Complex e = std::exp(-p * sys.delays[j]);
        ev.H -= e * sys.A[j].cast<Complex>();
        ev.Hp += sys.delays[j] * e * sys.A[j].cast<Complex>();
    }
    if (!sys.kernel.is_zero()) {
        ev.H -= sys.kernel.laplace(p, 0);
        ev.Hp -= sys.kernel.laplace(p, 1);
    }
    ev.detH = d == 1 ? ev.H(0, 0) : Complex(ev.H.fullPivLu().determinant());
    ev.detHp = (adjugate(ev.H) * ev.Hp).trace();

    Eigen::MatrixXcd aug(d, d + sys.m);
    aug.leftCols(d) = ev.H;
    aug.rightCols(sys.m) = sys.B.cast<Complex>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(aug);
    ev.sigma_min_aug = svd.singularValues().minCoeff();
    ev.sigma_max_aug = svd.singularValues().maxCoeff();
    return ev;
}

int count_zeros(const DelaySystem& sys, const Rectangle& rect) {
    if (!(rect.re_min < rect.re_max) || !(rect.im_min < rect.im_max))
        throw std::invalid_argument("count_zeros: degenerate rectangle");
    Rectangle r = rect;
    const double bump = 1e-6 * rect.diameter();
    for (int attempt = 0; attempt <= 5; ++attempt) {
        try {
            double w = contour_winding(sys, r);
            long n = std::lround(w);
            if (std::abs(w - static_cast<double>(n)) > 0.25 || n < 0)
                throw std::runtime_error("count_zeros: winding number did not converge to a "
                                         "nonnegative integer");
            return static_cast<int>(n);
        } catch (const BoundaryZero&) {
            // a zero sits on the contour: grow the rectangle slightly and retry
            r.re_min -= bump;
            r.re_max += bump;
            r.im_min -= bump;
            r.im_max += bump;
        }
    }
    throw std::runtime_error("count_zeros: persistent boundary zero after 5 perturbations");
}

namespace {

// Accepts when |det H| <= tol * max(1, |det H'| (1 + |p|)), i.e. the root
// location is accurate to ~ tol (1 + |p|) for simple roots, independent of
// the overall scaling of det H.
std::optional<Complex> newton_polish(const DelaySystem& sys, Complex start, double tol,
                                     int max_iter) {
    Complex p = start;
    auto accept = [&](const CharacteristicEvaluation& ev) {
        return std::abs(ev.detH) <=
               tol * std::max(1.0, std::abs(ev.detHp) * (1.0 + std::abs(ev.p)));
    };
    for (int it = 0; it < max_iter; ++it) {
        CharacteristicEvaluation ev = char_eval(sys, p);
        if (accept(ev)) return p;
        if (std::abs(ev.detHp) < 1e-300) {
            p += 1e-9 * (1.0 + std::abs(p)) * Complex(1.0, 1.0);
            continue;
        }
        Complex step = ev.detH / ev.detHp;
        p -= step;
        if (std::abs(step) < 1e-16 * (1.0 + std::abs(p))) {
            ev = char_eval(sys, p);
            if (accept(ev)) return p;
            return std::nullopt;
        }
    }
    CharacteristicEvaluation ev = char_eval(sys, p);
    if (accept(ev)) return p;
    return std::nullopt;
}

void quadrisect(const DelaySystem& sys, const Rectangle& box, double tol,
                std::vector<RootInfo>& roots, std::vector<Rectangle>& unresolved, int depth);

void find_in_box(const DelaySystem& sys, const Rectangle& box, double tol,
                 std::vector<RootInfo>& roots, std::vector<Rectangle>& unresolved, int depth) {
    int cnt;
    try {
        cnt = count_zeros(sys, box);
    } catch (const std::runtime_error&) {
        if (depth == 0) throw;
        unresolved.push_back(box);
        return;
    }
    if (cnt == 0) return;

    const double floor_diam = 1e3 * tol;
    const bool at_floor = box.diameter() < floor_diam || depth > 48;
    // Newton only launches from boxes small enough that the nearest root is
    // almost surely the enclosed one; otherwise it may run off to a root of
    // a different box.
    const bool newton_ready = cnt == 1 && box.diameter() <= 0.5;

    if (at_floor || newton_ready) {
        const Complex center(0.5 * (box.re_min + box.re_max), 0.5 * (box.im_min + box.im_max));
        auto p = newton_polish(sys, center, tol, at_floor ? 1000 : 100);
        const double slack = 0.25 * box.diameter() + 1e3 * tol;
        bool inside = p && p->real() >= box.re_min - slack && p->real() <= box.re_max + slack &&
                      p->imag() >= box.im_min - slack && p->imag() <= box.im_max + slack;
        if (inside) {
            RootInfo info;
            info.p = *p;
            info.multiplicity = cnt;
            roots.push_back(info);
            return;
        }
        if (at_floor) {
            unresolved.push_back(box);
            return;
        }
        // Newton escaped a non-degenerate box: refine instead
    }
    quadrisect(sys, box, tol, roots, unresolved, depth);
}

void quadrisect(const DelaySystem& sys, const Rectangle& box, double tol,
                std::vector<RootInfo>& roots, std::vector<Rectangle>& unresolved, int depth) {
    // split lines jittered off-centre so roots sitting on them still land
    // strictly inside a child (count_zeros perturbs its contour anyway)
    const double fx = 0.5 + 1e-4, fy = 0.5 - 1e-4;
    const double xm = box.re_min + fx * box.width();
    const double ym = box.im_min + fy * box.height();
    Rectangle kids[4] = {
        {box.re_min, xm, box.im_min, ym},
        {xm, box.re_max, box.im_min, ym},
        {box.re_min, xm, ym, box.im_max},
        {xm, box.re_max, ym, box.im_max},
    };
    for (const auto& kid : kids) find_in_box(sys, kid, tol, roots, unresolved, depth + 1);
}

}  // namespace

RootFindResult find_roots(const DelaySystem& sys, const Rectangle& rect, double tol) {
    RootFindResult out;
    out.winding = count_zeros(sys, rect);
    if (out.winding == 0) return out;

    find_in_box(sys, rect, tol, out.roots, out.unresolved, 0);

    // two boxes may converge to the same root (split-line overlap): dedupe,
    // keeping the larger multiplicity
    std::vector<RootInfo> merged;
    for (const auto& r : out.roots) {
        bool dup = false;
        for (auto& m : merged) {
            if (std::abs(m.p - r.p) <= 2e3 * tol * (1.0 + std::abs(r.p))) {
                m.multiplicity = std::max(m.multiplicity, r.multiplicity);
                dup = true;
                break;
            }
        }
        if (!dup) merged.push_back(r);
    }

    // real data: roots come in conjugate pairs, exactly
    auto inside = [&](Complex p) {
        return p.real() >= rect.re_min - 1e-12 && p.real() <= rect.re_max + 1e-12 &&
               p.imag() >= rect.im_min - 1e-12 && p.imag() <= rect.im_max + 1e-12;
    };
    const double snap = 1e3 * tol;
    for (auto& r : merged)
        if (std::abs(r.p.imag()) < snap * (1.0 + std::abs(r.p))) r.p.imag(0.0);
    std::vector<RootInfo> symm;
    std::vector<bool> used(merged.size(), false);
    for (size_t i = 0; i < merged.size(); ++i) {
        if (used[i]) continue;
        if (merged[i].p.imag() == 0.0) {
            symm.push_back(merged[i]);
            continue;
        }
        int match = -1;
        for (size_t j = i + 1; j < merged.size(); ++j) {
            if (used[j]) continue;
            if (std::abs(std::conj(merged[i].p) - merged[j].p) <
                1e-6 * (1.0 + std::abs(merged[i].p))) {
                match = static_cast<int>(j);
                break;
            }
        }
        if (match >= 0) {
            used[match] = true;
            double re = 0.5 * (merged[i].p.real() + merged[match].p.real());
            double im = 0.5 * (std::abs(merged[i].p.imag()) + std::abs(merged[match].p.imag()));
            RootInfo a = merged[i], b = merged[match];
            a.p = Complex(re, merged[i].p.imag() > 0 ? im : -im);
            b.p = std::conj(a.p);
            symm.push_back(a);
            symm.push_back(b);
        } else {
            symm.push_back(merged[i]);
            RootInfo mirror = merged[i];
            mirror.p = std::conj(merged[i].p);
            if (inside(mirror.p)) symm.push_back(mirror);
        }
    }

    for (auto& r : symm) {
        CharacteristicEvaluation ev = char_eval(sys, r.p);
        r.abs_detH = std::abs(ev.detH);
        r.margin = ev.sigma_max_aug > 0.0 ? ev.sigma_min_aug / ev.sigma_max_aug : 0.0;
    }
    std::sort(symm.begin(), symm.end(),
              [](const RootInfo& x, const RootInfo& y) {
                  return x.p.imag() != y.p.imag() ? x.p.imag() < y.p.imag()
                                                  : x.p.real() < y.p.real();
              });
    out.roots = std::move(symm);
    return out;
}

std::string outcome_name(Outcome o) {
    switch (o) {
        case Outcome::UNCONTROLLABLE_RANK_ANB: return "UNCONTROLLABLE_RANK_ANB";
        case Outcome::UNCONTROLLABLE_FREQUENCY: return "UNCONTROLLABLE_FREQUENCY";
        case Outcome::CONTROLLABLE_UP_TO_REGION: return "CONTROLLABLE_UP_TO_REGION";
    }
    return "?";
}

Rectangle default_rectangle(const DelaySystem& sys, double r, double omega_mult) {
    double mass = sys.kernel.l1_norm_estimate(256);
    for (int j = 0; j < sys.N(); ++j) mass += sys.A[j].norm();
    Rectangle rect;
    rect.re_min = -r;
    rect.re_max = std::max(0.5, std::log(std::max(mass, 1e-6)) + 1.0);
    const double omega = omega_mult * 2 * std::numbers::pi / sys.lambda_min();
    rect.im_min = -omega;
    rect.im_max = omega;
    return rect;
}

ControllabilityVerdict check_controllability(const DelaySystem& sys,
                                             const std::optional<Rectangle>& region,
                                             double rank_tol) {
    if (!(rank_tol > 0.0 && rank_tol < 1.0))
        throw std::invalid_argument("check_controllability: rank_tol must be in (0, 1)");
    ControllabilityVerdict v;
    v.rank_tol = rank_tol;
    v.region = region ? *region : default_rectangle(sys);
    v.time_bound = 2.0 * sys.d * sys.lambda_max();

    {
        double mass = sys.kernel.laplace(v.region.re_max, 0).norm();
        for (int j = 0; j < sys.N(); ++j)
            mass += sys.A[j].norm() * std::exp(-v.region.re_max * sys.delays[j]);
        v.right_edge_bound = mass;
    }

    // (b) first: the residue condition rank[A_N, B] = d
    {
        Eigen::MatrixXd anb(sys.d, sys.d + sys.m);
        anb.leftCols(sys.d) = sys.A_last();
        anb.rightCols(sys.m) = sys.B;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(anb);
        const double smax = svd.singularValues().maxCoeff();
        v.rank_margin_anb = smax > 0.0 ? svd.singularValues().minCoeff() / smax : 0.0;
        if (v.rank_margin_anb <= rank_tol) {
            v.outcome = Outcome::UNCONTROLLABLE_RANK_ANB;
            return v;
        }
    }

    // (a): [H(p), B] can only lose row rank where det H vanishes
    RootFindResult roots = find_roots(sys, v.region, 1e-12);
    if (!roots.unresolved.empty())
        throw std::runtime_error("check_controllability: root finder left unresolved boxes");
    v.roots = roots.roots;
    for (const auto& rt : v.roots) {
        if (rt.margin < v.min_root_margin) {
            v.min_root_margin = rt.margin;
            if (rt.margin <= rank_tol) v.witness = rt.p;
        }
    }
    if (v.witness) {
        v.outcome = Outcome::UNCONTROLLABLE_FREQUENCY;
        return v;
    }
    v.outcome = Outcome::CONTROLLABLE_UP_TO_REGION;
    return v;
}

}  // namespace ddec
