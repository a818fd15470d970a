#include "ddec/measure.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace ddec {

namespace {

double atom_merge_tol(double loc) { return 1e-12 * std::max(1.0, std::abs(loc)); }

// integral of a linear segment over (-inf, x]: segment on [a, a+w] with
// endpoint values va, vb (flattened matrices)
void seg_prefix(double a, double w, const Eigen::VectorXd& va, const Eigen::VectorXd& vb,
                double x, Eigen::VectorXd& mass, Eigen::VectorXd& moment) {
    if (x <= a || w <= 0.0) return;
    const double tau = std::min(x - a, w);
    const Eigen::VectorXd dv = vb - va;
    mass += va * tau + dv * (tau * tau / (2.0 * w));
    moment += a * (va * tau + dv * (tau * tau / (2.0 * w))) + va * (tau * tau / 2.0) +
              dv * (tau * tau * tau / (3.0 * w));
}

}  // namespace

Eigen::MatrixXd DensitySeries::eval(double t) const {
    Eigen::VectorXd flat(rows * cols);
    eval_into(t, flat);
    Eigen::MatrixXd out(rows, cols);
    Eigen::Map<Eigen::VectorXd>(out.data(), rows * cols) = flat;
    return out;
}

void DensitySeries::eval_into(double t, Eigen::Ref<Eigen::VectorXd> out) const {
    out.setZero();
    accumulate(t, out);
}

void DensitySeries::accumulate(double t, Eigen::Ref<Eigen::VectorXd> out) const {
    if (empty()) return;
    const double pos = (t - t0) / h;
    const int nn = n();
    if (pos <= -1.0 || pos >= nn) return;
    if (pos < 0.0) {  // ramp up
        out += (pos + 1.0) * v.col(0);
        return;
    }
    if (pos > nn - 1) {  // ramp down
        out += (static_cast<double>(nn) - pos) * v.col(nn - 1);
        return;
    }
    int k = static_cast<int>(std::floor(pos));
    double fr = pos - k;
    if (k >= nn - 1) {
        out += v.col(nn - 1);
        return;
    }
    out += (1.0 - fr) * v.col(k) + fr * v.col(k + 1);
}

Eigen::MatrixXd DensitySeries::prefix_mass(double x) const {
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(rows * cols);
    Eigen::VectorXd moment = Eigen::VectorXd::Zero(rows * cols);
    if (!empty()) {
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(rows * cols);
        seg_prefix(t0 - h, h, zero, v.col(0), x, mass, moment);
        for (int i = 0; i + 1 < n(); ++i)
            seg_prefix(t0 + i * h, h, v.col(i), v.col(i + 1), x, mass, moment);
        seg_prefix(t_end(), h, v.col(n() - 1), zero, x, mass, moment);
    }
    Eigen::MatrixXd out(rows, cols);
    Eigen::Map<Eigen::VectorXd>(out.data(), rows * cols) = mass;
    return out;
}

Eigen::MatrixXd DensitySeries::prefix_moment(double x) const {
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(rows * cols);
    Eigen::VectorXd moment = Eigen::VectorXd::Zero(rows * cols);
    if (!empty()) {
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(rows * cols);
        seg_prefix(t0 - h, h, zero, v.col(0), x, mass, moment);
        for (int i = 0; i + 1 < n(); ++i)
            seg_prefix(t0 + i * h, h, v.col(i), v.col(i + 1), x, mass, moment);
        seg_prefix(t_end(), h, v.col(n() - 1), zero, x, mass, moment);
    }
    Eigen::MatrixXd out(rows, cols);
    Eigen::Map<Eigen::VectorXd>(out.data(), rows * cols) = moment;
    return out;
}

double DensitySeries::l1() const {
    if (empty()) return 0.0;
    double acc = 0.0;
    for (int i = 0; i < n(); ++i) acc += v.col(i).norm();
    return h * acc;
}

Eigen::MatrixXd DensitySeries::total_mass() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
    if (empty()) return out;
    Eigen::VectorXd s = h * v.rowwise().sum();
    Eigen::Map<Eigen::VectorXd>(out.data(), rows * cols) = s;
    return out;
}

namespace {

// Minimal-norm correction of K node values so the represented mass and
// moment over an edge region gain (dM, dW). Spreading the correction keeps
// its amplitude ~ deficit / (K h).
void lsq_edge_correct(Eigen::Ref<Eigen::MatrixXd> cols, const std::vector<double>& ts, double h,
                      const Eigen::VectorXd& dM, const Eigen::VectorXd& dW) {
    const int K = static_cast<int>(ts.size());
    if (K == 0) return;
    double tbar = 0.0;
    for (double t : ts) tbar += t;
    tbar /= K;
    double svar = 0.0;
    for (double t : ts) svar += (t - tbar) * (t - tbar);
    Eigen::VectorXd y1 = dM / (h * h * K);
    Eigen::VectorXd y2 = svar > 1e-300 ? Eigen::VectorXd((dW - tbar * dM) / (h * h * svar))
                                       : Eigen::VectorXd::Zero(dM.size());
    for (int i = 0; i < K; ++i) cols.col(i) += h * (y1 + (ts[i] - tbar) * y2);
}

// Sampler for densities with true support [a, b]: nodes anchored at a + h/2
// (the half-cell offset makes the end ramps carry the right mass at jump
// edges), plain interpolation values, then spread least-norm edge corrections
// restoring the exact mass and first moment over each edge region. The
// corrections are O(h^2)-sized here, so they never distort the shape.
DensitySeries build_anchored_density(
    int rows, int cols, double h, double a, double b,
    const std::function<void(double, Eigen::Ref<Eigen::VectorXd>)>& value,
    const std::function<Eigen::VectorXd(double, double)>& mass,
    const std::function<Eigen::VectorXd(double, double)>& moment) {
    DensitySeries out;
    out.h = h;
    out.rows = rows;
    out.cols = cols;
    out.t0 = a + h / 2.0;
    if (b - a < 1e-14) return out;

    const int dim = rows * cols;
    const int nn = std::max(2, static_cast<int>(std::round((b - a) / h)));
    out.v = Eigen::MatrixXd::Zero(dim, nn);
    Eigen::VectorXd tmp(dim);
    for (int i = 0; i < nn; ++i) {
        value(out.t0 + i * h, tmp);
        out.v.col(i) = tmp;
    }
    auto node_t = [&](int i) { return out.t0 + i * h; };

    if (nn < 6) {
        Eigen::VectorXd dM = mass(a, b), dW = moment(a, b);
        std::vector<double> ts(nn);
        for (int i = 0; i < nn; ++i) {
            ts[i] = node_t(i);
            dM -= h * out.v.col(i);
            dW -= h * ts[i] * out.v.col(i);
        }
        lsq_edge_correct(out.v.leftCols(nn), ts, h, dM, dW);
        return out;
    }

    const int K = std::min(8, nn / 2 - 1);
    // left region (-inf, t_K]: hats 0..K-1 fully inside carry (h v, h t v);
    // the half hat of node K adds (h/2) v and (h/2)(t_K - h/3) v
    {
        const double x = node_t(K);
        Eigen::VectorXd dM = mass(a, x) - 0.5 * h * out.v.col(K);
        Eigen::VectorXd dW = moment(a, x) - 0.5 * h * (x - h / 3.0) * out.v.col(K);
        std::vector<double> ts(K);
        for (int i = 0; i < K; ++i) {
            ts[i] = node_t(i);
            dM -= h * out.v.col(i);
            dW -= h * ts[i] * out.v.col(i);
        }
        lsq_edge_correct(out.v.leftCols(K), ts, h, dM, dW);
    }
    // right region [t_{nn-1-K}, inf)
    {
        const double x = node_t(nn - 1 - K);
        Eigen::VectorXd dM = mass(x, b) - 0.5 * h * out.v.col(nn - 1 - K);
        Eigen::VectorXd dW = moment(x, b) - 0.5 * h * (x + h / 3.0) * out.v.col(nn - 1 - K);
        std::vector<double> ts(K);
        for (int i = 0; i < K; ++i) {
            ts[i] = node_t(nn - K + i);
            dM -= h * out.v.col(nn - K + i);
            dW -= h * ts[i] * out.v.col(nn - K + i);
        }
        lsq_edge_correct(out.v.rightCols(K), ts, h, dM, dW);
    }
    return out;
}

DensitySeries matmul_series(const DensitySeries& s, const Eigen::MatrixXd& W, bool left) {
    DensitySeries out;
    out.h = s.h;
    out.t0 = s.t0;
    if (left) {
        out.rows = static_cast<int>(W.rows());
        out.cols = s.cols;
    } else {
        out.rows = s.rows;
        out.cols = static_cast<int>(W.cols());
    }
    out.v.resize(out.rows * out.cols, s.n());
    Eigen::MatrixXd tmp;
    for (int i = 0; i < s.n(); ++i) {
        Eigen::Map<const Eigen::MatrixXd> V(s.v.col(i).data(), s.rows, s.cols);
        tmp = left ? Eigen::MatrixXd(W * V) : Eigen::MatrixXd(V * W);
        out.v.col(i) = Eigen::Map<const Eigen::VectorXd>(tmp.data(), tmp.size());
    }
    return out;
}

/// Exact convolution of the two hat-basis interpolants, sampled on the grid
/// anchored at t0a + t0b: discrete convolution of the sample sequences
/// followed by the cubic B-spline taps h [1/6, 2/3, 1/6]. Valid for any pair
/// of anchors sharing the step h.
DensitySeries conv_series(const DensitySeries& a, const DensitySeries& b) {
    DensitySeries out;
    if (a.empty() || b.empty()) return out;
    if (a.cols != b.rows) throw std::invalid_argument("convolve: density shape mismatch");
    const double h = a.h;
    const int na = a.n(), nb = b.n();
    const int ns = na + nb - 1;
    const int ra = a.rows, ca = a.cols, cb = b.cols;

    std::vector<Eigen::VectorXd> arow(ra * ca), brow(b.rows * cb);
    for (int k = 0; k < ca; ++k)
        for (int r = 0; r < ra; ++r) arow[k * ra + r] = a.v.row(k * ra + r);
    for (int c = 0; c < cb; ++c)
        for (int k = 0; k < b.rows; ++k) brow[c * b.rows + k] = b.v.row(c * b.rows + k);

    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(ra * cb, ns);
    Eigen::VectorXd acc(ns);
    for (int r = 0; r < ra; ++r) {
        for (int c = 0; c < cb; ++c) {
            acc.setZero();
            for (int k = 0; k < ca; ++k) {
                const double* x = arow[k * ra + r].data();
                const double* y = brow[c * b.rows + k].data();
                for (int i = 0; i < na; ++i) {
                    const double xi = x[i];
                    if (xi == 0.0) continue;
                    double* dst = acc.data() + i;
                    for (int j = 0; j < nb; ++j) dst[j] += xi * y[j];
                }
            }
            S.row(c * ra + r) = acc;
        }
    }

    out.h = h;
    out.rows = ra;
    out.cols = cb;
    out.t0 = a.t0 + b.t0 - h;
    out.v.resize(ra * cb, ns + 2);
    for (int i = 0; i < ns + 2; ++i) {
        Eigen::VectorXd col = Eigen::VectorXd::Zero(ra * cb);
        if (i - 2 >= 0 && i - 2 < ns) col += (h / 6.0) * S.col(i - 2);
        if (i - 1 >= 0 && i - 1 < ns) col += (2.0 * h / 3.0) * S.col(i - 1);
        if (i < ns) col += (h / 6.0) * S.col(i);
        out.v.col(i) = col;
    }
    return out;
}

DensitySeries resample_series(const DensitySeries& s, double h_new) {
    auto value = [&](double t, Eigen::Ref<Eigen::VectorXd> o) { s.eval_into(t, o); };
    auto mass = [&](double x, double y) -> Eigen::VectorXd {
        Eigen::MatrixXd M = s.prefix_mass(y) - s.prefix_mass(x);
        return Eigen::Map<const Eigen::VectorXd>(M.data(), M.size());
    };
    auto moment = [&](double x, double y) -> Eigen::VectorXd {
        Eigen::MatrixXd W = s.prefix_moment(y) - s.prefix_moment(x);
        return Eigen::Map<const Eigen::VectorXd>(W.data(), W.size());
    };
    return build_anchored_density(s.rows, s.cols, h_new, s.supp_lo(), s.supp_hi(), value, mass,
                                  moment);
}

}  // namespace

CompactMeasure CompactMeasure::dirac(double loc, const Eigen::MatrixXd& W, double h) {
    CompactMeasure m(static_cast<int>(W.rows()), static_cast<int>(W.cols()), h);
    m.add_atom(loc, W);
    return m;
}

CompactMeasure CompactMeasure::identity(int d, double h) {
    return dirac(0.0, Eigen::MatrixXd::Identity(d, d), h);
}

CompactMeasure CompactMeasure::from_density(
    int rows, int cols, double h, double a, double b,
    const std::function<Eigen::MatrixXd(double)>& value,
    const std::function<Eigen::MatrixXd(double, double)>& mass,
    const std::function<Eigen::MatrixXd(double, double)>& moment) {
    CompactMeasure m(rows, cols, h);
    auto val = [&](double t, Eigen::Ref<Eigen::VectorXd> o) {
        Eigen::MatrixXd V = value(t);
        o = Eigen::Map<const Eigen::VectorXd>(V.data(), V.size());
    };
    auto ms = [&](double x, double y) -> Eigen::VectorXd {
        Eigen::MatrixXd V = mass(x, y);
        return Eigen::Map<const Eigen::VectorXd>(V.data(), V.size());
    };
    auto mo = [&](double x, double y) -> Eigen::VectorXd {
        Eigen::MatrixXd V = moment(x, y);
        return Eigen::Map<const Eigen::VectorXd>(V.data(), V.size());
    };
    m.add_density(build_anchored_density(rows, cols, h, a, b, val, ms, mo));
    return m;
}

CompactMeasure CompactMeasure::from_series(DensitySeries s) {
    CompactMeasure m(s.rows, s.cols, s.h);
    m.add_density(std::move(s));
    return m;
}

void CompactMeasure::add_atom(double loc, const Eigen::MatrixXd& W) {
    if (W.rows() != rows_ || W.cols() != cols_)
        throw std::invalid_argument("add_atom: shape mismatch");
    const double tol = atom_merge_tol(loc);
    auto it = std::lower_bound(atoms_.begin(), atoms_.end(), loc - tol,
                               [](const Atom& a, double v) { return a.loc < v; });
    if (it != atoms_.end() && std::abs(it->loc - loc) <= tol) {
        it->W += W;
        return;
    }
    atoms_.insert(it, Atom{loc, W});
}

void CompactMeasure::add_density(DensitySeries s) {
    if (s.empty()) return;
    if (s.rows != rows_ || s.cols != cols_)
        throw std::invalid_argument("add_density: shape mismatch");
    if (h_ <= 0.0) h_ = s.h;
    if (std::abs(s.h - h_) > 1e-12 * h_)
        throw std::invalid_argument("add_density: step mismatch");

    // merge into a block whose grid differs by an integer number of steps
    const double tol = 1e-6 * h_;
    for (auto& blk : blocks_) {
        const double delta = (s.t0 - blk.t0) / h_;
        const double rounded = std::round(delta);
        if (std::abs(delta - rounded) * h_ > tol) continue;
        long off = static_cast<long>(rounded);
        long lo = std::min(0L, off);
        long hi = std::max(static_cast<long>(blk.n()) - 1, off + s.n() - 1);
        DensitySeries merged;
        merged.t0 = blk.t0 + lo * h_;
        merged.h = h_;
        merged.rows = rows_;
        merged.cols = cols_;
        merged.v = Eigen::MatrixXd::Zero(rows_ * cols_, hi - lo + 1);
        merged.v.middleCols(-lo, blk.n()) = blk.v;
        merged.v.middleCols(off - lo, s.n()) += s.v;
        blk = std::move(merged);
        return;
    }
    blocks_.push_back(std::move(s));
    if (blocks_.size() > 256)
        throw std::runtime_error("CompactMeasure: density block count exploded");
}

void CompactMeasure::add(const CompactMeasure& o, double scale) {
    for (const auto& a : o.atoms_) add_atom(a.loc, scale * a.W);
    for (const auto& blk : o.blocks_) {
        DensitySeries s = blk;
        s.v *= scale;
        add_density(std::move(s));
    }
}

double CompactMeasure::l() const {
    double lo = std::numeric_limits<double>::infinity();
    if (!atoms_.empty()) lo = atoms_.front().loc;
    for (const auto& blk : blocks_) lo = std::min(lo, blk.supp_lo());
    return lo;
}

double CompactMeasure::r() const {
    double hi = -std::numeric_limits<double>::infinity();
    if (!atoms_.empty()) hi = atoms_.back().loc;
    for (const auto& blk : blocks_) hi = std::max(hi, blk.supp_hi());
    return hi;
}

CompactMeasure CompactMeasure::restricted(double lo, double hi) const {
    CompactMeasure out(rows_, cols_, h_);
    const double tol = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});
    for (const auto& a : atoms_)
        if (a.loc >= lo - tol && a.loc <= hi + tol) out.atoms_.push_back(a);
    for (const auto& blk : blocks_) {
        long ilo = std::max(0L, static_cast<long>(std::ceil((lo - tol - blk.t0) / h_)));
        long ihi = std::min(static_cast<long>(blk.n()) - 1,
                            static_cast<long>(std::floor((hi + tol - blk.t0) / h_)));
        if (ihi < ilo) continue;
        DensitySeries s;
        s.t0 = blk.t0 + ilo * h_;
        s.h = h_;
        s.rows = rows_;
        s.cols = cols_;
        s.v = blk.v.middleCols(ilo, ihi - ilo + 1);
        out.blocks_.push_back(std::move(s));
    }
    return out;
}

CompactMeasure CompactMeasure::scaled(double a) const {
    CompactMeasure out = *this;
    for (auto& at : out.atoms_) at.W *= a;
    for (auto& blk : out.blocks_) blk.v *= a;
    return out;
}

Eigen::MatrixXcd CompactMeasure::laplace(std::complex<double> p) const {
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(rows_, cols_);
    for (const auto& a : atoms_)
        acc += std::exp(-p * a.loc) * a.W.cast<std::complex<double>>();
    for (const auto& blk : blocks_) {
        const double h = blk.h;
        // transform of one hat: Phi(p) = 2 (cosh(ph) - 1) / (p^2 h)
        std::complex<double> z = p * h;
        std::complex<double> phi;
        if (std::abs(z) < 1e-3) {
            std::complex<double> z2 = z * z;
            phi = h * (1.0 + z2 / 12.0 + z2 * z2 / 360.0 + z2 * z2 * z2 / 20160.0);
        } else {
            phi = 2.0 * (std::cosh(z) - 1.0) / (p * p * h);
        }
        Eigen::VectorXcd sum = Eigen::VectorXcd::Zero(rows_ * cols_);
        for (int i = 0; i < blk.n(); ++i)
            sum += std::exp(-p * (blk.t0 + i * h)) * blk.v.col(i).cast<std::complex<double>>();
        Eigen::MatrixXcd D(rows_, cols_);
        Eigen::Map<Eigen::VectorXcd>(D.data(), rows_ * cols_) = phi * sum;
        acc += D;
    }
    return acc;
}

double CompactMeasure::max_atom_norm() const {
    double m = 0.0;
    for (const auto& a : atoms_) m = std::max(m, a.W.cwiseAbs().maxCoeff());
    return m;
}

Eigen::MatrixXd CompactMeasure::density_value(double t) const {
    Eigen::VectorXd flat = Eigen::VectorXd::Zero(rows_ * cols_);
    for (const auto& blk : blocks_) blk.accumulate(t, flat);
    Eigen::MatrixXd out(rows_, cols_);
    Eigen::Map<Eigen::VectorXd>(out.data(), rows_ * cols_) = flat;
    return out;
}

double CompactMeasure::density_l1(double lo, double hi) const {
    if (blocks_.empty()) return 0.0;
    double blo = std::numeric_limits<double>::infinity(), bhi = -blo;
    for (const auto& blk : blocks_) {
        blo = std::min(blo, blk.supp_lo());
        bhi = std::max(bhi, blk.supp_hi());
    }
    lo = std::max(lo, blo);
    hi = std::min(hi, bhi);
    if (hi <= lo) return 0.0;
    if (blocks_.size() == 1) {
        // single block: nodewise is exact enough and cheaper
        const auto& blk = blocks_[0];
        double acc = 0.0;
        for (int i = 0; i < blk.n(); ++i) {
            double t = blk.t0 + i * h_;
            if (t < lo - 1e-9 || t > hi + 1e-9) continue;
            acc += blk.v.col(i).norm();
        }
        return h_ * acc;
    }
    // summed blocks: sample at half steps
    const double step = h_ / 2.0;
    const int n = static_cast<int>(std::ceil((hi - lo) / step)) + 1;
    Eigen::VectorXd flat(rows_ * cols_);
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        double t = lo + k * step;
        flat.setZero();
        for (const auto& blk : blocks_) blk.accumulate(t, flat);
        double w = (k == 0 || k == n - 1) ? 0.5 * step : step;
        acc += w * flat.norm();
    }
    return acc;
}

double CompactMeasure::density_l1() const {
    return density_l1(-std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity());
}

std::optional<GridFunction> CompactMeasure::density_grid() const {
    if (blocks_.empty()) return std::nullopt;
    double blo = std::numeric_limits<double>::infinity(), bhi = -blo;
    for (const auto& blk : blocks_) {
        blo = std::min(blo, blk.t0);
        bhi = std::max(bhi, blk.t_end());
    }
    const int n = static_cast<int>(std::round((bhi - blo) / h_)) + 1;
    Eigen::MatrixXd data(rows_ * cols_, n);
    Eigen::VectorXd flat(rows_ * cols_);
    for (int k = 0; k < n; ++k) {
        flat.setZero();
        for (const auto& blk : blocks_) blk.accumulate(blo + k * h_, flat);
        data.col(k) = flat;
    }
    return GridFunction(rows_, cols_, blo, h_, std::move(data));
}

CompactMeasure convolve(const CompactMeasure& a, const CompactMeasure& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("convolve: inner dimensions do not match");
    double h = a.step() > 0.0 ? a.step() : b.step();
    CompactMeasure bb = b;
    if (a.has_density() && b.has_density() &&
        std::abs(a.step() - b.step()) > 1e-12 * a.step()) {
        std::cerr << "[ddec] note: resampling density onto step " << a.step()
                  << " (operand steps differ)\n";
        CompactMeasure tmp(b.rows(), b.cols(), a.step());
        for (const auto& at : b.atoms()) tmp.add_atom(at.loc, at.W);
        for (const auto& blk : b.density_blocks())
            tmp.add_density(resample_series(blk, a.step()));
        bb = std::move(tmp);
    }

    CompactMeasure out(a.rows(), bb.cols(), h);
    for (const auto& x : a.atoms())
        for (const auto& y : bb.atoms()) out.add_atom(x.loc + y.loc, x.W * y.W);
    for (const auto& x : a.atoms())
        for (const auto& blk : bb.density_blocks()) {
            DensitySeries s = matmul_series(blk, x.W, true);
            s.t0 += x.loc;  // anchors shift exactly, never resample
            out.add_density(std::move(s));
        }
    for (const auto& y : bb.atoms())
        for (const auto& blk : a.density_blocks()) {
            DensitySeries s = matmul_series(blk, y.W, false);
            s.t0 += y.loc;
            out.add_density(std::move(s));
        }
    for (const auto& xb : a.density_blocks())
        for (const auto& yb : bb.density_blocks()) out.add_density(conv_series(xb, yb));
    return out;
}

GridFunction apply_measure(const CompactMeasure& a, const GridFunction& u, double t_start,
                           int n) {
    if (a.cols() != u.rows() || u.cols() != 1)
        throw std::invalid_argument("apply_measure: shape mismatch");
    const double h = a.step() > 0.0 ? a.step() : u.step();
    Eigen::MatrixXd data = Eigen::MatrixXd::Zero(a.rows(), n);
    Eigen::VectorXd uval(u.rows()), uacc(u.rows());
    Eigen::VectorXd acc(a.rows());
    for (int k = 0; k < n; ++k) {
        const double t = t_start + k * h;
        acc.setZero();
        for (const auto& at : a.atoms()) {
            u.value_into(t - at.loc, uval);
            acc.noalias() += at.W * uval;
        }
        for (const auto& blk : a.density_blocks()) {
            const double bh = blk.h;
            for (int i = 0; i < blk.n(); ++i) {
                const double s = blk.t0 + i * bh;
                // hat-exact taps against the control interpolant
                u.value_into(t - s - bh, uacc);
                u.value_into(t - s + bh, uval);
                uacc += uval;
                u.value_into(t - s, uval);
                uacc += 4.0 * uval;
                Eigen::Map<const Eigen::MatrixXd> V(blk.v.col(i).data(), blk.rows, blk.cols);
                acc.noalias() += (bh / 6.0) * (V * uacc);
            }
        }
        data.col(k) = acc;
    }
    return GridFunction(a.rows(), 1, t_start, h, std::move(data));
}

std::pair<CompactMeasure, CompactMeasure> build_QP(const DelaySystem& sys, double h) {
    const double lam = sys.lambda_max();
    const int d = sys.d;
    CompactMeasure Q(d, d, h);
    Q.add_atom(-lam, Eigen::MatrixXd::Identity(d, d));
    for (int j = 0; j < sys.N(); ++j)
        if (sys.A[j].cwiseAbs().maxCoeff() > 0.0) Q.add_atom(sys.delays[j] - lam, -sys.A[j]);
    if (!sys.kernel.is_zero()) {
        const auto& g = sys.kernel;
        CompactMeasure dens = CompactMeasure::from_density(
            d, d, h, -lam, 0.0, [&](double t) { return Eigen::MatrixXd(-g.eval(t + lam)); },
            [&](double x, double y) { return Eigen::MatrixXd(-g.integral(x + lam, y + lam)); },
            [&](double x, double y) {
                // int_x^y t rho(t) dt = -(int s g - lam int g) over [x+lam, y+lam]
                return Eigen::MatrixXd(-(g.moment_integral(x + lam, y + lam) -
                                         lam * g.integral(x + lam, y + lam)));
            });
        for (const auto& blk : dens.density_blocks()) Q.add_density(blk);
    }
    CompactMeasure P = CompactMeasure::dirac(0.0, sys.B, h);
    return {Q, P};
}

std::pair<CompactMeasure, NeumannReport> invert_Q(const CompactMeasure& Q, double window,
                                                  double tol) {
    if (window <= 0.0) throw std::invalid_argument("invert_Q: window must be positive");
    if (Q.rows() != Q.cols()) throw std::invalid_argument("invert_Q: Q must be square");
    if (Q.atoms().empty())
        throw std::invalid_argument("invert_Q: Q has no leading atom (not order zero)");

    const int d = Q.rows();
    const double h = Q.step();
    const double lam = -Q.atoms().front().loc;
    const Eigen::MatrixXd& W0 = Q.atoms().front().W;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(W0);
    if (!lu.isInvertible())
        throw std::invalid_argument("invert_Q: leading atom weight is singular");
    Eigen::MatrixXd W0inv = lu.inverse();

    // core = delta_lam W0^{-1} * Q = I delta_0 + rest, supp(rest) in (0, lam]
    CompactMeasure core = convolve(CompactMeasure::dirac(lam, W0inv, h), Q);

    CompactMeasure rest(d, d, h);
    {
        bool found = false;
        for (const auto& a : core.atoms()) {
            if (std::abs(a.loc) <= atom_merge_tol(lam) * 10.0) {
                found = true;
                Eigen::MatrixXd res = a.W - Eigen::MatrixXd::Identity(d, d);
                if (res.cwiseAbs().maxCoeff() > 1e-9)
                    throw std::runtime_error("invert_Q: normalised leading atom is not I");
                continue;
            }
            if (a.loc < 0.0)
                throw std::invalid_argument("invert_Q: Q has atoms left of its leading atom");
            rest.add_atom(a.loc, a.W);
        }
        if (!found) throw std::runtime_error("invert_Q: lost the leading atom");
        for (const auto& blk : core.density_blocks()) rest.add_density(blk);
    }

    NeumannReport report;
    report.window = window;

    double lambda1 = std::numeric_limits<double>::infinity();
    for (const auto& a : rest.atoms()) lambda1 = std::min(lambda1, a.loc);

    // split the density part: n1 = -g~1 with ||g~1||_1 <= 1/2, supp inside
    // [0, sigma + h], sigma node-aligned and <= Lambda_1
    DensitySeries n1, g2;
    n1.h = g2.h = h;
    n1.rows = n1.cols = g2.rows = g2.cols = d;
    if (rest.has_density()) {
        if (rest.density_blocks().size() != 1)
            throw std::runtime_error("invert_Q: expected a single density block in Q");
        const DensitySeries& dens = rest.density_blocks()[0];
        double total = dens.l1();
        if (total < 1.0 - 1e-9) {
            report.split_skipped = true;
            n1 = dens;
            report.sigma = std::isfinite(lambda1) ? lambda1 : dens.supp_hi();
        } else {
            double cum = 0.0;
            int ks = -1;
            for (int i = 0; i < dens.n(); ++i) {
                double t_node = dens.t0 + i * h;
                if (t_node + h > lambda1 + 1e-12) break;
                double c2 = cum + h * dens.v.col(i).norm();
                if (c2 > 0.5) break;
                cum = c2;
                ks = i;
            }
            if (ks < 0)
                throw std::invalid_argument(
                    "invert_Q: no valid epsilon (kernel mass near zero exceeds 1/2 within one "
                    "grid cell; refine h)");
            n1.t0 = dens.t0;
            n1.v = dens.v.leftCols(ks + 1);
            g2.t0 = dens.t0 + ks * h;
            g2.v = dens.v.rightCols(dens.n() - ks);
            g2.v.col(0).setZero();  // the split point node belongs to g~1
            report.sigma = dens.t0 + ks * h;
            if (std::isfinite(lambda1)) report.epsilon = lambda1 - report.sigma;
        }
    } else {
        report.split_skipped = true;
        report.sigma = std::isfinite(lambda1) ? lambda1 : 0.0;
    }
    report.g1_l1 = n1.empty() ? 0.0 : n1.l1();
    if (report.g1_l1 >= 1.0)
        throw std::runtime_error("invert_Q: ||g~1||_1 >= 1 after split");

    // R = (I d0 + n1)^{-1} = d0 + sum_j (-1)^j n1^{*j}
    CompactMeasure R = CompactMeasure::identity(d, h);
    if (!n1.empty() && report.g1_l1 > 0.0) {
        const double theta = report.g1_l1;
        const double tmax = window + 2 * h;
        DensitySeries term = n1;
        double sign = -1.0, tail = theta;
        int terms = 0;
        while (tail / std::max(1e-300, 1.0 - theta) >= tol && terms < 500) {
            DensitySeries add = term;
            add.v *= sign;
            R.add_density(std::move(add));
            ++terms;
            tail *= theta;
            if (tail / std::max(1e-300, 1.0 - theta) < tol) break;
            term = conv_series(term, n1);
            // causal truncation: outputs beyond the window are never read
            if (term.t0 > tmax) break;
            if (term.t_end() > tmax) {
                int keep = static_cast<int>(std::floor((tmax - term.t0) / h)) + 1;
                term.v = Eigen::MatrixXd(term.v.leftCols(keep));
            }
            sign = -sign;
        }
        report.g1_terms = terms;
    }

    // F2 = rest - n1 (atoms plus the far density part)
    CompactMeasure F2(d, d, h);
    for (const auto& a : rest.atoms()) F2.add_atom(a.loc, a.W);
    if (!g2.empty()) F2.add_density(g2);

    // G = R * F2; Titchmarsh: min supp G > 0 makes the series finite on the window
    CompactMeasure S = CompactMeasure::identity(d, h);
    if (!F2.atoms().empty() || F2.has_density()) {
        CompactMeasure G = convolve(R, F2).restricted(-1.0, window + 2 * h);
        double sigmaG = G.l();
        if (!(sigmaG > 1e-12))
            throw std::runtime_error("invert_Q: support of G does not stay positive");
        CompactMeasure term = G;
        double sign = -1.0;
        int j = 1;
        while (j * sigmaG <= window + 2 * h) {
            S.add(term, sign);
            if (static_cast<double>(j + 1) * sigmaG > window + 2 * h) break;
            term = convolve(term, G).restricted(-1.0, window + 2 * h);
            if (term.atoms().empty() && term.density_l1() < 1e-300) break;
            sign = -sign;
            ++j;
        }
        report.G_terms = j;
    }

    CompactMeasure core_inv = convolve(S, R).restricted(-2 * h, window + 2 * h);
    CompactMeasure Qinv =
        convolve(core_inv, CompactMeasure::dirac(lam, W0inv, h)).restricted(lam - h, lam + window);

    auto defect = convolution_defect(Q, Qinv, window);
    report.atom_defect = defect.first;
    report.density_defect_l1 = defect.second;
    return {Qinv, report};
}

std::pair<double, double> convolution_defect(const CompactMeasure& Q,
                                             const CompactMeasure& Qinv, double window) {
    if (Q.cols() != Qinv.rows())
        throw std::invalid_argument("convolution_defect: shape mismatch");
    CompactMeasure D = convolve(Q, Qinv);
    const int d = Q.rows();
    const double tol0 = 1e-9;
    double atom_defect = 0.0;
    bool saw_identity = false;
    for (const auto& a : D.atoms()) {
        if (a.loc < -window - tol0 || a.loc > window + tol0) continue;
        if (std::abs(a.loc) <= tol0) {
            saw_identity = true;
            atom_defect = std::max(
                atom_defect, (a.W - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff());
        } else {
            atom_defect = std::max(atom_defect, a.W.cwiseAbs().maxCoeff());
        }
    }
    if (!saw_identity) atom_defect = std::max(atom_defect, 1.0);
    // the last two cells before the window edge read the truncated tail of
    // Qinv and are not meaningful; evaluate the density strictly inside
    const double hq = Q.step() > 0.0 ? Q.step() : 0.0;
    return {atom_defect, D.density_l1(-window, window - 2.0 * hq)};
}

GridFunction transfer_output(const CompactMeasure& Qinv, const CompactMeasure& P,
                             const GridFunction& u, double T_out, double window) {
    CompactMeasure A = convolve(Qinv, P);
    const double h = A.step() > 0.0 ? A.step() : u.step();
    // Qinv is only valid on [l(Qinv), l(Qinv) + window]
    const double valid_hi = window > 0.0 ? Qinv.l() + window : A.r();
    if (T_out - u.t_start() > valid_hi + 1e-9)
        throw std::invalid_argument(
            "transfer_output: requested output length exceeds the inversion window");
    int n = static_cast<int>(std::ceil(T_out / h - 1e-9)) + 1;
    return apply_measure(A, u, 0.0, n);
}

}  // namespace ddec
