#include "ddec/fundamental.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ddec/parallel.hpp"

namespace ddec {

namespace {

// binary search for a lattice value within tolerance; -1 if absent
int find_lattice(const std::vector<FundamentalAtom>& atoms, double tau, double tol) {
    int lo = 0, hi = static_cast<int>(atoms.size()) - 1;
    while (lo <= hi) {
        int mid = (lo + hi) / 2;
        if (atoms[mid].tau < tau - tol)
            lo = mid + 1;
        else if (atoms[mid].tau > tau + tol)
            hi = mid - 1;
        else
            return mid;
    }
    return -1;
}

std::vector<FundamentalAtom> renewal_atoms(const DelaySystem& sys, double T, int max_atoms,
                                           double merge_tol) {
    auto lattice = lattice_points(sys.delays, T, merge_tol, max_atoms);
    std::vector<FundamentalAtom> atoms;
    atoms.reserve(lattice.size());
    for (const auto& pt : lattice) {
        FundamentalAtom a;
        a.tau = pt.tau;
        a.multi_indices = pt.multi_indices;
        if (atoms.empty()) {
            a.J = Eigen::MatrixXd::Identity(sys.d, sys.d);
        } else {
            a.J = Eigen::MatrixXd::Zero(sys.d, sys.d);
            for (int j = 0; j < sys.N(); ++j) {
                int k = find_lattice(atoms, pt.tau - sys.delays[j], merge_tol);
                if (k >= 0) a.J.noalias() += sys.A[j] * atoms[k].J;
            }
        }
        atoms.push_back(std::move(a));
    }
    // zero jumps contribute nothing; keep tau = 0
    std::vector<FundamentalAtom> pruned;
    for (auto& a : atoms)
        if (a.tau == 0.0 || a.J.cwiseAbs().maxCoeff() > 0.0) pruned.push_back(std::move(a));
    return pruned;
}

}  // namespace

Eigen::MatrixXd BVFundamentalSolution::reconstruct(double t) const {
    const int d = atoms.empty() ? ac_density.rows() : atoms[0].J.rows();
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(d, d);
    if (t <= 0.0) return X;
    for (const auto& a : atoms) {
        if (a.tau < t) X += a.J;
        else break;
    }
    // cumulative trapezoid of the density up to t
    const double h = ac_density.step();
    const int n = ac_density.size();
    double tend = std::min(t, ac_density.t_end());
    int full = static_cast<int>(std::floor((tend - ac_density.t_start()) / h + 1e-12));
    full = std::min(full, n - 1);
    for (int k = 0; k < full; ++k) {
        Eigen::MatrixXd avg = 0.5 * (ac_density.sample_at(k) + ac_density.sample_at(k + 1));
        X += h * avg;
    }
    double rest = tend - (ac_density.t_start() + full * h);
    if (rest > 1e-14) {
        Eigen::MatrixXd v0 = ac_density.sample_at(full);
        Eigen::MatrixXd v1 = ac_density.value(tend);
        X += rest * 0.5 * (v0 + v1);
    }
    return X;
}

BVFundamentalSolution fundamental_solution(const DelaySystem& sys, double T, double h,
                                           int max_atoms) {
    if (T <= 0.0) throw std::invalid_argument("fundamental_solution: T must be positive");
    const double merge_tol = default_merge_tol(T);
    BVFundamentalSolution fund;
    fund.T = T;
    fund.atoms = renewal_atoms(sys, T, max_atoms, merge_tol);

    const int d = sys.d;
    if (sys.kernel.is_zero()) {
        int n = static_cast<int>(std::ceil(T / h - 1e-9)) + 1;
        fund.ac_density = GridFunction::zeros(d, d, 0.0, h, n);
        return fund;
    }

    // Continuous part: C(t) = sum_j A_j C(t-L_j) + int g(s) C(t-s) ds + f(t),
    // with exactly computable forcing f(t) = sum_{tau_i < t} G(t - tau_i) J_i,
    // G(x) = int_0^x g. Solved by the same implicit-trapezoid march as the
    // simulator, column by column.
    const auto& atoms = fund.atoms;
    auto forcing_mat = [&](double t) {
        Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
        for (const auto& a : atoms) {
            if (a.tau >= t) break;
            f.noalias() += sys.kernel.integral(0.0, t - a.tau) * a.J;
        }
        return f;
    };

    const int n_T = static_cast<int>(std::ceil(T / h - 1e-9));
    const int n = n_T + 1;
    std::vector<Eigen::MatrixXd> fcache(n);
    parallel_for_blocks(n, [&](int lo, int hi) {
        for (int k = lo; k < hi; ++k) fcache[k] = forcing_mat(k * h);
    });

    Eigen::MatrixXd C_flat(d * d, n);  // C columns stacked per time node
    for (int col = 0; col < d; ++col) {
        auto history = [&](double, Eigen::Ref<Eigen::VectorXd> out) { out.setZero(); };
        auto forcing = [&](double t, Eigen::Ref<Eigen::VectorXd> out) {
            int k = static_cast<int>(std::llround(t / h));
            out = fcache[k].col(col);
        };
        GridFunction Ccol = march_forced(sys, history, forcing, T, h, nullptr);
        // drop history nodes (identically zero)
        int off = Ccol.size() - n;
        for (int k = 0; k < n; ++k)
            for (int r = 0; r < d; ++r) C_flat(col * d + r, k) = Ccol.data()(r, k + off);
    }

    // c = dC/dt by differencing; the stencil never straddles a known kink of c
    // (lattice points and lattice + kernel breakpoints), where one-sided
    // differences from the smooth side are used instead.
    std::vector<double> kinks;
    for (const auto& a : atoms)
        for (double b : sys.kernel.breakpoints()) {
            double x = a.tau + b;
            if (x < T + h) kinks.push_back(x);
        }
    std::sort(kinks.begin(), kinks.end());
    // kinks strictly inside the open interval (lo, hi)
    auto kink_in = [&](double lo, double hi) {
        auto it = std::upper_bound(kinks.begin(), kinks.end(), lo + 1e-9);
        return it != kinks.end() && *it < hi - 1e-9;
    };
    auto kink_at = [&](double t) {
        auto it = std::lower_bound(kinks.begin(), kinks.end(), t - 1e-9);
        return it != kinks.end() && std::abs(*it - t) <= 1e-9;
    };

    Eigen::MatrixXd c_flat(d * d, n);
    for (int k = 0; k < n; ++k) {
        const double t = k * h;
        const bool at_kink = kink_at(t);
        const bool clean_l1 = k >= 1 && !kink_in(t - h, t) && !kink_at(t - h);
        const bool clean_l2 = k >= 2 && clean_l1 && !kink_in(t - 2 * h, t - h);
        const bool clean_r1 = k + 1 < n && !kink_in(t, t + h) && !kink_at(t + h);
        const bool clean_r2 = k + 2 < n && clean_r1 && !kink_in(t + h, t + 2 * h);
        if (!at_kink && clean_l1 && clean_r1) {
            c_flat.col(k) = (C_flat.col(k + 1) - C_flat.col(k - 1)) / (2.0 * h);
        } else if (clean_r2) {
            // one-sided from the right (the value at a jump is its right limit)
            c_flat.col(k) =
                (-3.0 * C_flat.col(k) + 4.0 * C_flat.col(k + 1) - C_flat.col(k + 2)) /
                (2.0 * h);
        } else if (!at_kink && clean_l2) {
            c_flat.col(k) =
                (3.0 * C_flat.col(k) - 4.0 * C_flat.col(k - 1) + C_flat.col(k - 2)) / (2.0 * h);
        } else if (clean_r1) {
            c_flat.col(k) = (C_flat.col(k + 1) - C_flat.col(k)) / h;
        } else if (!at_kink && clean_l1) {
            c_flat.col(k) = (C_flat.col(k) - C_flat.col(k - 1)) / h;
        } else if (clean_l2) {
            c_flat.col(k) =
                (3.0 * C_flat.col(k) - 4.0 * C_flat.col(k - 1) + C_flat.col(k - 2)) / (2.0 * h);
        } else if (k + 1 < n) {
            c_flat.col(k) = (C_flat.col(k + 1) - C_flat.col(k)) / h;
        } else {
            c_flat.col(k) = (C_flat.col(k) - C_flat.col(k - 1)) / h;
        }
    }
    fund.ac_density = GridFunction(d, d, 0.0, h, std::move(c_flat));
    return fund;
}

namespace {

struct ThetaGrid {
    int n = 0;
    double theta0 = 0.0;
    double h = 0.0;
};

ThetaGrid theta_grid(const DelaySystem& sys, double h) {
    ThetaGrid g;
    g.n = segment_grid_size(sys.lambda_max(), h);
    g.h = h;
    g.theta0 = -(g.n - 1) * h;
    return g;
}

}  // namespace

GridFunction InputMapMatrix::apply(const Eigen::VectorXd& u_stacked) const {
    Eigen::VectorXd y = M * u_stacked;
    Eigen::MatrixXd data(d, n_theta);
    for (int i = 0; i < n_theta; ++i) data.col(i) = y.segment(i * d, d);
    return GridFunction(d, 1, theta0, h, std::move(data));
}

Eigen::VectorXd InputMapMatrix::control_samples(const GridFunction& u) const {
    Eigen::VectorXd s(m * n_u);
    Eigen::VectorXd tmp(m);
    for (int k = 0; k < n_u; ++k) {
        u.value_into((k + 1) * h, tmp);
        s.segment(k * m, m) = tmp;
    }
    return s;
}

GridFunction InputMapMatrix::apply(const GridFunction& u) const {
    return apply(control_samples(u));
}

GridFunction InputMapMatrix::control_function(const Eigen::VectorXd& u_stacked) const {
    Eigen::MatrixXd data = Eigen::MatrixXd::Zero(m, n_u + 1);
    for (int k = 0; k < n_u; ++k) data.col(k + 1) = u_stacked.segment(k * m, m);
    return GridFunction(m, 1, 0.0, h, std::move(data));
}

InputMapMatrix input_map(const DelaySystem& sys, double T, double h,
                         const BVFundamentalSolution* fund_in) {
    if (T <= 0.0) throw std::invalid_argument("input_map: T must be positive");
    BVFundamentalSolution local;
    const BVFundamentalSolution* fund = fund_in;
    if (!fund) {
        local = fundamental_solution(sys, T, h);
        fund = &local;
    }

    const int n_u = static_cast<int>(std::ceil(T / h - 1e-9));
    const double Tg = n_u * h;
    ThetaGrid tg = theta_grid(sys, h);
    const int d = sys.d, m = sys.m;

    InputMapMatrix im;
    im.T = Tg;
    im.h = h;
    im.d = d;
    im.m = m;
    im.n_theta = tg.n;
    im.n_u = n_u;
    im.theta0 = tg.theta0;
    im.M = Eigen::MatrixXd::Zero(d * tg.n, m * n_u);

    const bool has_density = !sys.kernel.is_zero();
    const GridFunction& c = fund->ac_density;
    const int nc = c.size();

    // precompute J_i B and the half-cell trapezoid weights (h/2) c(s_k) B
    std::vector<Eigen::MatrixXd> atomJB;
    atomJB.reserve(fund->atoms.size());
    for (const auto& a : fund->atoms) atomJB.push_back(a.J * sys.B);
    std::vector<Eigen::MatrixXd> cB(has_density ? nc : 0);
    for (int k = 0; k < (has_density ? nc : 0); ++k)
        cB[k] = 0.5 * h * (c.sample_at(k) * sys.B);

    // weight at argument x spreads onto the two bracketing control nodes;
    // the node at 0 is pinned to zero and dropped
    auto add_at = [&](Eigen::Ref<Eigen::MatrixXd> rows, double x, const Eigen::MatrixXd& W,
                      double scale) {
        const double pos = x / h;
        if (pos < -1e-9 || pos > n_u + 1e-9) return;
        int k = static_cast<int>(std::floor(pos + 1e-12));
        double fr = pos - k;
        if (k >= 0 && k <= n_u && std::abs(fr) < 1e-9) {
            if (k >= 1) rows.middleCols((k - 1) * m, m) += scale * W;
            return;
        }
        if (k >= 1 && k <= n_u) rows.middleCols((k - 1) * m, m) += scale * (1.0 - fr) * W;
        if (k + 1 >= 1 && k + 1 <= n_u) rows.middleCols(k * m, m) += scale * fr * W;
    };

    parallel_for_blocks(tg.n, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            const double theta = tg.theta0 + i * tg.h;
            auto rows = im.M.middleRows(i * d, d);
            for (size_t ai = 0; ai < fund->atoms.size(); ++ai) {
                double x = Tg + theta - fund->atoms[ai].tau;
                if (x < -1e-9) continue;
                add_at(rows, x, atomJB[ai], 1.0);
            }
            if (has_density) {
                for (int k = 0; k + 1 < nc; ++k) {
                    double x0 = Tg + theta - k * h;
                    if (x0 < -1e-9) break;  // later cells only push x further negative
                    add_at(rows, x0, cB[k], 1.0);
                    add_at(rows, x0 - h, cB[k + 1], 1.0);
                }
            }
        }
    });
    return im;
}

GridFunction apply_input_map(const DelaySystem& sys, const BVFundamentalSolution& fund,
                             const GridFunction& u, double T) {
    const double h = fund.ac_density.step();
    ThetaGrid tg = theta_grid(sys, h);
    const int d = sys.d;
    const bool has_density = !sys.kernel.is_zero();
    const GridFunction& c = fund.ac_density;
    const int nc = c.size();

    std::vector<Eigen::MatrixXd> atomJB;
    atomJB.reserve(fund.atoms.size());
    for (const auto& a : fund.atoms) atomJB.push_back(a.J * sys.B);
    std::vector<Eigen::MatrixXd> cB(has_density ? nc : 0);
    for (int k = 0; k < (has_density ? nc : 0); ++k)
        cB[k] = 0.5 * h * (c.sample_at(k) * sys.B);

    Eigen::MatrixXd data = Eigen::MatrixXd::Zero(d, tg.n);
    parallel_for_blocks(tg.n, [&](int lo, int hi) {
        Eigen::VectorXd uval(sys.m), acc(d);
        for (int i = lo; i < hi; ++i) {
            const double theta = tg.theta0 + i * tg.h;
            acc.setZero();
            for (size_t ai = 0; ai < fund.atoms.size(); ++ai) {
                double x = T + theta - fund.atoms[ai].tau;
                if (x < -1e-9 || x > T + 1e-9) continue;
                u.value_into(x, uval);
                acc.noalias() += atomJB[ai] * uval;
            }
            if (has_density) {
                for (int k = 0; k + 1 < nc; ++k) {
                    double x0 = T + theta - k * h;
                    if (x0 < -1e-9) break;
                    u.value_into(x0, uval);
                    acc.noalias() += cB[k] * uval;
                    u.value_into(x0 - h, uval);
                    acc.noalias() += cB[k + 1] * uval;
                }
            }
            data.col(i) = acc;
        }
    });
    return GridFunction(d, 1, tg.theta0, h, std::move(data));
}

}  // namespace ddec
