#include "ddec/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ddec/simulate.hpp"

namespace ddec {

namespace {

double power_iteration_sigma_sq(const Eigen::MatrixXd& gram) {
    if (gram.rows() == 0) return 0.0;
    Eigen::VectorXd v = Eigen::VectorXd::Ones(gram.rows()).normalized();
    double lam = 0.0;
    for (int it = 0; it < 40; ++it) {
        Eigen::VectorXd w = gram * v;
        double n = w.norm();
        if (n < 1e-300) return 0.0;
        v = w / n;
        lam = n;
    }
    return lam;
}

double target_norm(const GridFunction& psi, double q) { return lq_norm(psi, q); }

SynthesisResult solve_with_matrix(const InputMapMatrix& M, const Eigen::MatrixXd& gram,
                                  double sigma_sq, const GridFunction& psi, double lambda,
                                  double q) {
    Eigen::VectorXd rhs(M.d * M.n_theta);
    {
        GridFunction target = psi.resampled(M.theta0, M.h, M.n_theta);
        for (int i = 0; i < M.n_theta; ++i) rhs.segment(i * M.d, M.d) = target.data().col(i);
    }
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += lambda;
    Eigen::VectorXd u = Eigen::LDLT<Eigen::MatrixXd>(reg).solve(M.M.transpose() * rhs);

    SynthesisResult out;
    out.lambda = lambda;
    out.q = q;
    out.sigma_max_sq = sigma_sq;
    out.gram_cond_bound = lambda > 0.0 ? (sigma_sq + lambda) / lambda : 0.0;
    out.u = M.control_function(u);
    out.achieved = M.apply(u);

    GridFunction diff = out.achieved - psi.resampled(M.theta0, M.h, M.n_theta);
    double num = lq_norm(diff, q);
    double den = target_norm(psi, q);
    out.residual = den > 1e-300 ? num / den : 0.0;
    return out;
}

}  // namespace

SynthesisResult synthesize_control(const DelaySystem& sys, const GridFunction& psi, double T,
                                   double h, double lambda, double q,
                                   const BVFundamentalSolution* fund) {
    if (T <= 0.0) throw std::invalid_argument("synthesize_control: T must be positive");
    InputMapMatrix M = input_map(sys, T, h, fund);
    const double budget = 2.0e8;  // ~1.6 GB of doubles
    if (static_cast<double>(M.M.rows()) * static_cast<double>(M.M.cols()) > budget)
        throw std::invalid_argument("synthesize_control: operator matrix exceeds memory budget");
    Eigen::MatrixXd gram = M.M.transpose() * M.M;
    double sigma_sq = power_iteration_sigma_sq(gram);
    if (lambda <= 0.0) lambda = std::max(1e-300, 1e-8 * sigma_sq);
    return solve_with_matrix(M, gram, sigma_sq, psi, lambda, q);
}

double verify_control(const DelaySystem& sys, const GridFunction& u, const GridFunction& psi,
                      double T, double q) {
    const double h = u.step();
    GridFunction phi = GridFunction::zeros(sys.d, 1, -sys.lambda_max(), h,
                                           segment_grid_size(sys.lambda_max(), h));
    Trajectory traj = solve_ivp(sys, phi, u, T, h);
    GridFunction xT = state_segment(traj, traj.x.t_end());
    GridFunction diff = xT - psi.resampled(xT.t_start(), xT.step(), xT.size());
    double num = lq_norm(diff, q);
    double den = target_norm(psi, q);
    return den > 1e-300 ? num / den : num;
}

std::vector<ResidualPoint> residual_curve(const DelaySystem& sys, const GridFunction& psi,
                                          const std::vector<double>& T_list, double h,
                                          double lambda) {
    if (T_list.empty()) return {};
    for (size_t i = 0; i + 1 < T_list.size(); ++i)
        if (!(T_list[i] <= T_list[i + 1]))
            throw std::invalid_argument("residual_curve: T_list must be sorted ascending");
    if (T_list.front() <= 0.0)
        throw std::invalid_argument("residual_curve: horizons must be positive");

    const double T_max = T_list.back();
    BVFundamentalSolution fund = fundamental_solution(sys, T_max + h, h);

    // shared lambda, resolved once on the largest horizon
    double lam = lambda;
    InputMapMatrix M_max = input_map(sys, T_max, h, &fund);
    Eigen::MatrixXd gram_max = M_max.M.transpose() * M_max.M;
    double sigma_sq_max = power_iteration_sigma_sq(gram_max);
    if (lam <= 0.0) lam = std::max(1e-300, 1e-8 * sigma_sq_max);

    std::vector<ResidualPoint> out;
    Eigen::VectorXd prev_u;  // stacked samples on the previous grid
    const double qnorm = psi.exponent();

    for (double T : T_list) {
        const bool is_last = std::abs(T - T_max) < 1e-12;
        InputMapMatrix M = is_last ? std::move(M_max) : input_map(sys, T, h, &fund);
        Eigen::MatrixXd gram = is_last ? std::move(gram_max) : Eigen::MatrixXd(M.M.transpose() * M.M);
        double ss = is_last ? sigma_sq_max : power_iteration_sigma_sq(gram);
        SynthesisResult res = solve_with_matrix(M, gram, ss, psi, lam, qnorm);

        // safeguard: the previous optimum, zero-extended at the front, is an
        // admissible control here; never report a larger residual than it gives
        if (prev_u.size() > 0) {
            const int shift = M.n_u * M.m - static_cast<int>(prev_u.size());
            if (shift >= 0) {
                Eigen::VectorXd embedded = Eigen::VectorXd::Zero(M.n_u * M.m);
                embedded.tail(prev_u.size()) = prev_u;
                GridFunction achieved = M.apply(embedded);
                GridFunction diff = achieved - psi.resampled(M.theta0, M.h, M.n_theta);
                double den = target_norm(psi, qnorm);
                double r_emb = den > 1e-300 ? lq_norm(diff, qnorm) / den : 0.0;
                if (r_emb < res.residual) {
                    res.residual = r_emb;
                    res.u = M.control_function(embedded);
                    res.achieved = achieved;
                }
            }
        }
        prev_u = M.control_samples(res.u);
        out.push_back({M.T, res.residual});
    }
    return out;
}

}  // namespace ddec
