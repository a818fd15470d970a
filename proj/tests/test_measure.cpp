#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ddec/frequency.hpp"
#include "ddec/fundamental.hpp"
#include "ddec/measure.hpp"
#include "ddec/simulate.hpp"
#include "helpers.hpp"

using namespace ddec;
using helpers::scalar;
using std::numbers::pi;

namespace {

CompactMeasure indicator_density(double lo, double hi, double h, double value = 1.0) {
    return CompactMeasure::from_density(
        1, 1, h, lo, hi, [&](double) { return scalar(value); },
        [&](double x, double y) { return scalar(value * (y - x)); },
        [&](double x, double y) { return scalar(value * 0.5 * (y * y - x * x)); });
}

std::mt19937 measure_rng(20250810);

CompactMeasure random_small_measure(std::mt19937& rng, double h) {
    std::uniform_real_distribution<double> loc(-1.0, 1.0), w(-1.0, 1.0);
    CompactMeasure m(1, 1, h);
    int na = 1 + static_cast<int>(rng() % 2);
    for (int i = 0; i < na; ++i) m.add_atom(loc(rng), scalar(w(rng)));
    double a = loc(rng), b = a + 0.3 + 0.5 * std::abs(loc(rng));
    double v = w(rng);
    m.add(indicator_density(a, b, h, v));
    return m;
}

}  // namespace

TEST_CASE("Dirac algebra: atoms convolve by location sums and weight products") {
    Eigen::MatrixXd M = (Eigen::MatrixXd(2, 2) << 1, 2, 3, 4).finished();
    Eigen::MatrixXd K = (Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished();
    auto a = CompactMeasure::dirac(0.7, M);
    auto b = CompactMeasure::dirac(-0.2, K);
    auto c = convolve(a, b);
    REQUIRE(c.atoms().size() == 1);
    CHECK(c.atoms()[0].loc == doctest::Approx(0.5));
    CHECK((c.atoms()[0].W - M * K).norm() == 0.0);
}

TEST_CASE("delta_0 I is a two-sided identity") {
    auto id = CompactMeasure::identity(1, 1e-3);
    auto m = random_small_measure(measure_rng, 1e-3);
    for (const auto& prod : {convolve(id, m), convolve(m, id)}) {
        REQUIRE(prod.atoms().size() == m.atoms().size());
        for (size_t i = 0; i < m.atoms().size(); ++i) {
            CHECK(prod.atoms()[i].loc == doctest::Approx(m.atoms()[i].loc).epsilon(1e-14));
            CHECK((prod.atoms()[i].W - m.atoms()[i].W).norm() <= 1e-14);
        }
        // identical density samples (integer shift by 0)
        CHECK((prod.density_blocks()[0].v - m.density_blocks()[0].v).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("indicator * indicator is the triangular hat") {
    const double h = 1e-3;
    auto ind = indicator_density(0.0, 1.0, h);
    auto tri = convolve(ind, ind);
    CHECK(!tri.has_density() == false);
    // L1 distance to the exact hat on [0, 2]
    const auto& d = tri.density_blocks()[0];
    double err = 0.0;
    for (int i = 0; i < d.n(); ++i) {
        double t = d.t0 + i * h;
        double expect = t < 0 || t > 2 ? 0.0 : 1.0 - std::abs(t - 1.0);
        err += h * std::abs(d.v(0, i) - expect);
    }
    CHECK(err <= 1e-4);
    // peak value carries the O(h) edge-representation wiggle pointwise
    CHECK(tri.density_value(1.0)(0, 0) == doctest::Approx(1.0).epsilon(5 * h));
}

TEST_CASE("Titchmarsh support law on atom-only measures") {
    std::uniform_real_distribution<double> loc(-2.0, 2.0);
    for (int trial = 0; trial < 12; ++trial) {
        CompactMeasure a(1, 1), b(1, 1);
        int na = 1 + measure_rng() % 3, nb = 1 + measure_rng() % 3;
        for (int i = 0; i < na; ++i) a.add_atom(loc(measure_rng), scalar(1.0 + i));
        for (int i = 0; i < nb; ++i) b.add_atom(loc(measure_rng), scalar(2.0 + i));
        auto c = convolve(a, b);
        CHECK(c.l() == doctest::Approx(a.l() + b.l()).epsilon(1e-13));
    }
}

TEST_CASE("Laplace transform is a convolution homomorphism") {
    const double h = 1e-3;
    std::uniform_real_distribution<double> pr(-1.5, 1.5);
    for (int trial = 0; trial < 6; ++trial) {
        auto a = random_small_measure(measure_rng, h);
        auto b = random_small_measure(measure_rng, h);
        auto c = convolve(a, b);
        std::complex<double> p(pr(measure_rng), pr(measure_rng) * 3.0);
        auto lhs = c.laplace(p)(0, 0);
        auto rhs = a.laplace(p)(0, 0) * b.laplace(p)(0, 0);
        CHECK(std::abs(lhs - rhs) <= 1e-6 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("convolution is associative and bilinear within quadrature slack") {
    const double h = 1e-3;
    auto a = random_small_measure(measure_rng, h);
    auto b = random_small_measure(measure_rng, h);
    auto c = random_small_measure(measure_rng, h);
    auto ab_c = convolve(convolve(a, b), c);
    auto a_bc = convolve(a, convolve(b, c));
    double scale = (1.0 + a.density_l1() + a.max_atom_norm()) *
                   (1.0 + b.density_l1() + b.max_atom_norm()) *
                   (1.0 + c.density_l1() + c.max_atom_norm());
    // compare densities in L1 on a common window
    double lo = std::min(ab_c.l(), a_bc.l()), hi = std::max(ab_c.r(), a_bc.r());
    double err = 0.0;
    for (double t = lo; t <= hi; t += h) {
        double va = ab_c.has_density() ? ab_c.density_value(t)(0, 0) : 0.0;
        double vb = a_bc.has_density() ? a_bc.density_value(t)(0, 0) : 0.0;
        err += h * std::abs(va - vb);
    }
    CHECK(err <= 10 * h * scale);

    auto sum = convolve(a, b);
    sum.add(convolve(a, c));
    auto bc = b;
    bc.add(c);
    auto dist = convolve(a, bc);
    double err2 = 0.0;
    for (double t = dist.l(); t <= dist.r(); t += h) {
        double va = dist.has_density() ? dist.density_value(t)(0, 0) : 0.0;
        double vb = sum.has_density() ? sum.density_value(t)(0, 0) : 0.0;
        err2 += h * std::abs(va - vb);
    }
    CHECK(err2 <= 10 * h * scale);
}

TEST_CASE("build_QP transcribes the incommensurate example") {
    DelaySystem sys = helpers::scalar_pi();
    auto [Q, P] = build_QP(sys, 1e-3);

    REQUIRE(Q.atoms().size() == 3);
    CHECK(Q.atoms()[0].loc == doctest::Approx(-pi).epsilon(1e-15));
    CHECK(Q.atoms()[0].W(0, 0) == doctest::Approx(1.0));
    CHECK(Q.atoms()[1].loc == doctest::Approx(1.0 - pi).epsilon(1e-14));
    CHECK(Q.atoms()[1].W(0, 0) == doctest::Approx(-0.3));
    CHECK(Q.atoms()[2].loc == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(Q.atoms()[2].W(0, 0) == doctest::Approx(-0.2));

    REQUIRE(Q.has_density());
    CHECK(Q.density_value(-1.5)(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
    // density nodes sit at half-cell offsets, so the hat-sum support may
    // poke h/2 beyond the true one
    CHECK(Q.l() >= -pi - 1e-3);
    CHECK(Q.r() <= 1e-3);

    REQUIRE(P.atoms().size() == 1);
    CHECK(P.atoms()[0].loc == 0.0);
    CHECK(P.atoms()[0].W(0, 0) == doctest::Approx(1.0));

    // Laplace cross-check against the characteristic matrix
    std::uniform_real_distribution<double> pr(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        std::complex<double> p(pr(measure_rng), 2.0 * pr(measure_rng));
        auto ev = char_eval(sys, p);
        auto expect = std::exp(p * pi) * ev.H(0, 0);
        auto got = Q.laplace(p)(0, 0);
        CHECK(std::abs(got - expect) <= 1e-8 * std::max(1.0, std::abs(expect)));
    }
}

TEST_CASE("invert_Q: trivial shift") {
    auto Q = CompactMeasure::dirac(-2.0, Eigen::MatrixXd::Identity(2, 2), 1e-2);
    auto [Qinv, rep] = invert_Q(Q, 3.0, 1e-10);
    REQUIRE(Qinv.atoms().size() == 1);
    CHECK(Qinv.atoms()[0].loc == doctest::Approx(2.0).epsilon(1e-15));
    CHECK((Qinv.atoms()[0].W - Eigen::MatrixXd::Identity(2, 2)).norm() == 0.0);
    CHECK(!Qinv.has_density());
    CHECK(rep.atom_defect <= 1e-14);
    CHECK(rep.density_defect_l1 == 0.0);
}

TEST_CASE("invert_Q: pure-difference geometric Dirac series") {
    const double a = 0.5;
    DelaySystem sys = helpers::pure_difference(a, 1.0);
    auto [Q, P] = build_QP(sys, 1e-2);
    auto [Qinv, rep] = invert_Q(Q, 3.0, 1e-10);
    REQUIRE(Qinv.atoms().size() == 4);
    for (int k = 0; k < 4; ++k) {
        CHECK(Qinv.atoms()[k].loc == doctest::Approx(1.0 + k).epsilon(1e-14));
        CHECK(Qinv.atoms()[k].W(0, 0) == doctest::Approx(std::pow(a, k)).epsilon(1e-14));
    }
    auto defect = convolution_defect(Q, Qinv, 3.0);
    CHECK(defect.first <= 1e-12);

    // deliberately wrong inverse: drop the last kept atom
    CompactMeasure wrong(1, 1, 1e-2);
    for (int k = 0; k < 3; ++k) wrong.add_atom(1.0 + k, scalar(std::pow(a, k)));
    auto bad = convolution_defect(Q, wrong, 3.0);
    CHECK(bad.first == doctest::Approx(std::pow(a, 3)).epsilon(1e-12));
}

TEST_CASE("invert_Q on the incommensurate example self-validates") {
    DelaySystem sys = helpers::scalar_pi();
    const double h = 1e-3;
    auto [Q, P] = build_QP(sys, h);
    auto [Qinv, rep] = invert_Q(Q, pi, 1e-8);
    CHECK(!rep.split_skipped);
    CHECK(rep.g1_l1 < 1.0);
    CHECK(rep.g1_l1 <= 0.5 + 1e-6);
    CHECK(rep.sigma == doctest::Approx(0.5).epsilon(0.01));
    CHECK(rep.atom_defect <= 1e-8);
    CHECK(rep.density_defect_l1 <= 1e-3);
    CHECK(Qinv.l() >= pi - 2 * h);
}

TEST_CASE("transfer_output: pure shift and the geometric series") {
    // Q = delta_{-L} I, P = I: y(t) = u(t - L)
    const double h = 1e-2;
    auto Q = CompactMeasure::dirac(-1.0, Eigen::MatrixXd::Identity(1, 1), h);
    auto [Qinv, rep] = invert_Q(Q, 4.0, 1e-10);
    auto P = CompactMeasure::dirac(0.0, scalar(1.0), h);
    std::mt19937 rng(31);
    GridFunction u = helpers::random_smooth(rng, 1, -1.0, 0.0, h, 0.25);
    GridFunction y = transfer_output(Qinv, P, u, 2.0, 4.0);
    for (int k = 0; k < y.size(); ++k) {
        double t = y.node(k);
        CHECK(y.data()(0, k) == doctest::Approx(u.value(t - 1.0)(0, 0)).epsilon(1e-10));
    }

    // pure difference: y(t) = sum a^k u(t - 1 - k)
    const double a = 0.5;
    DelaySystem sys = helpers::pure_difference(a, 1.0);
    auto [Q2, P2] = build_QP(sys, h);
    auto [Q2inv, rep2] = invert_Q(Q2, 6.0, 1e-12);
    GridFunction y2 = transfer_output(Q2inv, P2, u, 4.0, 6.0);
    for (int k = 0; k < y2.size(); ++k) {
        double t = y2.node(k);
        double expect = 0.0;
        for (int j = 0; j <= 5; ++j) expect += std::pow(a, j) * u.value(t - 1.0 - j)(0, 0);
        CHECK(y2.data()(0, k) == doctest::Approx(expect).epsilon(1e-9));
    }

    CHECK_THROWS_WITH_AS(transfer_output(Q2inv, P2, u, 100.0, 6.0), doctest::Contains("window"),
                         std::invalid_argument);
}

TEST_CASE("transfer_output matches the simulator on the incommensurate example") {
    DelaySystem sys = helpers::scalar_pi();
    const double h = 1e-3;
    auto [Q, P] = build_QP(sys, h);
    auto [Qinv, rep] = invert_Q(Q, 2 * pi, 1e-8);

    // u: hat on [-1, 0]
    GridFunction u = GridFunction::sample(1, 1, -1.0, h, 1001, [](double t) {
        return scalar(t < -1 || t > 0 ? 0.0 : 1.0 - std::abs(2.0 * t + 1.0));
    });
    const double T_out = 4.0;
    GridFunction y = transfer_output(Qinv, P, u, T_out, 2 * pi);

    // simulator route: shift u to positive time, output delayed by Lambda_N
    GridFunction u_pos = GridFunction::sample(1, 1, 0.0, h, 1001, [&](double t) {
        return Eigen::MatrixXd(u.value(t - 1.0));
    });
    GridFunction phi = helpers::history(sys, h, [](double) { return Eigen::VectorXd::Zero(1); });
    Trajectory traj = solve_ivp(sys, phi, u_pos, T_out + 1.0, h);

    double num = 0.0, den = 0.0;
    for (int k = 0; k < y.size(); ++k) {
        double t = y.node(k);
        double sim = traj.value(t - pi + 1.0)(0, 0);
        num += h * std::pow(y.data()(0, k) - sim, 2);
        den += h * std::pow(sim, 2);
    }
    CHECK(std::sqrt(num) <= 1e-3 * std::max(1.0, std::sqrt(den)));
}

TEST_CASE("fundamental-solution link: two derivations of the impulse response") {
    DelaySystem sys = helpers::scalar_pi();
    const double h = 1e-3, window = 2 * pi;
    auto [Q, P] = build_QP(sys, h);
    auto [Qinv, rep] = invert_Q(Q, window, 1e-8);
    auto fund = fundamental_solution(sys, window, h);

    CompactMeasure impulse = convolve(
        convolve(CompactMeasure::dirac(-pi, Eigen::MatrixXd::Identity(1, 1), h), Qinv), P);

    // atoms match (tau_i, J_i B) pairwise
    size_t matched = 0;
    for (const auto& fa : fund.atoms) {
        if (fa.tau > window - pi) break;
        bool found = false;
        for (const auto& qa : impulse.atoms()) {
            if (std::abs(qa.loc - fa.tau) <= 1e-10 * std::max(1.0, fa.tau)) {
                CHECK((qa.W - fa.J * sys.B).cwiseAbs().maxCoeff() <= 1e-8);
                found = true;
                break;
            }
        }
        CHECK(found);
        ++matched;
    }
    CHECK(matched >= 5);

    // densities agree in L1 on [0, window - pi]; both sides are compared as
    // interpolants so jump ramps at matching locations cancel
    const auto& c = fund.ac_density;
    double err = 0.0;
    const double fine = h / 4.0;
    for (double t = 0.0; t <= window - pi; t += fine) {
        double mine = impulse.density_value(t)(0, 0);
        err += fine * std::abs(mine - c.value(t)(0, 0) * sys.B(0, 0));
    }
    CHECK(err <= 1e-3);
}

TEST_CASE("extended states annihilate Q: pi(Q * y) is small") {
    DelaySystem sys = helpers::scalar_pi();
    const double h = 1e-3, T = 2 * pi;
    std::mt19937 rng(37);
    GridFunction y0 = helpers::random_smooth(rng, 1, 0.0, pi, h, 0.4);
    GridFunction y = extend_state(sys, y0, T, h);
    auto [Q, P] = build_QP(sys, h);
    const int n_out = static_cast<int>(std::floor((T - pi) / h));
    GridFunction Qy = apply_measure(Q, y, 0.0, n_out);
    double l1 = 0.0;
    for (int k = 0; k < Qy.size(); ++k) l1 += h * std::abs(Qy.data()(0, k));
    CHECK(l1 <= 10 * h);
}
