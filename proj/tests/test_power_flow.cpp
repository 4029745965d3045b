#include <doctest.h>

#include <cmath>
#include <random>

#include "acdc/power_flow.hpp"
#include "support.hpp"

using namespace acdc;
using acdc::testing::epfl_model;
using acdc::testing::random_spec;

namespace {

GridModel two_bus(double r_pu, double x_pu) {
    GridData g;
    g.ac_nodes = {{"S", NodeKind::AcSlack}, {"L", NodeKind::AcPQ}};
    const double z_base = g.base.v_ac * g.base.v_ac / g.base.s_va;
    g.lines.push_back({"S-L", "S", "L", r_pu * z_base, x_pu * z_base, 500.0});
    return GridModel(g);
}

// Fixed-point iteration on the load bus: E2 = (conj(S2 / E2) - Y21 E1) / Y22.
Complex gauss_seidel_two_bus(const GridModel& m, Complex s2) {
    const Complex e1(1.0, 0.0);
    Complex e2(1.0, 0.0);
    const auto& y = m.y_ac();
    for (int it = 0; it < 10000; ++it) {
        Complex next = (std::conj(s2 / e2) - y(1, 0) * e1) / y(1, 1);
        if (std::abs(next - e2) < 1e-15) return next;
        e2 = next;
    }
    return e2;
}

}  // namespace

TEST_CASE("no-load flat network converges in one pass") {
    GridModel m = epfl_model().without_dcts().without_ic_losses();
    PfSpec spec = PfSpec::nominal(m);
    PfSolution sol = solve_pf(m, spec);
    CHECK(sol.converged);
    CHECK(sol.iterations == 1);
    for (int i = 0; i < m.ac_count(); ++i) CHECK(std::abs(sol.state.e_ac[i] - Complex(1.0, 0.0)) < 1e-15);
    for (int j = 0; j < m.dc_count(); ++j) CHECK(sol.state.e_dc[j] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("two-bus Newton solution matches a Gauss-Seidel fixed point") {
    GridModel m = two_bus(0.01, 0.1);
    PfSpec spec = PfSpec::nominal(m);
    spec.p[1] = -0.1;
    spec.q[1] = 0.0;
    PfSolution sol = solve_pf(m, spec, std::nullopt, {1e-13, 50});
    Complex oracle = gauss_seidel_two_bus(m, Complex(-0.1, 0.0));
    CHECK(std::abs(sol.state.e_ac[1] - oracle) < 1e-10);

    spec.q[1] = -0.05;
    sol = solve_pf(m, spec, std::nullopt, {1e-13, 50});
    CHECK(std::abs(sol.state.e_ac[1] - gauss_seidel_two_bus(m, Complex(-0.1, -0.05))) < 1e-10);
}

TEST_CASE("mismatch Jacobian matches central differences") {
    GridModel m = epfl_model();
    std::mt19937_64 rng(7);
    for (auto fidelity : {DctFidelity::Ideal, DctFidelity::Plant}) {
        PfSpec spec = random_spec(m, rng);
        spec.dct_fidelity = fidelity;
        GridState s = solve_pf(m, spec).state;
        // move away from the solution so the residual is not trivially zero
        for (int i = 0; i < m.ac_count(); ++i) s.e_ac[i] *= std::polar(1.0 + 1e-3 * (i % 3), 1e-3 * (i % 2));
        for (int j = 0; j < m.dc_count(); ++j) s.e_dc[j] += 1e-4 * (j % 4);
        Matrix jac = pf_jacobian(m, spec, s);
        const auto lay = layout_of(m);
        const double h = 1e-7;
        for (int col = 0; col < lay.size(); ++col) {
            auto perturbed = [&](double step) {
                GridState p = s;
                if (col < lay.ac) p.e_ac[col] = std::polar(std::abs(p.e_ac[col]) + step, std::arg(p.e_ac[col]));
                else if (col < 2 * lay.ac) {
                    int i = col - lay.ac;
                    p.e_ac[i] = std::polar(std::abs(p.e_ac[i]), std::arg(p.e_ac[i]) + step);
                } else {
                    p.e_dc[col - 2 * lay.ac] += step;
                }
                return mismatch(m, spec, p);
            };
            Vector fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
            for (int row = 0; row < lay.size(); ++row) {
                INFO("row " << describe_row(m, row) << " col " << col);
                CHECK(std::abs(fd[row] - jac(row, col)) <= 1e-6 * std::max(1.0, std::abs(jac(row, col))));
            }
        }
    }
}

TEST_CASE("converged solution: zero mismatch, conservation and converter balance") {
    GridModel m = epfl_model();
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        PfSpec spec = random_spec(m, rng);
        PfSolution sol = solve_pf(m, spec, std::nullopt, {1e-11, 50});
        REQUIRE(sol.converged);
        CHECK(sol.max_mismatch <= 1e-11);
        CHECK(mismatch(m, spec, sol.state).cwiseAbs().maxCoeff() <= 1e-11);

        // Sum of injections equals the series losses of every branch.
        double branch_losses = 0.0;
        for (std::size_t b = 0; b < m.branches().size(); ++b) {
            const auto& br = m.branches()[b];
            Complex i = branch_current(m, sol.state, static_cast<int>(b));
            branch_losses += (1.0 / br.y).real() * std::norm(i);
        }
        CHECK(std::abs(sol.state.p.sum() - branch_losses) <= 1e-9);

        // Ohm's law: Y * E reproduces the nodal injections.
        CVector i_nodal = nodal_currents(m, sol.state);
        for (int i = 0; i < m.ac_count(); ++i) {
            Complex s = sol.state.e_ac[i] * std::conj(i_nodal[i]);
            CHECK(std::abs(s - Complex(sol.state.p[i], sol.state.q[i])) <= 1e-10);
        }

        Vector dct = dct_injections(m, sol.state.e_dc, spec.dct_fidelity);
        for (std::size_t c = 0; c < m.ic_pairs().size(); ++c) {
            const auto& ic = m.ic_pairs()[c];
            const int n = m.ac_count();
            double p_ac = sol.state.p[ic.ac];
            double p_dc = sol.state.p[n + ic.dc] - dct[ic.dc];
            double mag = std::abs(sol.state.e_ac[ic.ac]);
            double loss = ic_loss(ic, p_ac, sol.state.q[ic.ac], mag).value + ic.filter * mag * mag;
            CHECK(std::abs(p_ac + p_dc + loss) <= 1e-10);
            CHECK(sol.state.q[ic.ac] == doctest::Approx(spec.ic[c].q).epsilon(1e-10));
            CHECK(sol.state.e_dc[ic.dc] == spec.ic[c].e_dc);
        }
        for (int j = 0; j < m.dc_count(); ++j) CHECK(sol.state.q[m.ac_count() + j] == 0.0);
    }
}

TEST_CASE("flat and warm start reach the same state") {
    GridModel m = epfl_model();
    std::mt19937_64 rng(3);
    PfSpec a = random_spec(m, rng);
    PfSpec b = random_spec(m, rng);
    PfOptions tight{1e-12, 50};
    GridState warm_init = solve_pf(m, a, std::nullopt, tight).state;
    GridState flat = solve_pf(m, b, std::nullopt, tight).state;
    GridState warm = solve_pf(m, b, warm_init, tight).state;
    CHECK((flat.e_ac - warm.e_ac).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((flat.e_dc - warm.e_dc).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("mismatch rows react only around a perturbed node") {
    GridModel m = epfl_model();
    PfSpec spec = PfSpec::nominal(m);
    GridState s = solve_pf(m, spec).state;
    Vector base = mismatch(m, spec, s);
    const int node = *m.find_ac("B06");
    s.e_ac[node] *= 1.001;
    Vector moved = mismatch(m, spec, s);
    const auto lay = layout_of(m);
    for (int i = 0; i < m.ac_count(); ++i) {
        bool touched = i == node || m.y_ac()(node, i) != Complex(0.0, 0.0);
        if (!touched) {
            CHECK(moved[lay.mag(i)] == base[lay.mag(i)]);
            CHECK(moved[lay.ang(i)] == base[lay.ang(i)]);
        }
    }
    CHECK(moved[lay.mag(node)] != base[lay.mag(node)]);
    for (int j = 0; j < m.dc_count(); ++j) CHECK(moved[lay.dcv(j)] == base[lay.dcv(j)]);
}

TEST_CASE("errors: non-convergence, singular Jacobian and over-specification") {
    GridModel m = two_bus(0.01, 0.1);
    PfSpec spec = PfSpec::nominal(m);
    spec.p[1] = -20.0;  // far beyond the maximum transferable power
    CHECK_THROWS_AS(solve_pf(m, spec), PowerFlowError);

    PfSpec over = PfSpec::nominal(m);
    over.p[0] = 0.1;  // P is not known at the slack
    CHECK_THROWS_AS(solve_pf(m, over), GridError);

    PfSpec bad_v = PfSpec::nominal(m);
    bad_v.v[0] = 0.0;
    CHECK_THROWS_AS(bad_v.validate(m), GridError);

    try {
        PfSpec far = PfSpec::nominal(m);
        far.p[1] = -20.0;
        solve_pf(m, far, std::nullopt, {1e-8, 5});
        FAIL("expected failure");
    } catch (const PowerFlowError& e) {
        CHECK(e.iteration() >= 1);
        CHECK(e.iteration() <= 5);
    }
}

TEST_CASE("EPFL grid converges from flat start within ten iterations") {
    GridModel m = epfl_model();
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        PfSpec spec = random_spec(m, rng);
        spec.dct_fidelity = trial % 2 ? DctFidelity::Plant : DctFidelity::Ideal;
        PfSolution sol = solve_pf(m, spec);
        CHECK(sol.iterations <= 10);
    }
}
