#include <doctest.h>

#include <random>

#include "acdc/sensitivity.hpp"
#include "support.hpp"

using namespace acdc;
using namespace acdc::testing;

namespace {

GridModel two_bus() {
    GridData g;
    g.ac_nodes = {{"S", NodeKind::AcSlack}, {"L", NodeKind::AcPQ}};
    g.lines.push_back({"S-L", "S", "L", 0.016, 0.16, 500.0});
    return GridModel(g);
}

// AC slack + PQ, one EdcQac converter, and a separate DC island held by a DcV node.
GridModel small_hybrid() {
    GridData g;
    g.ac_nodes = {{"S", NodeKind::AcSlack}, {"A", NodeKind::AcPQ}, {"X", NodeKind::IcAc, IcMode::EdcQac}};
    g.dc_nodes = {{"Y", NodeKind::IcDc, IcMode::EdcQac},
                  {"D", NodeKind::DcP},
                  {"W", NodeKind::DcV},
                  {"Z", NodeKind::DcP}};
    g.ic_pairs.push_back({"IC", "X", "Y", 45.0, {0.0005, 0.002, 0.01}, 0.0002});
    g.lines.push_back({"S-A", "S", "A", 0.02, 0.01, 100.0});
    g.lines.push_back({"A-X", "A", "X", 0.02, 0.01, 100.0});
    g.lines.push_back({"Y-D", "Y", "D", 0.1, std::nullopt, 100.0});
    g.lines.push_back({"W-Z", "W", "Z", 0.1, std::nullopt, 100.0});
    return GridModel(g);
}

}  // namespace

TEST_CASE("EPFL variable set covers every setpoint") {
    GridModel m = epfl_model();
    auto vars = all_control_variables(m);
    // 13 PQ nodes (P, Q), 4 IC reactive powers, 4 IC DC voltages, 4 DC power nodes
    CHECK(vars.size() == 38);
    CHECK(assemble_A(m, GridState::flat(m)).rows() == 44);
}

TEST_CASE("variable validation follows the node taxonomy") {
    GridModel m = epfl_model();
    const int dc_node = m.unified_of("B24");
    CHECK_THROWS_AS(validate_variable(m, {Quantity::Q, dc_node}), GridError);
    CHECK_THROWS_AS(validate_variable(m, {Quantity::E, m.unified_of("B03")}), GridError);
    CHECK_THROWS_AS(validate_variable(m, {Quantity::P, m.unified_of("B01")}), GridError);
    CHECK_THROWS_AS(validate_variable(m, {Quantity::P, m.unified_of("B15")}), GridError);  // EdcQac
    CHECK_THROWS_AS(validate_variable(m, {Quantity::P, 999}), GridError);
    CHECK_NOTHROW(validate_variable(m, {Quantity::E, m.unified_of("B20")}));
    CHECK_NOTHROW(validate_variable(m, {Quantity::Q, m.unified_of("B16")}));

    GridState s = solve_pf(m, PfSpec::nominal(m)).state;
    Vector u = rhs_u(m, s, {Quantity::P, m.unified_of("B05")});
    CHECK(u.sum() == 1.0);
    CHECK(u[layout_of(m).mag(*m.find_ac("B05"))] == 1.0);
}

TEST_CASE("flat no-load two-bus matrix matches the hand derivation") {
    GridModel m = two_bus();
    GridState s = solve_pf(m, PfSpec::nominal(m)).state;
    Complex y = m.branches()[0].y;
    const double g = y.real();
    const double b = y.imag();
    Matrix expected(4, 4);
    // columns: |E_S|, |E_L|, angle_S, angle_L; rows: |E_S|, P_L, angle_S, Q_L
    expected << 1, 0, 0, 0,  //
        -g, g, b, -b,        //
        0, 0, 1, 0,          //
        b, -b, g, -g;
    Matrix a = assemble_A(m, s);
    CHECK((a - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("analytical sensitivities match central differences of the power flow") {
    GridModel full = epfl_model();
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 4; ++trial) {
        GridModel m = trial % 2 ? full : full.without_ic_losses();
        PfSpec spec = random_spec(m, rng);
        GridState s = solve_pf(m, spec, std::nullopt, {1e-13, 50}).state;
        SensitivityBundle b = compute_bundle(m, s);
        FdGap gap = fd_gap(m, spec, b);
        CHECK(gap.voltage <= 1e-6);
        CHECK(gap.angle <= 1e-6);
        CHECK(gap.current <= 1e-6);
        CHECK(gap.loss <= 1e-5);
    }
}

TEST_CASE("small hybrid grid with a DcV node: identity rows and FD agreement") {
    GridModel m = small_hybrid();
    PfSpec spec = PfSpec::nominal(m);
    spec.p[1] = -0.2;
    spec.q[1] = -0.05;
    spec.p[m.unified_of("D")] = -0.1;
    spec.p[m.unified_of("Z")] = -0.05;
    spec.v[m.unified_of("W")] = 1.01;
    spec.ic[0] = {0.0, 0.03, 0.99};
    GridState s = solve_pf(m, spec, std::nullopt, {1e-13, 50}).state;
    SensitivityBundle b = compute_bundle(m, s);
    FdGap gap = fd_gap(m, spec, b);
    CHECK(gap.voltage <= 1e-6);
    CHECK(gap.current <= 1e-6);
    CHECK(gap.loss <= 1e-5);

    const int w = m.unified_of("W");
    const int y = m.unified_of("Y");
    int col_w = b.column_of({Quantity::E, w});
    REQUIRE(col_w >= 0);
    CHECK(b.voltage.mag(w, col_w) == 1.0);  // exact, pinned row
    CHECK(b.voltage.mag(y, col_w) == 0.0);
    CHECK(b.voltage.mag(0, col_w) == 0.0);
}

TEST_CASE("structural zeros: slack row, DC columns of the Q matrices") {
    GridModel m = epfl_model();
    std::mt19937_64 rng(5);
    PfSpec spec = random_spec(m, rng);
    GridState s = solve_pf(m, spec).state;
    SensitivityBundle b = compute_bundle(m, s);
    const int slack = m.unified_of("B01");
    CHECK(b.voltage.mag.row(slack).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.voltage.angle.row(slack).cwiseAbs().maxCoeff() == 0.0);
    Matrix kq = b.k_e(Quantity::Q);
    CHECK(kq.rightCols(m.dc_count()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.k_i(Quantity::Q).rightCols(m.dc_count()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.k_qloss(Quantity::Q).tail(m.dc_count()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.voltage.mag.allFinite());
    CHECK(b.current.k.allFinite());
    // An IC DC voltage setpoint moves its own node one-for-one.
    const int k = m.unified_of("B21");
    CHECK(b.k_e(Quantity::E)(k, k) == 1.0);
}

TEST_CASE("assembling once and per variable gives identical columns") {
    GridModel m = epfl_model();
    std::mt19937_64 rng(8);
    PfSpec spec = random_spec(m, rng);
    GridState s = solve_pf(m, spec).state;
    auto vars = all_control_variables(m);
    VoltageSc shared = voltage_sc(m, s, vars);
    for (std::size_t c = 0; c < vars.size(); ++c) {
        VoltageSc single = voltage_sc(m, s, {vars[c]});
        CHECK((single.mag.col(0).array() == shared.mag.col(static_cast<int>(c)).array()).all());
        CHECK((single.angle.col(0).array() == shared.angle.col(static_cast<int>(c)).array()).all());
    }
}

TEST_CASE("prediction: anchor at zero delta, first-order accurate for small deltas") {
    GridModel m = epfl_model();
    std::mt19937_64 rng(13);
    PfSpec spec = random_spec(m, rng);
    GridState s = solve_pf(m, spec, std::nullopt, {1e-13, 50}).state;
    SensitivityBundle b = compute_bundle(m, s);
    const int nv = static_cast<int>(b.vars.size());

    Prediction zero = predict(b, Vector::Zero(nv));
    Outputs anchor = outputs_of(m, s);
    CHECK((zero.e - anchor.e).cwiseAbs().maxCoeff() == 0.0);
    CHECK((zero.i - anchor.i).cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.p_loss == anchor.p_loss);

    for (int trial = 0; trial < 10; ++trial) {
        Vector delta(nv);
        for (int c = 0; c < nv; ++c) delta[c] = uniform(rng, -1e-3, 1e-3) / std::sqrt(double(nv));
        auto error = [&](double scale) {
            PfSpec moved = spec;
            for (int c = 0; c < nv; ++c) perturb(m, moved, b.vars[c], scale * delta[c]);
            Outputs actual = outputs_of(m, solve_pf(m, moved, s, {1e-13, 50}).state);
            Prediction pred = predict(b, scale * delta);
            return std::pair{(pred.e - actual.e).cwiseAbs().maxCoeff(), (pred.i - actual.i).cwiseAbs().maxCoeff()};
        };
        auto [e_full, i_full] = error(1.0);
        auto [e_half, i_half] = error(0.5);
        CHECK(e_full <= 1e-5);
        // Branch currents react strongly to IC DC voltages; check the error is second order instead.
        CHECK(i_half <= 0.3 * i_full + 1e-12);
        CHECK(e_half <= 0.3 * e_full + 1e-12);
    }

    Vector dp = Vector::Zero(m.unified_count());
    Vector dq = Vector::Zero(m.unified_count());
    Vector de = Vector::Zero(m.unified_count());
    dp[m.unified_of("B05")] = 1e-3;
    de[m.unified_of("B20")] = -2e-3;
    Vector delta = Vector::Zero(nv);
    delta[b.column_of({Quantity::P, m.unified_of("B05")})] = 1e-3;
    delta[b.column_of({Quantity::E, m.unified_of("B20")})] = -2e-3;
    CHECK((predict(b, dp, dq, de).e - predict(b, delta).e).cwiseAbs().maxCoeff() == 0.0);
    dq[m.unified_of("B24")] = 1e-3;
    CHECK_THROWS_AS(predict(b, dp, dq, de), Error);
}

TEST_CASE("no-load state: loss sensitivities vanish and zero currents are guarded") {
    GridModel m = epfl_model().without_dcts().without_ic_losses();
    GridState s = solve_pf(m, PfSpec::nominal(m)).state;
    SensitivityBundle b = compute_bundle(m, s);
    CHECK(b.loss.p.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(b.loss.q.cwiseAbs().maxCoeff() < 1e-12);
    for (std::size_t k = 0; k < m.branches().size(); ++k)
        if (m.branches()[k].side == Side::Ac) CHECK(b.current.guarded[k]);
}

TEST_CASE("slack reactive power follows from the loss and nodal sensitivities") {
    GridModel m = epfl_model();
    std::mt19937_64 rng(21);
    PfSpec spec = random_spec(m, rng);
    GridState s = solve_pf(m, spec).state;
    SensitivityBundle b = compute_bundle(m, s);
    const int slack = m.unified_of("B01");
    RowVector others = b.power.q_ac.colwise().sum() - b.power.q_ac.row(slack);
    CHECK(((b.loss.q - others) - b.power.q_ac.row(slack)).cwiseAbs().maxCoeff() < 1e-12);
}
