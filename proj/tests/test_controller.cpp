#include <doctest.h>

#include <algorithm>
#include <limits>

#include "acdc/controller.hpp"
#include "acdc/simulator.hpp"
#include "support.hpp"

using namespace acdc;
using namespace acdc::testing;

namespace {

// First 300 steps of the replay; the monitored line is congested from the start.
const ScenarioTrace& replay() {
    static const ScenarioTrace trace = [] {
        Scenario sc = Scenario::load(scenario_path("epfl_replay.json"));
        sc.horizon = 300;
        return run(sc);
    }();
    return trace;
}

const Scenario& replay_scenario() {
    static const Scenario sc = Scenario::load(scenario_path("epfl_replay.json"));
    return sc;
}

struct Step {
    GridModel model;
    ResourceProfile profile;
    GridState measured;
    Setpoints previous;
    int t = 0;
};

Step replay_step(int t) {
    const auto& tr = replay();
    return {*tr.model, replay_scenario().profiles, tr.steps[t].plant, tr.steps[t - 1].decision.setpoints, t};
}

ControlProblem problem_at(const Step& s, const ControllerConfig& cfg) {
    SensitivityBundle b = compute_bundle(s.model, s.measured);
    return build_problem(s.model, b, Forecast::from_profiles(s.model, s.profile, s.t), s.previous, cfg);
}

Vector decision_vector(const ControlProblem& cp, const Setpoints& sp) {
    Vector z(static_cast<int>(cp.vars.size()));
    for (std::size_t v = 0; v < cp.vars.size(); ++v) {
        const auto& dv = cp.vars[v];
        switch (dv.kind) {
            case DecisionKind::Pv: z[v] = sp.pv[dv.index]; break;
            case DecisionKind::IcQ: z[v] = sp.ic_q[dv.index]; break;
            case DecisionKind::IcE: z[v] = sp.ic_e[dv.index]; break;
            case DecisionKind::IcP: z[v] = sp.ic_p[dv.index]; break;
        }
    }
    return z;
}

double objective(const QpProblem& qp, const Vector& z) { return 0.5 * z.dot(qp.h * z) + qp.g.dot(z); }

// Exhaustive search over three coordinates with the others held at `base`: a grid over the box,
// then repeated refinement around the best feasible point.
Vector grid_search(const QpProblem& qp, const Vector& base, const std::array<int, 3>& idx, const Vector& lo,
                   const Vector& hi) {
    const int n = 20;
    Vector best = base;
    double best_f = std::numeric_limits<double>::infinity();
    std::array<double, 3> centre{}, half{};
    for (int k = 0; k < 3; ++k) {
        centre[k] = 0.5 * (lo[idx[k]] + hi[idx[k]]);
        half[k] = 0.5 * (hi[idx[k]] - lo[idx[k]]);
    }
    for (int round = 0; round < 60; ++round) {
        Vector z = best;
        for (int a = 0; a <= n; ++a)
            for (int b = 0; b <= n; ++b)
                for (int c = 0; c <= n; ++c) {
                    const std::array<int, 3> ijk{a, b, c};
                    for (int k = 0; k < 3; ++k)
                        z[idx[k]] = std::clamp(centre[k] + half[k] * (2.0 * ijk[k] / n - 1.0), lo[idx[k]], hi[idx[k]]);
                    if (((qp.a_in * z - qp.b_in).array() > 1e-12).any()) continue;
                    double f = objective(qp, z);
                    if (f < best_f) {
                        best_f = f;
                        best = z;
                    }
                }
        REQUIRE(std::isfinite(best_f));
        for (int k = 0; k < 3; ++k) {
            centre[k] = best[idx[k]];
            half[k] *= 0.5;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("config: defaults, JSON round trip and validation") {
    ControllerConfig d;
    CHECK(d.w_slack_q == 1.0);
    CHECK(d.w_curtail == 1.0);
    CHECK(d.w_loss == 1.0);
    CHECK(d.e_rate == 0.02);

    ControllerConfig c = ControllerConfig::from_json(R"({"w_curtail": 100, "w_e_ref": 3, "q_rate": 0.005})");
    CHECK(c.w_curtail == 100.0);
    CHECK(c.w_e_ref == 3.0);
    CHECK(c.q_rate == 0.005);
    ControllerConfig back = ControllerConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());

    CHECK_THROWS_AS(ControllerConfig::from_json(R"({"w_loss": -1})"), Error);
    CHECK_THROWS_AS(ControllerConfig::from_json(R"({"e_rate": 0})"), Error);
    CHECK_THROWS_AS(ControllerConfig::from_json(R"({"w_move_q": 0})"), Error);
    CHECK_THROWS_AS(ControllerConfig::from_json(R"({"w_loss": "x"})"), Error);
    CHECK_THROWS_AS(ControllerConfig::from_json("[1, 2]"), Error);
}

TEST_CASE("no load, no congestion: the step is a fixed point at the unconstrained optimum") {
    GridModel m = epfl_model();
    ResourceProfile zero(4);
    Setpoints prev = Setpoints::initial(m);
    prev.pv.setZero();
    GridState s = solve_pf(m, plant_spec(m, zero, 0, prev, DctFidelity::Ideal), std::nullopt, {1e-12, 50}).state;
    const int slack = 0;
    REQUIRE(std::abs(s.q[slack]) < 1e-5);

    ControllerConfig cfg;
    Controller ctl(m, cfg);
    ControlDecision d = ctl.control_step(s, zero, 0, prev);
    REQUIRE(d.status == DecisionStatus::Optimal);
    CHECK((d.setpoints.ic_q - prev.ic_q).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((d.setpoints.ic_e - prev.ic_e).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(d.setpoints.pv.cwiseAbs().maxCoeff() == 0.0);

    // away from the PV box, nothing binds and the optimum is the stationary point of the objective
    ControlProblem cp = problem_at({m, zero, s, prev, 0}, cfg);
    Vector z = decision_vector(cp, d.setpoints);
    std::vector<int> free;
    for (std::size_t v = 0; v < cp.vars.size(); ++v)
        if (cp.vars[v].kind != DecisionKind::Pv) free.push_back(static_cast<int>(v));
    for (int v : free) {
        double grad = (cp.qp.h * z + cp.qp.g)[v];
        CHECK(std::abs(grad) <= 1e-8);
    }
}

TEST_CASE("congested replay step: KKT certificate, boxes and predictions") {
    for (int t : {40, 120, 250}) {
        CAPTURE(t);
        Step s = replay_step(t);
        ControllerConfig cfg = replay_scenario().controller;
        Controller ctl(s.model, cfg);
        ControlDecision d = ctl.control_step(s.measured, s.profile, t, s.previous);
        REQUIRE(d.status == DecisionStatus::Optimal);
        CHECK(d.kkt.stationarity <= 1e-8);
        CHECK(d.kkt.primal <= 1e-7);
        CHECK(d.kkt.complementarity <= 1e-8);

        Forecast fc = Forecast::from_profiles(s.model, s.profile, t);
        const auto& pvs = s.model.pv_units();
        for (std::size_t k = 0; k < pvs.size(); ++k) {
            const int i = static_cast<int>(k);
            CHECK(d.setpoints.pv[i] >= 0.0);
            CHECK(d.setpoints.pv[i] <= fc.pv_next[i]);
            if (!pvs[k].curtailable) CHECK(d.setpoints.pv[i] == fc.pv_next[i]);
        }
        const auto& ics = s.model.ic_pairs();
        for (std::size_t c = 0; c < ics.size(); ++c) {
            const int i = static_cast<int>(c);
            const auto& node = s.model.dc_node(ics[c].dc);
            CHECK(std::abs(d.setpoints.ic_e[i] - s.previous.ic_e[i]) <= cfg.e_rate + 1e-15);
            CHECK(d.setpoints.ic_e[i] >= node.v_min);
            CHECK(d.setpoints.ic_e[i] <= node.v_max);
            CHECK(std::abs(d.setpoints.ic_q[i]) <= ics[c].q_max);
            CHECK(std::abs(d.setpoints.ic_q[i] - s.previous.ic_q[i]) <= cfg.q_rate + 1e-15);
        }

        ControlProblem cp = problem_at(s, cfg);
        Vector z = decision_vector(cp, d.setpoints);
        CHECK((d.predicted_e - cp.voltage.at(z)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((d.predicted_i - cp.current.at(z)).cwiseAbs().maxCoeff() == 0.0);
        const int line = s.model.branch_index("B10-B11");
        CHECK(d.predicted_i[line] <= s.model.branches()[line].ampacity + 1e-9);
    }
}

TEST_CASE("optimum matches an exhaustive search over the three most active controls") {
    Step s = replay_step(120);
    ControllerConfig cfg = replay_scenario().controller;
    ControlProblem cp = problem_at(s, cfg);
    ControlDecision d = solve_control(cp, s.model, s.previous, Forecast::from_profiles(s.model, s.profile, s.t), cfg);
    REQUIRE(d.status == DecisionStatus::Optimal);
    Vector z = decision_vector(cp, d.setpoints);

    const int nz = static_cast<int>(z.size());
    const int mb = static_cast<int>(cp.qp.b_in.size()) - 2 * nz;
    Vector hi(nz), lo(nz);
    for (int v = 0; v < nz; ++v) {
        hi[v] = cp.qp.b_in[mb + 2 * v];
        lo[v] = -cp.qp.b_in[mb + 2 * v + 1];
    }
    // controls that moved most, relative to their box width
    std::vector<int> order(nz);
    for (int v = 0; v < nz; ++v) order[v] = v;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        auto rel = [&](int v) { return hi[v] > lo[v] ? std::abs(z[v] - cp.z_prev[v]) / (hi[v] - lo[v]) : 0.0; };
        return rel(a) > rel(b);
    });
    std::array<int, 3> idx{order[0], order[1], order[2]};
    for (int v : idx) REQUIRE(hi[v] > lo[v]);

    Vector best = grid_search(cp.qp, z, idx, lo, hi);
    for (int v : idx) {
        CAPTURE(cp.vars[v].name);
        CHECK(std::abs(best[v] - z[v]) <= 1e-3);
    }
    CHECK(objective(cp.qp, z) <= objective(cp.qp, best) + 1e-12);
}

TEST_CASE("unreachable voltage window: softened rows, boxes kept, message names the relaxed rows") {
    Step s = replay_step(120);
    GridData g = s.model.data();
    for (auto& node : g.dc_nodes)
        if (node.id == "B24") node.v_min = 1.045;
    GridModel tight(g);
    ControllerConfig cfg = replay_scenario().controller;
    Controller ctl(tight, cfg);
    ControlDecision d = ctl.control_step(s.measured, s.profile, s.t, s.previous);
    REQUIRE(d.status == DecisionStatus::Soft);
    CHECK(d.message.find("V:B24:min") != std::string::npos);
    const int u = tight.unified_of("B24");
    CHECK(d.predicted_e[u] < 1.045);
    CHECK(d.predicted_e[u] > s.measured.e_dc[u - tight.ac_count()]);
    for (int c = 0; c < d.setpoints.ic_e.size(); ++c)
        CHECK(std::abs(d.setpoints.ic_e[c] - s.previous.ic_e[c]) <= cfg.e_rate + 1e-15);
}

TEST_CASE("a failing step holds the previous setpoints") {
    Step s = replay_step(120);
    Controller ctl(s.model, replay_scenario().controller);
    ControlDecision d = ctl.control_step(s.measured, s.profile, s.profile.horizon() + 5, s.previous);
    CHECK(d.status == DecisionStatus::Hold);
    CHECK(d.setpoints == s.previous);
    CHECK_FALSE(d.message.empty());
}

TEST_CASE("determinism: identical inputs give bit-identical decisions, also inside the closed loop") {
    Step s = replay_step(200);
    Controller ctl(s.model, replay_scenario().controller);
    ControlDecision a = ctl.control_step(s.measured, s.profile, s.t, s.previous);
    ControlDecision b = ctl.control_step(s.measured, s.profile, s.t, s.previous);
    CHECK(a.setpoints == b.setpoints);
    CHECK(a.objective == b.objective);
    CHECK(a.active_constraints == b.active_constraints);
    CHECK(a.setpoints == replay().steps[200].decision.setpoints);
}

TEST_CASE("reactive setpoints of the converters never oppose each other in the replay prefix") {
    const auto& tr = replay();
    const double kw = tr.model->base().s_va / 1e3;
    for (const auto& rec : tr.steps) {
        double q_max = -std::numeric_limits<double>::infinity(), q_min = -q_max;
        for (int c = 0; c < rec.applied.ic_q.size(); ++c) {
            q_max = std::max(q_max, rec.applied.ic_q[c] * kw);
            q_min = std::min(q_min, rec.applied.ic_q[c] * kw);
        }
        CHECK_FALSE((q_max > 0.5 && q_min < -0.5));
    }
}
