#pragma once

#include <random>
#include <string>

#include "acdc/grid_model.hpp"
#include "acdc/power_flow.hpp"

namespace acdc::testing {

inline std::string scenario_path(const std::string& name) { return std::string(ACDC_SCENARIO_DIR) + "/" + name; }

inline GridModel epfl_model() { return load_grid(scenario_path("epfl.json")); }

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Random but moderate operating point: every setpoint of the model drawn from a box.
inline PfSpec random_spec(const GridModel& model, std::mt19937_64& rng, double scale = 1.0) {
    PfSpec spec = PfSpec::nominal(model);
    const int n = model.ac_count();
    for (int i = 0; i < n; ++i) {
        auto kind = model.ac_kind(i);
        if (kind == NodeKind::AcPQ) {
            spec.p[i] = scale * uniform(rng, -0.08, 0.08);
            spec.q[i] = scale * uniform(rng, -0.04, 0.04);
        } else if (kind == NodeKind::AcPV) {
            spec.p[i] = scale * uniform(rng, -0.05, 0.05);
            spec.v[i] = uniform(rng, 0.99, 1.01);
        }
    }
    for (int j = 0; j < model.dc_count(); ++j) {
        auto kind = model.dc_kind(j);
        if (kind == NodeKind::DcP) spec.p[n + j] = scale * uniform(rng, -0.05, 0.05);
        if (kind == NodeKind::DcV) spec.v[n + j] = uniform(rng, 0.99, 1.01);
    }
    for (std::size_t c = 0; c < spec.ic.size(); ++c) {
        spec.ic[c].q = scale * uniform(rng, -0.1, 0.1);
        spec.ic[c].p = scale * uniform(rng, -0.1, 0.1);
        spec.ic[c].e_dc = uniform(rng, 0.997, 1.003);
    }
    return spec;
}

}  // namespace acdc::testing

#include "acdc/sensitivity.hpp"

namespace acdc::testing {

/// Shifts the spec entry that a control variable names.
inline void perturb(const GridModel& model, PfSpec& spec, const ControlVariable& var, double delta) {
    const int n = model.ac_count();
    const bool ac = var.node < n;
    const NodeKind kind = ac ? model.ac_kind(var.node) : model.dc_kind(var.node - n);
    if (kind == NodeKind::IcAc || kind == NodeKind::IcDc) {
        int c = ac ? *model.ic_at_ac(var.node) : *model.ic_at_dc(var.node - n);
        if (var.quantity == Quantity::P) spec.ic[c].p += delta;
        if (var.quantity == Quantity::Q) spec.ic[c].q += delta;
        if (var.quantity == Quantity::E) spec.ic[c].e_dc += delta;
        return;
    }
    if (var.quantity == Quantity::P) spec.p[var.node] += delta;
    if (var.quantity == Quantity::Q) spec.q[var.node] += delta;
    if (var.quantity == Quantity::E) spec.v[var.node] += delta;
}

struct Outputs {
    Vector e;
    Vector angle;
    Vector i;
    double p_loss = 0.0;
    double q_loss = 0.0;
};

inline Outputs outputs_of(const GridModel& model, const GridState& s) {
    Outputs o;
    o.e = voltage_values(model, s);
    o.angle = s.e_ac.unaryExpr([](Complex c) { return std::arg(c); }).real();
    o.i = branch_values(model, s);
    NetworkLosses nl = network_losses(model, s);
    o.p_loss = nl.p;
    o.q_loss = nl.q;
    return o;
}

/// Worst absolute gaps between analytical SCs and central differences of the nonlinear power flow.
struct FdGap {
    double voltage = 0.0;
    double angle = 0.0;
    double current = 0.0;
    double loss = 0.0;
};

/// Fourth-order central stencil (f(-2h), f(-h), f(h), f(2h)). The two-point form leaves an O(h^2)
/// truncation term that is visible near small branch currents, where |I| is strongly curved.
inline FdGap fd_gap(const GridModel& model, const PfSpec& spec, const SensitivityBundle& b, double h = 1e-5) {
    FdGap gap;
    PfOptions tight{1e-12, 50};
    auto at = [&](const ControlVariable& var, double step) {
        PfSpec moved = spec;
        perturb(model, moved, var, step);
        return outputs_of(model, solve_pf(model, moved, b.anchor, tight).state);
    };
    for (std::size_t c = 0; c < b.vars.size(); ++c) {
        Outputs p1 = at(b.vars[c], h), m1 = at(b.vars[c], -h);
        Outputs p2 = at(b.vars[c], 2 * h), m2 = at(b.vars[c], -2 * h);
        auto diff = [&](auto get) -> decltype(get(p1)) {
            return (8.0 * (get(p1) - get(m1)) - (get(p2) - get(m2))) / (12.0 * h);
        };
        const int col = static_cast<int>(c);
        Vector de = diff([](const Outputs& o) { return Vector(o.e); });
        Vector da = diff([](const Outputs& o) { return Vector(o.angle); });
        Vector di = diff([](const Outputs& o) { return Vector(o.i); });
        double dp = diff([](const Outputs& o) { return o.p_loss; });
        double dq = diff([](const Outputs& o) { return o.q_loss; });
        gap.voltage = std::max(gap.voltage, (de - b.voltage.mag.col(col)).cwiseAbs().maxCoeff());
        gap.angle = std::max(gap.angle, (da - b.voltage.angle.col(col)).cwiseAbs().maxCoeff());
        gap.current = std::max(gap.current, (di - b.current.k.col(col)).cwiseAbs().maxCoeff());
        gap.loss = std::max(gap.loss, std::abs(dp - b.loss.p[col]));
        gap.loss = std::max(gap.loss, std::abs(dq - b.loss.q[col]));
    }
    return gap;
}

}  // namespace acdc::testing
