#include "acdc/power_flow.hpp"

#include <cmath>

namespace acdc {

namespace {

bool is_zero(double x) { return x == 0.0; }

// IC operating values that enter the loss model: (P_l*, Q_l*) from the spec while solving,
// or from the state when linearizing.
struct IcOperating {
    double p = 0.0;
    double q = 0.0;
};

struct Evaluation {
    Vector r;
    Matrix j;
};

Evaluation evaluate(const GridModel& model, const PfSpec* spec, const std::vector<IcOperating>& ic_op,
                    const GridState& s, DctFidelity fidelity, bool with_jacobian) {
    const int n = model.ac_count();
    const int m = model.dc_count();
    const EquationLayout lay = layout_of(model);
    NetworkPartials t = network_partials(model, s, with_jacobian);

    Evaluation ev;
    ev.r = Vector::Zero(lay.size());
    if (with_jacobian) ev.j = Matrix::Zero(lay.size(), lay.size());

    auto mag = [&](int i) { return std::abs(s.e_ac[i]); };
    auto ang = [&](int i) { return std::arg(s.e_ac[i]); };

    // Row += d(P_ac,i)/dx scaled.
    auto add_p_ac = [&](int row, int i, double scale) {
        for (int k = 0; k < n; ++k) {
            ev.j(row, lay.mag(k)) += scale * t.dp_dm(i, k);
            ev.j(row, lay.ang(k)) += scale * t.dp_da(i, k);
        }
    };
    auto add_q_ac = [&](int row, int i) {
        for (int k = 0; k < n; ++k) {
            ev.j(row, lay.mag(k)) += t.dq_dm(i, k);
            ev.j(row, lay.ang(k)) += t.dq_da(i, k);
        }
    };
    auto add_p_dc = [&](int row, int j) {
        for (int k = 0; k < m; ++k) ev.j(row, lay.dcv(k)) += t.dpdc_de(j, k);
    };

    // DCT injections appear as -P_dct on DC power rows.
    Vector dct_inj = dct_injections(model, s.e_dc, fidelity);
    auto add_dct = [&](int row, int j) {
        for (const auto& d : model.dcts()) {
            double slope = dct_transfer_slope(d, s.e_dc[d.primary] - s.e_dc[d.secondary], fidelity);
            // primary injection = -f(dE) - L/2, secondary = f(dE) - L/2
            double sign = 0.0;
            if (d.primary == j) sign = 1.0;
            if (d.secondary == j) sign = -1.0;
            if (sign == 0.0) continue;
            ev.j(row, lay.dcv(d.primary)) += sign * slope;
            ev.j(row, lay.dcv(d.secondary)) -= sign * slope;
        }
    };

    for (int i = 0; i < n; ++i) {
        const auto kind = model.ac_kind(i);
        const int rp = lay.mag(i);
        const int rq = lay.ang(i);
        switch (kind) {
            case NodeKind::AcSlack:
                ev.r[rp] = mag(i) - (spec ? spec->v[i] : mag(i));
                ev.r[rq] = ang(i) - (spec ? spec->angle[i] : ang(i));
                if (with_jacobian) {
                    ev.j(rp, lay.mag(i)) = 1.0;
                    ev.j(rq, lay.ang(i)) = 1.0;
                }
                break;
            case NodeKind::AcPQ:
                ev.r[rp] = t.p_ac[i] - (spec ? spec->p[i] : t.p_ac[i]);
                ev.r[rq] = t.q_ac[i] - (spec ? spec->q[i] : t.q_ac[i]);
                if (with_jacobian) {
                    add_p_ac(rp, i, 1.0);
                    add_q_ac(rq, i);
                }
                break;
            case NodeKind::AcPV:
                ev.r[rp] = t.p_ac[i] - (spec ? spec->p[i] : t.p_ac[i]);
                ev.r[rq] = mag(i) - (spec ? spec->v[i] : mag(i));
                if (with_jacobian) {
                    add_p_ac(rp, i, 1.0);
                    ev.j(rq, lay.mag(i)) = 1.0;
                }
                break;
            case NodeKind::IcAc: {
                const int c = *model.ic_at_ac(i);
                const auto& ic = model.ic_pairs()[c];
                ev.r[rq] = t.q_ac[i] - (spec ? spec->ic[c].q : t.q_ac[i]);
                if (with_jacobian) add_q_ac(rq, i);
                if (ic.mode == IcMode::PacQac) {
                    ev.r[rp] = t.p_ac[i] - (spec ? spec->ic[c].p : t.p_ac[i]);
                    if (with_jacobian) add_p_ac(rp, i, 1.0);
                } else {
                    const int k = ic.dc;
                    IcLoss loss = ic_loss(ic, t.p_ac[i], ic_op[c].q, mag(i));
                    double filter = ic.filter * mag(i) * mag(i);
                    ev.r[rp] = t.p_ac[i] + (t.p_dc[k] - dct_inj[k]) + loss.value + filter;
                    if (with_jacobian) {
                        add_p_ac(rp, i, 1.0 + loss.d_p);
                        add_p_dc(rp, k);
                        add_dct(rp, k);
                        ev.j(rp, lay.mag(i)) += loss.d_mag + 2.0 * ic.filter * mag(i);
                    }
                }
                break;
            }
            default:
                break;
        }
    }

    for (int j = 0; j < m; ++j) {
        const int row = lay.dcv(j);
        switch (model.dc_kind(j)) {
            case NodeKind::DcP:
                ev.r[row] = t.p_dc[j] - dct_inj[j] - (spec ? spec->p[n + j] : t.p_dc[j] - dct_inj[j]);
                if (with_jacobian) {
                    add_p_dc(row, j);
                    add_dct(row, j);
                }
                break;
            case NodeKind::DcV:
                ev.r[row] = s.e_dc[j] - (spec ? spec->v[n + j] : s.e_dc[j]);
                if (with_jacobian) ev.j(row, lay.dcv(j)) = 1.0;
                break;
            case NodeKind::IcDc: {
                const int c = *model.ic_at_dc(j);
                const auto& ic = model.ic_pairs()[c];
                if (ic.mode == IcMode::EdcQac) {
                    ev.r[row] = s.e_dc[j] - (spec ? spec->ic[c].e_dc : s.e_dc[j]);
                    if (with_jacobian) ev.j(row, lay.dcv(j)) = 1.0;
                } else {
                    const int l = ic.ac;
                    IcLoss loss = ic_loss(ic, ic_op[c].p, ic_op[c].q, mag(l));
                    double filter = ic.filter * mag(l) * mag(l);
                    ev.r[row] = t.p_dc[j] - dct_inj[j] + ic_op[c].p + loss.value + filter;
                    if (with_jacobian) {
                        add_p_dc(row, j);
                        add_dct(row, j);
                        ev.j(row, lay.mag(l)) += loss.d_mag + 2.0 * ic.filter * mag(l);
                    }
                }
                break;
            }
            default:
                break;
        }
    }
    return ev;
}

std::vector<IcOperating> ic_operating_from_spec(const GridModel& model, const PfSpec& spec) {
    std::vector<IcOperating> op(model.ic_pairs().size());
    for (std::size_t c = 0; c < op.size(); ++c) op[c] = {spec.ic[c].p, spec.ic[c].q};
    return op;
}

void apply_fixed_values(const GridModel& model, const PfSpec& spec, GridState& s) {
    const int n = model.ac_count();
    for (int i = 0; i < n; ++i) {
        const auto kind = model.ac_kind(i);
        if (kind == NodeKind::AcSlack) s.e_ac[i] = std::polar(spec.v[i], spec.angle[i]);
        if (kind == NodeKind::AcPV) s.e_ac[i] = std::polar(spec.v[i], std::arg(s.e_ac[i]));
    }
    for (int j = 0; j < model.dc_count(); ++j) {
        const auto kind = model.dc_kind(j);
        if (kind == NodeKind::DcV) s.e_dc[j] = spec.v[n + j];
        if (kind == NodeKind::IcDc) {
            const auto& ic = model.ic_pairs()[*model.ic_at_dc(j)];
            if (ic.mode == IcMode::EdcQac) s.e_dc[j] = spec.ic[*model.ic_at_dc(j)].e_dc;
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------

NetworkPartials network_partials(const GridModel& model, const GridState& s, bool with_partials) {
    const int n = model.ac_count();
    const int m = model.dc_count();
    const auto& y = model.y_ac();
    const auto& g = model.y_dc();
    NetworkPartials t;
    t.p_ac = Vector::Zero(n);
    t.q_ac = Vector::Zero(n);
    t.p_dc = Vector::Zero(m);
    CMatrix f(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            f(i, k) = s.e_ac[i] * std::conj(y(i, k)) * std::conj(s.e_ac[k]);
            t.p_ac[i] += f(i, k).real();
            t.q_ac[i] += f(i, k).imag();
        }
    Matrix fd(m, m);
    for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) {
            fd(j, k) = s.e_dc[j] * g(j, k) * s.e_dc[k];
            t.p_dc[j] += fd(j, k);
        }
    if (!with_partials) return t;

    t.dp_dm.resize(n, n);
    t.dp_da.resize(n, n);
    t.dq_dm.resize(n, n);
    t.dq_da.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double mk = std::abs(s.e_ac[k]);
            bool diag = i == k;
            t.dp_dm(i, k) = ((diag ? t.p_ac[i] : 0.0) + f(i, k).real()) / mk;
            t.dq_dm(i, k) = ((diag ? t.q_ac[i] : 0.0) + f(i, k).imag()) / mk;
            t.dp_da(i, k) = (diag ? -t.q_ac[i] : 0.0) + f(i, k).imag();
            t.dq_da(i, k) = (diag ? t.p_ac[i] : 0.0) - f(i, k).real();
        }
    t.dpdc_de.resize(m, m);
    for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) t.dpdc_de(j, k) = ((j == k ? t.p_dc[j] : 0.0) + fd(j, k)) / s.e_dc[k];
    return t;
}


PfSpec PfSpec::nominal(const GridModel& model) {
    const int n = model.ac_count();
    const int u = model.unified_count();
    PfSpec spec;
    spec.p = Vector::Zero(u);
    spec.q = Vector::Zero(u);
    spec.v = Vector::Ones(u);
    spec.angle = Vector::Zero(n);
    for (int k = 0; k < u; ++k) spec.v[k] = model.node(k).v_set;
    for (int i = 0; i < n; ++i) spec.angle[i] = model.ac_node(i).angle_set;
    spec.ic.resize(model.ic_pairs().size());
    for (std::size_t c = 0; c < spec.ic.size(); ++c)
        spec.ic[c].e_dc = model.dc_node(model.ic_pairs()[c].dc).v_set;
    return spec;
}

void PfSpec::validate(const GridModel& model) const {
    const int n = model.ac_count();
    const int u = model.unified_count();
    if (p.size() != u || q.size() != u || v.size() != u || angle.size() != n ||
        ic.size() != model.ic_pairs().size())
        throw GridError("power-flow spec dimensions do not match the grid");
    for (int k = 0; k < u; ++k) {
        NodeKind kind = k < n ? model.ac_kind(k) : model.dc_kind(k - n);
        bool p_known = kind == NodeKind::AcPQ || kind == NodeKind::AcPV || kind == NodeKind::DcP;
        bool q_known = kind == NodeKind::AcPQ;
        bool v_known = kind == NodeKind::AcSlack || kind == NodeKind::AcPV || kind == NodeKind::DcV;
        if (!p_known && !is_zero(p[k]))
            throw GridError("active power specified at node '" + model.node(k).id + "' whose P is unknown");
        if (!q_known && !is_zero(q[k]))
            throw GridError("reactive power specified at node '" + model.node(k).id + "' whose Q is unknown");
        if (v_known && !(v[k] > 0.0))
            throw GridError("voltage setpoint at node '" + model.node(k).id + "' must be positive");
    }
    for (const auto& s : ic)
        if (!(s.e_dc > 0.0)) throw GridError("IC DC voltage setpoint must be positive");
}

EquationLayout layout_of(const GridModel& model) { return {model.ac_count(), model.dc_count()}; }

std::string describe_row(const GridModel& model, int row) {
    const auto lay = layout_of(model);
    if (row < 0 || row >= lay.size()) return "row " + std::to_string(row);
    if (row >= 2 * lay.ac) {
        const auto& nd = model.dc_node(row - 2 * lay.ac);
        return "DC equation of node " + nd.id + " (" + std::string(to_string(nd.kind)) + ")";
    }
    bool first = row < lay.ac;
    const auto& nd = model.ac_node(first ? row : row - lay.ac);
    return std::string(first ? "first" : "second") + " AC equation of node " + nd.id + " (" +
           std::string(to_string(nd.kind)) + ")";
}

IcLoss ic_loss(const IcPair& ic, double p_ac, double q_ac, double e_mag) {
    const auto [a0, a1, a2] = ic.loss;
    IcLoss out;
    double s = std::hypot(p_ac, q_ac);
    double cur = s / e_mag;
    out.value = a0 + a1 * cur + a2 * cur * cur;
    // d|I|/dP = P / (s |E|); the a1 term is not differentiable at zero current, take 0 there.
    double lin = s > 1e-12 ? a1 / (s * e_mag) : 0.0;
    double quad = 2.0 * a2 / (e_mag * e_mag);
    out.d_p = (lin + quad) * p_ac;
    out.d_q = (lin + quad) * q_ac;
    out.d_mag = -a1 * cur / e_mag - 2.0 * a2 * cur * cur / e_mag;
    return out;
}

Vector dct_injections(const GridModel& model, const Vector& e_dc, DctFidelity fidelity) {
    Vector inj = Vector::Zero(model.dc_count());
    for (const auto& d : model.dcts()) {
        DctPower pw = dct_power(d, e_dc[d.primary], e_dc[d.secondary], fidelity);
        inj[d.primary] += pw.primary;
        inj[d.secondary] += pw.secondary;
    }
    return inj;
}

NetworkLosses network_losses(const GridModel& model, const GridState& state) {
    GridState s = state;
    update_injections(model, s);
    return {s.p.sum(), s.q.head(model.ac_count()).sum()};
}

Vector mismatch(const GridModel& model, const PfSpec& spec, const GridState& state) {
    spec.validate(model);
    return evaluate(model, &spec, ic_operating_from_spec(model, spec), state, spec.dct_fidelity, false).r;
}

Matrix pf_jacobian(const GridModel& model, const PfSpec& spec, const GridState& state) {
    spec.validate(model);
    return evaluate(model, &spec, ic_operating_from_spec(model, spec), state, spec.dct_fidelity, true).j;
}

PfSolution solve_pf(const GridModel& model, const PfSpec& spec, const std::optional<GridState>& init,
                    const PfOptions& options) {
    spec.validate(model);
    const int n = model.ac_count();
    const int m = model.dc_count();
    const auto lay = layout_of(model);
    const auto ic_op = ic_operating_from_spec(model, spec);

    GridState s = init ? *init : GridState::flat(model);
    if (s.e_ac.size() != n || s.e_dc.size() != m) throw GridError("initial state dimensions do not match the grid");
    apply_fixed_values(model, spec, s);

    PfSolution sol;
    for (int it = 1; it <= options.max_iterations; ++it) {
        Evaluation ev = evaluate(model, &spec, ic_op, s, spec.dct_fidelity, true);
        sol.iterations = it;
        sol.max_mismatch = ev.r.cwiseAbs().maxCoeff();
        if (!std::isfinite(sol.max_mismatch))
            throw PowerFlowError("power flow diverged to a non-finite mismatch", it, -1);
        if (sol.max_mismatch <= options.tolerance) {
            sol.converged = true;
            break;
        }
        Eigen::PartialPivLU<Matrix> lu(ev.j);
        double rcond = lu.rcond();
        if (!(rcond > 1e-14)) {
            const auto& lu_m = lu.matrixLU();
            int worst = 0;
            for (int k = 1; k < lu_m.rows(); ++k)
                if (std::abs(lu_m(k, k)) < std::abs(lu_m(worst, worst))) worst = k;
            int row = 0;
            for (int k = 0; k < lu.permutationP().size(); ++k)
                if (lu.permutationP().indices()[k] == worst) row = k;
            throw PowerFlowError("singular power-flow Jacobian at iteration " + std::to_string(it) + " near " +
                                     describe_row(model, row) + " (rcond " + std::to_string(rcond) + ")",
                                 it, row);
        }
        Vector dx = lu.solve(ev.r);
        for (int i = 0; i < n; ++i) {
            double mg = std::abs(s.e_ac[i]) - dx[lay.mag(i)];
            double an = std::arg(s.e_ac[i]) - dx[lay.ang(i)];
            s.e_ac[i] = std::polar(mg, an);
        }
        for (int j = 0; j < m; ++j) s.e_dc[j] -= dx[lay.dcv(j)];
        apply_fixed_values(model, spec, s);
    }
    if (!sol.converged)
        throw PowerFlowError("power flow did not converge in " + std::to_string(options.max_iterations) +
                                 " iterations (max mismatch " + std::to_string(sol.max_mismatch) + ")",
                             options.max_iterations, -1);
    update_injections(model, s);
    sol.state = std::move(s);
    return sol;
}

// Used by the sensitivity module: Jacobian at a state with IC operating values read from the state.
Matrix jacobian_at_state(const GridModel& model, const GridState& state, DctFidelity fidelity) {
    GridState s = state;
    update_injections(model, s);
    std::vector<IcOperating> op(model.ic_pairs().size());
    for (std::size_t c = 0; c < op.size(); ++c) {
        const int l = model.ic_pairs()[c].ac;
        op[c] = {s.p[l], s.q[l]};
    }
    return evaluate(model, nullptr, op, s, fidelity, true).j;
}

}  // namespace acdc
