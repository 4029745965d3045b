#include "acdc/sensitivity.hpp"

#include <cmath>

namespace acdc {

namespace {

constexpr double kCurrentGuard = 1e-9;

std::string_view quantity_name(Quantity q) {
    switch (q) {
        case Quantity::P: return "P";
        case Quantity::Q: return "Q";
        case Quantity::E: return "E";
    }
    return "?";
}

NodeKind kind_of(const GridModel& model, int u) {
    return u < model.ac_count() ? model.ac_kind(u) : model.dc_kind(u - model.ac_count());
}

bool is_valid(const GridModel& model, const ControlVariable& var) {
    if (var.node < 0 || var.node >= model.unified_count()) return false;
    const int n = model.ac_count();
    const NodeKind kind = kind_of(model, var.node);
    auto ic_mode = [&]() {
        return var.node < n ? model.ic_pairs()[*model.ic_at_ac(var.node)].mode
                            : model.ic_pairs()[*model.ic_at_dc(var.node - n)].mode;
    };
    switch (var.quantity) {
        case Quantity::P:
            return kind == NodeKind::AcPQ || kind == NodeKind::AcPV || kind == NodeKind::DcP ||
                   (kind == NodeKind::IcAc && ic_mode() == IcMode::PacQac);
        case Quantity::Q:
            return kind == NodeKind::AcPQ || kind == NodeKind::IcAc;
        case Quantity::E:
            return kind == NodeKind::AcPV || kind == NodeKind::DcV ||
                   (kind == NodeKind::IcDc && ic_mode() == IcMode::EdcQac);
    }
    return false;
}

Matrix select_columns(const SensitivityBundle& b, const Matrix& src, Quantity q, int unified) {
    Matrix out = Matrix::Zero(src.rows(), unified);
    for (std::size_t c = 0; c < b.vars.size(); ++c)
        if (b.vars[c].quantity == q) out.col(b.vars[c].node) = src.col(static_cast<int>(c));
    return out;
}

}  // namespace

std::string label(const GridModel& model, const ControlVariable& var) {
    std::string node = (var.node >= 0 && var.node < model.unified_count()) ? model.node(var.node).id : "?";
    return std::string(quantity_name(var.quantity)) + "_" + node;
}

void validate_variable(const GridModel& model, const ControlVariable& var) {
    if (var.node < 0 || var.node >= model.unified_count())
        throw GridError("control variable refers to node index " + std::to_string(var.node) + " outside the grid");
    if (var.quantity == Quantity::Q && var.node >= model.ac_count())
        throw GridError("reactive power is not defined at DC node '" + model.node(var.node).id + "'");
    if (!is_valid(model, var))
        throw GridError(label(model, var) + " is not a setpoint of a " +
                        std::string(to_string(kind_of(model, var.node))) + " node");
}

std::vector<ControlVariable> all_control_variables(const GridModel& model) {
    std::vector<ControlVariable> vars;
    for (int u = 0; u < model.unified_count(); ++u)
        for (Quantity q : {Quantity::P, Quantity::Q, Quantity::E}) {
            ControlVariable v{q, u};
            if (is_valid(model, v)) vars.push_back(v);
        }
    return vars;
}

Matrix assemble_A(const GridModel& model, const GridState& state) {
    return jacobian_at_state(model, state, DctFidelity::Ideal);
}

Vector rhs_u(const GridModel& model, const GridState& state, const ControlVariable& var) {
    validate_variable(model, var);
    const auto lay = layout_of(model);
    const int n = model.ac_count();
    Vector u = Vector::Zero(lay.size());
    const bool ac = var.node < n;
    const int local = ac ? var.node : var.node - n;
    const NodeKind kind = kind_of(model, var.node);

    if (kind == NodeKind::IcAc) {
        const auto& ic = model.ic_pairs()[*model.ic_at_ac(local)];
        GridState s = state;
        update_injections(model, s);
        IcLoss loss = ic_loss(ic, s.p[ic.ac], s.q[ic.ac], std::abs(s.e_ac[ic.ac]));
        if (var.quantity == Quantity::P) {
            u[lay.mag(ic.ac)] = 1.0;
            u[lay.dcv(ic.dc)] = -(1.0 + loss.d_p);
        } else {
            u[lay.ang(ic.ac)] = 1.0;
            const int balance_row = ic.mode == IcMode::EdcQac ? lay.mag(ic.ac) : lay.dcv(ic.dc);
            u[balance_row] = -loss.d_q;
        }
        return u;
    }
    if (ac) {
        if (var.quantity == Quantity::P) u[lay.mag(local)] = 1.0;
        else u[lay.ang(local)] = 1.0;  // Q at PQ, |E| at PV share the second row
    } else {
        u[lay.dcv(local)] = 1.0;
    }
    return u;
}

VoltageSc voltage_sc(const GridModel& model, const GridState& state, const std::vector<ControlVariable>& vars) {
    const int n = model.ac_count();
    const int m = model.dc_count();
    const auto lay = layout_of(model);
    Matrix a = assemble_A(model, state);
    Eigen::PartialPivLU<Matrix> lu(a);
    double rcond = lu.rcond();
    if (!(rcond > 1e-14)) {
        const auto& f = lu.matrixLU();
        int worst = 0;
        for (int k = 1; k < f.rows(); ++k)
            if (std::abs(f(k, k)) < std::abs(f(worst, worst))) worst = k;
        int row = 0;
        for (int k = 0; k < lu.permutationP().size(); ++k)
            if (lu.permutationP().indices()[k] == worst) row = k;
        throw SingularMatrixError("singular sensitivity matrix near " + describe_row(model, row), row, rcond);
    }
    VoltageSc out;
    const int nv = static_cast<int>(vars.size());
    out.mag = Matrix::Zero(n + m, nv);
    out.angle = Matrix::Zero(n, nv);
    // Unknowns pinned by an identity row take the right-hand side exactly, so fixed voltages
    // have structurally exact zero (or unit) sensitivities instead of round-off.
    std::vector<std::pair<int, int>> pinned;  // (row, unknown)
    for (int i = 0; i < n; ++i) {
        if (model.ac_kind(i) == NodeKind::AcSlack) {
            pinned.emplace_back(lay.mag(i), lay.mag(i));
            pinned.emplace_back(lay.ang(i), lay.ang(i));
        } else if (model.ac_kind(i) == NodeKind::AcPV) {
            pinned.emplace_back(lay.ang(i), lay.mag(i));
        }
    }
    for (int j = 0; j < m; ++j) {
        const NodeKind kind = model.dc_kind(j);
        if (kind == NodeKind::DcV ||
            (kind == NodeKind::IcDc && model.ic_pairs()[*model.ic_at_dc(j)].mode == IcMode::EdcQac))
            pinned.emplace_back(lay.dcv(j), lay.dcv(j));
    }
    for (int c = 0; c < nv; ++c) {
        const Vector u = rhs_u(model, state, vars[c]);
        Vector x = lu.solve(u);
        for (auto [row, unknown] : pinned) x[unknown] = u[row];
        for (int i = 0; i < n; ++i) {
            out.mag(i, c) = x[lay.mag(i)];
            out.angle(i, c) = x[lay.ang(i)];
        }
        for (int j = 0; j < m; ++j) out.mag(n + j, c) = x[lay.dcv(j)];
    }
    return out;
}

Vector branch_values(const GridModel& model, const GridState& state) {
    const auto& brs = model.branches();
    Vector v(static_cast<int>(brs.size()));
    for (std::size_t b = 0; b < brs.size(); ++b) {
        Complex i = branch_current(model, state, static_cast<int>(b));
        v[static_cast<int>(b)] = brs[b].side == Side::Ac ? std::abs(i) : i.real();
    }
    return v;
}

Vector voltage_values(const GridModel& model, const GridState& state) {
    const int n = model.ac_count();
    Vector v(model.unified_count());
    for (int i = 0; i < n; ++i) v[i] = std::abs(state.e_ac[i]);
    for (int j = 0; j < model.dc_count(); ++j) v[n + j] = state.e_dc[j];
    return v;
}

CurrentSc current_sc(const GridModel& model, const GridState& state, const VoltageSc& v) {
    const int n = model.ac_count();
    const auto& brs = model.branches();
    const int nb = static_cast<int>(brs.size());
    const int nv = static_cast<int>(v.mag.cols());
    CurrentSc out;
    out.k = Matrix::Zero(nb, nv);
    out.value = branch_values(model, state);
    out.guarded.assign(brs.size(), false);
    out.phasor = CMatrix::Zero(nb, nv);
    out.phasor_value = CVector::Zero(nb);
    for (int b = 0; b < nb; ++b) {
        const auto& br = brs[b];
        if (br.side == Side::Dc) {
            const double g = br.y.real();
            out.k.row(b) = g * (v.mag.row(n + br.from) - v.mag.row(n + br.to));
            continue;
        }
        const Complex ef = state.e_ac[br.from];
        const Complex et = state.e_ac[br.to];
        const Complex i = br.y * (ef - et);
        const double mag = std::abs(i);
        const double mf = std::abs(ef);
        const double mt = std::abs(et);
        const bool guard = mag < kCurrentGuard;
        out.guarded[b] = guard;
        out.phasor_value[b] = i;
        for (int c = 0; c < nv; ++c) {
            Complex def = ef * Complex(v.mag(br.from, c) / mf, v.angle(br.from, c));
            Complex det = et * Complex(v.mag(br.to, c) / mt, v.angle(br.to, c));
            Complex di = br.y * (def - det);
            out.phasor(b, c) = di;
            out.k(b, c) = guard ? std::abs(di) : (std::conj(i) * di).real() / mag;
        }
    }
    return out;
}

PowerSc power_sc(const GridModel& model, const GridState& state, const VoltageSc& v) {
    const int n = model.ac_count();
    const int m = model.dc_count();
    NetworkPartials np = network_partials(model, state);
    PowerSc out;
    Matrix dm = v.mag.topRows(n);
    out.p_ac = np.dp_dm * dm + np.dp_da * v.angle;
    out.q_ac = np.dq_dm * dm + np.dq_da * v.angle;
    out.p_dc = m > 0 ? Matrix(np.dpdc_de * v.mag.bottomRows(m)) : Matrix::Zero(0, v.mag.cols());
    return out;
}

LossSc loss_sc(const GridModel& model, const GridState& state, const VoltageSc& v) {
    PowerSc ps = power_sc(model, state, v);
    LossSc out;
    out.p = ps.p_ac.colwise().sum();
    if (ps.p_dc.rows() > 0) out.p += ps.p_dc.colwise().sum();
    out.q = ps.q_ac.colwise().sum();
    return out;
}

int SensitivityBundle::column_of(const ControlVariable& var) const {
    for (std::size_t c = 0; c < vars.size(); ++c)
        if (vars[c] == var) return static_cast<int>(c);
    return -1;
}

Matrix SensitivityBundle::k_e(Quantity q) const {
    return select_columns(*this, voltage.mag, q, static_cast<int>(voltage.mag.rows()));
}

Matrix SensitivityBundle::k_i(Quantity q) const {
    return select_columns(*this, current.k, q, static_cast<int>(voltage.mag.rows()));
}

RowVector SensitivityBundle::k_ploss(Quantity q) const {
    return select_columns(*this, Matrix(loss.p), q, static_cast<int>(voltage.mag.rows()));
}

RowVector SensitivityBundle::k_qloss(Quantity q) const {
    return select_columns(*this, Matrix(loss.q), q, static_cast<int>(voltage.mag.rows()));
}

SensitivityBundle compute_bundle(const GridModel& model, const GridState& state,
                                 const std::vector<ControlVariable>& vars) {
    for (const auto& v : vars) validate_variable(model, v);
    SensitivityBundle b;
    b.anchor = state;
    update_injections(model, b.anchor);
    b.vars = vars;
    b.voltage = voltage_sc(model, b.anchor, vars);
    b.current = current_sc(model, b.anchor, b.voltage);
    b.power = power_sc(model, b.anchor, b.voltage);
    b.loss.p = b.power.p_ac.colwise().sum();
    if (b.power.p_dc.rows() > 0) b.loss.p += b.power.p_dc.colwise().sum();
    b.loss.q = b.power.q_ac.colwise().sum();
    NetworkLosses nl = network_losses(model, b.anchor);
    b.at_anchor = {voltage_values(model, b.anchor), b.current.value, nl.p, nl.q};
    b.rcond = Eigen::PartialPivLU<Matrix>(assemble_A(model, b.anchor)).rcond();
    return b;
}

SensitivityBundle compute_bundle(const GridModel& model, const GridState& state) {
    return compute_bundle(model, state, all_control_variables(model));
}

Prediction predict(const SensitivityBundle& bundle, const Vector& delta) {
    if (delta.size() != static_cast<int>(bundle.vars.size()))
        throw Error("prediction delta has " + std::to_string(delta.size()) + " entries, bundle has " +
                    std::to_string(bundle.vars.size()) + " variables");
    Prediction p = bundle.at_anchor;
    p.e += bundle.voltage.mag * delta;
    p.i += bundle.current.k * delta;
    p.p_loss += bundle.loss.p.dot(delta);
    p.q_loss += bundle.loss.q.dot(delta);
    return p;
}

Prediction predict(const SensitivityBundle& bundle, const Vector& d_p, const Vector& d_q, const Vector& d_e) {
    const int u = static_cast<int>(bundle.voltage.mag.rows());
    if (d_p.size() != u || d_q.size() != u || d_e.size() != u)
        throw Error("node-indexed prediction deltas must have one entry per node");
    Vector delta = Vector::Zero(static_cast<int>(bundle.vars.size()));
    const Vector* src[3] = {&d_p, &d_q, &d_e};
    for (int q = 0; q < 3; ++q)
        for (int k = 0; k < u; ++k) {
            double d = (*src[q])[k];
            if (d == 0.0) continue;
            int c = bundle.column_of({static_cast<Quantity>(q), k});
            if (c < 0) throw Error("prediction delta given for a quantity that is not a bundle variable");
            delta[c] = d;
        }
    return predict(bundle, delta);
}

}  // namespace acdc
