#include "acdc/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace acdc {

namespace {

// Supporting half-planes of the AC current limit around the anchor phasor. |I| is convex in the
// setpoints, so its tangent row alone lets large moves that rotate the phasor overshoot the limit.
// The fan bounds the overshoot to 1/cos(step/2) - 1 of the limit within +-cuts*step of the anchor.
constexpr double kFanStep = 0.02;  // rad
constexpr int kFanCuts = 10;
constexpr double kFanThreshold = 0.5;  // only branches loaded above this fraction of their limit

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Accumulates weighted squares w * (a'z + b)^2 into 1/2 z'Hz + g'z + const.
struct Objective {
    Matrix h;
    Vector g;
    double constant = 0.0;

    explicit Objective(int n) : h(Matrix::Zero(n, n)), g(Vector::Zero(n)) {}

    void add_square(double w, const RowVector& a, double b) {
        if (w == 0.0) return;
        h.noalias() += 2.0 * w * a.transpose() * a;
        g += 2.0 * w * b * a.transpose();
        constant += w * b * b;
    }
    void add_square(double w, int var, double target) {
        if (w == 0.0) return;
        h(var, var) += 2.0 * w;
        g[var] -= 2.0 * w * target;
        constant += w * target * target;
    }
    // w * (target - z)
    void add_shortfall(double w, int var, double target) {
        g[var] -= w;
        constant += w * target;
    }
};

struct RowBuilder {
    std::vector<RowVector> a;
    std::vector<double> b;
    std::vector<std::string> names;
    std::vector<bool> soft;

    void add(const RowVector& row, double rhs, std::string name, bool softenable) {
        a.push_back(row);
        b.push_back(rhs);
        names.push_back(std::move(name));
        soft.push_back(softenable);
    }
    // lo <= c + m z <= hi, skipping rows the decisions cannot move
    void add_range(const RowVector& m, double c, double lo, double hi, const std::string& name, bool softenable) {
        if (m.cwiseAbs().maxCoeff() == 0.0) return;
        add(m, hi - c, name + ":max", softenable);
        add(-m, c - lo, name + ":min", softenable);
    }
};

bool voltage_fixed(const GridModel& model, int u) {
    const int n = model.ac_count();
    if (u < n) {
        NodeKind k = model.ac_kind(u);
        return k == NodeKind::AcSlack || k == NodeKind::AcPV;
    }
    NodeKind k = model.dc_kind(u - n);
    if (k == NodeKind::DcV) return true;
    if (k == NodeKind::IcDc) return model.ic_pairs()[*model.ic_at_dc(u - n)].mode == IcMode::EdcQac;
    return false;
}

std::pair<double, double> e_box(const NodeData& node, double prev, double rate) {
    double lo = std::max(node.v_min, prev - rate);
    double hi = std::min(node.v_max, prev + rate);
    if (lo > hi) {
        // outside the band: move towards it at the rate limit
        lo = hi = prev > node.v_max ? prev - rate : prev + rate;
    }
    return {lo, hi};
}

}  // namespace

// ---------------------------------------------------------------------------

ControllerConfig ControllerConfig::from_json(std::string_view text) {
    ControllerConfig c;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("controller config: ") + e.what());
    }
    if (!j.is_object()) throw Error("controller config must be a JSON object");
    auto read = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    try {
        read("w_slack_q", c.w_slack_q);
        read("w_curtail", c.w_curtail);
        read("w_curtail_linear", c.w_curtail_linear);
        read("w_loss", c.w_loss);
        read("w_move_p", c.w_move_p);
        read("w_move_q", c.w_move_q);
        read("w_move_e", c.w_move_e);
        read("w_e_ref", c.w_e_ref);
        read("e_rate", c.e_rate);
        read("q_rate", c.q_rate);
        read("soft_penalty", c.soft_penalty);
        read("soft_quadratic", c.soft_quadratic);
        read("qp_max_iterations", c.qp_max_iterations);
    } catch (const json::exception& e) {
        throw Error(std::string("controller config: ") + e.what());
    }
    if (c.w_move_p <= 0.0 || c.w_move_q <= 0.0 || c.w_move_e <= 0.0)
        throw Error("controller config: move weights must be positive");
    if (c.w_slack_q < 0.0 || c.w_curtail < 0.0 || c.w_curtail_linear < 0.0 || c.w_loss < 0.0 || c.w_e_ref < 0.0)
        throw Error("controller config: objective weights must be non-negative");
    if (c.e_rate <= 0.0 || c.q_rate <= 0.0) throw Error("controller config: rate limits must be positive");
    if (c.soft_quadratic <= 0.0 || c.soft_penalty <= 0.0)
        throw Error("controller config: soft-constraint weights must be positive");
    return c;
}

ControllerConfig ControllerConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open controller config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string ControllerConfig::to_json() const {
    json j = {{"w_slack_q", w_slack_q},       {"w_curtail", w_curtail},   {"w_curtail_linear", w_curtail_linear}, {"w_loss", w_loss},
              {"w_move_p", w_move_p},         {"w_move_q", w_move_q},     {"w_move_e", w_move_e},
              {"w_e_ref", w_e_ref},           {"e_rate", e_rate},         {"q_rate", q_rate},         {"soft_penalty", soft_penalty},
              {"soft_quadratic", soft_quadratic}, {"qp_max_iterations", qp_max_iterations}};
    return j.dump(2);
}

Setpoints Setpoints::initial(const GridModel& model) {
    Setpoints s;
    const auto& pv = model.pv_units();
    s.pv.resize(static_cast<int>(pv.size()));
    for (std::size_t k = 0; k < pv.size(); ++k) s.pv[static_cast<int>(k)] = pv[k].rating;
    const int nic = static_cast<int>(model.ic_pairs().size());
    s.ic_q = Vector::Zero(nic);
    s.ic_p = Vector::Zero(nic);
    s.ic_e.resize(nic);
    for (int c = 0; c < nic; ++c) s.ic_e[c] = model.dc_node(model.ic_pairs()[c].dc).v_set;
    return s;
}

bool Setpoints::operator==(const Setpoints& o) const {
    auto same = [](const Vector& a, const Vector& b) { return a.size() == b.size() && (a.array() == b.array()).all(); };
    return same(pv, o.pv) && same(ic_q, o.ic_q) && same(ic_e, o.ic_e) && same(ic_p, o.ic_p);
}

double pv_output(const GridModel& model, const ResourceProfile& profile, int t, const Setpoints& sp, int pv) {
    const auto& unit = model.pv_units()[pv];
    double mpp = pv_available(model, profile, unit.id, t);
    if (!unit.curtailable) return mpp;
    return std::clamp(sp.pv[pv], 0.0, mpp);
}

PfSpec plant_spec(const GridModel& model, const ResourceProfile& profile, int t, const Setpoints& sp,
                  DctFidelity fidelity) {
    PfSpec spec = PfSpec::nominal(model);
    spec.dct_fidelity = fidelity;
    Injections inj = uncontrollable_injections(model, profile, t);
    spec.p = inj.p;
    spec.q = inj.q;
    const auto& pv = model.pv_units();
    for (std::size_t k = 0; k < pv.size(); ++k)
        if (pv[k].curtailable) spec.p[pv[k].node] += pv_output(model, profile, t, sp, static_cast<int>(k));
    const auto& ics = model.ic_pairs();
    for (std::size_t c = 0; c < ics.size(); ++c) {
        const int i = static_cast<int>(c);
        spec.ic[c].q = sp.ic_q[i];
        if (ics[c].mode == IcMode::EdcQac) spec.ic[c].e_dc = sp.ic_e[i];
        else spec.ic[c].p = sp.ic_p[i];
    }
    return spec;
}

Forecast Forecast::from_profiles(const GridModel& model, const ResourceProfile& profile, int t) {
    if (t < 0 || t >= profile.horizon()) throw Error("forecast requested outside the profile horizon");
    Forecast f;
    f.t_now = t;
    f.t_next = std::min(t + 1, profile.horizon() - 1);
    f.now = uncontrollable_injections(model, profile, f.t_now);
    f.next = uncontrollable_injections(model, profile, f.t_next);
    const auto& pv = model.pv_units();
    f.pv_now.resize(static_cast<int>(pv.size()));
    f.pv_next.resize(static_cast<int>(pv.size()));
    for (std::size_t k = 0; k < pv.size(); ++k) {
        f.pv_now[static_cast<int>(k)] = pv_available(model, profile, pv[k].id, f.t_now);
        f.pv_next[static_cast<int>(k)] = pv_available(model, profile, pv[k].id, f.t_next);
    }
    return f;
}

std::string_view to_string(DecisionStatus s) {
    switch (s) {
        case DecisionStatus::Optimal: return "optimal";
        case DecisionStatus::Soft: return "soft";
        case DecisionStatus::Hold: return "hold";
    }
    return "?";
}

// ---------------------------------------------------------------------------

ControlProblem build_problem(const GridModel& model, const SensitivityBundle& bundle, const Forecast& forecast,
                             const Setpoints& previous, const ControllerConfig& config) {
    const int n = model.ac_count();
    const int nu = model.unified_count();
    const auto& ics = model.ic_pairs();
    const auto& pvs = model.pv_units();
    const int nvar_sc = static_cast<int>(bundle.vars.size());
    if (bundle.voltage.mag.rows() != nu || bundle.voltage.mag.cols() != nvar_sc)
        throw Error("sensitivity bundle does not match the grid");
    if (forecast.pv_next.size() != static_cast<int>(pvs.size()) ||
        forecast.pv_now.size() != static_cast<int>(pvs.size()))
        throw Error("missing PV forecast");
    if (previous.pv.size() != static_cast<int>(pvs.size()) || previous.ic_q.size() != static_cast<int>(ics.size()) ||
        previous.ic_e.size() != static_cast<int>(ics.size()) || previous.ic_p.size() != static_cast<int>(ics.size()))
        throw Error("previous setpoints do not match the grid");

    ControlProblem cp;
    std::vector<double> prev_values;
    auto declare = [&](DecisionKind kind, int index, ControlVariable var, std::string name, double prev) {
        cp.vars.push_back({kind, index, bundle.column_of(var), std::move(name)});
        prev_values.push_back(prev);
    };
    for (std::size_t k = 0; k < pvs.size(); ++k) {
        if (!pvs[k].curtailable) continue;
        const int i = static_cast<int>(k);
        double actual = std::clamp(previous.pv[i], 0.0, forecast.pv_now[i]);
        declare(DecisionKind::Pv, i, {Quantity::P, pvs[k].node}, "P:" + pvs[k].id, actual);
    }
    for (std::size_t c = 0; c < ics.size(); ++c)
        declare(DecisionKind::IcQ, static_cast<int>(c), {Quantity::Q, ics[c].ac}, "Q:" + ics[c].id,
                previous.ic_q[static_cast<int>(c)]);
    for (std::size_t c = 0; c < ics.size(); ++c) {
        if (ics[c].mode != IcMode::EdcQac) continue;
        declare(DecisionKind::IcE, static_cast<int>(c), {Quantity::E, n + ics[c].dc}, "E:" + ics[c].id,
                previous.ic_e[static_cast<int>(c)]);
    }
    for (std::size_t c = 0; c < ics.size(); ++c) {
        if (ics[c].mode != IcMode::PacQac) continue;
        declare(DecisionKind::IcP, static_cast<int>(c), {Quantity::P, ics[c].ac}, "P:" + ics[c].id,
                previous.ic_p[static_cast<int>(c)]);
    }
    const int nz = static_cast<int>(cp.vars.size());
    cp.z_prev = Eigen::Map<const Vector>(prev_values.data(), nz);

    // Bundle-column deltas: d = d0 + S z, with the uncontrollable change from t to t+1 in d0.
    Matrix s = Matrix::Zero(nvar_sc, nz);
    for (int v = 0; v < nz; ++v)
        if (cp.vars[v].column >= 0) s(cp.vars[v].column, v) = 1.0;
    Vector d0 = Vector::Zero(nvar_sc);
    for (int c = 0; c < nvar_sc; ++c) {
        const auto& var = bundle.vars[c];
        if (var.quantity == Quantity::P) d0[c] = forecast.next.p[var.node] - forecast.now.p[var.node];
        if (var.quantity == Quantity::Q) d0[c] = forecast.next.q[var.node] - forecast.now.q[var.node];
    }
    d0 -= s * cp.z_prev;

    auto affine = [&](const Vector& anchor, const Matrix& k) {
        return AffineMap{anchor + k * d0, k * s};
    };
    cp.voltage = affine(bundle.at_anchor.e, bundle.voltage.mag);
    cp.current = affine(bundle.at_anchor.i, bundle.current.k);

    std::vector<int> slacks;
    for (int i = 0; i < n; ++i)
        if (model.ac_kind(i) == NodeKind::AcSlack) slacks.push_back(i);
    Matrix q_slack_k(static_cast<int>(slacks.size()), nvar_sc);
    Vector q_slack_0(static_cast<int>(slacks.size()));
    for (std::size_t r = 0; r < slacks.size(); ++r) {
        q_slack_k.row(static_cast<int>(r)) = bundle.power.q_ac.row(slacks[r]);
        q_slack_0[static_cast<int>(r)] = bundle.anchor.q[slacks[r]];
    }
    cp.q_slack = affine(q_slack_0, q_slack_k);

    Matrix p_ic_k(static_cast<int>(ics.size()), nvar_sc);
    Vector p_ic_0(static_cast<int>(ics.size()));
    for (std::size_t c = 0; c < ics.size(); ++c) {
        p_ic_k.row(static_cast<int>(c)) = bundle.power.p_ac.row(ics[c].ac);
        p_ic_0[static_cast<int>(c)] = bundle.anchor.p[ics[c].ac];
    }
    cp.p_ic = affine(p_ic_0, p_ic_k);

    const auto& dcts = model.dcts();
    Matrix dct_k(static_cast<int>(dcts.size()), nvar_sc);
    Vector dct_0(static_cast<int>(dcts.size()));
    for (std::size_t d = 0; d < dcts.size(); ++d) {
        const int a = n + dcts[d].primary;
        const int b = n + dcts[d].secondary;
        dct_k.row(static_cast<int>(d)) = dcts[d].alpha * (bundle.voltage.mag.row(a) - bundle.voltage.mag.row(b));
        dct_0[static_cast<int>(d)] = dcts[d].alpha * (bundle.at_anchor.e[a] - bundle.at_anchor.e[b]);
    }
    cp.dct_transfer = affine(dct_0, dct_k);

    Matrix loss_k(2, nvar_sc);
    loss_k.row(0) = bundle.loss.p;
    loss_k.row(1) = bundle.loss.q;
    Vector loss_0(2);
    loss_0 << bundle.at_anchor.p_loss, bundle.at_anchor.q_loss;
    cp.losses = affine(loss_0, loss_k);

    // Objective.
    Objective obj(nz);
    for (int r = 0; r < cp.q_slack.m.rows(); ++r)
        obj.add_square(config.w_slack_q, cp.q_slack.m.row(r), cp.q_slack.c[r]);
    obj.add_square(config.w_loss, cp.losses.m.row(0), cp.losses.c[0]);
    for (int v = 0; v < nz; ++v) {
        const auto& dv = cp.vars[v];
        switch (dv.kind) {
            case DecisionKind::Pv:
                obj.add_square(config.w_curtail, v, forecast.pv_next[dv.index]);
                obj.add_shortfall(config.w_curtail_linear, v, forecast.pv_next[dv.index]);
                obj.add_square(config.w_move_p, v, cp.z_prev[v]);
                break;
            case DecisionKind::IcQ: obj.add_square(config.w_move_q, v, cp.z_prev[v]); break;
            case DecisionKind::IcP: obj.add_square(config.w_move_p, v, cp.z_prev[v]); break;
            case DecisionKind::IcE:
                obj.add_square(config.w_move_e, v, cp.z_prev[v]);
                obj.add_square(config.w_e_ref, v, model.dc_node(ics[dv.index].dc).v_set);
                break;
        }
    }
    cp.qp.h = obj.h;
    cp.qp.g = obj.g;
    cp.objective_constant = obj.constant;
    cp.qp.a_eq.resize(0, nz);
    cp.qp.b_eq.resize(0);

    // Network rows (softenable).
    RowBuilder rows;
    for (int u = 0; u < nu; ++u) {
        if (voltage_fixed(model, u)) continue;
        const auto& node = model.node(u);
        rows.add_range(cp.voltage.m.row(u), cp.voltage.c[u], node.v_min, node.v_max, "V:" + node.id, true);
    }
    const auto& branches = model.branches();
    for (std::size_t k = 0; k < branches.size(); ++k) {
        const int b = static_cast<int>(k);
        const double lo = branches[k].side == Side::Ac ? -std::numeric_limits<double>::infinity() : -branches[k].ampacity;
        RowVector m = cp.current.m.row(b);
        if (m.cwiseAbs().maxCoeff() == 0.0) continue;
        rows.add(m, branches[k].ampacity - cp.current.c[b], "I:" + branches[k].id + ":max", true);
        if (std::isfinite(lo)) rows.add(-m, cp.current.c[b] - lo, "I:" + branches[k].id + ":min", true);
        if (branches[k].side != Side::Ac || bundle.current.guarded[k] ||
            bundle.at_anchor.i[b] < kFanThreshold * branches[k].ampacity)
            continue;
        const Eigen::RowVectorXcd pm = bundle.current.phasor.row(b) * s;
        const Complex pc = bundle.current.phasor_value[b] + (bundle.current.phasor.row(b) * d0)(0);
        const double phi = std::arg(bundle.current.phasor_value[b]);
        for (int f = -kFanCuts; f <= kFanCuts; ++f) {
            if (f == 0) continue;
            const Complex rot = std::polar(1.0, -(phi + f * kFanStep));
            rows.add((rot * pm).real(), branches[k].ampacity - (rot * pc).real(),
                     "I:" + branches[k].id + ":max@" + std::to_string(f), true);
        }
    }
    for (std::size_t c = 0; c < ics.size(); ++c) {
        if (ics[c].mode != IcMode::EdcQac) continue;
        const int r = static_cast<int>(c);
        rows.add_range(cp.p_ic.m.row(r), cp.p_ic.c[r], -ics[c].p_max, ics[c].p_max, "Pic:" + ics[c].id, true);
    }
    for (std::size_t d = 0; d < dcts.size(); ++d) {
        const int r = static_cast<int>(d);
        rows.add_range(cp.dct_transfer.m.row(r), cp.dct_transfer.c[r], -dcts[d].rating, dcts[d].rating,
                       "DCT:" + dcts[d].id, true);
    }

    // Boxes (always hard).
    for (int v = 0; v < nz; ++v) {
        const auto& dv = cp.vars[v];
        double lo = 0.0;
        double hi = 0.0;
        switch (dv.kind) {
            case DecisionKind::Pv: lo = 0.0; hi = forecast.pv_next[dv.index]; break;
            case DecisionKind::IcQ:
                lo = std::max(-ics[dv.index].q_max, cp.z_prev[v] - config.q_rate);
                hi = std::min(ics[dv.index].q_max, cp.z_prev[v] + config.q_rate);
                if (lo > hi) lo = hi = std::clamp(cp.z_prev[v], -ics[dv.index].q_max, ics[dv.index].q_max);
                break;
            case DecisionKind::IcP: lo = -ics[dv.index].p_max; hi = ics[dv.index].p_max; break;
            case DecisionKind::IcE:
                std::tie(lo, hi) = e_box(model.dc_node(ics[dv.index].dc), cp.z_prev[v], config.e_rate);
                break;
        }
        RowVector unit = RowVector::Zero(nz);
        unit[v] = 1.0;
        rows.add(unit, hi, dv.name + ":max", false);
        rows.add(-unit, -lo, dv.name + ":min", false);
    }

    const int m = static_cast<int>(rows.a.size());
    cp.qp.a_in.resize(m, nz);
    cp.qp.b_in.resize(m);
    for (int r = 0; r < m; ++r) {
        cp.qp.a_in.row(r) = rows.a[r];
        cp.qp.b_in[r] = rows.b[r];
    }
    cp.row_names = std::move(rows.names);
    cp.soft_row = std::move(rows.soft);
    return cp;
}

// ---------------------------------------------------------------------------

namespace {

// Adds one slack per softenable row: a z - s <= b, s >= 0, with penalty p*s + eps*s^2.
QpProblem soften(const ControlProblem& cp, const ControllerConfig& config, std::vector<int>& soft_index) {
    const int nz = cp.qp.variables();
    const int m = static_cast<int>(cp.qp.b_in.size());
    soft_index.assign(m, -1);
    int ns = 0;
    for (int r = 0; r < m; ++r)
        if (cp.soft_row[r]) soft_index[r] = ns++;
    QpProblem q;
    q.h = Matrix::Zero(nz + ns, nz + ns);
    q.h.topLeftCorner(nz, nz) = cp.qp.h;
    q.h.bottomRightCorner(ns, ns) = 2.0 * config.soft_quadratic * Matrix::Identity(ns, ns);
    q.g = Vector::Zero(nz + ns);
    q.g.head(nz) = cp.qp.g;
    q.g.tail(ns).setConstant(config.soft_penalty);
    q.a_eq.resize(0, nz + ns);
    q.b_eq.resize(0);
    q.a_in = Matrix::Zero(m + ns, nz + ns);
    q.b_in = Vector::Zero(m + ns);
    q.a_in.topLeftCorner(m, nz) = cp.qp.a_in;
    q.b_in.head(m) = cp.qp.b_in;
    for (int r = 0; r < m; ++r) {
        if (soft_index[r] < 0) continue;
        q.a_in(r, nz + soft_index[r]) = -1.0;
        q.a_in(m + soft_index[r], nz + soft_index[r]) = -1.0;
    }
    return q;
}

}  // namespace

ControlDecision solve_control(const ControlProblem& cp, const GridModel& model, const Setpoints& previous,
                              const Forecast& forecast, const ControllerConfig& config) {
    auto t_solve = Clock::now();
    const int nz = cp.qp.variables();
    QpOptions opt{config.qp_max_iterations};
    ControlDecision dec;
    QpResult r = solve_qp(cp.qp, opt);
    dec.qp_status = r.status;
    Vector z;
    if (r.status == QpStatus::Optimal) {
        dec.status = DecisionStatus::Optimal;
        z = r.x;
        dec.kkt = r.kkt;
        for (int row : r.active) dec.active_constraints.push_back(cp.row_names[row]);
    } else {
        std::ostringstream msg;
        msg << "hard problem " << to_string(r.status);
        if (!r.most_violated.empty()) msg << ", most violated: " << cp.row_names[r.most_violated.front()];
        std::vector<int> soft_index;
        QpProblem relaxed = soften(cp, config, soft_index);
        QpResult rs = solve_qp(relaxed, opt);
        if (rs.status != QpStatus::Optimal)
            throw Error(msg.str() + "; relaxed problem " + std::string(to_string(rs.status)));
        dec.status = DecisionStatus::Soft;
        z = rs.x.head(nz);
        dec.kkt = rs.kkt;
        const int m = static_cast<int>(cp.row_names.size());
        for (int row : rs.active)
            if (row < m) dec.active_constraints.push_back(cp.row_names[row]);
        for (int row = 0; row < m; ++row)
            if (soft_index[row] >= 0 && rs.x[nz + soft_index[row]] > 1e-9)
                msg << "; relaxed " << cp.row_names[row] << " by " << rs.x[nz + soft_index[row]];
        dec.message = msg.str();
    }
    dec.times.solve = seconds_since(t_solve);

    auto t_emit = Clock::now();
    // Clip to the boxes so the emitted setpoints satisfy them exactly.
    for (int v = 0; v < nz; ++v) {
        double hi = cp.qp.b_in[cp.qp.b_in.size() - 2 * nz + 2 * v];
        double lo = -cp.qp.b_in[cp.qp.b_in.size() - 2 * nz + 2 * v + 1];
        z[v] = std::clamp(z[v], lo, hi);
    }
    dec.objective = 0.5 * z.dot(cp.qp.h * z) + cp.qp.g.dot(z) + cp.objective_constant;
    dec.setpoints = previous;
    for (int v = 0; v < nz; ++v) {
        const auto& dv = cp.vars[v];
        switch (dv.kind) {
            case DecisionKind::Pv: dec.setpoints.pv[dv.index] = z[v]; break;
            case DecisionKind::IcQ: dec.setpoints.ic_q[dv.index] = z[v]; break;
            case DecisionKind::IcE: dec.setpoints.ic_e[dv.index] = z[v]; break;
            case DecisionKind::IcP: dec.setpoints.ic_p[dv.index] = z[v]; break;
        }
    }
    // A curtailable unit that is not curtailed runs at its MPP.
    const auto& pvs = model.pv_units();
    for (std::size_t k = 0; k < pvs.size(); ++k)
        if (!pvs[k].curtailable) dec.setpoints.pv[static_cast<int>(k)] = forecast.pv_next[static_cast<int>(k)];
    dec.predicted_e = cp.voltage.at(z);
    dec.predicted_i = cp.current.at(z);
    dec.predicted_q_slack = cp.q_slack.at(z);
    dec.predicted_dct = cp.dct_transfer.at(z);
    dec.predicted_p_loss = cp.losses.at(z)[0];
    dec.times.emit = seconds_since(t_emit);
    return dec;
}

Controller::Controller(const GridModel& model, ControllerConfig config) : model_(model), config_(config) {}

ControlDecision Controller::control_step(const GridState& measured, const ResourceProfile& profile, int t,
                                         const Setpoints& previous) const {
    auto t_start = Clock::now();
    StageTimes times;
    try {
        auto t0 = Clock::now();
        GridState state = measured;
        state.timestep = t;
        times.fetch = seconds_since(t0);

        t0 = Clock::now();
        Forecast forecast = Forecast::from_profiles(model_, profile, t);
        times.forecast = seconds_since(t0);

        t0 = Clock::now();
        SensitivityBundle bundle = compute_bundle(model_, state);
        times.sensitivity = seconds_since(t0);

        t0 = Clock::now();
        ControlProblem cp = build_problem(model_, bundle, forecast, previous, config_);
        times.build = seconds_since(t0);

        ControlDecision dec = solve_control(cp, model_, previous, forecast, config_);
        times.solve = dec.times.solve;
        times.emit = dec.times.emit;
        times.total = seconds_since(t_start);
        dec.times = times;
        return dec;
    } catch (const std::exception& e) {
        ControlDecision hold;
        hold.setpoints = previous;
        hold.status = DecisionStatus::Hold;
        hold.message = e.what();
        times.total = seconds_since(t_start);
        hold.times = times;
        return hold;
    }
}

}  // namespace acdc
