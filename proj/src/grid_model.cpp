#include "acdc/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace acdc {

using nlohmann::json;

std::string_view to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::AcSlack: return "slack";
        case NodeKind::AcPQ: return "pq";
        case NodeKind::AcPV: return "pv";
        case NodeKind::IcAc: return "ic_ac";
        case NodeKind::IcDc: return "ic_dc";
        case NodeKind::DcP: return "p";
        case NodeKind::DcV: return "v";
    }
    return "?";
}

std::string_view to_string(IcMode mode) { return mode == IcMode::EdcQac ? "EdcQac" : "PacQac"; }

NodeKind node_kind_from_string(std::string_view text) {
    if (text == "slack") return NodeKind::AcSlack;
    if (text == "pq") return NodeKind::AcPQ;
    if (text == "pv") return NodeKind::AcPV;
    if (text == "ic_ac") return NodeKind::IcAc;
    if (text == "ic_dc") return NodeKind::IcDc;
    if (text == "p") return NodeKind::DcP;
    if (text == "v") return NodeKind::DcV;
    throw GridError("unknown node kind '" + std::string(text) + "'");
}

IcMode ic_mode_from_string(std::string_view text) {
    if (text == "EdcQac") return IcMode::EdcQac;
    if (text == "PacQac") return IcMode::PacQac;
    throw GridError("unknown IC mode '" + std::string(text) + "'");
}

namespace {

bool is_ac_kind(NodeKind k) {
    return k == NodeKind::AcSlack || k == NodeKind::AcPQ || k == NodeKind::AcPV || k == NodeKind::IcAc;
}

// Union-find over side-local node indices.
struct Components {
    std::vector<int> parent;
    explicit Components(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    void join(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

GridModel::GridModel(GridData data) : data_(std::move(data)) { validate_and_build(); }

const NodeData& GridModel::node(int unified) const {
    return unified < ac_count() ? data_.ac_nodes[unified] : data_.dc_nodes[unified - ac_count()];
}

std::optional<int> GridModel::find_ac(std::string_view id) const {
    for (int i = 0; i < ac_count(); ++i)
        if (data_.ac_nodes[i].id == id) return i;
    return std::nullopt;
}

std::optional<int> GridModel::find_dc(std::string_view id) const {
    for (int j = 0; j < dc_count(); ++j)
        if (data_.dc_nodes[j].id == id) return j;
    return std::nullopt;
}

int GridModel::unified_of(std::string_view id) const {
    if (auto i = find_ac(id)) return *i;
    if (auto j = find_dc(id)) return ac_count() + *j;
    throw GridError("unknown node '" + std::string(id) + "'");
}

int GridModel::branch_index(std::string_view key) const {
    for (std::size_t b = 0; b < branches_.size(); ++b)
        if (branches_[b].id == key) return static_cast<int>(b);
    auto dash = key.find('-');
    if (dash != std::string_view::npos) {
        auto a = key.substr(0, dash);
        auto c = key.substr(dash + 1);
        for (std::size_t b = 0; b < data_.lines.size(); ++b) {
            const auto& l = data_.lines[b];
            if ((l.from == a && l.to == c) || (l.from == c && l.to == a)) return static_cast<int>(b);
        }
    }
    throw GridError("unknown branch '" + std::string(key) + "'");
}

std::optional<int> GridModel::ic_at_ac(int i) const {
    if (ic_of_ac_[i] < 0) return std::nullopt;
    return ic_of_ac_[i];
}

std::optional<int> GridModel::ic_at_dc(int j) const {
    if (ic_of_dc_[j] < 0) return std::nullopt;
    return ic_of_dc_[j];
}

double GridModel::current_base(Side side) const {
    return side == Side::Ac ? data_.base.s_va / (std::sqrt(3.0) * data_.base.v_ac)
                            : data_.base.s_va / data_.base.v_dc;
}

GridModel GridModel::without_dcts() const {
    GridData copy = data_;
    copy.dct.clear();
    return GridModel(std::move(copy));
}

GridModel GridModel::without_ic_losses() const {
    GridData copy = data_;
    for (auto& ic : copy.ic_pairs) {
        ic.loss = {0.0, 0.0, 0.0};
        ic.filter = 0.0;
    }
    return GridModel(std::move(copy));
}

void GridModel::validate_and_build() {
    const auto& b = data_.base;
    if (!(b.s_va > 0.0 && b.v_ac > 0.0 && b.v_dc > 0.0)) throw GridError("base values must be positive");

    const int n = ac_count();
    const int m = dc_count();
    if (n == 0) throw GridError("grid has no AC nodes");

    for (const auto& node : data_.ac_nodes)
        if (!is_ac_kind(node.kind))
            throw GridError("node '" + node.id + "' has DC kind in the AC node list");
    for (const auto& node : data_.dc_nodes)
        if (is_ac_kind(node.kind))
            throw GridError("node '" + node.id + "' has AC kind in the DC node list");
    for (int u = 0; u < n + m; ++u) {
        const auto& nd = node(u);
        for (int w = u + 1; w < n + m; ++w)
            if (node(w).id == nd.id) throw GridError("duplicate node id '" + nd.id + "'");
        if (!(nd.v_set > 0.0)) throw GridError("node '" + nd.id + "' has non-positive voltage setpoint");
        if (!(nd.v_min < nd.v_max)) throw GridError("node '" + nd.id + "' has empty voltage band");
        bool ic = nd.kind == NodeKind::IcAc || nd.kind == NodeKind::IcDc;
        if (ic && !nd.mode) throw GridError("IC node '" + nd.id + "' lacks a control mode");
    }

    // Interfacing converters.
    const double z_ac = b.v_ac * b.v_ac / b.s_va;
    const double z_dc = b.v_dc * b.v_dc / b.s_va;
    ic_of_ac_.assign(n, -1);
    ic_of_dc_.assign(m, -1);
    ics_.clear();
    for (const auto& ic : data_.ic_pairs) {
        auto ac = find_ac(ic.ac_node);
        auto dc = find_dc(ic.dc_node);
        if (!ac || !dc) throw GridError("IC '" + ic.id + "' references unknown nodes");
        if (ac_kind(*ac) != NodeKind::IcAc || dc_kind(*dc) != NodeKind::IcDc)
            throw GridError("IC '" + ic.id + "' must couple an ic_ac node with an ic_dc node");
        if (ic_of_ac_[*ac] >= 0 || ic_of_dc_[*dc] >= 0)
            throw GridError("IC node used by more than one converter at '" + ic.id + "'");
        if (ac_node(*ac).mode != dc_node(*dc).mode)
            throw GridError("IC '" + ic.id + "' has mismatched modes on its AC and DC nodes");
        if (!(ic.rating_kva > 0.0)) throw GridError("IC '" + ic.id + "' rating must be positive");
        ic_of_ac_[*ac] = static_cast<int>(ics_.size());
        ic_of_dc_[*dc] = static_cast<int>(ics_.size());
        IcPair pair;
        pair.id = ic.id;
        pair.ac = *ac;
        pair.dc = *dc;
        pair.mode = *ac_node(*ac).mode;
        pair.p_max = power_to_pu(ic.rating_kva);
        pair.q_max = pair.p_max;
        pair.loss = ic.loss;
        pair.filter = ic.filter;
        ics_.push_back(pair);
    }
    for (int i = 0; i < n; ++i)
        if (ac_kind(i) == NodeKind::IcAc && ic_of_ac_[i] < 0)
            throw GridError("ic_ac node '" + ac_node(i).id + "' is not paired with an ic_dc node");
    for (int j = 0; j < m; ++j)
        if (dc_kind(j) == NodeKind::IcDc && ic_of_dc_[j] < 0)
            throw GridError("ic_dc node '" + dc_node(j).id + "' is not paired with an ic_ac node");

    // Lines and admittances.
    branches_.clear();
    y_ac_ = CMatrix::Zero(n, n);
    y_dc_ = Matrix::Zero(m, m);
    Components ac_cc(n);
    Components dc_cc(std::max(m, 1));
    for (const auto& line : data_.lines) {
        if (!(line.ampacity_a > 0.0)) throw GridError("line '" + line.id + "' needs a positive ampacity");
        Branch br;
        br.id = line.id;
        if (line.x_ohm) {
            auto f = find_ac(line.from);
            auto t = find_ac(line.to);
            if (!f || !t) throw GridError("AC line '" + line.id + "' must connect two AC nodes");
            if (*f == *t) throw GridError("line '" + line.id + "' is a self loop");
            Complex z(line.r_ohm / z_ac, *line.x_ohm / z_ac);
            if (std::abs(z) == 0.0) throw GridError("line '" + line.id + "' has zero impedance");
            br.side = Side::Ac;
            br.from = *f;
            br.to = *t;
            br.y = 1.0 / z;
            br.ampacity = line.ampacity_a / current_base(Side::Ac);
            y_ac_(*f, *f) += br.y;
            y_ac_(*t, *t) += br.y;
            y_ac_(*f, *t) -= br.y;
            y_ac_(*t, *f) -= br.y;
            ac_cc.join(*f, *t);
        } else {
            auto f = find_dc(line.from);
            auto t = find_dc(line.to);
            if (!f || !t) throw GridError("DC line '" + line.id + "' must connect two DC nodes");
            if (*f == *t) throw GridError("line '" + line.id + "' is a self loop");
            if (!(line.r_ohm > 0.0)) throw GridError("DC line '" + line.id + "' needs positive resistance");
            double g = z_dc / line.r_ohm;
            br.side = Side::Dc;
            br.from = *f;
            br.to = *t;
            br.y = Complex(g, 0.0);
            br.ampacity = line.ampacity_a / current_base(Side::Dc);
            y_dc_(*f, *f) += g;
            y_dc_(*t, *t) += g;
            y_dc_(*f, *t) -= g;
            y_dc_(*t, *f) -= g;
            dc_cc.join(*f, *t);
        }
        branches_.push_back(br);
    }

    // One slack per AC component.
    std::vector<int> slack_count(n, 0);
    for (int i = 0; i < n; ++i)
        if (ac_kind(i) == NodeKind::AcSlack) ++slack_count[ac_cc.find(i)];
    for (int i = 0; i < n; ++i) {
        int root = ac_cc.find(i);
        if (slack_count[root] == 0) throw GridError("AC component containing '" + ac_node(i).id + "' has no slack node");
        if (slack_count[root] > 1)
            throw GridError("AC component containing '" + ac_node(i).id + "' has more than one slack node");
    }

    // At least one voltage-imposing node per DC component.
    std::vector<int> imposers(std::max(m, 1), 0);
    for (int j = 0; j < m; ++j) {
        const auto& nd = dc_node(j);
        bool imposes = nd.kind == NodeKind::DcV || (nd.kind == NodeKind::IcDc && nd.mode == IcMode::EdcQac);
        if (imposes) ++imposers[dc_cc.find(j)];
    }
    for (int j = 0; j < m; ++j)
        if (imposers[dc_cc.find(j)] == 0)
            throw GridError("DC component containing '" + dc_node(j).id + "' has no voltage-imposing node");

    // Devices.
    pv_.clear();
    for (const auto& pv : data_.pv) {
        auto i = find_ac(pv.node);
        if (!i || !(ac_kind(*i) == NodeKind::AcPQ || ac_kind(*i) == NodeKind::AcPV))
            throw GridError("PV '" + pv.id + "' must sit on an AC PQ or PV node");
        if (!(pv.rating_kw > 0.0)) throw GridError("PV '" + pv.id + "' rating must be positive");
        pv_.push_back({pv.id, *i, power_to_pu(pv.rating_kw), pv.curtailable});
    }
    resources_.clear();
    for (const auto& res : data_.resources) {
        ResourceUnit unit{res.id, Side::Ac, 0, power_to_pu(res.rating_kva)};
        if (auto i = find_ac(res.node)) {
            if (!(ac_kind(*i) == NodeKind::AcPQ || ac_kind(*i) == NodeKind::AcPV))
                throw GridError("resource '" + res.id + "' must sit on an AC PQ/PV node or a DC P node");
            unit.node = *i;
        } else if (auto j = find_dc(res.node)) {
            if (dc_kind(*j) != NodeKind::DcP)
                throw GridError("resource '" + res.id + "' must sit on an AC PQ/PV node or a DC P node");
            unit.side = Side::Dc;
            unit.node = *j;
        } else {
            throw GridError("resource '" + res.id + "' references unknown node '" + res.node + "'");
        }
        resources_.push_back(unit);
    }
    dcts_.clear();
    for (const auto& d : data_.dct) {
        auto p = find_dc(d.primary);
        auto s = find_dc(d.secondary);
        if (!p || !s || *p == *s) throw GridError("DCT '" + d.id + "' must join two distinct DC nodes");
        if (!(d.alpha_kw_per_v > 0.0) || d.r_equiv_ohm < 0.0 || d.p_mag_loss_kw < 0.0 || d.deadband_v < 0.0 ||
            !(d.rating_kw > 0.0))
            throw GridError("DCT '" + d.id + "' has invalid parameters");
        DctModel model;
        model.id = d.id;
        model.primary = *p;
        model.secondary = *s;
        model.alpha = d.alpha_kw_per_v * 1e3 * b.v_dc / b.s_va;
        model.r_equiv = d.r_equiv_ohm / z_dc;
        model.p_mag_loss = power_to_pu(d.p_mag_loss_kw);
        model.deadband = d.deadband_v / b.v_dc;
        model.rating = power_to_pu(d.rating_kw);
        dcts_.push_back(model);
    }

    // Unique ids among all devices.
    std::vector<std::string> ids;
    for (const auto& x : data_.pv) ids.push_back(x.id);
    for (const auto& x : data_.resources) ids.push_back(x.id);
    for (const auto& x : data_.dct) ids.push_back(x.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw GridError("duplicate device id");
}

GridState GridState::flat(const GridModel& model) {
    GridState s;
    s.e_ac = CVector::Ones(model.ac_count());
    s.e_dc = Vector::Ones(model.dc_count());
    s.p = Vector::Zero(model.unified_count());
    s.q = Vector::Zero(model.unified_count());
    return s;
}

double GridState::magnitude(int unified, int ac_count) const {
    return unified < ac_count ? std::abs(e_ac[unified]) : std::abs(e_dc[unified - ac_count]);
}

// ---------------------------------------------------------------------------
// JSON I/O
// ---------------------------------------------------------------------------

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    return it == j.end() ? fallback : it->get<T>();
}

NodeData parse_node(const json& j) {
    NodeData nd;
    nd.id = j.at("id").get<std::string>();
    nd.kind = node_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("mode")) nd.mode = ic_mode_from_string(j.at("mode").get<std::string>());
    nd.v_min = get_or(j, "v_min", nd.v_min);
    nd.v_max = get_or(j, "v_max", nd.v_max);
    nd.v_set = get_or(j, "v_set", nd.v_set);
    nd.angle_set = get_or(j, "angle_set", nd.angle_set);
    return nd;
}

json dump_node(const NodeData& nd) {
    json j{{"id", nd.id}, {"kind", std::string(to_string(nd.kind))}};
    if (nd.mode) j["mode"] = std::string(to_string(*nd.mode));
    j["v_min"] = nd.v_min;
    j["v_max"] = nd.v_max;
    j["v_set"] = nd.v_set;
    j["angle_set"] = nd.angle_set;
    return j;
}

}  // namespace

GridData parse_grid(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw GridError(std::string("grid file is not valid JSON: ") + e.what());
    }
    try {
        GridData g;
        g.name = get_or<std::string>(doc, "name", "");
        const auto& base = doc.at("base");
        g.base.s_va = base.at("s_base_va").get<double>();
        g.base.v_ac = base.at("v_base_ac").get<double>();
        g.base.v_dc = base.at("v_base_dc").get<double>();
        for (const auto& j : doc.at("ac_nodes")) g.ac_nodes.push_back(parse_node(j));
        for (const auto& j : doc.at("dc_nodes")) g.dc_nodes.push_back(parse_node(j));
        for (const auto& j : doc.at("ic_pairs")) {
            IcData ic;
            ic.id = j.at("id").get<std::string>();
            ic.ac_node = j.at("ac").get<std::string>();
            ic.dc_node = j.at("dc").get<std::string>();
            ic.rating_kva = j.at("rating_kva").get<double>();
            if (j.contains("loss")) ic.loss = j.at("loss").get<std::array<double, 3>>();
            ic.filter = get_or(j, "filter", 0.0);
            g.ic_pairs.push_back(ic);
        }
        for (const auto& j : doc.at("lines")) {
            LineData line;
            line.id = j.at("id").get<std::string>();
            line.from = j.at("from").get<std::string>();
            line.to = j.at("to").get<std::string>();
            line.r_ohm = j.at("r").get<double>();
            if (j.contains("x")) line.x_ohm = j.at("x").get<double>();
            line.ampacity_a = j.at("ampacity_A").get<double>();
            g.lines.push_back(line);
        }
        if (doc.contains("devices")) {
            const auto& dev = doc.at("devices");
            for (const auto& j : get_or(dev, "pv", json::array()))
                g.pv.push_back({j.at("id").get<std::string>(), j.at("node").get<std::string>(),
                                j.at("rating_kw").get<double>(), get_or(j, "curtailable", false)});
            for (const auto& j : get_or(dev, "resources", json::array()))
                g.resources.push_back({j.at("id").get<std::string>(), j.at("node").get<std::string>(),
                                       get_or(j, "rating_kva", 0.0)});
            for (const auto& j : get_or(dev, "dct", json::array())) {
                DctData d;
                d.id = j.at("id").get<std::string>();
                d.primary = j.at("primary").get<std::string>();
                d.secondary = j.at("secondary").get<std::string>();
                d.alpha_kw_per_v = get_or(j, "alpha_kw_per_v", d.alpha_kw_per_v);
                d.r_equiv_ohm = get_or(j, "r_equiv_ohm", d.r_equiv_ohm);
                d.p_mag_loss_kw = get_or(j, "p_mag_loss_kw", d.p_mag_loss_kw);
                d.deadband_v = get_or(j, "deadband_v", d.deadband_v);
                d.rating_kw = get_or(j, "rating_kw", d.rating_kw);
                g.dct.push_back(d);
            }
        }
        return g;
    } catch (const json::exception& e) {
        throw GridError(std::string("grid file schema violation: ") + e.what());
    }
}

std::string serialize_grid(const GridData& g) {
    json doc;
    doc["name"] = g.name;
    doc["base"] = {{"s_base_va", g.base.s_va}, {"v_base_ac", g.base.v_ac}, {"v_base_dc", g.base.v_dc}};
    doc["ac_nodes"] = json::array();
    for (const auto& nd : g.ac_nodes) doc["ac_nodes"].push_back(dump_node(nd));
    doc["dc_nodes"] = json::array();
    for (const auto& nd : g.dc_nodes) doc["dc_nodes"].push_back(dump_node(nd));
    doc["ic_pairs"] = json::array();
    for (const auto& ic : g.ic_pairs)
        doc["ic_pairs"].push_back({{"id", ic.id},
                                   {"ac", ic.ac_node},
                                   {"dc", ic.dc_node},
                                   {"rating_kva", ic.rating_kva},
                                   {"loss", ic.loss},
                                   {"filter", ic.filter}});
    doc["lines"] = json::array();
    for (const auto& l : g.lines) {
        json j{{"id", l.id}, {"from", l.from}, {"to", l.to}, {"r", l.r_ohm}};
        if (l.x_ohm) j["x"] = *l.x_ohm;
        j["ampacity_A"] = l.ampacity_a;
        doc["lines"].push_back(j);
    }
    json dev;
    dev["pv"] = json::array();
    for (const auto& pv : g.pv)
        dev["pv"].push_back(
            {{"id", pv.id}, {"node", pv.node}, {"rating_kw", pv.rating_kw}, {"curtailable", pv.curtailable}});
    dev["resources"] = json::array();
    for (const auto& r : g.resources)
        dev["resources"].push_back({{"id", r.id}, {"node", r.node}, {"rating_kva", r.rating_kva}});
    dev["dct"] = json::array();
    for (const auto& d : g.dct)
        dev["dct"].push_back({{"id", d.id},
                              {"primary", d.primary},
                              {"secondary", d.secondary},
                              {"alpha_kw_per_v", d.alpha_kw_per_v},
                              {"r_equiv_ohm", d.r_equiv_ohm},
                              {"p_mag_loss_kw", d.p_mag_loss_kw},
                              {"deadband_v", d.deadband_v},
                              {"rating_kw", d.rating_kw}});
    doc["devices"] = dev;
    return doc.dump(2);
}

GridModel load_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GridError("cannot open grid file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return GridModel(parse_grid(buf.str()));
}

void save_grid(const GridModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw GridError("cannot write grid file '" + path + "'");
    out << serialize_grid(model.data()) << '\n';
}

// ---------------------------------------------------------------------------
// Network quantities
// ---------------------------------------------------------------------------

CMatrix build_unified_admittance(const GridModel& model) {
    const int n = model.ac_count();
    const int m = model.dc_count();
    CMatrix y = CMatrix::Zero(n + m, n + m);
    y.topLeftCorner(n, n) = model.y_ac();
    if (m > 0) y.bottomRightCorner(m, m) = model.y_dc().cast<Complex>();
    return y;
}

Complex branch_current(const GridModel& model, const GridState& state, int branch) {
    if (branch < 0 || branch >= static_cast<int>(model.branches().size()))
        throw GridError("branch index out of range");
    const auto& br = model.branches()[branch];
    if (br.side == Side::Ac) return br.y * (state.e_ac[br.from] - state.e_ac[br.to]);
    return Complex(br.y.real() * (state.e_dc[br.from] - state.e_dc[br.to]), 0.0);
}

Complex branch_current(const GridModel& model, const GridState& state, std::string_view key) {
    return branch_current(model, state, model.branch_index(key));
}

CVector nodal_currents(const GridModel& model, const GridState& state) {
    const int n = model.ac_count();
    const int m = model.dc_count();
    CVector e(n + m);
    e.head(n) = state.e_ac;
    e.tail(m) = state.e_dc.cast<Complex>();
    return build_unified_admittance(model) * e;
}

void update_injections(const GridModel& model, GridState& state) {
    const int n = model.ac_count();
    const int m = model.dc_count();
    CVector i_ac = model.y_ac() * state.e_ac;
    Vector i_dc = model.y_dc() * state.e_dc;
    state.p.resize(n + m);
    state.q.resize(n + m);
    for (int i = 0; i < n; ++i) {
        Complex s = state.e_ac[i] * std::conj(i_ac[i]);
        state.p[i] = s.real();
        state.q[i] = s.imag();
    }
    for (int j = 0; j < m; ++j) {
        state.p[n + j] = state.e_dc[j] * i_dc[j];
        state.q[n + j] = 0.0;
    }
}

}  // namespace acdc
