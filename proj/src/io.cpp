#include "acdc/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace acdc {

namespace {

using json = nlohmann::json;

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

json vec(const Vector& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

}  // namespace

std::string format_state(const GridModel& model, const GridState& state) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "node_id,E_pu,angle_rad,P_pu,Q_pu\n";
    for (int u = 0; u < model.unified_count(); ++u) {
        double mag = u < model.ac_count() ? std::abs(state.e_ac[u]) : state.e_dc[u - model.ac_count()];
        double ang = u < model.ac_count() ? std::arg(state.e_ac[u]) : 0.0;
        out << model.node(u).id << ',' << mag << ',' << ang << ',' << state.p[u] << ',' << state.q[u] << '\n';
    }
    return out.str();
}

GridState parse_state(const GridModel& model, std::string_view csv_text) {
    GridState s = GridState::flat(model);
    std::vector<bool> seen(model.unified_count(), false);
    std::istringstream in{std::string(csv_text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#' || (line_no == 1 && line.rfind("node_id", 0) == 0)) continue;
        auto cells = split(line);
        if (cells.size() < 2) throw Error("state line " + std::to_string(line_no) + " has too few columns");
        int u = model.unified_of(cells[0]);
        try {
            double mag = std::stod(cells[1]);
            double ang = cells.size() > 2 && !cells[2].empty() ? std::stod(cells[2]) : 0.0;
            if (!(mag > 0.0)) throw Error("state line " + std::to_string(line_no) + ": voltage must be positive");
            if (u < model.ac_count()) s.e_ac[u] = std::polar(mag, ang);
            else s.e_dc[u - model.ac_count()] = mag;
        } catch (const std::logic_error&) {
            throw Error("state line " + std::to_string(line_no) + " is malformed");
        }
        seen[u] = true;
    }
    for (int u = 0; u < model.unified_count(); ++u)
        if (!seen[u]) throw Error("state file lacks node '" + model.node(u).id + "'");
    // P and Q follow from the voltages; the file columns are informative only
    update_injections(model, s);
    return s;
}

PfSpec parse_spec(const GridModel& model, std::string_view json_text) {
    PfSpec spec = PfSpec::nominal(model);
    json j;
    try {
        j = json::parse(json_text);
        if (j.contains("dct")) {
            std::string f = j.at("dct").get<std::string>();
            if (f == "ideal") spec.dct_fidelity = DctFidelity::Ideal;
            else if (f == "plant") spec.dct_fidelity = DctFidelity::Plant;
            else throw Error("power-flow spec: dct must be 'ideal' or 'plant'");
        }
        if (j.contains("nodes"))
            for (const auto& [id, v] : j.at("nodes").items()) {
                int u = model.unified_of(id);
                if (v.contains("P")) spec.p[u] = v.at("P").get<double>();
                if (v.contains("Q")) spec.q[u] = v.at("Q").get<double>();
                if (v.contains("V")) spec.v[u] = v.at("V").get<double>();
                if (v.contains("angle")) {
                    if (u >= model.ac_count()) throw Error("power-flow spec: angle given at DC node '" + id + "'");
                    spec.angle[u] = v.at("angle").get<double>();
                }
            }
        if (j.contains("ic"))
            for (const auto& [id, v] : j.at("ic").items()) {
                std::size_t c = 0;
                while (c < model.ic_pairs().size() && model.ic_pairs()[c].id != id) ++c;
                if (c == model.ic_pairs().size()) throw Error("power-flow spec: unknown IC '" + id + "'");
                if (v.contains("P")) spec.ic[c].p = v.at("P").get<double>();
                if (v.contains("Q")) spec.ic[c].q = v.at("Q").get<double>();
                if (v.contains("E_dc")) spec.ic[c].e_dc = v.at("E_dc").get<double>();
            }
    } catch (const json::exception& e) {
        throw Error(std::string("power-flow spec: ") + e.what());
    }
    spec.validate(model);
    return spec;
}

GridState load_state(const GridModel& model, const std::string& path) { return parse_state(model, read_text(path)); }

void save_state(const GridModel& model, const GridState& state, const std::string& path) {
    write_text(path, format_state(model, state));
}

std::string format_matrix(const Matrix& m, const std::vector<std::string>& row_labels,
                          const std::vector<std::string>& col_labels) {
    if (static_cast<int>(row_labels.size()) != m.rows() || static_cast<int>(col_labels.size()) != m.cols())
        throw Error("matrix labels do not match its shape");
    std::ostringstream out;
    out << std::setprecision(17) << "row";
    for (const auto& c : col_labels) out << ',' << c;
    out << '\n';
    for (int r = 0; r < m.rows(); ++r) {
        out << row_labels[r];
        for (int c = 0; c < m.cols(); ++c) out << ',' << m(r, c);
        out << '\n';
    }
    return out.str();
}

std::string decision_json(const GridModel& model, const ControlDecision& d) {
    const double kw = model.base().s_va / 1e3;
    json pv = json::array();
    for (std::size_t k = 0; k < model.pv_units().size(); ++k)
        pv.push_back({{"id", model.pv_units()[k].id},
                      {"curtailable", model.pv_units()[k].curtailable},
                      {"P_set_kW", d.setpoints.pv[static_cast<int>(k)] * kw}});
    json ic = json::array();
    for (std::size_t c = 0; c < model.ic_pairs().size(); ++c) {
        const auto& p = model.ic_pairs()[c];
        const int i = static_cast<int>(c);
        json e = {{"id", p.id}, {"mode", to_string(p.mode)}, {"Q_set_kvar", d.setpoints.ic_q[i] * kw}};
        if (p.mode == IcMode::EdcQac) e["E_set_pu"] = d.setpoints.ic_e[i];
        else e["P_set_kW"] = d.setpoints.ic_p[i] * kw;
        ic.push_back(e);
    }
    json pred = json::object();
    if (d.predicted_e.size() == model.unified_count()) {
        json e = json::object();
        for (int u = 0; u < model.unified_count(); ++u) e[model.node(u).id] = d.predicted_e[u];
        json i = json::object();
        for (std::size_t b = 0; b < model.branches().size(); ++b) {
            const auto& br = model.branches()[b];
            i[br.id] = d.predicted_i[static_cast<int>(b)] * model.current_base(br.side);
        }
        pred = {{"E_pu", e},
                {"I_A", i},
                {"P_loss_kW", d.predicted_p_loss * kw},
                {"Q_slack_kvar", vec(d.predicted_q_slack * kw)},
                {"dct_transfer_kW", vec(d.predicted_dct * kw)}};
    }
    json j = {{"status", to_string(d.status)},
              {"qp_status", to_string(d.qp_status)},
              {"objective", d.objective},
              {"message", d.message},
              {"setpoints", {{"pv", pv}, {"ic", ic}}},
              {"predictions", pred},
              {"active_constraints", d.active_constraints},
              {"kkt", {{"stationarity", d.kkt.stationarity},
                       {"primal", d.kkt.primal},
                       {"complementarity", d.kkt.complementarity},
                       {"dual", d.kkt.dual}}},
              {"timings_ms", {{"fetch", d.times.fetch * 1e3},
                              {"forecast", d.times.forecast * 1e3},
                              {"sensitivity", d.times.sensitivity * 1e3},
                              {"build", d.times.build * 1e3},
                              {"solve", d.times.solve * 1e3},
                              {"emit", d.times.emit * 1e3},
                              {"total", d.times.total * 1e3}}}};
    return j.dump(2);
}

void write_text(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace acdc
