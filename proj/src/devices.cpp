#include "acdc/devices.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace acdc {

double dct_transfer(const DctModel& dct, double delta, DctFidelity fidelity) {
    if (fidelity == DctFidelity::Plant && dct.deadband > 0.0 && std::abs(delta) < dct.deadband) {
        double s = delta / dct.deadband;
        return dct.alpha * delta * (2.0 * s * s - s * s * s * s);
    }
    return dct.alpha * delta;
}

double dct_transfer_slope(const DctModel& dct, double delta, DctFidelity fidelity) {
    if (fidelity == DctFidelity::Plant && dct.deadband > 0.0 && std::abs(delta) < dct.deadband) {
        double s2 = (delta / dct.deadband) * (delta / dct.deadband);
        return dct.alpha * (6.0 * s2 - 5.0 * s2 * s2);
    }
    return dct.alpha;
}

DctPower dct_power(const DctModel& dct, double e1, double e2, DctFidelity fidelity) {
    double transfer = dct_transfer(dct, e1 - e2, fidelity);
    double half_loss = 0.5 * dct.p_mag_loss;
    return {-transfer - half_loss, transfer - half_loss};
}

// ---------------------------------------------------------------------------

std::vector<std::string> ResourceProfile::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : series_) out.push_back(id);
    return out;
}

void ResourceProfile::set(const std::string& id, int t, const ProfileSample& sample) {
    if (t < 0) throw Error("negative profile step");
    if (t >= horizon_) horizon_ = t + 1;
    auto& series = series_[id];
    if (static_cast<int>(series.size()) <= t) series.resize(t + 1);
    series[t] = sample;
}

ProfileSample ResourceProfile::at(std::string_view id, int t) const {
    if (t < 0 || t >= horizon_)
        throw Error("profile step " + std::to_string(t) + " outside horizon of " + std::to_string(horizon_));
    auto it = series_.find(id);
    if (it == series_.end() || t >= static_cast<int>(it->second.size())) return {};
    return it->second[t];
}

bool ResourceProfile::operator==(const ResourceProfile& o) const {
    if (horizon_ != o.horizon_ || ids() != o.ids()) return false;
    for (const auto& [id, _] : series_)
        for (int t = 0; t < horizon_; ++t)
            if (!(at(id, t) == o.at(id, t))) return false;
    return true;
}

ResourceProfile parse_profiles(std::string_view csv_text) {
    ResourceProfile profile;
    std::istringstream in{std::string(csv_text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line_no == 1 && line.rfind("t,", 0) == 0) continue;
        std::vector<std::string> cells;
        std::stringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (cells.size() < 4) throw Error("profile line " + std::to_string(line_no) + " has too few columns");
        try {
            int t = std::stoi(cells[0]);
            ProfileSample s;
            s.p_kw = std::stod(cells[2]);
            s.q_kvar = std::stod(cells[3]);
            s.p_mpp_kw = (cells.size() > 4 && !cells[4].empty()) ? std::stod(cells[4]) : s.p_kw;
            profile.set(cells[1], t, s);
        } catch (const std::logic_error&) {
            throw Error("profile line " + std::to_string(line_no) + " is malformed");
        }
    }
    return profile;
}

ResourceProfile load_profiles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open profile file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_profiles(buf.str());
}

std::string format_profiles(const ResourceProfile& profile) {
    std::ostringstream out;
    out << "t,resource_id,P_kW,Q_kvar,P_mpp_kW\n";
    out << std::setprecision(17);
    auto ids = profile.ids();
    for (int t = 0; t < profile.horizon(); ++t)
        for (const auto& id : ids) {
            auto s = profile.at(id, t);
            out << t << ',' << id << ',' << s.p_kw << ',' << s.q_kvar << ',' << s.p_mpp_kw << '\n';
        }
    return out.str();
}

void save_profiles(const ResourceProfile& profile, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write profile file '" + path + "'");
    out << format_profiles(profile);
}

double pv_available(const GridModel& model, const ResourceProfile& profile, std::string_view pv_id, int t) {
    for (const auto& pv : model.pv_units())
        if (pv.id == pv_id) return std::max(0.0, model.power_to_pu(profile.at(pv_id, t).p_mpp_kw));
    throw Error("unknown PV unit '" + std::string(pv_id) + "'");
}

double pv_available_at_node(const GridModel& model, const ResourceProfile& profile, int ac_node, int t) {
    double sum = 0.0;
    for (const auto& pv : model.pv_units())
        if (pv.node == ac_node) sum += pv_available(model, profile, pv.id, t);
    return sum;
}

bool ic_envelope(const IcPair& ic, double p, double q) { return std::abs(p) <= ic.p_max && std::abs(q) <= ic.q_max; }

bool ic_envelope(double rating_kva, double s_base_va, double p, double q) {
    if (!(rating_kva > 0.0)) throw Error("IC rating must be positive");
    double limit = rating_kva * 1e3 / s_base_va;
    return std::abs(p) <= limit && std::abs(q) <= limit;
}

Injections uncontrollable_injections(const GridModel& model, const ResourceProfile& profile, int t) {
    Injections inj{Vector::Zero(model.unified_count()), Vector::Zero(model.unified_count())};
    for (const auto& r : model.resources()) {
        auto s = profile.at(r.id, t);
        int u = model.unified_index(r.side, r.node);
        inj.p[u] += model.power_to_pu(s.p_kw);
        if (r.side == Side::Ac) inj.q[u] += model.power_to_pu(s.q_kvar);
    }
    for (const auto& pv : model.pv_units()) {
        auto s = profile.at(pv.id, t);
        // Reactive output of every PV is replayed; active power only for plants that cannot curtail.
        inj.q[pv.node] += model.power_to_pu(s.q_kvar);
        if (!pv.curtailable) inj.p[pv.node] += model.power_to_pu(s.p_mpp_kw);
    }
    return inj;
}

}  // namespace acdc
