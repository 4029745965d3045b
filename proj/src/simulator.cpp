#include "acdc/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "acdc/power_flow.hpp"
#include "acdc/sensitivity.hpp"

namespace acdc {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

bool voltage_predicted(const GridModel& model, int u) {
    const int n = model.ac_count();
    if (u < n) return model.ac_kind(u) != NodeKind::AcSlack && model.ac_kind(u) != NodeKind::AcPV;
    NodeKind k = model.dc_kind(u - n);
    if (k == NodeKind::DcV) return false;
    if (k == NodeKind::IcDc) return model.ic_pairs()[*model.ic_at_dc(u - n)].mode != IcMode::EdcQac;
    return true;
}

std::string dump_spec(const GridModel& model, const PfSpec& spec) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (int u = 0; u < model.unified_count(); ++u)
        out << "\n  " << model.node(u).id << " P=" << spec.p[u] << " Q=" << spec.q[u] << " V=" << spec.v[u];
    for (std::size_t c = 0; c < spec.ic.size(); ++c)
        out << "\n  " << model.ic_pairs()[c].id << " p=" << spec.ic[c].p << " q=" << spec.ic[c].q
            << " e_dc=" << spec.ic[c].e_dc;
    return out.str();
}

TimingStats timing_stats(std::vector<double> v) {
    TimingStats s;
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    auto pct = [&](double p) {
        // nearest rank
        std::size_t rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
        return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
    };
    s.p50 = pct(50);
    s.p90 = pct(90);
    s.p99 = pct(99);
    s.p100 = v.back();
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------

Scenario Scenario::load(const std::string& path, std::optional<std::uint64_t> seed) {
    const fs::path dir = fs::path(path).parent_path();
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error("scenario '" + path + "': " + e.what());
    }
    Scenario s;
    try {
        s.name = j.value("name", fs::path(path).stem().string());
        s.grid = parse_grid(read_file(resolve(dir, j.at("grid").get<std::string>())));
        s.seed = seed.value_or(j.value("seed", std::uint64_t{1}));
        s.period_s = j.value("period_s", 2.0);
        s.noise_sigma = j.value("noise_sigma", 0.0);
        s.warmup_steps = j.value("warmup_steps", 0);
        s.monitored_line = j.value("monitored_line", s.monitored_line);
        s.start_time = j.value("start_time", s.start_time);
        s.realtime = j.value("realtime", false);
        if (j.contains("plant")) {
            const auto& p = j.at("plant");
            s.plant.dct_deadband = p.value("dct_deadband", true);
            s.plant.ic_losses = p.value("ic_losses", true);
            s.plant.dct_enabled = p.value("dct_enabled", true);
        }
        if (j.contains("ampacity_A")) {
            for (const auto& [id, amps] : j.at("ampacity_A").items()) {
                bool found = false;
                for (auto& line : s.grid.lines)
                    if (line.id == id || line.from + "-" + line.to == id || line.to + "-" + line.from == id) {
                        line.ampacity_a = amps.get<double>();
                        found = true;
                    }
                if (!found) throw Error("scenario overrides unknown line '" + id + "'");
            }
        }
        if (j.contains("controller")) {
            const auto& c = j.at("controller");
            // inline object, or a path to a controller config file
            s.controller = c.is_string() ? ControllerConfig::from_json(read_file(resolve(dir, c.get<std::string>())))
                                         : ControllerConfig::from_json(c.dump());
        }
        GridModel model(s.grid);
        if (j.contains("profiles")) {
            s.profiles = parse_profiles(read_file(resolve(dir, j.at("profiles").get<std::string>())));
        } else if (j.contains("profile_template")) {
            s.profiles =
                generate_profiles(s.seed, read_file(resolve(dir, j.at("profile_template").get<std::string>())), model);
        } else {
            s.profiles = ResourceProfile(j.at("horizon").get<int>());
        }
        s.horizon = j.value("horizon", s.profiles.horizon());
    } catch (const json::exception& e) {
        throw Error("scenario '" + path + "': " + e.what());
    }
    if (s.horizon < 1) throw Error("scenario horizon must be at least one step");
    if (s.horizon > s.profiles.horizon()) throw Error("scenario horizon exceeds the profile length");
    if (!(s.period_s > 0.0)) throw Error("control period must be positive");
    if (s.noise_sigma < 0.0) throw Error("noise sigma must be non-negative");
    return s;
}

GridModel Scenario::model() const {
    GridModel m(grid);
    if (!plant.dct_enabled) m = m.without_dcts();
    if (!plant.ic_losses) m = m.without_ic_losses();
    return m;
}

// ---------------------------------------------------------------------------

ScenarioTrace run(const Scenario& scenario) {
    if (scenario.horizon < 1 || !(scenario.period_s > 0.0)) throw Error("invalid scenario");
    auto model = std::make_shared<const GridModel>(scenario.model());
    const GridModel& m = *model;
    const int nu = m.unified_count();
    const DctFidelity fidelity = scenario.plant.dct_deadband ? DctFidelity::Plant : DctFidelity::Ideal;
    Controller controller(m, scenario.controller);
    std::mt19937_64 rng(scenario.seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    ScenarioTrace trace;
    trace.model = model;
    trace.name = scenario.name;
    trace.period_s = scenario.period_s;
    trace.warmup_steps = scenario.warmup_steps;
    if (!scenario.monitored_line.empty()) trace.monitored_branch = m.branch_index(scenario.monitored_line);

    std::vector<bool> predicted(nu);
    for (int u = 0; u < nu; ++u) predicted[u] = voltage_predicted(m, u);

    Setpoints setpoints = Setpoints::initial(m);
    const ControlDecision* last = nullptr;
    auto next_tick = std::chrono::steady_clock::now();
    trace.steps.reserve(scenario.horizon);
    for (int t = 0; t < scenario.horizon; ++t) {
        StepRecord rec;
        rec.step = t;
        rec.applied = setpoints;
        PfSpec spec = plant_spec(m, scenario.profiles, t, setpoints, fidelity);
        PfSolution sol;
        try {
            sol = solve_pf(m, spec, std::nullopt, {1e-10, 50});
        } catch (const Error& e) {
            throw SimulationError("plant power flow failed at step " + std::to_string(t) + ": " + e.what() +
                                      "\nspec:" + dump_spec(m, spec),
                                  t);
        }
        rec.plant = sol.state;
        rec.plant.timestep = t;
        rec.pf_iterations = sol.iterations;

        GridState measured = rec.plant;
        if (scenario.noise_sigma > 0.0) {
            for (int i = 0; i < m.ac_count(); ++i)
                measured.e_ac[i] *= 1.0 + scenario.noise_sigma * noise(rng) / std::abs(measured.e_ac[i]);
            for (int j = 0; j < m.dc_count(); ++j) measured.e_dc[j] += scenario.noise_sigma * noise(rng);
            update_injections(m, measured);
        }

        // Prediction error of the decision taken one step earlier, which is what the plant now runs.
        if (last && last->status != DecisionStatus::Hold && last->predicted_e.size() == nu) {
            Vector actual = voltage_values(m, rec.plant);
            rec.prediction_error = Vector::Zero(nu);
            double sum = 0.0;
            int count = 0;
            for (int u = 0; u < nu; ++u) {
                if (!predicted[u]) continue;
                double err = actual[u] - last->predicted_e[u];
                rec.prediction_error[u] = err;
                sum += err;
                rec.max_abs_error = std::max(rec.max_abs_error, std::abs(err));
                ++count;
            }
            rec.mean_error = count ? sum / count : 0.0;
            rec.has_prediction = true;
        }

        rec.currents = branch_values(m, rec.plant);
        const auto& dcts = m.dcts();
        rec.dct_primary.resize(static_cast<int>(dcts.size()));
        rec.dct_secondary.resize(static_cast<int>(dcts.size()));
        rec.dct_transfer.resize(static_cast<int>(dcts.size()));
        for (std::size_t d = 0; d < dcts.size(); ++d) {
            double e1 = rec.plant.e_dc[dcts[d].primary];
            double e2 = rec.plant.e_dc[dcts[d].secondary];
            DctPower pw = dct_power(dcts[d], e1, e2, fidelity);
            rec.dct_primary[static_cast<int>(d)] = pw.primary;
            rec.dct_secondary[static_cast<int>(d)] = pw.secondary;
            rec.dct_transfer[static_cast<int>(d)] = dct_transfer(dcts[d], e1 - e2, fidelity);
        }
        const auto& pvs = m.pv_units();
        rec.pv_output.resize(static_cast<int>(pvs.size()));
        rec.pv_available.resize(static_cast<int>(pvs.size()));
        for (std::size_t k = 0; k < pvs.size(); ++k) {
            rec.pv_output[static_cast<int>(k)] = pv_output(m, scenario.profiles, t, setpoints, static_cast<int>(k));
            rec.pv_available[static_cast<int>(k)] = pv_available(m, scenario.profiles, pvs[k].id, t);
        }
        for (int i = 0; i < m.ac_count(); ++i)
            if (m.ac_kind(i) == NodeKind::AcSlack) {
                rec.slack_p += rec.plant.p[i];
                rec.slack_q += rec.plant.q[i];
            }

        rec.decision = controller.control_step(measured, scenario.profiles, t, setpoints);
        setpoints = rec.decision.setpoints;
        trace.steps.push_back(std::move(rec));
        last = &trace.steps.back().decision;

        if (scenario.realtime) {
            next_tick += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(scenario.period_s));
            std::this_thread::sleep_until(next_tick);
        }
    }
    return trace;
}

// ---------------------------------------------------------------------------

Metrics metrics(const ScenarioTrace& trace) {
    if (!trace.model) throw Error("trace has no grid model");
    const GridModel& m = *trace.model;
    Metrics out;
    out.steps = static_cast<int>(trace.steps.size());
    const double kw = m.base().s_va / 1e3;

    double err_sum = 0.0;
    int err_n = 0;
    double q_sq = 0.0;
    int q_n = 0;
    std::vector<double> t_total, t_fetch, t_forecast, t_sens, t_build, t_solve, t_emit;

    const Branch* line = trace.monitored_branch >= 0 ? &m.branches()[trace.monitored_branch] : nullptr;
    double amp_base = line ? m.current_base(line->side) : 0.0;
    if (line) {
        out.line = line->id;
        out.line_limit_a = line->ampacity * amp_base;
    }

    for (const auto& rec : trace.steps) {
        const bool counted = rec.step >= trace.warmup_steps;
        out.pf_iterations_max = std::max(out.pf_iterations_max, rec.pf_iterations);
        switch (rec.decision.status) {
            case DecisionStatus::Optimal: ++out.optimal_steps; break;
            case DecisionStatus::Soft: ++out.soft_steps; break;
            case DecisionStatus::Hold: ++out.hold_steps; break;
        }
        for (std::size_t k = 0; k < m.pv_units().size(); ++k) {
            if (!counted || !m.pv_units()[k].curtailable) continue;
            double cut = std::max(0.0, rec.pv_available[static_cast<int>(k)] - rec.pv_output[static_cast<int>(k)]) * kw;
            out.curtailed_kwh += cut * trace.period_s / 3600.0;
            out.curtailment_max_kw = std::max(out.curtailment_max_kw, cut);
        }
        if (line) {
            double amps = std::abs(rec.currents[trace.monitored_branch]) * amp_base;
            if (amps >= 0.99 * out.line_limit_a) out.congestion_end_step = rec.step;
            if (counted) {
                out.line_max_a = std::max(out.line_max_a, amps);
                double over = amps - out.line_limit_a;
                if (over > 0.0) {
                    out.overshoot_max_a = std::max(out.overshoot_max_a, over);
                    ++out.overshoot_steps;
                    out.overshoot_integral_as += over * trace.period_s;
                }
            }
        }
        if (!counted) continue;

        for (std::size_t b = 0; b < m.branches().size(); ++b) {
            const auto& br = m.branches()[b];
            if ((std::abs(rec.currents[static_cast<int>(b)]) - br.ampacity) * m.current_base(br.side) > 1e-3) {
                ++out.branch_violation_steps;
                break;
            }
        }
        if (rec.has_prediction) {
            err_sum += rec.mean_error;
            ++err_n;
            double lo = 0.0;
            double hi = 0.0;
            for (int u = 0; u < rec.prediction_error.size(); ++u) {
                lo = std::min(lo, rec.prediction_error[u]);
                hi = std::max(hi, rec.prediction_error[u]);
            }
            out.error_min = std::min(out.error_min, lo);
            out.error_max = std::max(out.error_max, hi);
            out.error_max_abs = std::max(out.error_max_abs, rec.max_abs_error);
        }
        q_sq += rec.slack_q * rec.slack_q;
        ++q_n;
        out.slack_q_max_kvar = std::max(out.slack_q_max_kvar, std::abs(rec.slack_q) * kw);
        bool pos = false;
        bool neg = false;
        for (const auto& ic : m.ic_pairs()) {
            double q = rec.plant.q[ic.ac] * kw;
            pos |= q > 0.5;
            neg |= q < -0.5;
        }
        if (pos && neg) ++out.counteraction_steps;

        const auto& ts = rec.decision.times;
        t_total.push_back(ts.total);
        t_fetch.push_back(ts.fetch);
        t_forecast.push_back(ts.forecast);
        t_sens.push_back(ts.sensitivity);
        t_build.push_back(ts.build);
        t_solve.push_back(ts.solve);
        t_emit.push_back(ts.emit);
    }
    out.evaluated_steps = q_n;
    out.error_mean = err_n ? err_sum / err_n : 0.0;
    out.overshoot_duration_s = out.overshoot_steps * trace.period_s;
    out.slack_q_rms_kvar = q_n ? std::sqrt(q_sq / q_n) * kw : 0.0;
    double q_rating = 0.0;
    for (const auto& ic : m.ic_pairs()) q_rating += ic.q_max * kw;
    out.slack_q_rms_fraction = q_rating > 0.0 ? out.slack_q_rms_kvar / q_rating : 0.0;

    const int idle_from = out.congestion_end_step >= 0 ? out.congestion_end_step + 1 + kIdleSettleSteps
                                                       : trace.warmup_steps;
    for (std::size_t d = 0; d < m.dcts().size(); ++d) {
        const int i = static_cast<int>(d);
        DctIdleStats st;
        st.id = m.dcts()[d].id;
        double sp = 0.0;
        double ss = 0.0;
        st.primary_w_min = st.secondary_w_min = std::numeric_limits<double>::infinity();
        st.primary_w_max = st.secondary_w_max = -std::numeric_limits<double>::infinity();
        for (const auto& rec : trace.steps) {
            st.max_transfer_kw = std::max(st.max_transfer_kw, std::abs(rec.dct_transfer[i]) * kw);
            if (rec.step < idle_from) continue;
            double p1 = rec.dct_primary[i] * m.base().s_va;
            double p2 = rec.dct_secondary[i] * m.base().s_va;
            sp += p1;
            ss += p2;
            st.primary_w_min = std::min(st.primary_w_min, p1);
            st.primary_w_max = std::max(st.primary_w_max, p1);
            st.secondary_w_min = std::min(st.secondary_w_min, p2);
            st.secondary_w_max = std::max(st.secondary_w_max, p2);
            ++st.idle_steps;
        }
        if (st.idle_steps) {
            st.primary_w = sp / st.idle_steps;
            st.secondary_w = ss / st.idle_steps;
        } else {
            st.primary_w_min = st.secondary_w_min = st.primary_w_max = st.secondary_w_max = 0.0;
        }
        out.dct.push_back(st);
    }

    out.total = timing_stats(t_total);
    out.fetch = timing_stats(t_fetch);
    out.forecast = timing_stats(t_forecast);
    out.sensitivity = timing_stats(t_sens);
    out.build = timing_stats(t_build);
    out.solve = timing_stats(t_solve);
    out.emit = timing_stats(t_emit);
    std::sort(t_total.begin(), t_total.end());
    for (int p = 5; p <= 100 && !t_total.empty(); p += 5) {
        std::size_t rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(t_total.size())));
        out.total_cdf.emplace_back(t_total[std::clamp<std::size_t>(rank, 1, t_total.size()) - 1] * 1e3, p / 100.0);
    }
    return out;
}

std::string metrics_json(const Metrics& m) {
    auto ms = [](const TimingStats& t) {
        return json{{"p50", t.p50 * 1e3}, {"p90", t.p90 * 1e3}, {"p99", t.p99 * 1e3}, {"p100", t.p100 * 1e3}};
    };
    json dct = json::array();
    for (const auto& d : m.dct)
        dct.push_back({{"id", d.id},
                       {"max_transfer_kW", d.max_transfer_kw},
                       {"idle_steps", d.idle_steps},
                       {"idle_primary_W", d.primary_w},
                       {"idle_secondary_W", d.secondary_w},
                       {"idle_primary_W_range", {d.primary_w_min, d.primary_w_max}},
                       {"idle_secondary_W_range", {d.secondary_w_min, d.secondary_w_max}}});
    json cdf = json::array();
    for (const auto& [v, f] : m.total_cdf) cdf.push_back({{"ms", v}, {"fraction", f}});
    json j = {
        {"steps", m.steps},
        {"evaluated_steps", m.evaluated_steps},
        {"prediction_error", {{"mean", m.error_mean}, {"min", m.error_min}, {"max", m.error_max},
                              {"max_abs", m.error_max_abs}}},
        {"ampacity", {{"line", m.line},
                      {"limit_A", m.line_limit_a},
                      {"max_A", m.line_max_a},
                      {"overshoot_max_A", m.overshoot_max_a},
                      {"overshoot_steps", m.overshoot_steps},
                      {"overshoot_duration_s", m.overshoot_duration_s},
                      {"overshoot_integral_As", m.overshoot_integral_as},
                      {"congestion_end_step", m.congestion_end_step},
                      {"branch_violation_steps", m.branch_violation_steps}}},
        {"curtailment", {{"energy_kWh", m.curtailed_kwh}, {"max_kW", m.curtailment_max_kw}}},
        {"slack_q", {{"rms_kvar", m.slack_q_rms_kvar}, {"max_abs_kvar", m.slack_q_max_kvar},
                     {"rms_fraction_of_ic_rating", m.slack_q_rms_fraction}}},
        {"counteraction_steps", m.counteraction_steps},
        {"dct", dct},
        {"power_flow", {{"max_iterations", m.pf_iterations_max}}},
        {"decisions", {{"optimal", m.optimal_steps}, {"soft", m.soft_steps}, {"hold", m.hold_steps}}},
        {"timing_ms", {{"total", ms(m.total)},
                       {"fetch", ms(m.fetch)},
                       {"forecast", ms(m.forecast)},
                       {"sensitivity", ms(m.sensitivity)},
                       {"build", ms(m.build)},
                       {"solve", ms(m.solve)},
                       {"emit", ms(m.emit)},
                       {"total_cdf", cdf}}},
    };
    return j.dump(2);
}

std::string trace_csv(const ScenarioTrace& trace) {
    if (!trace.model) throw Error("trace has no grid model");
    const GridModel& m = *trace.model;
    const double kw = m.base().s_va / 1e3;
    std::ostringstream out;
    out << std::setprecision(17);
    out << "step,element,quantity,value\n";
    auto row = [&](int step, const std::string& element, const char* quantity, double value) {
        out << step << ',' << element << ',' << quantity << ',' << value << '\n';
    };
    for (const auto& rec : trace.steps) {
        const int t = rec.step;
        Vector mag = voltage_values(m, rec.plant);
        for (int u = 0; u < m.unified_count(); ++u) {
            row(t, m.node(u).id, "E_pu", mag[u]);
            if (rec.has_prediction) row(t, m.node(u).id, "E_err_pu", rec.prediction_error[u]);
        }
        for (std::size_t b = 0; b < m.branches().size(); ++b) {
            const auto& br = m.branches()[b];
            row(t, br.id, "I_A", rec.currents[static_cast<int>(b)] * m.current_base(br.side));
            if (rec.decision.predicted_i.size() == static_cast<int>(m.branches().size()))
                row(t, br.id, "I_next_pred_A", rec.decision.predicted_i[static_cast<int>(b)] * m.current_base(br.side));
        }
        row(t, "slack", "P_kW", rec.slack_p * kw);
        row(t, "slack", "Q_kvar", rec.slack_q * kw);
        for (std::size_t c = 0; c < m.ic_pairs().size(); ++c) {
            const auto& ic = m.ic_pairs()[c];
            row(t, ic.id, "P_ac_kW", rec.plant.p[ic.ac] * kw);
            row(t, ic.id, "Q_kvar", rec.plant.q[ic.ac] * kw);
            row(t, ic.id, "E_dc_pu", rec.plant.e_dc[ic.dc]);
            row(t, ic.id, "E_set_pu", rec.decision.setpoints.ic_e[static_cast<int>(c)]);
            row(t, ic.id, "Q_set_kvar", rec.decision.setpoints.ic_q[static_cast<int>(c)] * kw);
        }
        for (std::size_t k = 0; k < m.pv_units().size(); ++k) {
            const auto& pv = m.pv_units()[k];
            row(t, pv.id, "P_kW", rec.pv_output[static_cast<int>(k)] * kw);
            row(t, pv.id, "P_mpp_kW", rec.pv_available[static_cast<int>(k)] * kw);
            if (pv.curtailable) row(t, pv.id, "P_set_kW", rec.decision.setpoints.pv[static_cast<int>(k)] * kw);
        }
        for (std::size_t d = 0; d < m.dcts().size(); ++d) {
            const auto& dct = m.dcts()[d];
            row(t, dct.id, "P_primary_W", rec.dct_primary[static_cast<int>(d)] * m.base().s_va);
            row(t, dct.id, "P_secondary_W", rec.dct_secondary[static_cast<int>(d)] * m.base().s_va);
            row(t, dct.id, "transfer_kW", rec.dct_transfer[static_cast<int>(d)] * kw);
        }
        row(t, "controller", "status", static_cast<double>(rec.decision.status));
        row(t, "controller", "objective", rec.decision.objective);
        row(t, "controller", "active_constraints", static_cast<double>(rec.decision.active_constraints.size()));
        row(t, "plant", "pf_iterations", rec.pf_iterations);
    }
    return out.str();
}

// ---------------------------------------------------------------------------

ResourceProfile generate_profiles(std::uint64_t seed, std::string_view template_json) {
    json j;
    try {
        j = json::parse(template_json);
    } catch (const json::exception& e) {
        throw Error(std::string("profile template: ") + e.what());
    }
    const int horizon = j.at("horizon").get<int>();
    const double period = j.value("period_s", 2.0);
    if (horizon < 1) throw Error("profile template: horizon must be at least one step");
    ResourceProfile profile(horizon);
    int index = 0;
    for (const auto& r : j.at("resources")) {
        const std::string id = r.at("id").get<std::string>();
        const std::string kind = r.at("kind").get<std::string>();
        // one stream per resource, so adding a resource leaves the others unchanged
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(index++)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> nd(0.0, 1.0);
        const double rho = r.value("correlation", 0.95);
        const double innovation = std::sqrt(1.0 - rho * rho);
        double state = 0.0;
        auto ar1 = [&]() {
            state = rho * state + innovation * nd(rng);
            return state;
        };
        if (kind == "pv") {
            const double start = r.at("start_kW").get<double>();
            const double end = r.at("end_kW").get<double>();
            const double gamma = r.value("gamma", 1.0);
            const double ripple = r.value("ripple_kW", 0.0);
            if (!(gamma > 0.0)) throw Error("profile template: gamma must be positive for '" + id + "'");
            for (int t = 0; t < horizon; ++t) {
                const double x = horizon > 1 ? static_cast<double>(t) / (horizon - 1) : 0.0;
                double mpp = start + (end - start) * std::pow(x, gamma);
                // the ripple vanishes at both ends so the endpoints are exact
                double n = ar1();
                mpp += ripple * n * std::sin(std::numbers::pi * x);
                mpp = std::max(0.0, mpp);
                profile.set(id, t, {mpp, 0.0, mpp});
            }
        } else if (kind == "load") {
            const double base = r.value("p_kW", 0.0);
            const double swing = r.value("swing_kW", 0.0);
            const double swing_period = r.value("swing_period_s", 1800.0);
            const double phase = r.value("phase", 0.0);
            const double noise = r.value("noise_kW", 0.0);
            const double pf = r.value("power_factor", 1.0);
            if (!(pf > 0.0 && pf <= 1.0)) throw Error("profile template: power factor out of (0, 1] for '" + id + "'");
            const double tan_phi = std::sqrt(1.0 - pf * pf) / pf;
            for (int t = 0; t < horizon; ++t) {
                double p = base + swing * std::sin(2.0 * std::numbers::pi * t * period / swing_period + phase) +
                           noise * ar1();
                // consumption is drawn from the grid: negative injection
                profile.set(id, t, {0.0 - p, 0.0 - p * tan_phi, 0.0 - p});
            }
        } else {
            throw Error("profile template: unknown kind '" + kind + "' for '" + id + "'");
        }
    }
    return profile;
}

ResourceProfile generate_profiles(std::uint64_t seed, std::string_view template_json, const GridModel& model) {
    ResourceProfile p = generate_profiles(seed, template_json);
    for (const auto& id : p.ids()) {
        bool known = std::any_of(model.pv_units().begin(), model.pv_units().end(),
                                 [&](const PvUnit& u) { return u.id == id; }) ||
                     std::any_of(model.resources().begin(), model.resources().end(),
                                 [&](const ResourceUnit& u) { return u.id == id; });
        if (!known) throw Error("profile template names unknown resource '" + id + "'");
    }
    return p;
}

}  // namespace acdc
