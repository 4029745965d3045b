#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "acdc/controller.hpp"
#include "acdc/io.hpp"
#include "acdc/power_flow.hpp"
#include "acdc/sensitivity.hpp"
#include "acdc/simulator.hpp"

using namespace acdc;

namespace {

// "P:B05,E:B20" -> variables; "all" -> every setpoint of the grid
std::vector<ControlVariable> parse_vars(const GridModel& model, const std::string& text) {
    if (text == "all") return all_control_variables(model);
    std::vector<ControlVariable> vars;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos || colon != 1) throw Error("variable '" + item + "' is not of the form P:<node>");
        ControlVariable v;
        switch (item[0]) {
            case 'P': v.quantity = Quantity::P; break;
            case 'Q': v.quantity = Quantity::Q; break;
            case 'E': v.quantity = Quantity::E; break;
            default: throw Error("unknown quantity in '" + item + "'");
        }
        v.node = model.unified_of(item.substr(2));
        validate_variable(model, v);
        vars.push_back(v);
    }
    return vars;
}

int cmd_pf(const std::string& grid, const std::string& spec_path, const std::string& out, double tol) {
    GridModel model = load_grid(grid);
    PfSpec spec = parse_spec(model, read_text(spec_path));
    PfSolution sol = solve_pf(model, spec, std::nullopt, {tol, 50});
    std::cerr << "converged in " << sol.iterations << " iterations, max mismatch " << sol.max_mismatch << "\n";
    std::string text = format_state(model, sol.state);
    if (out.empty()) std::cout << text;
    else write_text(out, text);
    return 0;
}

int cmd_sc(const std::string& grid, const std::string& state_path, const std::string& vars_text,
           const std::string& out) {
    GridModel model = load_grid(grid);
    GridState state = load_state(model, state_path);
    auto vars = parse_vars(model, vars_text);
    SensitivityBundle b = compute_bundle(model, state, vars);
    const int nu = model.unified_count();
    const int nb = static_cast<int>(model.branches().size());
    Matrix k(nu + nb + 2, static_cast<int>(vars.size()));
    k.topRows(nu) = b.voltage.mag;
    k.middleRows(nu, nb) = b.current.k;
    k.row(nu + nb) = b.loss.p;
    k.row(nu + nb + 1) = b.loss.q;
    std::vector<std::string> rows;
    for (int u = 0; u < nu; ++u) rows.push_back("E_" + model.node(u).id);
    for (const auto& br : model.branches()) rows.push_back("I_" + br.id);
    rows.push_back("P_loss");
    rows.push_back("Q_loss");
    std::vector<std::string> cols;
    for (const auto& v : vars) cols.push_back(label(model, v));
    std::string text = format_matrix(k, rows, cols);
    if (out.empty()) std::cout << text;
    else write_text(out, text);
    return 0;
}

int cmd_opf(const std::string& grid, const std::string& state_path, const std::string& profiles, int t,
            const std::string& config, const std::string& out) {
    GridModel model = load_grid(grid);
    GridState state = load_state(model, state_path);
    ResourceProfile prof = load_profiles(profiles);
    ControllerConfig cfg = config.empty() ? ControllerConfig{} : ControllerConfig::load(config);
    Controller controller(model, cfg);
    ControlDecision d = controller.control_step(state, prof, t, Setpoints::initial(model));
    std::string text = decision_json(model, d);
    if (out.empty()) std::cout << text << "\n";
    else write_text(out, text);
    if (d.status == DecisionStatus::Hold) {
        std::cerr << "controller held its setpoints: " << d.message << "\n";
        return 2;
    }
    return 0;
}

int cmd_sim(const std::string& scenario_path, std::optional<std::uint64_t> seed, bool realtime,
            const std::string& out, const std::string& metrics_out) {
    Scenario sc = Scenario::load(scenario_path, seed);
    if (realtime) sc.realtime = true;
    ScenarioTrace trace = run(sc);
    Metrics m = metrics(trace);
    if (!out.empty()) write_text(out, trace_csv(trace));
    std::string mj = metrics_json(m);
    if (metrics_out.empty()) std::cout << mj << "\n";
    else write_text(metrics_out, mj + "\n");
    return 0;
}

int cmd_gen(const std::string& template_path, std::uint64_t seed, const std::string& grid, const std::string& out) {
    std::string text = read_text(template_path);
    ResourceProfile p = grid.empty() ? generate_profiles(seed, text) : generate_profiles(seed, text, load_grid(grid));
    std::string csv = format_profiles(p);
    if (out.empty()) std::cout << csv;
    else write_text(out, csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid AC/DC microgrid power flow, sensitivities and real-time control"};
    app.require_subcommand(1);

    std::string grid, spec, state, out, vars = "all", profiles, config, scenario, metrics_out, tmpl;
    double tol = 1e-10;
    int t = 0;
    std::optional<std::uint64_t> seed;
    std::uint64_t gen_seed = 1;
    bool realtime = false;

    auto* pf = app.add_subcommand("pf", "Solve the unified power flow");
    pf->add_option("--grid", grid, "Grid JSON")->required()->check(CLI::ExistingFile);
    pf->add_option("--spec", spec, "Power-flow spec JSON")->required()->check(CLI::ExistingFile);
    pf->add_option("--out", out, "State CSV (stdout if omitted)");
    pf->add_option("--tol", tol, "Mismatch tolerance (p.u.)");

    auto* sc = app.add_subcommand("sc", "Sensitivity coefficients at a state");
    sc->add_option("--grid", grid, "Grid JSON")->required()->check(CLI::ExistingFile);
    sc->add_option("--state", state, "State CSV")->required()->check(CLI::ExistingFile);
    sc->add_option("--vars", vars, "'all' or a list like P:B05,Q:B16,E:B20");
    sc->add_option("--out", out, "Matrix CSV (stdout if omitted)");

    auto* opf = app.add_subcommand("opf", "One control step at a given state");
    opf->add_option("--grid", grid, "Grid JSON")->required()->check(CLI::ExistingFile);
    opf->add_option("--state", state, "State CSV")->required()->check(CLI::ExistingFile);
    opf->add_option("--profiles", profiles, "Profile CSV")->required()->check(CLI::ExistingFile);
    opf->add_option("--t", t, "Profile step")->required()->check(CLI::NonNegativeNumber);
    opf->add_option("--config", config, "Controller config JSON")->check(CLI::ExistingFile);
    opf->add_option("--out", out, "Decision JSON (stdout if omitted)");

    auto* sim = app.add_subcommand("sim", "Closed-loop replay of a scenario");
    sim->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    sim->add_option("--seed", seed, "Override the scenario seed");
    sim->add_flag("--realtime", realtime, "Pace the loop at the control period");
    sim->add_option("--out", out, "Trace CSV");
    sim->add_option("--metrics", metrics_out, "Metrics JSON (stdout if omitted)");

    auto* gen = app.add_subcommand("gen-profiles", "Synthetic profiles from a template");
    gen->add_option("--template", tmpl, "Profile template JSON")->required()->check(CLI::ExistingFile);
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--grid", grid, "Grid JSON to check resource ids against")->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Profile CSV (stdout if omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pf) return cmd_pf(grid, spec, out, tol);
        if (*sc) return cmd_sc(grid, state, vars, out);
        if (*opf) return cmd_opf(grid, state, profiles, t, config, out);
        if (*sim) return cmd_sim(scenario, seed, realtime, out, metrics_out);
        if (*gen) return cmd_gen(tmpl, gen_seed, grid, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
