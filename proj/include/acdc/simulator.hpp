#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "acdc/controller.hpp"
#include "acdc/devices.hpp"
#include "acdc/grid_model.hpp"

namespace acdc {

struct PlantFlags {
    bool dct_deadband = true;  // plant DCT curve; false gives the ideal linear transfer
    bool ic_losses = true;     // IC conversion and filter losses, in plant and controller alike
    bool dct_enabled = true;   // false removes the DCTs from the grid
};

struct Scenario {
    std::string name;
    GridData grid;
    ResourceProfile profiles;
    int horizon = 0;
    double period_s = 2.0;
    PlantFlags plant;
    double noise_sigma = 0.0;  // p.u., Gaussian noise on measured voltage magnitudes
    std::uint64_t seed = 1;
    int warmup_steps = 0;  // excluded from the metrics
    std::string monitored_line = "B10-B11";
    std::string start_time = "00:00:00";
    ControllerConfig controller;
    bool realtime = false;  // pace the loop at period_s

    /// Reads a scenario file. Relative paths inside it resolve against its directory. Profiles come
    /// either from a CSV (`profiles`) or from a generator template (`profile_template`) and the seed.
    static Scenario load(const std::string& path, std::optional<std::uint64_t> seed = std::nullopt);

    /// The grid as simulated: DCTs and IC losses removed according to the plant flags.
    GridModel model() const;
};

struct StepRecord {
    int step = 0;
    GridState plant;
    int pf_iterations = 0;
    Setpoints applied;
    ControlDecision decision;
    bool has_prediction = false;
    Vector prediction_error;  // unified: actual - predicted magnitude; zero at fixed-voltage nodes
    double mean_error = 0.0;  // over the predicted nodes
    double max_abs_error = 0.0;
    Vector currents;          // per branch, like branch_values (p.u.)
    Vector dct_primary;       // per DCT, power injected at each port (p.u.)
    Vector dct_secondary;
    Vector dct_transfer;
    Vector pv_output;         // per PV unit (p.u.)
    Vector pv_available;
    double slack_p = 0.0;
    double slack_q = 0.0;
};

struct ScenarioTrace {
    std::shared_ptr<const GridModel> model;
    std::string name;
    double period_s = 2.0;
    int warmup_steps = 0;
    int monitored_branch = -1;
    std::vector<StepRecord> steps;
};

class SimulationError : public Error {
public:
    SimulationError(const std::string& what, int step) : Error(what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

ScenarioTrace run(const Scenario& scenario);

struct TimingStats {
    double p50 = 0.0;
    double p90 = 0.0;
    double p99 = 0.0;
    double p100 = 0.0;
};

struct DctIdleStats {
    std::string id;
    double max_transfer_kw = 0.0;
    int idle_steps = 0;
    double primary_w = 0.0;   // mean over the idle window
    double secondary_w = 0.0;
    double primary_w_min = 0.0;
    double primary_w_max = 0.0;
    double secondary_w_min = 0.0;
    double secondary_w_max = 0.0;
};

struct Metrics {
    int steps = 0;
    int evaluated_steps = 0;
    // voltage prediction error of the previous decision, p.u.
    double error_mean = 0.0;
    double error_min = 0.0;
    double error_max = 0.0;
    double error_max_abs = 0.0;
    // monitored line
    std::string line;
    double line_limit_a = 0.0;
    double line_max_a = 0.0;
    double overshoot_max_a = 0.0;
    int overshoot_steps = 0;
    double overshoot_duration_s = 0.0;
    double overshoot_integral_as = 0.0;
    int congestion_end_step = -1;  // last step with the line at or above 99 % of its limit
    int branch_violation_steps = 0; // any branch above its ampacity by more than 1e-3 A
    double curtailed_kwh = 0.0;
    double curtailment_max_kw = 0.0;
    double slack_q_rms_kvar = 0.0;
    double slack_q_max_kvar = 0.0;
    double slack_q_rms_fraction = 0.0;  // of the aggregate IC reactive rating
    int counteraction_steps = 0;        // two ICs with opposite Q above 0.5 kvar
    std::vector<DctIdleStats> dct;
    int pf_iterations_max = 0;
    int optimal_steps = 0;
    int soft_steps = 0;
    int hold_steps = 0;
    TimingStats total;
    TimingStats fetch, forecast, sensitivity, build, solve, emit;
    std::vector<std::pair<double, double>> total_cdf;  // (ms, fraction)
};

/// Steps after the congestion window given to the DCT to settle before its idle draw is read.
inline constexpr int kIdleSettleSteps = 30;

Metrics metrics(const ScenarioTrace& trace);
std::string metrics_json(const Metrics& m);
/// Long-format CSV: step,element,quantity,value. Carries no timings, so equal runs give equal bytes.
std::string trace_csv(const ScenarioTrace& trace);

/// Deterministic synthetic profiles from a JSON template.
ResourceProfile generate_profiles(std::uint64_t seed, std::string_view template_json);
ResourceProfile generate_profiles(std::uint64_t seed, std::string_view template_json, const GridModel& model);

}  // namespace acdc
