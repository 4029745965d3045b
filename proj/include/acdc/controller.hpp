#pragma once

#include <string>
#include <vector>

#include "acdc/devices.hpp"
#include "acdc/grid_model.hpp"
#include "acdc/power_flow.hpp"
#include "acdc/qp.hpp"
#include "acdc/sensitivity.hpp"

namespace acdc {

/// Objective weights, rate limits and solver settings. Quantities are per-unit.
struct ControllerConfig {
    double w_slack_q = 1.0;  // slack reactive power squared
    double w_curtail = 1.0;  // squared distance of curtailable PV to its MPP
    // Linear shortfall below the MPP. The squared term alone has zero slope at the MPP, so any binding
    // constraint buys a little curtailment; this makes curtailment a last resort.
    double w_curtail_linear = 0.0;
    double w_loss = 1.0;     // network losses squared
    // Move suppression around the previous setpoints; keeps the Hessian positive definite.
    double w_move_p = 0.01;
    double w_move_q = 0.01;
    double w_move_e = 1.0;
    double w_e_ref = 0.1;  // pull of IC DC voltages towards their nominal value
    double e_rate = 0.02;  // max change of an IC DC voltage per step
    double q_rate = 0.01;  // max change of an IC reactive setpoint per step
    double soft_penalty = 1e4;
    double soft_quadratic = 1e-6;
    int qp_max_iterations = 1000;

    static ControllerConfig from_json(std::string_view text);
    static ControllerConfig load(const std::string& path);
    std::string to_json() const;
};

/// Setpoints of the controllable resources, per-unit.
struct Setpoints {
    Vector pv;    // per PV unit; only curtailable units read it (upper bound on their output)
    Vector ic_q;  // per IC
    Vector ic_e;  // per IC, read in EdcQac mode
    Vector ic_p;  // per IC, read in PacQac mode
    static Setpoints initial(const GridModel& model);
    bool operator==(const Setpoints& o) const;
};

/// Active power a PV unit delivers at step t under a setpoint (capped by its MPP).
double pv_output(const GridModel& model, const ResourceProfile& profile, int t, const Setpoints& sp, int pv);

/// Power-flow spec of the plant at step t: profile injections plus setpoints.
PfSpec plant_spec(const GridModel& model, const ResourceProfile& profile, int t, const Setpoints& sp,
                  DctFidelity fidelity);

/// What the controller knows about the next step: perfect forecasts from the profiles.
struct Forecast {
    int t_now = 0;
    int t_next = 0;
    Injections now;
    Injections next;
    Vector pv_now;   // per PV unit, available MPP at t_now (p.u.)
    Vector pv_next;  // at t_next
    static Forecast from_profiles(const GridModel& model, const ResourceProfile& profile, int t);
};

enum class DecisionKind { Pv, IcQ, IcE, IcP };

struct DecisionVariable {
    DecisionKind kind;
    int index;   // PV unit or IC index
    int column;  // bundle column, -1 if the setpoint has no sensitivity column
    std::string name;
};

/// Linear prediction y = c + M z of a quantity in the decision variables z.
struct AffineMap {
    Vector c;
    Matrix m;
    Vector at(const Vector& z) const { return c + m * z; }
};

struct ControlProblem {
    std::vector<DecisionVariable> vars;
    Vector z_prev;
    QpProblem qp;
    double objective_constant = 0.0;
    std::vector<std::string> row_names;  // inequality rows
    std::vector<bool> soft_row;          // network rows that may be relaxed in the fallback
    AffineMap voltage;                   // unified nodes
    AffineMap current;                   // branches
    AffineMap q_slack;                   // slack nodes
    AffineMap p_ic;                      // IC AC-side active power
    AffineMap dct_transfer;              // per DCT, primary to secondary
    AffineMap losses;                    // [P, Q]
};

ControlProblem build_problem(const GridModel& model, const SensitivityBundle& bundle, const Forecast& forecast,
                             const Setpoints& previous, const ControllerConfig& config);

enum class DecisionStatus { Optimal, Soft, Hold };
std::string_view to_string(DecisionStatus s);

struct StageTimes {
    double fetch = 0.0;
    double forecast = 0.0;
    double sensitivity = 0.0;
    double build = 0.0;
    double solve = 0.0;
    double emit = 0.0;
    double total = 0.0;
};

struct ControlDecision {
    Setpoints setpoints;
    DecisionStatus status = DecisionStatus::Optimal;
    QpStatus qp_status = QpStatus::Optimal;
    double objective = 0.0;
    Vector predicted_e;
    Vector predicted_i;
    Vector predicted_q_slack;
    Vector predicted_dct;
    double predicted_p_loss = 0.0;
    std::vector<std::string> active_constraints;
    KktResiduals kkt;
    StageTimes times;
    std::string message;
};

/// Solves the hard problem; on infeasibility relaxes the network rows with an L1 penalty.
ControlDecision solve_control(const ControlProblem& problem, const GridModel& model, const Setpoints& previous,
                              const Forecast& forecast, const ControllerConfig& config);

class Controller {
public:
    Controller(const GridModel& model, ControllerConfig config);

    /// One real-time step: state, forecast, sensitivities, QP, setpoints. Never throws; a failed step
    /// returns the previous setpoints with status Hold.
    ControlDecision control_step(const GridState& measured, const ResourceProfile& profile, int t,
                                 const Setpoints& previous) const;

    const ControllerConfig& config() const { return config_; }

private:
    const GridModel& model_;
    ControllerConfig config_;
};

}  // namespace acdc
