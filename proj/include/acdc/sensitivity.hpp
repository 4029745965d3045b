#pragma once

#include <string>
#include <vector>

#include "acdc/grid_model.hpp"
#include "acdc/power_flow.hpp"

namespace acdc {

enum class Quantity { P, Q, E };

/// A setpoint the sensitivities are taken with respect to.
/// P: AC PQ/PV, IC-AC in PacQac mode, DcP.  Q: AC PQ, IC-AC.  E: AC PV, DcV, IC-DC in EdcQac mode.
struct ControlVariable {
    Quantity quantity = Quantity::P;
    int node = 0;  // unified index
    bool operator==(const ControlVariable&) const = default;
};

std::string label(const GridModel& model, const ControlVariable& var);
/// Throws GridError when the quantity is not a known setpoint of the node.
void validate_variable(const GridModel& model, const ControlVariable& var);
/// Every setpoint of the grid in unified node order, P before Q before E at each node.
std::vector<ControlVariable> all_control_variables(const GridModel& model);

/// Sensitivity matrix A at a state (ideal DCT model). Throws SingularMatrixError on a degenerate point.
Matrix assemble_A(const GridModel& model, const GridState& state);

/// Right-hand side u = -d(residual)/d(setpoint) for one variable at a state.
Vector rhs_u(const GridModel& model, const GridState& state, const ControlVariable& var);

struct VoltageSc {
    Matrix mag;    // unified x vars: d|E| for AC rows, dE for DC rows
    Matrix angle;  // AC x vars
};

/// One LU factorization of A, one back-substitution per variable.
VoltageSc voltage_sc(const GridModel& model, const GridState& state, const std::vector<ControlVariable>& vars);

struct CurrentSc {
    Matrix k;                  // branches x vars: d|I| for AC, signed dI for DC
    Vector value;              // |I| (AC) or signed I (DC) at the state
    std::vector<bool> guarded; // AC branches below the zero-current guard
    CMatrix phasor;            // branches x vars: dI of the from-end phasor (AC rows; zero for DC)
    CVector phasor_value;      // from-end phasor at the state (AC rows)
};
CurrentSc current_sc(const GridModel& model, const GridState& state, const VoltageSc& v);

struct PowerSc {
    Matrix p_ac;  // N x vars, network injections
    Matrix q_ac;  // N x vars
    Matrix p_dc;  // M x vars
};
PowerSc power_sc(const GridModel& model, const GridState& state, const VoltageSc& v);

struct LossSc {
    RowVector p;
    RowVector q;
};
/// Series-loss sensitivities of both networks (P) and of the AC network (Q).
LossSc loss_sc(const GridModel& model, const GridState& state, const VoltageSc& v);

struct Prediction {
    Vector e;  // unified: |E| AC, E DC
    Vector i;  // per branch, like CurrentSc::value
    double p_loss = 0.0;
    double q_loss = 0.0;
};

struct SensitivityBundle {
    GridState anchor;
    std::vector<ControlVariable> vars;
    VoltageSc voltage;
    CurrentSc current;
    PowerSc power;
    LossSc loss;
    Prediction at_anchor;
    double rcond = 0.0;

    int column_of(const ControlVariable& var) const;  // -1 if absent

    /// K-matrices with node-indexed columns (unified count). Columns of absent variables are zero,
    /// in particular every DC column of the Q matrices.
    Matrix k_e(Quantity q) const;
    Matrix k_i(Quantity q) const;
    RowVector k_ploss(Quantity q) const;
    RowVector k_qloss(Quantity q) const;
};

SensitivityBundle compute_bundle(const GridModel& model, const GridState& state,
                                 const std::vector<ControlVariable>& vars);
SensitivityBundle compute_bundle(const GridModel& model, const GridState& state);

/// First-order prediction around the anchor: anchor + K * delta, per bundle column.
Prediction predict(const SensitivityBundle& bundle, const Vector& delta);
/// Same with node-indexed deltas. Nonzero entries must correspond to bundle variables.
Prediction predict(const SensitivityBundle& bundle, const Vector& d_p, const Vector& d_q, const Vector& d_e);

/// Current values (|I| for AC, signed for DC) of every branch.
Vector branch_values(const GridModel& model, const GridState& state);
/// Voltage magnitudes in unified order.
Vector voltage_values(const GridModel& model, const GridState& state);

}  // namespace acdc
