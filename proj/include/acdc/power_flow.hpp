#pragma once

#include <optional>
#include <string>
#include <vector>

#include "acdc/devices.hpp"
#include "acdc/grid_model.hpp"

namespace acdc {

/// Setpoints of one interfacing converter. Which fields are read depends on the mode:
/// PacQac reads p and q, EdcQac reads q and e_dc.
struct IcSetpoint {
    double p = 0.0;
    double q = 0.0;
    double e_dc = 1.0;
};

/// Known quantities per node, following the node taxonomy:
/// PQ (P, Q), PV (P, |E|), slack (|E|, angle), DcP (P), DcV (E), ICs through `ic`.
struct PfSpec {
    Vector p;      // unified; read at PQ, PV and DcP nodes
    Vector q;      // unified; read at PQ nodes
    Vector v;      // unified; read at slack, PV and DcV nodes
    Vector angle;  // AC; read at the slack
    std::vector<IcSetpoint> ic;
    DctFidelity dct_fidelity = DctFidelity::Ideal;

    /// Zero injections, node voltage setpoints from the grid file, IC DC voltages at nominal.
    static PfSpec nominal(const GridModel& model);
    /// Throws GridError on dimension mismatch, non-positive voltages or over-specification.
    void validate(const GridModel& model) const;
};

struct PfOptions {
    double tolerance = 1e-8;
    int max_iterations = 50;
};

struct PfSolution {
    GridState state;
    int iterations = 0;
    double max_mismatch = 0.0;
    bool converged = false;
};

class PowerFlowError : public Error {
public:
    PowerFlowError(const std::string& what, int iteration, int row)
        : Error(what), iteration_(iteration), row_(row) {}
    int iteration() const { return iteration_; }
    /// Equation row implicated in a singular Jacobian, -1 for plain non-convergence.
    int row() const { return row_; }

private:
    int iteration_;
    int row_;
};

/// Layout shared by the residual, the Newton Jacobian and the sensitivity matrix.
/// Unknowns: [|E| of AC nodes | angle of AC nodes | E of DC nodes].
/// Rows: AC node i owns rows i and N+i, DC node j owns row 2N+j.
///   slack:   |E| - |E|*,            angle - angle*
///   PQ:      P - P*,                Q - Q*
///   PV:      P - P*,                |E| - |E|*
///   IC-AC:   EdcQac converter balance, or P - P* (PacQac);  Q - Q*
///   DcP:     P - P* - P_dct
///   DcV:     E - E*
///   IC-DC:   E - E* (EdcQac), or converter balance (PacQac)
/// Converter balance: P_ac,l + P_dc,k + P_loss + P_filter = 0 with injections into each grid.
struct EquationLayout {
    int ac = 0;
    int dc = 0;
    int size() const { return 2 * ac + dc; }
    int mag(int i) const { return i; }
    int ang(int i) const { return ac + i; }
    int dcv(int j) const { return 2 * ac + j; }
};

EquationLayout layout_of(const GridModel& model);
std::string describe_row(const GridModel& model, int row);

/// Undifferentiated residual of the unified power-flow equations at a state.
Vector mismatch(const GridModel& model, const PfSpec& spec, const GridState& state);

/// Newton Jacobian d(mismatch)/d[|E|, angle, E_dc] with the spec's DCT fidelity.
Matrix pf_jacobian(const GridModel& model, const PfSpec& spec, const GridState& state);

PfSolution solve_pf(const GridModel& model, const PfSpec& spec, const std::optional<GridState>& init = std::nullopt,
                    const PfOptions& options = {});

/// Conversion loss of one IC and its partial derivatives.
struct IcLoss {
    double value = 0.0;
    double d_p = 0.0;
    double d_q = 0.0;
    double d_mag = 0.0;
};
IcLoss ic_loss(const IcPair& ic, double p_ac, double q_ac, double e_mag);

/// Net DCT injection at every DC node (p.u.).
Vector dct_injections(const GridModel& model, const Vector& e_dc, DctFidelity fidelity);

/// Nodal network powers and their partials w.r.t. |E| and angle (AC, N x N) and E (DC, M x M).
struct NetworkPartials {
    Vector p_ac, q_ac, p_dc;
    Matrix dp_dm, dp_da, dq_dm, dq_da;
    Matrix dpdc_de;
};
NetworkPartials network_partials(const GridModel& model, const GridState& state, bool with_partials = true);

/// Jacobian at a state with IC operating points read from the state itself. This is the
/// sensitivity matrix: it does not depend on which setpoint is being differentiated.
Matrix jacobian_at_state(const GridModel& model, const GridState& state, DctFidelity fidelity);

/// Totals of series losses in the AC and DC networks (sum of nodal injections).
struct NetworkLosses {
    double p = 0.0;
    double q = 0.0;
};
NetworkLosses network_losses(const GridModel& model, const GridState& state);

}  // namespace acdc
