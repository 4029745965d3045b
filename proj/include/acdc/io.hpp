#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "acdc/controller.hpp"
#include "acdc/grid_model.hpp"
#include "acdc/power_flow.hpp"
#include "acdc/sensitivity.hpp"

namespace acdc {

/// State CSV: node_id,E_pu,angle_rad,P_pu,Q_pu in unified order. Reading recomputes P and Q from the voltages.
std::string format_state(const GridModel& model, const GridState& state);
GridState parse_state(const GridModel& model, std::string_view csv_text);
GridState load_state(const GridModel& model, const std::string& path);
void save_state(const GridModel& model, const GridState& state, const std::string& path);

/// Power-flow spec JSON: {"dct": "ideal|plant", "nodes": {id: {P, Q, V, angle}}, "ic": {id: {P, Q, E_dc}}},
/// per-unit, starting from the nominal spec.
PfSpec parse_spec(const GridModel& model, std::string_view json_text);

/// Matrix CSV with a header row of column labels and the row label in the first column.
std::string format_matrix(const Matrix& m, const std::vector<std::string>& row_labels,
                          const std::vector<std::string>& col_labels);

std::string decision_json(const GridModel& model, const ControlDecision& decision);

void write_text(const std::string& path, std::string_view text);
std::string read_text(const std::string& path);

}  // namespace acdc
