#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "acdc/types.hpp"

namespace acdc {

enum class NodeKind { AcSlack, AcPQ, AcPV, IcAc, IcDc, DcP, DcV };
enum class IcMode { PacQac, EdcQac };
enum class Side { Ac, Dc };

std::string_view to_string(NodeKind kind);
std::string_view to_string(IcMode mode);
NodeKind node_kind_from_string(std::string_view text);
IcMode ic_mode_from_string(std::string_view text);

// ---------------------------------------------------------------------------
// Raw grid description, in the units of the grid file (SI, kW, kVA, ohm).
// GridModel is built from it; save_grid writes it back unchanged.
// ---------------------------------------------------------------------------

struct BaseValues {
    double s_va = 100e3;
    double v_ac = 400.0;  // line-to-line
    double v_dc = 800.0;
    bool operator==(const BaseValues&) const = default;
};

struct NodeData {
    std::string id;
    NodeKind kind = NodeKind::AcPQ;
    std::optional<IcMode> mode;  // IC nodes only
    double v_min = 0.95;         // p.u.
    double v_max = 1.05;         // p.u.
    double v_set = 1.0;          // p.u., slack/PV/DcV/IC-DC nominal voltage
    double angle_set = 0.0;      // rad, slack only
    bool operator==(const NodeData&) const = default;
};

struct IcData {
    std::string id;
    std::string ac_node;
    std::string dc_node;
    double rating_kva = 45.0;
    // Conversion loss P = a0 + a1 |I| + a2 |I|^2 in p.u. of the AC-side current.
    std::array<double, 3> loss{0.0, 0.0, 0.0};
    // Filter consumption P = c |E_ac|^2 (p.u.).
    double filter = 0.0;
    bool operator==(const IcData&) const = default;
};

struct LineData {
    std::string id;
    std::string from;
    std::string to;
    double r_ohm = 0.0;
    std::optional<double> x_ohm;  // absent for DC lines
    double ampacity_a = 0.0;
    bool operator==(const LineData&) const = default;
};

struct PvData {
    std::string id;
    std::string node;
    double rating_kw = 0.0;
    bool curtailable = false;
    bool operator==(const PvData&) const = default;
};

/// Uncontrollable resource replayed from a profile (household, EVCS, DC loads, storage).
struct ResourceData {
    std::string id;
    std::string node;
    double rating_kva = 0.0;
    bool operator==(const ResourceData&) const = default;
};

struct DctData {
    std::string id;
    std::string primary;
    std::string secondary;
    double alpha_kw_per_v = 0.826;
    double r_equiv_ohm = 0.46;
    double p_mag_loss_kw = 0.6;
    double deadband_v = 0.5;
    double rating_kw = 30.0;
    bool operator==(const DctData&) const = default;
};

struct GridData {
    std::string name;
    BaseValues base;
    std::vector<NodeData> ac_nodes;
    std::vector<NodeData> dc_nodes;
    std::vector<IcData> ic_pairs;
    std::vector<LineData> lines;
    std::vector<PvData> pv;
    std::vector<ResourceData> resources;
    std::vector<DctData> dct;
    bool operator==(const GridData&) const = default;
};

// ---------------------------------------------------------------------------
// Validated per-unit model.
// ---------------------------------------------------------------------------

struct Branch {
    std::string id;
    Side side = Side::Ac;
    int from = 0;  // side-local node index
    int to = 0;
    Complex y{0.0, 0.0};  // series admittance, p.u. (real for DC)
    double ampacity = 0.0;  // p.u.
};

struct IcPair {
    std::string id;
    int ac = 0;
    int dc = 0;
    IcMode mode = IcMode::EdcQac;
    double p_max = 0.0;  // p.u.
    double q_max = 0.0;  // p.u.
    std::array<double, 3> loss{0.0, 0.0, 0.0};
    double filter = 0.0;
};

/// Resonant DC transformer between two DC nodes, per-unit.
struct DctModel {
    std::string id;
    int primary = 0;
    int secondary = 0;
    double alpha = 0.0;           // p.u. power per p.u. voltage difference
    double r_equiv = 0.0;         // p.u.
    double p_mag_loss = 0.0;      // p.u., total over both sides
    double deadband = 0.0;        // p.u. voltage half-width (plant model only)
    double rating = 0.0;          // p.u.
};

struct PvUnit {
    std::string id;
    int node = 0;  // AC index
    double rating = 0.0;
    bool curtailable = false;
};

struct ResourceUnit {
    std::string id;
    Side side = Side::Ac;
    int node = 0;
    double rating = 0.0;
};

/// Immutable hybrid AC/DC network. Unified indexing is [AC block | DC block].
class GridModel {
public:
    explicit GridModel(GridData data);

    const GridData& data() const { return data_; }
    const BaseValues& base() const { return data_.base; }

    int ac_count() const { return static_cast<int>(data_.ac_nodes.size()); }
    int dc_count() const { return static_cast<int>(data_.dc_nodes.size()); }
    int unified_count() const { return ac_count() + dc_count(); }
    int unified_index(Side side, int local) const { return side == Side::Ac ? local : ac_count() + local; }

    const NodeData& ac_node(int i) const { return data_.ac_nodes[i]; }
    const NodeData& dc_node(int j) const { return data_.dc_nodes[j]; }
    const NodeData& node(int unified) const;
    NodeKind ac_kind(int i) const { return data_.ac_nodes[i].kind; }
    NodeKind dc_kind(int j) const { return data_.dc_nodes[j].kind; }

    std::optional<int> find_ac(std::string_view id) const;
    std::optional<int> find_dc(std::string_view id) const;
    /// Unified index of a node id; throws GridError if unknown.
    int unified_of(std::string_view id) const;

    const std::vector<Branch>& branches() const { return branches_; }
    /// Branch by id, or by "FROM-TO" endpoint pair in either order.
    int branch_index(std::string_view key) const;

    const std::vector<IcPair>& ic_pairs() const { return ics_; }
    /// IC index whose AC (or DC) side sits at the given local node, if any.
    std::optional<int> ic_at_ac(int i) const;
    std::optional<int> ic_at_dc(int j) const;

    const std::vector<DctModel>& dcts() const { return dcts_; }
    const std::vector<PvUnit>& pv_units() const { return pv_; }
    const std::vector<ResourceUnit>& resources() const { return resources_; }

    const CMatrix& y_ac() const { return y_ac_; }
    const Matrix& y_dc() const { return y_dc_; }

    double current_base(Side side) const;  // A per p.u.
    double power_to_pu(double kw) const { return kw * 1e3 / data_.base.s_va; }
    double pu_to_kw(double pu) const { return pu * data_.base.s_va / 1e3; }

    /// Copy of this model without DC transformers (their series line stays).
    GridModel without_dcts() const;
    /// Copy of this model with IC conversion and filter losses zeroed.
    GridModel without_ic_losses() const;

private:
    void validate_and_build();

    GridData data_;
    std::vector<Branch> branches_;
    std::vector<IcPair> ics_;
    std::vector<DctModel> dcts_;
    std::vector<PvUnit> pv_;
    std::vector<ResourceUnit> resources_;
    std::vector<int> ic_of_ac_;
    std::vector<int> ic_of_dc_;
    CMatrix y_ac_;
    Matrix y_dc_;
};

/// Operating point: complex AC voltages, real DC voltages and nodal injections (p.u.).
struct GridState {
    CVector e_ac;
    Vector e_dc;
    Vector p;  // unified, injection into the network
    Vector q;  // unified, exactly zero on DC entries
    long timestep = 0;

    static GridState flat(const GridModel& model);
    double magnitude(int unified, int ac_count) const;
};

GridData parse_grid(std::string_view json_text);
std::string serialize_grid(const GridData& data);
GridModel load_grid(const std::string& path);
void save_grid(const GridModel& model, const std::string& path);

/// diag(Y_ac, Y_dc) over the unified index order.
CMatrix build_unified_admittance(const GridModel& model);

/// Series current of a branch in the from->to direction (p.u.). DC branches return a real value.
Complex branch_current(const GridModel& model, const GridState& state, int branch);
Complex branch_current(const GridModel& model, const GridState& state, std::string_view key);

/// Per-node current injections Y * E over the unified order.
CVector nodal_currents(const GridModel& model, const GridState& state);

/// Recomputes P and Q of the state from its voltages.
void update_injections(const GridModel& model, GridState& state);

}  // namespace acdc
