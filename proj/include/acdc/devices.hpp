#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "acdc/grid_model.hpp"

namespace acdc {

enum class DctFidelity { Ideal, Plant };

/// Power injected into the DC grid at each DCT port (p.u.). Both are -p_mag_loss/2 at zero transfer.
struct DctPower {
    double primary = 0.0;
    double secondary = 0.0;
};

/// Transferred power from primary to secondary as a function of E1 - E2.
/// Ideal: alpha * dE. Plant: same outside the deadband, a C1 odd polynomial inside it
/// that flattens to zero slope at dE = 0.
double dct_transfer(const DctModel& dct, double delta, DctFidelity fidelity);
double dct_transfer_slope(const DctModel& dct, double delta, DctFidelity fidelity);

/// The primary port draws the transfer, the secondary delivers it; magnetizing loss is split equally.
DctPower dct_power(const DctModel& dct, double e1, double e2, DctFidelity fidelity);

struct ProfileSample {
    double p_kw = 0.0;    // injection into the grid (generation positive)
    double q_kvar = 0.0;
    double p_mpp_kw = 0.0;  // PV only; equals p_kw when the column is empty
    bool operator==(const ProfileSample&) const = default;
};

/// Time series of resource injections, one sample per control step.
class ResourceProfile {
public:
    ResourceProfile() = default;
    explicit ResourceProfile(int horizon) : horizon_(horizon) {}

    int horizon() const { return horizon_; }
    bool has(std::string_view id) const { return series_.find(std::string(id)) != series_.end(); }
    std::vector<std::string> ids() const;

    void set(const std::string& id, int t, const ProfileSample& sample);
    /// Sample of a resource at step t; zero for resources without a series. Throws outside the horizon.
    ProfileSample at(std::string_view id, int t) const;

    /// Same horizon, same ids and the same sample at every step.
    bool operator==(const ResourceProfile& o) const;

private:
    int horizon_ = 0;
    std::map<std::string, std::vector<ProfileSample>, std::less<>> series_;
};

ResourceProfile parse_profiles(std::string_view csv_text);
ResourceProfile load_profiles(const std::string& path);
std::string format_profiles(const ResourceProfile& profile);
void save_profiles(const ResourceProfile& profile, const std::string& path);

/// MPP of one PV unit at step t (p.u.).
double pv_available(const GridModel& model, const ResourceProfile& profile, std::string_view pv_id, int t);
/// Sum of MPP over all PV units at an AC node (p.u.).
double pv_available_at_node(const GridModel& model, const ResourceProfile& profile, int ac_node, int t);

/// Box envelope |P| <= P_max, |Q| <= Q_max of an interfacing converter (closed set).
bool ic_envelope(const IcPair& ic, double p, double q);
bool ic_envelope(double rating_kva, double s_base_va, double p, double q);

/// Unified nodal injections of everything that is not a controller decision:
/// all resources plus non-curtailable PV at MPP (p.u.).
struct Injections {
    Vector p;
    Vector q;
};
Injections uncontrollable_injections(const GridModel& model, const ResourceProfile& profile, int t);

}  // namespace acdc
