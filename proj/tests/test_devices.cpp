#include <doctest.h>

#include <random>

#include "acdc/devices.hpp"
#include "acdc/io.hpp"
#include "acdc/simulator.hpp"
#include "support.hpp"

using namespace acdc;
using namespace acdc::testing;

namespace {

const DctModel& epfl_dct(const GridModel& m) {
    REQUIRE(m.dcts().size() == 1);
    return m.dcts().front();
}

double volts_to_pu(const GridModel& m, double v) { return v / m.base().v_dc; }

}  // namespace

TEST_CASE("DCT: zero difference, idle draw and gain") {
    GridModel m = epfl_model();
    const DctModel& dct = epfl_dct(m);
    const double w = m.base().s_va;

    DctModel lossless = dct;
    lossless.p_mag_loss = 0.0;
    DctPower zero = dct_power(lossless, 1.0, 1.0, DctFidelity::Ideal);
    CHECK(zero.primary == 0.0);
    CHECK(zero.secondary == 0.0);

    for (auto f : {DctFidelity::Ideal, DctFidelity::Plant}) {
        DctPower idle = dct_power(dct, 1.0, 1.0, f);
        CHECK(idle.primary * w == doctest::Approx(-300.0));
        CHECK(idle.secondary * w == doctest::Approx(-300.0));
    }

    const double one_volt = volts_to_pu(m, 1.0);
    CHECK(dct_transfer(dct, one_volt, DctFidelity::Ideal) * w == doctest::Approx(826.0));
    CHECK(dct_transfer(dct, -one_volt, DctFidelity::Ideal) * w == doctest::Approx(-826.0));
    // 1 V is outside the 0.5 V deadband, so the plant agrees
    CHECK(dct_transfer(dct, one_volt, DctFidelity::Plant) == dct_transfer(dct, one_volt, DctFidelity::Ideal));
}

TEST_CASE("DCT plant curve: odd, continuous with matching slope, flat at zero, monotone") {
    GridModel m = epfl_model();
    const DctModel& dct = epfl_dct(m);
    const double db = dct.deadband;
    REQUIRE(db == doctest::Approx(volts_to_pu(m, 0.5)));

    CHECK(dct_transfer_slope(dct, 0.0, DctFidelity::Plant) == 0.0);
    const double eps = db * 1e-9;
    CHECK(dct_transfer(dct, db - eps, DctFidelity::Plant) == doctest::Approx(dct.alpha * db).epsilon(1e-8));
    CHECK(dct_transfer_slope(dct, db - eps, DctFidelity::Plant) == doctest::Approx(dct.alpha).epsilon(1e-7));

    double prev = -std::numeric_limits<double>::infinity();
    for (int k = -200; k <= 200; ++k) {
        const double d = 2.0 * db * k / 200.0;
        const double p = dct_transfer(dct, d, DctFidelity::Plant);
        CHECK(p == doctest::Approx(-dct_transfer(dct, -d, DctFidelity::Plant)));
        CHECK(p >= prev);
        prev = p;
        // slope against a central difference
        const double h = db * 1e-6;
        const double fd = (dct_transfer(dct, d + h, DctFidelity::Plant) - dct_transfer(dct, d - h, DctFidelity::Plant)) / (2 * h);
        CHECK(dct_transfer_slope(dct, d, DctFidelity::Plant) == doctest::Approx(fd).epsilon(1e-5).scale(dct.alpha));
        // shortfall against the linear model is bounded and vanishes outside the band
        const double gap = std::abs(p - dct_transfer(dct, d, DctFidelity::Ideal));
        if (std::abs(d) >= db) CHECK(gap == 0.0);
        else CHECK(gap <= dct.alpha * db);
    }
}

TEST_CASE("DCT energy accounting and lossless agreement outside the deadband") {
    GridModel m = epfl_model();
    DctModel dct = epfl_dct(m);
    std::mt19937_64 rng(3);
    for (int k = 0; k < 100; ++k) {
        double e1 = uniform(rng, 0.98, 1.02), e2 = uniform(rng, 0.98, 1.02);
        for (auto f : {DctFidelity::Ideal, DctFidelity::Plant}) {
            DctPower p = dct_power(dct, e1, e2, f);
            CHECK(p.primary + p.secondary == doctest::Approx(-dct.p_mag_loss).epsilon(1e-12));
        }
    }
    dct.p_mag_loss = 0.0;
    for (double d : {-0.01, -0.002, 0.0007, 0.003}) {
        DctPower a = dct_power(dct, 1.0 + d, 1.0, DctFidelity::Ideal);
        DctPower b = dct_power(dct, 1.0 + d, 1.0, DctFidelity::Plant);
        CHECK(a.primary == b.primary);
        CHECK(a.secondary == b.secondary);
    }
}

TEST_CASE("IC envelope is a closed box") {
    GridModel m = epfl_model();
    const IcPair& ic = m.ic_pairs().front();
    const double s = m.base().s_va;
    CHECK(ic_envelope(ic, 0.0, 0.0));
    CHECK_FALSE(ic_envelope(45.0, s, 50e3 / s, 0.0));
    CHECK(ic_envelope(45.0, s, 45e3 / s, 0.0));
    CHECK(ic_envelope(45.0, s, -45e3 / s, 45e3 / s));
    CHECK_FALSE(ic_envelope(45.0, s, 0.0, -45.001e3 / s));
    CHECK(ic_envelope(ic, ic.p_max, -ic.q_max));
}

TEST_CASE("PV availability of the replay template: endpoints and constant profiles") {
    GridModel m = epfl_model();
    Scenario sc = Scenario::load(scenario_path("epfl_replay.json"));
    const ResourceProfile& p = sc.profiles;
    const int last = p.horizon() - 1;
    const int b11 = *m.find_ac("B11");
    CHECK(m.pu_to_kw(pv_available_at_node(m, p, b11, 0)) == doctest::Approx(14.87).epsilon(1e-9));
    CHECK(m.pu_to_kw(pv_available_at_node(m, p, b11, last)) == doctest::Approx(9.82).epsilon(1e-9));
    CHECK(m.pu_to_kw(pv_available(m, p, "pv_roof", 0)) + m.pu_to_kw(pv_available(m, p, "pv_facade", 0)) ==
          doctest::Approx(14.87));
    CHECK_THROWS(pv_available(m, p, "pv_roof", p.horizon()));

    ResourceProfile flat(5);
    for (int t = 0; t < 5; ++t) flat.set("pv_roof", t, {4.0, 0.0, 6.0});
    for (int t = 0; t < 5; ++t) CHECK(m.pu_to_kw(pv_available(m, flat, "pv_roof", t)) == doctest::Approx(6.0));
    // a unit without a series has nothing available
    CHECK(pv_available(m, flat, "pv_facade", 2) == 0.0);
}

TEST_CASE("profile CSV round trip and uncontrollable injections") {
    GridModel m = epfl_model();
    ResourceProfile p(3);
    p.set("household", 0, {-5.0, -1.5, 0.0});
    p.set("household", 1, {-5.5, -1.25, 0.0});
    p.set("household", 2, {-4.75, -1.0, 0.0});
    p.set("pv_facade", 0, {6.5, 0.0, 6.5});
    p.set("pv_facade", 1, {6.25, 0.0, 6.25});
    p.set("pv_facade", 2, {6.0, 0.0, 6.0});
    p.set("dc_load_b", 1, {-2.0, 0.0, 0.0});
    ResourceProfile back = parse_profiles(format_profiles(p));
    CHECK(back == p);

    Injections inj = uncontrollable_injections(m, p, 1);
    const int b03 = m.unified_of("B03");
    const int b11 = m.unified_of("B11");
    CHECK(m.pu_to_kw(inj.p[b03]) == doctest::Approx(-5.5));
    CHECK(m.pu_to_kw(inj.q[b03]) == doctest::Approx(-1.25));
    // the curtailable roof plant is a decision, only the facade is uncontrollable
    CHECK(m.pu_to_kw(inj.p[b11]) == doctest::Approx(6.25));
    double dc_total = 0.0;
    for (int j = 0; j < m.dc_count(); ++j) {
        dc_total += inj.p[m.ac_count() + j];
        CHECK(inj.q[m.ac_count() + j] == 0.0);
    }
    CHECK(m.pu_to_kw(dc_total) == doctest::Approx(-2.0));
    CHECK_THROWS(parse_profiles("t,resource_id,P_kW,Q_kvar\n0,x,abc,0\n"));
}
