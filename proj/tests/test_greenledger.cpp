#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fedsim/greenledger.hpp"

using namespace fedsim;

TEST_CASE("meter_energy: unit cases") {
    REQUIRE(meter_energy(100.0, 3600.0) == 100.0);
    REQUIRE(meter_energy(0.0, 12345.0) == 0.0);
    REQUIRE_THROWS_AS(meter_energy(-1.0, 10.0), DomainError);
    REQUIRE_THROWS_AS(meter_energy(1.0, -10.0), DomainError);
}

TEST_CASE("meter_energy: 570 Wh over 4741 s implies ~432.8 W mean power") {
    // algebra: power = Wh * 3600 / s
    const double implied_power = 570.0 * 3600.0 / 4741.0;
    REQUIRE(implied_power == Catch::Approx(432.8).margin(0.05));
    REQUIRE(meter_energy(implied_power, 4741.0) == Catch::Approx(570.0).margin(1e-9));
}

TEST_CASE("to_co2e: table conversions at factor 56") {
    REQUIRE(to_co2e(570.0, 56.0) == Catch::Approx(31.92).margin(1e-12));
    REQUIRE(to_co2e(240.0, 56.0) == Catch::Approx(13.44).margin(1e-12));
    REQUIRE(round1(to_co2e(240.0, 56.0)) == 13.4);
    REQUIRE(to_co2e(1149.8, 56.0) == Catch::Approx(64.3888).margin(1e-9));
    REQUIRE(round1(to_co2e(1149.8, 56.0)) == 64.4);
    REQUIRE(to_co2e(0.0, 56.0) == 0.0);
    REQUIRE_THROWS_AS(to_co2e(-1.0, 56.0), DomainError);
}

TEST_CASE("to_co2e: linear within 1e-12") {
    REQUIRE(to_co2e(123.4 + 567.8, 56.0) ==
            Catch::Approx(to_co2e(123.4, 56.0) + to_co2e(567.8, 56.0)).margin(1e-12));
}

TEST_CASE("embodied_amortized: cap and zero") {
    EmbodiedProfile p{150000.0, 35040.0};
    REQUIRE(embodied_amortized(p, 35040.0) == 150000.0);
    REQUIRE(embodied_amortized(p, 2.0 * 35040.0) == 150000.0);
    REQUIRE(embodied_amortized(p, 0.0) == 0.0);
    REQUIRE_THROWS_AS(embodied_amortized({100.0, 0.0}, 1.0), DomainError);
}

TEST_CASE("embodied_amortized: 4741 s of a 4-year lifetime") {
    EmbodiedProfile p{150000.0, 35040.0};
    const double usage_hours = 4741.0 / 3600.0;
    REQUIRE(embodied_amortized(p, usage_hours) == Catch::Approx(5.64).margin(0.005));
}

TEST_CASE("charge: additivity and bytes-only entries") {
    EnergyLedger ledger;
    ledger.charge("train", 0, 50.0, 3600.0, 0);
    ledger.charge("train", 1, 50.0, 3600.0, 0);
    REQUIRE(ledger.total_energy_wh() == 100.0);
    ledger.charge("comm", std::nullopt, 0.0, 0.0, 1024);
    REQUIRE(ledger.total_bytes() == 1024);
    REQUIRE(ledger.total_energy_wh() == 100.0);
}

TEST_CASE("report: empty ledger is all zeros") {
    EnergyLedger ledger;
    const GreenReport r = report(ledger);
    REQUIRE(r.total_wh == 0.0);
    REQUIRE(r.runtime_g == 0.0);
    REQUIRE(r.embodied_g == 0.0);
    REQUIRE(r.total_bytes == 0);
}

TEST_CASE("report: 570 Wh at factor 56 with and without embodied share") {
    EnergyLedger ledger;
    ledger.emission_factor = 56.0;
    ledger.charge("train", std::nullopt, 570.0 * 3600.0 / 4741.0, 4741.0, 0);
    const GreenReport bare = report(ledger);
    REQUIRE(bare.total_wh == Catch::Approx(570.0).margin(1e-9));
    REQUIRE(bare.runtime_g == Catch::Approx(31.92).margin(1e-6));

    EmbodiedProfile p{150000.0, 35040.0};
    const GreenReport full = report(ledger, p, ledger.total_duration_s() / 3600.0);
    REQUIRE(full.embodied_g == Catch::Approx(5.64).margin(0.005));
    REQUIRE(full.total_g == Catch::Approx(31.92 + full.embodied_g).margin(1e-6));
}

TEST_CASE("report: additivity across phases with fixed order") {
    EnergyLedger ledger;
    ledger.charge("a", std::nullopt, 100.0, 3600.0, 10);
    ledger.charge("b", std::nullopt, 50.0, 3600.0, 20);
    ledger.charge("a", std::nullopt, 25.0, 3600.0, 30);
    const GreenReport r = report(ledger);
    REQUIRE(r.per_phase_wh.at("a") == 125.0);
    REQUIRE(r.per_phase_wh.at("b") == 50.0);
    REQUIRE(r.total_wh == r.per_phase_wh.at("a") + r.per_phase_wh.at("b"));
    REQUIRE(r.total_bytes == 60);
}

TEST_CASE("report: monotone under charging") {
    EnergyLedger ledger;
    ledger.charge("a", std::nullopt, 10.0, 100.0, 5);
    const GreenReport before = report(ledger);
    ledger.charge("b", std::nullopt, 10.0, 100.0, 5);
    const GreenReport after = report(ledger);
    REQUIRE(after.total_wh >= before.total_wh);
    REQUIRE(after.total_g >= before.total_g);
    REQUIRE(after.total_bytes >= before.total_bytes);
}

TEST_CASE("report text block carries the table columns") {
    EnergyLedger ledger;
    ledger.charge("train", std::nullopt, 570.0 * 3600.0 / 4741.0, 4741.0, 123);
    const std::string text = report_to_text(report(ledger));
    REQUIRE(text.find("Energy (Wh)") != std::string::npos);
    REQUIRE(text.find("CO2e (g)") != std::string::npos);
    REQUIRE(text.find("31.9") != std::string::npos);
}
