#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/errors.hpp"

namespace fedsim {

inline double meter_energy(double power_w, double duration_s) {
    if (power_w < 0.0 || duration_s < 0.0) throw DomainError("meter_energy: negative input");
    return power_w * duration_s / 3600.0;
}

inline double to_co2e(double energy_wh, double factor_g_per_kwh) {
    if (energy_wh < 0.0 || factor_g_per_kwh < 0.0) throw DomainError("to_co2e: negative input");
    return energy_wh * factor_g_per_kwh / 1000.0;
}

/// Manufacturing-phase carbon amortized linearly over hardware lifetime.
struct EmbodiedProfile {
    double manufacturing_gco2e = 0.0;
    double lifetime_hours = 1.0;
};

inline double embodied_amortized(const EmbodiedProfile& profile, double usage_hours) {
    if (profile.lifetime_hours <= 0.0) throw DomainError("embodied: lifetime must be positive");
    if (usage_hours < 0.0) throw DomainError("embodied: negative usage");
    return std::min(usage_hours / profile.lifetime_hours, 1.0) * profile.manufacturing_gco2e;
}

struct LedgerEntry {
    std::string phase;
    std::optional<std::size_t> client_id;
    double energy_wh = 0.0;
    double duration_s = 0.0;
    std::uint64_t bytes = 0;
};

/// Append-only record of per-phase energy, time, and communication.
struct EnergyLedger {
    std::vector<LedgerEntry> entries;
    double emission_factor = 56.0;  // g CO2e per kWh

    void charge(const std::string& phase, std::optional<std::size_t> client_id, double power_w,
                double duration_s, std::uint64_t bytes) {
        LedgerEntry e;
        e.phase = phase;
        e.client_id = client_id;
        e.energy_wh = meter_energy(power_w, duration_s);
        e.duration_s = duration_s;
        e.bytes = bytes;
        entries.push_back(std::move(e));
    }

    double total_energy_wh() const {
        double s = 0.0;
        for (const auto& e : entries) s += e.energy_wh;
        return s;
    }

    double total_duration_s() const {
        double s = 0.0;
        for (const auto& e : entries) s += e.duration_s;
        return s;
    }

    std::uint64_t total_bytes() const {
        std::uint64_t s = 0;
        for (const auto& e : entries) s += e.bytes;
        return s;
    }
};

struct GreenReport {
    std::map<std::string, double> per_phase_wh;
    double total_wh = 0.0;
    double total_duration_s = 0.0;
    double runtime_g = 0.0;
    double embodied_g = 0.0;
    double total_g = 0.0;
    std::uint64_t total_bytes = 0;
};

inline GreenReport report(const EnergyLedger& ledger,
                          const std::optional<EmbodiedProfile>& embodied = std::nullopt,
                          double usage_hours = 0.0) {
    GreenReport r;
    for (const auto& e : ledger.entries) {
        r.per_phase_wh[e.phase] += e.energy_wh;
        r.total_wh += e.energy_wh;
        r.total_duration_s += e.duration_s;
        r.total_bytes += e.bytes;
    }
    r.runtime_g = to_co2e(r.total_wh, ledger.emission_factor);
    r.embodied_g = embodied ? embodied_amortized(*embodied, usage_hours) : 0.0;
    r.total_g = r.runtime_g + r.embodied_g;
    return r;
}

inline double round1(double g) { return std::round(g * 10.0) / 10.0; }

inline nlohmann::ordered_json report_to_json(const GreenReport& r) {
    nlohmann::ordered_json j;
    j["per_phase_wh"] = nlohmann::ordered_json::object();
    for (const auto& [phase, wh] : r.per_phase_wh) j["per_phase_wh"][phase] = wh;
    j["total_wh"] = r.total_wh;
    j["total_duration_s"] = r.total_duration_s;
    j["runtime_gco2e"] = r.runtime_g;
    j["embodied_gco2e"] = r.embodied_g;
    j["total_gco2e"] = r.total_g;
    j["total_gco2e_rounded"] = round1(r.total_g);
    j["total_bytes"] = r.total_bytes;
    return j;
}

/// Text block mirroring the usual table columns. Grams rounded to one
/// decimal at report time only.
inline std::string report_to_text(const GreenReport& r) {
    char buf[256];
    std::string out;
    out += "Energy (Wh)      CO2e (g)     Duration (s)  Bytes\n";
    std::snprintf(buf, sizeof(buf), "%-16.1f %-12.1f %-13.1f %llu\n", r.total_wh,
                  round1(r.total_g), r.total_duration_s,
                  static_cast<unsigned long long>(r.total_bytes));
    out += buf;
    return out;
}

}  // namespace fedsim
