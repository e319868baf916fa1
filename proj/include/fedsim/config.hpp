#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/greenledger.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class Scenario { FedAvgFull, PflDecoupled, LoraFl, TraceReplay };

inline std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::FedAvgFull: return "fedavg-full";
        case Scenario::PflDecoupled: return "pfl-decoupled";
        case Scenario::LoraFl: return "lora-fl";
        case Scenario::TraceReplay: return "trace-replay";
    }
    throw ConfigError("unknown scenario");
}

inline Scenario scenario_from_string(const std::string& s) {
    if (s == "fedavg-full") return Scenario::FedAvgFull;
    if (s == "pfl-decoupled") return Scenario::PflDecoupled;
    if (s == "lora-fl") return Scenario::LoraFl;
    if (s == "trace-replay") return Scenario::TraceReplay;
    throw ConfigError("unknown scenario: " + s);
}

struct Diagnostic {
    std::string field;
    std::string message;
};

/// Everything one experiment run needs. Parsed from versioned JSON;
/// unknown fields are rejected so sweep typos fail loudly.
struct ExperimentConfig {
    int schema_version = 1;
    Scenario scenario = Scenario::FedAvgFull;
    std::uint64_t seed = 0;
    bool seed_set = false;

    SynthParams dataset;
    double train_fraction = 0.8;

    std::size_t n_clients = 10;
    double dirichlet_alpha = 1.0;
    std::vector<std::vector<std::size_t>> domain_map;  // domain -> client ids

    RoundConfig rounds;
    ModelSpec model = ModelSpec::mlp(16, {32}, 2);
    TrainOptions training;
    LoraConfig lora;

    EnergyParams energy;
    double emission_factor = 56.0;
    std::optional<EmbodiedProfile> embodied;

    std::string trace_path;         // trace-replay only
    std::string grouping_map_path;  // trace-replay only, optional
    std::string output_dir = "out";

    std::vector<Diagnostic> validate() const {
        std::vector<Diagnostic> diags;
        auto bad = [&](const std::string& field, const std::string& msg) {
            diags.push_back({field, msg});
        };
        if (!seed_set) bad("seed", "seed is mandatory");
        if (scenario == Scenario::TraceReplay) {
            if (trace_path.empty()) bad("trace", "trace-replay requires a trace file path");
            return diags;
        }
        if (dataset.n < 1) bad("dataset.n", "must be >= 1");
        if (dataset.dim < 1) bad("dataset.d", "must be >= 1");
        if (dataset.num_classes < 2) bad("dataset.num_classes", "must be >= 2");
        if (dataset.num_domains < 1) bad("dataset.num_domains", "must be >= 1");
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
            bad("dataset.train_fraction", "must be in (0, 1)");
        }
        if (n_clients < 1) bad("partition.n_clients", "must be >= 1");
        if (dirichlet_alpha <= 0.0) bad("partition.alpha", "must be positive");
        if (domain_map.size() != static_cast<std::size_t>(dataset.num_domains)) {
            bad("partition.domain_map", "must cover every domain");
        } else {
            for (std::size_t d = 0; d < domain_map.size(); ++d) {
                if (domain_map[d].empty()) {
                    bad("partition.domain_map", "domain " + std::to_string(d) + " has no clients");
                }
                for (auto c : domain_map[d]) {
                    if (c >= n_clients) {
                        bad("partition.domain_map", "client id out of range in domain " +
                                                        std::to_string(d));
                    }
                }
            }
        }
        if (rounds.rounds < 1) bad("rounds.rounds", "must be >= 1");
        if (!(rounds.participation_fraction > 0.0 && rounds.participation_fraction <= 1.0)) {
            bad("rounds.participation_fraction", "must be in (0, 1]");
        }
        if (training.epochs < 1) bad("training.epochs", "must be >= 1");
        if (training.lr <= 0.0) bad("training.lr", "must be positive");
        if (training.batch_size < 1) bad("training.batch_size", "must be >= 1");
        if (scenario == Scenario::LoraFl) {
            if (lora.rank < 1) bad("lora.rank", "must be >= 1");
            if (lora.bits != 4 && lora.bits != 8 && lora.bits != 16 && lora.bits != 32) {
                bad("lora.bits", "must be one of 4, 8, 16, 32");
            }
            if (lora.clip_norm <= 0.0) bad("lora.clip_norm", "must be positive");
            if (lora.sigma < 0.0) bad("lora.sigma", "must be non-negative");
        }
        if (energy.watts < 0.0) bad("energy.watts", "must be non-negative");
        if (energy.seconds_per_sample < 0.0) bad("energy.seconds_per_sample", "must be non-negative");
        if (emission_factor < 0.0) bad("energy.emission_factor", "must be non-negative");
        if (embodied && embodied->lifetime_hours <= 0.0) {
            bad("energy.embodied.lifetime_hours", "must be positive");
        }
        return diags;
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                           const std::string& scope) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("unknown field '" + (scope.empty() ? key : scope + "." + key) + "'");
        }
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    detail::reject_unknown(j, {"schema_version", "scenario", "seed", "dataset", "partition",
                               "rounds", "model", "training", "lora", "energy", "trace",
                               "grouping_map", "output_dir"},
                           "");
    ExperimentConfig cfg;
    if (!j.contains("schema_version")) throw ConfigError("missing schema_version");
    cfg.schema_version = j.at("schema_version").get<int>();
    if (cfg.schema_version != 1) throw ConfigError("unsupported schema_version");
    if (!j.contains("scenario")) throw ConfigError("missing scenario");
    cfg.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    if (j.contains("seed")) {
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.seed_set = true;
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::reject_unknown(d, {"n", "d", "num_classes", "num_domains", "domain_shift",
                                   "class_separation", "train_fraction"},
                               "dataset");
        if (d.contains("n")) cfg.dataset.n = d.at("n").get<std::size_t>();
        if (d.contains("d")) cfg.dataset.dim = d.at("d").get<std::size_t>();
        if (d.contains("num_classes")) cfg.dataset.num_classes = d.at("num_classes").get<int>();
        if (d.contains("num_domains")) cfg.dataset.num_domains = d.at("num_domains").get<int>();
        if (d.contains("domain_shift")) cfg.dataset.domain_shift = d.at("domain_shift").get<double>();
        if (d.contains("class_separation")) {
            cfg.dataset.class_separation = d.at("class_separation").get<double>();
        }
        if (d.contains("train_fraction")) cfg.train_fraction = d.at("train_fraction").get<double>();
    }
    if (j.contains("partition")) {
        const auto& p = j.at("partition");
        detail::reject_unknown(p, {"n_clients", "alpha", "domain_map"}, "partition");
        if (p.contains("n_clients")) cfg.n_clients = p.at("n_clients").get<std::size_t>();
        if (p.contains("alpha")) cfg.dirichlet_alpha = p.at("alpha").get<double>();
        if (p.contains("domain_map")) {
            cfg.domain_map = p.at("domain_map").get<std::vector<std::vector<std::size_t>>>();
        }
    }
    if (cfg.domain_map.empty() && cfg.scenario != Scenario::TraceReplay) {
        // default: clients split evenly over domains, in id order
        cfg.domain_map.resize(static_cast<std::size_t>(cfg.dataset.num_domains));
        for (std::size_t c = 0; c < cfg.n_clients; ++c) {
            const std::size_t d = c * cfg.domain_map.size() / cfg.n_clients;
            cfg.domain_map[d].push_back(c);
        }
    }
    if (j.contains("rounds")) {
        const auto& r = j.at("rounds");
        detail::reject_unknown(r, {"rounds", "participation_fraction"}, "rounds");
        if (r.contains("rounds")) cfg.rounds.rounds = r.at("rounds").get<int>();
        if (r.contains("participation_fraction")) {
            cfg.rounds.participation_fraction = r.at("participation_fraction").get<double>();
        }
    }
    cfg.rounds.n_clients = cfg.n_clients;
    cfg.rounds.seed = cfg.seed;
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown(m, {"kind", "hidden_dims"}, "model");
        const std::string kind = m.contains("kind") ? m.at("kind").get<std::string>() : "mlp";
        std::vector<std::size_t> hidden = {32};
        if (m.contains("hidden_dims")) hidden = m.at("hidden_dims").get<std::vector<std::size_t>>();
        if (kind == "logistic") {
            cfg.model = ModelSpec::logistic(cfg.dataset.dim, cfg.dataset.num_classes);
        } else if (kind == "mlp") {
            cfg.model = ModelSpec::mlp(cfg.dataset.dim, hidden, cfg.dataset.num_classes);
        } else {
            throw ConfigError("model.kind must be 'logistic' or 'mlp'");
        }
    } else {
        cfg.model = ModelSpec::mlp(cfg.dataset.dim, {32}, cfg.dataset.num_classes);
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        detail::reject_unknown(t, {"lr", "epochs", "batch_size"}, "training");
        if (t.contains("lr")) cfg.training.lr = t.at("lr").get<double>();
        if (t.contains("epochs")) cfg.training.epochs = t.at("epochs").get<int>();
        if (t.contains("batch_size")) cfg.training.batch_size = t.at("batch_size").get<std::size_t>();
    }
    if (j.contains("lora")) {
        const auto& l = j.at("lora");
        detail::reject_unknown(l, {"rank", "alpha", "bits", "clip_norm", "sigma"}, "lora");
        if (l.contains("rank")) cfg.lora.rank = l.at("rank").get<std::size_t>();
        if (l.contains("alpha")) cfg.lora.alpha = l.at("alpha").get<double>();
        if (l.contains("bits")) cfg.lora.bits = l.at("bits").get<int>();
        if (l.contains("clip_norm")) cfg.lora.clip_norm = l.at("clip_norm").get<double>();
        if (l.contains("sigma")) cfg.lora.sigma = l.at("sigma").get<double>();
    }
    if (j.contains("energy")) {
        const auto& e = j.at("energy");
        detail::reject_unknown(e, {"watts", "seconds_per_sample", "emission_factor", "embodied"},
                               "energy");
        if (e.contains("watts")) cfg.energy.watts = e.at("watts").get<double>();
        if (e.contains("seconds_per_sample")) {
            cfg.energy.seconds_per_sample = e.at("seconds_per_sample").get<double>();
        }
        if (e.contains("emission_factor")) cfg.emission_factor = e.at("emission_factor").get<double>();
        if (e.contains("embodied")) {
            const auto& em = e.at("embodied");
            detail::reject_unknown(em, {"manufacturing_gco2e", "lifetime_hours"}, "energy.embodied");
            EmbodiedProfile p;
            p.manufacturing_gco2e = em.at("manufacturing_gco2e").get<double>();
            p.lifetime_hours = em.at("lifetime_hours").get<double>();
            cfg.embodied = p;
        }
    }
    if (j.contains("trace")) cfg.trace_path = j.at("trace").get<std::string>();
    if (j.contains("grouping_map")) cfg.grouping_map_path = j.at("grouping_map").get<std::string>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    return cfg;
}

}  // namespace fedsim
