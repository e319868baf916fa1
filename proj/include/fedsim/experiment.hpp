#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/config.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/partition.hpp"

namespace fedsim {

/// Shortest round-trip decimal form, identical on every run.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_optional(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string history_to_csv(const std::vector<RoundRecord>& history) {
    std::string csv = "round,client_ids,accuracy,f1,roc_auc,log_loss,bytes,energy_wh\n";
    for (const auto& r : history) {
        std::string ids;
        for (std::size_t i = 0; i < r.selected_clients.size(); ++i) {
            if (i) ids += ';';
            ids += std::to_string(r.selected_clients[i]);
        }
        csv += std::to_string(r.round) + "," + ids + "," + format_double(r.accuracy) + "," +
               format_double(r.f1) + "," + format_optional(r.roc_auc) + "," +
               format_double(r.log_loss) + "," + std::to_string(r.bytes) + "," +
               format_double(r.energy_wh) + "\n";
    }
    return csv;
}

inline std::string per_client_to_csv(const PersonalizedEvaluation& ev) {
    std::string csv = "client_id,n_val,accuracy,f1,roc_auc,log_loss\n";
    for (const auto& c : ev.per_client) {
        csv += std::to_string(c.client_id) + "," + std::to_string(c.n_val) + "," +
               format_double(c.metrics.accuracy) + "," + format_double(c.metrics.f1) + "," +
               format_optional(c.metrics.roc_auc) + "," + format_double(c.metrics.log_loss) + "\n";
    }
    return csv;
}

struct SimulationArtifacts {
    LabeledDataset train;
    LabeledDataset validation;
    ClientAssignment assignment;
    std::vector<std::vector<LabeledExample>> client_validation;
    FederationResult result;
    EnergyLedger ledger;
};

/// Builds dataset, split, and partition from the config, then runs the
/// federated scenario. Shared by the CLI and the test suites.
inline SimulationArtifacts run_simulation(const ExperimentConfig& cfg) {
    const auto diags = cfg.validate();
    if (!diags.empty()) {
        throw ConfigError("invalid config: " + diags.front().field + ": " + diags.front().message);
    }
    SimulationArtifacts art;
    Rng data_rng(derive_stream(cfg.seed, "data"));
    const LabeledDataset full = synth_dataset(cfg.dataset, data_rng);

    Rng split_rng(derive_stream(cfg.seed, "split"));
    auto [train, validation] = stratified_split(full, cfg.train_fraction, split_rng);
    art.train = std::move(train);
    art.validation = std::move(validation);

    Rng part_rng(derive_stream(cfg.seed, "partition"));
    art.assignment = domain_dirichlet_partition(art.train, cfg.n_clients, cfg.domain_map,
                                                cfg.dirichlet_alpha, part_rng);

    // per-client validation reuses the train partition stream, so the
    // proportion draws coincide and each client's validation mirrors its
    // own training skew; personalized evaluation then measures the
    // distribution that client actually serves
    Rng valpart_rng(derive_stream(cfg.seed, "partition"));
    const ClientAssignment val_assignment = domain_dirichlet_partition(
        art.validation, cfg.n_clients, cfg.domain_map, cfg.dirichlet_alpha, valpart_rng);
    art.client_validation.resize(cfg.n_clients);
    for (std::size_t c = 0; c < cfg.n_clients; ++c) {
        for (auto i : val_assignment.client_indices[c]) {
            art.client_validation[c].push_back(art.validation.examples[i]);
        }
    }

    Strategy strategy = Strategy::Full;
    if (cfg.scenario == Scenario::PflDecoupled) strategy = Strategy::Decoupled;
    if (cfg.scenario == Scenario::LoraFl) strategy = Strategy::Lora;

    FedHyper hyper;
    hyper.train = cfg.training;
    hyper.lora = cfg.lora;
    hyper.energy = cfg.energy;

    art.ledger.emission_factor = cfg.emission_factor;
    FederationInputs inputs;
    inputs.train = &art.train;
    inputs.validation = &art.validation;
    inputs.client_validation = art.client_validation;

    art.result = run_federation(cfg.rounds, cfg.model, art.assignment, strategy, hyper,
                                art.ledger, inputs);
    return art;
}

inline nlohmann::ordered_json summary_json(const ExperimentConfig& cfg,
                                           const SimulationArtifacts& art) {
    nlohmann::ordered_json j;
    j["scenario"] = to_string(cfg.scenario);
    j["seed"] = cfg.seed;
    j["rounds"] = cfg.rounds.rounds;
    j["n_clients"] = cfg.n_clients;

    const RoundRecord& last = art.result.history.back();
    nlohmann::ordered_json fin;
    fin["accuracy"] = last.accuracy;
    fin["f1"] = last.f1;
    if (last.roc_auc) {
        fin["roc_auc"] = *last.roc_auc;
    } else {
        fin["roc_auc"] = nullptr;
    }
    fin["log_loss"] = last.log_loss;
    j["final_metrics"] = fin;

    if (!art.result.personalized.empty()) {
        const PersonalizedEvaluation& pe = art.result.personalized.back();
        nlohmann::ordered_json pj;
        pj["accuracy"] = pe.weighted_mean.accuracy;
        pj["f1"] = pe.weighted_mean.f1;
        pj["log_loss"] = pe.weighted_mean.log_loss;
        j["personalized_mean"] = pj;
    }

    std::uint64_t total_bytes = 0;
    for (const auto& r : art.result.history) total_bytes += r.bytes;
    j["total_bytes"] = total_bytes;

    const double usage_hours = art.ledger.total_duration_s() / 3600.0;
    j["green"] = report_to_json(report(art.ledger, cfg.embodied, usage_hours));
    return j;
}

/// Trace replay: raw metrics plus, with a grouping map, grouped metrics.
inline nlohmann::ordered_json replay_trace(const PredictionTrace& trace,
                                           const std::optional<GroupingMap>& map) {
    auto metrics_block = [](const PredictionTrace& t) {
        nlohmann::ordered_json b;
        bool binary = t.vocabulary.size() == 2;
        for (const auto& r : t.rows) {
            if (!r.score) binary = false;
        }
        if (binary) {
            const BinaryMetrics m = binary_metrics(t);
            b["accuracy"] = m.accuracy;
            b["f1"] = m.f1;
            if (m.roc_auc) {
                b["roc_auc"] = *m.roc_auc;
            } else {
                b["roc_auc"] = nullptr;
            }
            b["log_loss"] = m.log_loss;
        } else {
            const MulticlassMetrics m = multiclass_metrics(t);
            b["accuracy"] = m.accuracy;
            b["macro_f1"] = m.macro_f1;
            nlohmann::ordered_json pc = nlohmann::ordered_json::object();
            for (const auto& [cls, st] : m.per_class) {
                pc[cls] = {{"precision", st.precision}, {"recall", st.recall}, {"f1", st.f1}};
            }
            b["per_class"] = pc;
            b["warnings"] = m.warnings;
        }
        b["n_rows"] = t.rows.size();
        return b;
    };
    nlohmann::ordered_json j;
    j["raw"] = metrics_block(trace);
    if (map) j["grouped"] = metrics_block(regroup(trace, *map));
    return j;
}

/// Executes one configured experiment and writes all artifacts under
/// cfg.output_dir. Identical config + seed produces byte-identical files.
inline void run_experiment(const ExperimentConfig& cfg) {
    const auto diags = cfg.validate();
    if (!diags.empty()) {
        std::string msg = "invalid config:";
        for (const auto& d : diags) msg += "\n  " + d.field + ": " + d.message;
        throw ConfigError(msg);
    }
    const std::filesystem::path out(cfg.output_dir);
    std::filesystem::create_directories(out);

    if (cfg.scenario == Scenario::TraceReplay) {
        const PredictionTrace trace = parse_trace_csv(read_file(cfg.trace_path));
        std::optional<GroupingMap> map;
        if (!cfg.grouping_map_path.empty()) {
            map = parse_grouping_map(nlohmann::json::parse(read_file(cfg.grouping_map_path)));
        }
        const auto j = replay_trace(trace, map);
        write_file(out / "metrics.json", j.dump(2) + "\n");
        return;
    }

    const SimulationArtifacts art = run_simulation(cfg);
    write_file(out / "history.csv", history_to_csv(art.result.history));
    write_file(out / "assignment.csv", assignment_to_csv(art.assignment, art.train));
    write_file(out / "summary.json", summary_json(cfg, art).dump(2) + "\n");
    if (cfg.scenario == Scenario::PflDecoupled) {
        write_file(out / "per_client.csv", per_client_to_csv(art.result.personalized.back()));
    }
}

}  // namespace fedsim
