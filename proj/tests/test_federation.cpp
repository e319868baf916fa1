#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>

#include "fedsim/federation.hpp"

using namespace fedsim;

namespace {

ParamVector two_values(double a, double b) {
    ParamVector p;
    p.add_segment("w", {2});
    p.segment("w")[0] = a;
    p.segment("w")[1] = b;
    return p;
}

struct SmallRun {
    LabeledDataset train;
    LabeledDataset validation;
    ClientAssignment assignment;
    RoundConfig config;
    ModelSpec spec;
    FedHyper hyper;
};

SmallRun make_small_run(std::size_t n_clients, int rounds, double fraction,
                        std::uint64_t seed, std::size_t n = 400) {
    SmallRun r;
    SynthParams p;
    p.n = n;
    p.dim = 8;
    p.num_classes = 2;
    p.num_domains = 1;
    p.class_separation = 3.0;
    Rng data_rng(derive_stream(seed, "data"));
    const LabeledDataset full = synth_dataset(p, data_rng);
    Rng split_rng(derive_stream(seed, "split"));
    auto [train, val] = stratified_split(full, 0.8, split_rng);
    r.train = std::move(train);
    r.validation = std::move(val);
    const std::vector<std::vector<std::size_t>> domain_map = {
        [&] {
            std::vector<std::size_t> all(n_clients);
            for (std::size_t i = 0; i < n_clients; ++i) all[i] = i;
            return all;
        }()};
    Rng part_rng(derive_stream(seed, "partition"));
    r.assignment = domain_dirichlet_partition(r.train, n_clients, domain_map, 1e6, part_rng);
    r.config = {rounds, n_clients, fraction, seed};
    r.spec = ModelSpec::logistic(p.dim, 2);
    return r;
}

}  // namespace

TEST_CASE("sample_clients: n=10, fraction=0.5 gives exactly 5 distinct ids") {
    const RoundConfig cfg{20, 10, 0.5, 123};
    const auto ids = sample_clients(0, cfg);
    REQUIRE(ids.size() == 5);
    for (std::size_t i = 1; i < ids.size(); ++i) REQUIRE(ids[i] > ids[i - 1]);
    for (auto id : ids) REQUIRE(id < 10);
}

TEST_CASE("sample_clients: fraction=1 selects everyone") {
    const RoundConfig cfg{1, 7, 1.0, 5};
    const auto ids = sample_clients(0, cfg);
    REQUIRE(ids.size() == 7);
}

TEST_CASE("sample_clients: deterministic in (seed, round)") {
    const RoundConfig cfg{100, 10, 0.5, 77};
    REQUIRE(sample_clients(3, cfg) == sample_clients(3, cfg));
    REQUIRE(sample_clients(3, cfg) != sample_clients(4, cfg));
}

TEST_CASE("sample_clients: uniform over 2000 rounds") {
    const RoundConfig cfg{2000, 10, 0.5, 31};
    std::map<std::size_t, int> counts;
    for (int round = 0; round < 2000; ++round) {
        for (auto id : sample_clients(round, cfg)) ++counts[id];
    }
    for (std::size_t c = 0; c < 10; ++c) {
        REQUIRE(counts[c] >= 900);
        REQUIRE(counts[c] <= 1100);
    }
}

TEST_CASE("fedavg_aggregate: single client is the identity") {
    std::vector<ClientUpdate> u;
    u.push_back({0, two_values(1.5, -2.0), 10});
    const ParamVector out = fedavg_aggregate(u);
    REQUIRE(out == u.front().params);
}

TEST_CASE("fedavg_aggregate: equal weights give the plain mean") {
    std::vector<ClientUpdate> u;
    u.push_back({0, two_values(1.0, 3.0), 4});
    u.push_back({1, two_values(3.0, 5.0), 4});
    const ParamVector out = fedavg_aggregate(u);
    REQUIRE(out.segment("w")[0] == Catch::Approx(2.0));
    REQUIRE(out.segment("w")[1] == Catch::Approx(4.0));
}

TEST_CASE("fedavg_aggregate: 1-3 weighting hand check") {
    std::vector<ClientUpdate> u;
    u.push_back({0, two_values(1.0, 3.0), 1});
    u.push_back({1, two_values(3.0, 5.0), 3});
    const ParamVector out = fedavg_aggregate(u);
    REQUIRE(out.segment("w")[0] == Catch::Approx(2.5));
    REQUIRE(out.segment("w")[1] == Catch::Approx(4.5));
}

TEST_CASE("fedavg_aggregate: permuting inputs yields identical bits") {
    std::vector<ClientUpdate> u;
    Rng rng(41);
    for (std::size_t c = 0; c < 6; ++c) {
        u.push_back({c, two_values(rng.normal(), rng.normal()), 1 + rng.uniform_int(50)});
    }
    const ParamVector a = fedavg_aggregate(u);
    std::reverse(u.begin(), u.end());
    const ParamVector b = fedavg_aggregate(u);
    REQUIRE(a == b);
}

TEST_CASE("fedavg_aggregate: errors") {
    REQUIRE_THROWS_AS(fedavg_aggregate({}), EmptyInputError);
    std::vector<ClientUpdate> zero;
    zero.push_back({0, two_values(1.0, 2.0), 0});
    REQUIRE_THROWS_AS(fedavg_aggregate(zero), ConfigError);
    std::vector<ClientUpdate> mismatch;
    mismatch.push_back({0, two_values(1.0, 2.0), 1});
    ParamVector other;
    other.add_segment("x", {2});
    mismatch.push_back({1, other, 1});
    REQUIRE_THROWS_AS(fedavg_aggregate(mismatch), ShapeError);
}

TEST_CASE("run_federation: rounds=0 rejected") {
    SmallRun r = make_small_run(1, 1, 1.0, 7);
    r.config.rounds = 0;
    EnergyLedger ledger;
    FederationInputs inputs{&r.train, &r.validation, {}};
    REQUIRE_THROWS_AS(
        run_federation(r.config, r.spec, r.assignment, Strategy::Full, r.hyper, ledger, inputs),
        ConfigError);
}

TEST_CASE("run_federation: single client, full participation equals local_train") {
    SmallRun r = make_small_run(1, 1, 1.0, 7);
    EnergyLedger ledger;
    FederationInputs inputs{&r.train, &r.validation, {}};
    const FederationResult res =
        run_federation(r.config, r.spec, r.assignment, Strategy::Full, r.hyper, ledger, inputs);

    // the same client stream the round loop uses
    Rng init_rng(derive_stream(r.config.seed, "init"));
    const ParamVector start = init_params(r.spec, init_rng);
    Rng client_rng(derive_stream(r.config.seed, 1, 1));
    std::vector<LabeledExample> data;
    for (auto i : r.assignment.client_indices[0]) data.push_back(r.train.examples[i]);
    const ParamVector expect = local_train(r.spec, start, data, r.hyper.train, client_rng);
    REQUIRE(res.global == expect);
}

TEST_CASE("run_federation: history complete with all metric fields") {
    SmallRun r = make_small_run(4, 5, 0.5, 11);
    EnergyLedger ledger;
    FederationInputs inputs{&r.train, &r.validation, {}};
    const FederationResult res =
        run_federation(r.config, r.spec, r.assignment, Strategy::Full, r.hyper, ledger, inputs);
    REQUIRE(res.history.size() == 5);
    for (const auto& rec : res.history) {
        REQUIRE(rec.selected_clients.size() == r.config.clients_per_round());
        REQUIRE(rec.accuracy >= 0.0);
        REQUIRE(rec.log_loss >= 0.0);
        REQUIRE(rec.roc_auc.has_value());
        REQUIRE(rec.bytes > 0);
        REQUIRE(rec.energy_wh > 0.0);
    }
}

TEST_CASE("run_federation: identical seeds give identical round records") {
    SmallRun r = make_small_run(6, 4, 0.5, 13);
    auto run_once = [&]() {
        EnergyLedger ledger;
        FederationInputs inputs{&r.train, &r.validation, {}};
        return run_federation(r.config, r.spec, r.assignment, Strategy::Full, r.hyper, ledger,
                              inputs);
    };
    const FederationResult a = run_once();
    const FederationResult b = run_once();
    REQUIRE(a.global == b.global);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        REQUIRE(a.history[i].selected_clients == b.history[i].selected_clients);
        REQUIRE(a.history[i].accuracy == b.history[i].accuracy);
        REQUIRE(a.history[i].log_loss == b.history[i].log_loss);
        REQUIRE(a.history[i].bytes == b.history[i].bytes);
    }
}

TEST_CASE("run_federation: IID separable task converges near the central oracle") {
    SmallRun r = make_small_run(10, 20, 0.5, 17, 4000);

    // central oracle: train one model on the whole train split
    Rng init_rng(1);
    ParamVector central = init_params(r.spec, init_rng);
    TrainOptions opt;
    opt.epochs = 20;
    Rng train_rng(2);
    central = local_train(r.spec, central, r.train.examples, opt, train_rng);
    std::size_t correct = 0;
    for (const auto& ex : r.validation.examples) {
        if ((forward(r.spec, central, ex.features)[1] >= 0.5 ? 1 : 0) == ex.label) ++correct;
    }
    const double oracle = static_cast<double>(correct) / r.validation.size();
    REQUIRE(oracle >= 0.95);

    EnergyLedger ledger;
    FederationInputs inputs{&r.train, &r.validation, {}};
    const FederationResult res =
        run_federation(r.config, r.spec, r.assignment, Strategy::Full, r.hyper, ledger, inputs);
    REQUIRE(res.history.back().accuracy >= oracle - 0.02);
}

TEST_CASE("run_federation: ledger is charged every round") {
    SmallRun r = make_small_run(4, 3, 0.5, 19);
    EnergyLedger ledger;
    FederationInputs inputs{&r.train, &r.validation, {}};
    const FederationResult res =
        run_federation(r.config, r.spec, r.assignment, Strategy::Full, r.hyper, ledger, inputs);
    double history_wh = 0.0;
    std::uint64_t history_bytes = 0;
    for (const auto& rec : res.history) {
        history_wh += rec.energy_wh;
        history_bytes += rec.bytes;
    }
    REQUIRE(ledger.total_energy_wh() == Catch::Approx(history_wh).margin(1e-9));
    REQUIRE(ledger.total_bytes() == history_bytes);
}
