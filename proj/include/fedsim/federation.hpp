#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/greenledger.hpp"
#include "fedsim/lora.hpp"
#include "fedsim/metrics_core.hpp"
#include "fedsim/model.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/partition.hpp"
#include "fedsim/personalization.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct RoundConfig {
    int rounds = 20;
    std::size_t n_clients = 10;
    double participation_fraction = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (rounds < 1) throw ConfigError("rounds must be >= 1");
        if (n_clients < 1) throw ConfigError("n_clients must be >= 1");
        if (!(participation_fraction > 0.0 && participation_fraction <= 1.0)) {
            throw ConfigError("participation_fraction must be in (0, 1]");
        }
    }

    std::size_t clients_per_round() const {
        return static_cast<std::size_t>(
            std::ceil(participation_fraction * static_cast<double>(n_clients)));
    }
};

struct RoundRecord {
    int round = 0;
    std::vector<std::size_t> selected_clients;
    double accuracy = 0.0;
    double f1 = 0.0;
    std::optional<double> roc_auc;
    double log_loss = 0.0;
    std::uint64_t bytes = 0;
    double energy_wh = 0.0;
    double max_update_norm = 0.0;  // largest post-clip payload norm (lora runs)
};

/// Uniform sampling without replacement of ceil(n * fraction) clients.
/// Deterministic in (seed, round) regardless of call order.
inline std::vector<std::size_t> sample_clients(int round, const RoundConfig& config) {
    config.validate();
    const std::size_t k = config.clients_per_round();
    Rng rng(derive_stream(config.seed, "sample", static_cast<std::uint64_t>(round)));
    std::vector<std::size_t> ids(config.n_clients);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    // partial Fisher-Yates
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_int(ids.size() - i);
        std::swap(ids[i], ids[j]);
    }
    ids.resize(k);
    std::sort(ids.begin(), ids.end());
    return ids;
}

struct ClientUpdate {
    std::size_t client_id = 0;
    ParamVector params;
    std::size_t n = 0;
};

/// Sample-count-weighted mean of client parameters. Summation runs in
/// ascending client-id order, so any input permutation yields identical
/// bits.
inline ParamVector fedavg_aggregate(std::vector<ClientUpdate> updates) {
    if (updates.empty()) throw EmptyInputError("fedavg_aggregate: no updates");
    std::sort(updates.begin(), updates.end(),
              [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
    const ParamVector& ref = updates.front().params;
    double total = 0.0;
    for (const auto& u : updates) {
        if (!u.params.same_layout(ref)) throw ShapeError("fedavg_aggregate: layout mismatch");
        total += static_cast<double>(u.n);
    }
    if (total == 0.0) throw ConfigError("fedavg_aggregate: all sample counts are zero");
    ParamVector out = ref;
    std::fill(out.values().begin(), out.values().end(), 0.0);
    for (const auto& u : updates) {
        const double w = static_cast<double>(u.n) / total;
        for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += w * u.params.values()[i];
    }
    return out;
}

enum class Strategy { Full, Decoupled, Lora };

struct LoraConfig {
    std::size_t rank = 16;
    double alpha = 32.0;
    int bits = 4;
    double clip_norm = 1.0;
    double sigma = 0.0;  // gaussian noise stddev added after clipping
};

struct EnergyParams {
    double watts = 250.0;
    double seconds_per_sample = 0.01;
};

struct FedHyper {
    TrainOptions train;
    LoraConfig lora;
    EnergyParams energy;
};

struct FederationInputs {
    const LabeledDataset* train = nullptr;
    const LabeledDataset* validation = nullptr;
    // per-client validation sets; required for the decoupled strategy
    std::vector<std::vector<LabeledExample>> client_validation;
};

struct FederationResult {
    std::vector<RoundRecord> history;
    ParamVector global;  // final shared model (fedavg of last round's clients)
    std::vector<ParamVector> client_heads;              // decoupled only
    std::vector<PersonalizedEvaluation> personalized;   // decoupled only, one per round
    std::vector<LoraAdapter> adapters;                  // lora only, final global adapters
};

namespace detail {

inline unsigned worker_threads() {
    if (const char* env = std::getenv("FEDSIM_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return 1;
}

// Run fn(i) for i in [0, n) on up to worker_threads() threads. Each call
// writes only its own slot, so scheduling cannot change results.
template <typename Fn>
inline void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned threads = std::min<std::size_t>(worker_threads(), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

struct EvalResult {
    double accuracy = 0.0;
    double f1 = 0.0;
    std::optional<double> roc_auc;
    double log_loss = 0.0;
};

inline EvalResult evaluate_model(const ModelSpec& spec, const ParamVector& params,
                                 std::span<const LabeledExample> val) {
    if (val.empty()) throw EmptyInputError("evaluate_model: empty validation set");
    if (spec.num_classes == 2) {
        std::vector<int> y;
        std::vector<double> s;
        y.reserve(val.size());
        s.reserve(val.size());
        for (const auto& ex : val) {
            y.push_back(ex.label);
            s.push_back(forward(spec, params, ex.features)[1]);
        }
        const BinaryMetrics m = binary_metrics_core(y, s, 0.5);
        return {m.accuracy, m.f1, m.roc_auc, m.log_loss};
    }
    // multiclass: accuracy, macro F1 over confusion counts, NLL; no AUC
    const auto C = static_cast<std::size_t>(spec.num_classes);
    std::vector<std::size_t> tp(C, 0), fp(C, 0), fn(C, 0);
    double nll = 0.0;
    std::size_t correct = 0;
    for (const auto& ex : val) {
        const auto probs = forward(spec, params, ex.features);
        const auto pred = static_cast<std::size_t>(
            std::max_element(probs.begin(), probs.end()) - probs.begin());
        const auto truth = static_cast<std::size_t>(ex.label);
        if (pred == truth) {
            ++correct;
            ++tp[truth];
        } else {
            ++fp[pred];
            ++fn[truth];
        }
        nll -= std::log(clip_prob(probs[truth]));
    }
    EvalResult r;
    const double n = static_cast<double>(val.size());
    r.accuracy = static_cast<double>(correct) / n;
    double f1_sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        const double t = static_cast<double>(tp[c]);
        const double prec = (t + fp[c]) > 0 ? t / static_cast<double>(tp[c] + fp[c]) : 0.0;
        const double rec = (t + fn[c]) > 0 ? t / static_cast<double>(tp[c] + fn[c]) : 0.0;
        f1_sum += (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    r.f1 = f1_sum / static_cast<double>(C);
    r.log_loss = nll / n;
    return r;
}

// Segments a LoRA run adapts: every matrix-shaped segment of the model.
inline std::vector<const Segment*> lora_targets(const ParamVector& params) {
    std::vector<const Segment*> targets;
    for (const auto& seg : params.segments()) {
        if (seg.shape.size() == 2) targets.push_back(&seg);
    }
    return targets;
}

// Effective full parameters: base with each target replaced by
// W + (alpha/r) B A. Bias segments come through unchanged.
inline ParamVector lora_effective_params(const ParamVector& base,
                                         const std::vector<LoraAdapter>& adapters) {
    ParamVector out = base;
    for (const auto& ad : adapters) {
        auto view = out.segment(ad.target_segment);
        const auto eff = lora_apply(base.segment(ad.target_segment), ad);
        std::copy(eff.begin(), eff.end(), view.begin());
    }
    return out;
}

// SGD on the adapter factors only; the base model stays frozen.
// Gradients w.r.t. A and B come from the chain rule through
// W_eff = W + s B A: dL/dB = s (dL/dW) A^T, dL/dA = s B^T (dL/dW).
inline std::vector<LoraAdapter> lora_local_train(const ModelSpec& spec, const ParamVector& base,
                                                 std::vector<LoraAdapter> adapters,
                                                 std::span<const LabeledExample> data,
                                                 const TrainOptions& opt, Rng& rng) {
    if (data.empty()) throw EmptyInputError("lora_local_train: empty dataset");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<LabeledExample> batch;
    for (int e = 0; e < opt.epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(start + opt.batch_size, order.size());
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
            const ParamVector eff = lora_effective_params(base, adapters);
            auto [loss, grad] = loss_and_grad(spec, eff, batch);
            (void)loss;
            for (auto& ad : adapters) {
                const auto gw = grad.segment(ad.target_segment);
                const double s = ad.scaling();
                // simultaneous update: both gradients use pre-step factors
                std::vector<double> grad_a(ad.a.size(), 0.0);
                std::vector<double> grad_b(ad.b.size(), 0.0);
                // grad_B[i][k] = s * sum_j gw[i][j] * A[k][j]
                for (std::size_t i = 0; i < ad.d_out; ++i) {
                    for (std::size_t k = 0; k < ad.rank; ++k) {
                        double g = 0.0;
                        for (std::size_t j = 0; j < ad.d_in; ++j) {
                            g += gw[i * ad.d_in + j] * ad.a[k * ad.d_in + j];
                        }
                        grad_b[i * ad.rank + k] = s * g;
                    }
                }
                // grad_A[k][j] = s * sum_i B[i][k] * gw[i][j]
                for (std::size_t k = 0; k < ad.rank; ++k) {
                    for (std::size_t j = 0; j < ad.d_in; ++j) {
                        double g = 0.0;
                        for (std::size_t i = 0; i < ad.d_out; ++i) {
                            g += ad.b[i * ad.rank + k] * gw[i * ad.d_in + j];
                        }
                        grad_a[k * ad.d_in + j] = s * g;
                    }
                }
                for (std::size_t i = 0; i < ad.a.size(); ++i) ad.a[i] -= opt.lr * grad_a[i];
                for (std::size_t i = 0; i < ad.b.size(); ++i) ad.b[i] -= opt.lr * grad_b[i];
            }
        }
    }
    return adapters;
}

}  // namespace detail

/// One communication round's client-side work for the LoRA strategy:
/// local adapter training, joint clipping of the (A, B) delta, optional
/// gaussian noise, and quantization into wire payloads.
struct LoraClientPayload {
    std::vector<QuantizedAdapterPayload> payloads;  // bits == 4 path
    std::vector<LoraAdapter> raw_deltas;            // bits >= 16 path (lossless)
    double update_norm = 0.0;                       // post-clip, pre-quantization
    std::uint64_t bytes = 0;
};

/// Runs {sample -> local train -> (clip/quantize) -> aggregate -> evaluate}
/// for `config.rounds` rounds. Fail-fast: any client error aborts the run.
inline FederationResult run_federation(const RoundConfig& config, const ModelSpec& spec,
                                       const ClientAssignment& assignment, Strategy strategy,
                                       const FedHyper& hyper, EnergyLedger& ledger,
                                       const FederationInputs& inputs) {
    config.validate();
    validate_spec(spec);
    if (!inputs.train || !inputs.validation) throw ConfigError("run_federation: datasets required");
    if (assignment.n_clients() != config.n_clients) {
        throw ConfigError("assignment does not match n_clients");
    }
    if (strategy == Strategy::Decoupled && inputs.client_validation.size() != config.n_clients) {
        throw ConfigError("decoupled strategy requires per-client validation sets");
    }

    // materialize per-client example slices once
    std::vector<std::vector<LabeledExample>> client_data(config.n_clients);
    for (std::size_t c = 0; c < config.n_clients; ++c) {
        for (auto i : assignment.client_indices[c]) {
            client_data[c].push_back(inputs.train->examples[i]);
        }
        if (client_data[c].empty()) throw ConfigError("client " + std::to_string(c) + " has no data");
    }

    Rng init_rng(derive_stream(config.seed, "init"));
    ParamVector global = init_params(spec, init_rng);
    const DecoupleMask mask = DecoupleMask::from_spec(spec);

    // decoupled: persistent per-client heads
    std::vector<ParamVector> client_heads;
    if (strategy == Strategy::Decoupled) {
        for (std::size_t c = 0; c < config.n_clients; ++c) {
            client_heads.push_back(split_params(global, mask).second);
        }
    }

    // lora: frozen base + global adapters for every matrix segment
    std::vector<LoraAdapter> global_adapters;
    if (strategy == Strategy::Lora) {
        Rng ad_rng(derive_stream(config.seed, "lora-init"));
        for (const Segment* seg : detail::lora_targets(global)) {
            global_adapters.push_back(make_adapter(seg->name, seg->shape[0], seg->shape[1],
                                                   hyper.lora.rank, hyper.lora.alpha, ad_rng));
        }
        if (global_adapters.empty()) throw ConfigError("lora strategy: model has no matrix segments");
    }

    FederationResult result;
    const std::size_t full_bytes_per_client = 4 * global.size();  // float32 on the wire
    std::size_t backbone_values = 0;
    for (const auto& seg : global.segments()) {
        if (mask.backbone_segments.count(seg.name)) backbone_values += seg.size();
    }

    for (int round = 0; round < config.rounds; ++round) {
        const std::vector<std::size_t> selected = sample_clients(round, config);
        RoundRecord rec;
        rec.round = round;
        rec.selected_clients = selected;

        std::vector<ClientUpdate> updates(selected.size());
        std::vector<LoraClientPayload> lora_payloads(selected.size());

        detail::parallel_for(selected.size(), [&](std::size_t slot) {
            const std::size_t client = selected[slot];
            Rng rng(derive_stream(config.seed, client + 1, static_cast<std::uint64_t>(round) + 1));
            const auto& data = client_data[client];

            if (strategy == Strategy::Lora) {
                std::vector<LoraAdapter> trained = detail::lora_local_train(
                    spec, global, global_adapters, data, hyper.train, rng);
                // joint delta across all adapters, clipped as one vector
                std::vector<double> delta;
                for (std::size_t t = 0; t < trained.size(); ++t) {
                    for (std::size_t i = 0; i < trained[t].a.size(); ++i) {
                        delta.push_back(trained[t].a[i] - global_adapters[t].a[i]);
                    }
                    for (std::size_t i = 0; i < trained[t].b.size(); ++i) {
                        delta.push_back(trained[t].b[i] - global_adapters[t].b[i]);
                    }
                }
                std::vector<double> clipped = clip_update(delta, hyper.lora.clip_norm);
                if (hyper.lora.sigma > 0.0) {
                    for (auto& v : clipped) v += rng.normal(0.0, hyper.lora.sigma);
                }
                LoraClientPayload& out = lora_payloads[slot];
                out.update_norm = l2_norm(clipped);
                // scatter the clipped delta back into per-target adapters
                std::size_t cursor = 0;
                for (std::size_t t = 0; t < trained.size(); ++t) {
                    LoraAdapter d = global_adapters[t];
                    for (auto& v : d.a) v = clipped[cursor++];
                    for (auto& v : d.b) v = clipped[cursor++];
                    if (hyper.lora.bits <= 8) {
                        QuantizedAdapterPayload qp;
                        qp.target_segment = d.target_segment;
                        qp.rank = d.rank;
                        qp.d_in = d.d_in;
                        qp.d_out = d.d_out;
                        qp.alpha = d.alpha;
                        qp.qa = quantize_absmax(d.a, hyper.lora.bits);
                        qp.qb = quantize_absmax(d.b, hyper.lora.bits);
                        out.payloads.push_back(std::move(qp));
                    } else {
                        out.raw_deltas.push_back(std::move(d));
                    }
                    out.bytes += adapter_payload_bytes(global_adapters[t], hyper.lora.bits);
                }
                updates[slot].client_id = client;
                updates[slot].n = data.size();
                return;
            }

            ParamVector start = global;
            if (strategy == Strategy::Decoupled) {
                start = merge_params(global, split_params(global, mask).first, client_heads[client]);
            }
            ParamVector trained = local_train(spec, start, data, hyper.train, rng);
            updates[slot] = {client, std::move(trained), data.size()};
        });

        // aggregation barrier: fixed client-id order
        std::uint64_t round_bytes = 0;
        if (strategy == Strategy::Lora) {
            std::vector<std::vector<std::pair<LoraAdapter, std::size_t>>> per_target(
                global_adapters.size());
            for (std::size_t slot = 0; slot < selected.size(); ++slot) {
                const LoraClientPayload& p = lora_payloads[slot];
                rec.max_update_norm = std::max(rec.max_update_norm, p.update_norm);
                round_bytes += p.bytes;
                for (std::size_t t = 0; t < global_adapters.size(); ++t) {
                    LoraAdapter delta = p.payloads.empty() ? p.raw_deltas[t]
                                                           : dequantize_adapter(p.payloads[t]);
                    // reconstruct the client's adapter from the global state
                    LoraAdapter client_adapter = global_adapters[t];
                    for (std::size_t i = 0; i < client_adapter.a.size(); ++i) {
                        client_adapter.a[i] += delta.a[i];
                    }
                    for (std::size_t i = 0; i < client_adapter.b.size(); ++i) {
                        client_adapter.b[i] += delta.b[i];
                    }
                    per_target[t].emplace_back(std::move(client_adapter), updates[slot].n);
                }
            }
            for (std::size_t t = 0; t < global_adapters.size(); ++t) {
                global_adapters[t] = lora_aggregate(per_target[t]);
            }
        } else if (strategy == Strategy::Decoupled) {
            std::vector<std::pair<ParamVector, std::size_t>> cp;
            for (const auto& u : updates) cp.emplace_back(u.params, u.n);
            // backbone averaged; each selected client keeps its trained head
            DecoupledAggregate agg = decoupled_aggregate(cp, mask);
            for (std::size_t slot = 0; slot < selected.size(); ++slot) {
                client_heads[selected[slot]] = agg.per_client_heads[slot];
            }
            // the shared reference model also averages heads (plain FedAvg)
            ParamVector shared = fedavg_aggregate(updates);
            global = merge_params(global, split_params(agg.global, mask).first,
                                  split_params(shared, mask).second);
            round_bytes = selected.size() * 4 * backbone_values;
        } else {
            global = fedavg_aggregate(updates);
            round_bytes = selected.size() * full_bytes_per_client;
        }

        // evaluation on the global validation split
        const ParamVector eval_params =
            strategy == Strategy::Lora ? detail::lora_effective_params(global, global_adapters)
                                       : global;
        const detail::EvalResult ev =
            detail::evaluate_model(spec, eval_params, inputs.validation->examples);
        rec.accuracy = ev.accuracy;
        rec.f1 = ev.f1;
        rec.roc_auc = ev.roc_auc;
        rec.log_loss = ev.log_loss;
        rec.bytes = round_bytes;

        // energy: modeled per-sample training cost on each selected client
        double round_wh = 0.0;
        for (std::size_t slot = 0; slot < selected.size(); ++slot) {
            const std::size_t client = selected[slot];
            const double duration = hyper.energy.seconds_per_sample *
                                    static_cast<double>(hyper.train.epochs) *
                                    static_cast<double>(client_data[client].size());
            ledger.charge("train", client, hyper.energy.watts, duration, 0);
            round_wh += meter_energy(hyper.energy.watts, duration);
        }
        ledger.charge("communication", std::nullopt, 0.0, 0.0, round_bytes);
        rec.energy_wh = round_wh;

        if (strategy == Strategy::Decoupled) {
            const ParamVector backbone = split_params(global, mask).first;
            result.personalized.push_back(
                personalized_evaluate(spec, backbone, client_heads, inputs.client_validation));
        }
        result.history.push_back(std::move(rec));
    }

    result.global = std::move(global);
    result.client_heads = std::move(client_heads);
    result.adapters = std::move(global_adapters);
    return result;
}

}  // namespace fedsim
