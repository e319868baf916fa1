#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class ModelKind { Logistic, Mlp };

/// Architecture description for the small client classifiers.
/// head_segments marks the client-local part used by the decoupled
/// (personalized) aggregation strategy.
struct ModelSpec {
    ModelKind kind = ModelKind::Logistic;
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;  // empty for logistic
    int num_classes = 2;
    std::set<std::string> head_segments;

    static ModelSpec logistic(std::size_t d, int classes) {
        ModelSpec s;
        s.kind = ModelKind::Logistic;
        s.input_dim = d;
        s.num_classes = classes;
        s.head_segments = {"weight", "bias"};
        return s;
    }

    static ModelSpec mlp(std::size_t d, std::vector<std::size_t> hidden, int classes) {
        ModelSpec s;
        s.kind = ModelKind::Mlp;
        s.input_dim = d;
        s.hidden_dims = std::move(hidden);
        s.num_classes = classes;
        s.head_segments = {"head.weight", "head.bias"};
        return s;
    }
};

/// Zero-initialized ParamVector matching the spec's layout.
/// Logistic: weight (C x d), bias (C).
/// MLP: layerK.weight / layerK.bias per hidden layer, then head.weight
/// (C x h_last), head.bias (C).
inline ParamVector make_params(const ModelSpec& spec) {
    ParamVector p;
    if (spec.kind == ModelKind::Logistic) {
        p.add_segment("weight", {static_cast<std::size_t>(spec.num_classes), spec.input_dim});
        p.add_segment("bias", {static_cast<std::size_t>(spec.num_classes)});
        return p;
    }
    if (spec.hidden_dims.empty()) throw ConfigError("mlp requires at least one hidden layer");
    std::size_t in = spec.input_dim;
    for (std::size_t k = 0; k < spec.hidden_dims.size(); ++k) {
        const std::size_t out = spec.hidden_dims[k];
        const std::string base = "layer" + std::to_string(k);
        p.add_segment(base + ".weight", {out, in});
        p.add_segment(base + ".bias", {out});
        in = out;
    }
    p.add_segment("head.weight", {static_cast<std::size_t>(spec.num_classes), in});
    p.add_segment("head.bias", {static_cast<std::size_t>(spec.num_classes)});
    return p;
}

inline void validate_spec(const ModelSpec& spec) {
    if (spec.input_dim == 0) throw ConfigError("input_dim must be positive");
    if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (spec.kind == ModelKind::Mlp && spec.head_segments.empty()) {
        throw ConfigError("mlp requires non-empty head_segments");
    }
    const ParamVector layout = make_params(spec);
    for (const auto& name : spec.head_segments) {
        if (!layout.has_segment(name)) throw ConfigError("head segment not in model: " + name);
    }
}

inline ParamVector init_params(const ModelSpec& spec, Rng& rng, double stddev = 0.1) {
    ParamVector p = make_params(spec);
    for (const auto& seg : p.segments()) {
        if (seg.shape.size() < 2) continue;  // biases stay zero
        auto view = p.segment(seg.name);
        for (auto& v : view) v = rng.normal(0.0, stddev);
    }
    return p;
}

namespace detail {

inline void softmax_inplace(std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto& z : logits) {
        z = std::exp(z - m);
        sum += z;
    }
    for (auto& z : logits) z /= sum;
}

// y = W x + b, W is (rows x cols) row-major.
inline void affine(std::span<const double> w, std::span<const double> b,
                   std::span<const double> x, std::vector<double>& y) {
    const std::size_t rows = b.size();
    const std::size_t cols = x.size();
    y.assign(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = b[i];
        const double* row = w.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

// Per-layer activations of one forward pass, kept for backprop.
struct ForwardTrace {
    std::vector<std::vector<double>> hidden;  // post-tanh activations
    std::vector<double> probs;
};

inline ForwardTrace forward_trace(const ModelSpec& spec, const ParamVector& params,
                                  std::span<const double> x) {
    if (x.size() != spec.input_dim) {
        throw ShapeError("feature dimension " + std::to_string(x.size()) +
                         " does not match input_dim " + std::to_string(spec.input_dim));
    }
    ForwardTrace t;
    std::vector<double> cur(x.begin(), x.end());
    if (spec.kind == ModelKind::Mlp) {
        for (std::size_t k = 0; k < spec.hidden_dims.size(); ++k) {
            const std::string base = "layer" + std::to_string(k);
            std::vector<double> z;
            affine(params.segment(base + ".weight"), params.segment(base + ".bias"), cur, z);
            for (auto& v : z) v = std::tanh(v);
            t.hidden.push_back(z);
            cur = std::move(z);
        }
        affine(params.segment("head.weight"), params.segment("head.bias"), cur, t.probs);
    } else {
        affine(params.segment("weight"), params.segment("bias"), cur, t.probs);
    }
    softmax_inplace(t.probs);
    return t;
}

}  // namespace detail

/// Class-probability vector for one input.
inline std::vector<double> forward(const ModelSpec& spec, const ParamVector& params,
                                   std::span<const double> features) {
    return detail::forward_trace(spec, params, features).probs;
}

/// Mean cross-entropy over the batch and its analytic gradient, with
/// the same segment layout as params.
inline std::pair<double, ParamVector> loss_and_grad(const ModelSpec& spec,
                                                    const ParamVector& params,
                                                    std::span<const LabeledExample> batch) {
    if (batch.empty()) throw EmptyInputError("loss_and_grad: empty batch");
    ParamVector grad = make_params(spec);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    for (const auto& ex : batch) {
        const detail::ForwardTrace t = detail::forward_trace(spec, params, ex.features);
        const double p_true = std::max(t.probs[static_cast<std::size_t>(ex.label)], 1e-300);
        loss -= std::log(p_true) * inv_n;

        // dL/dlogits = probs - onehot(label)
        std::vector<double> delta = t.probs;
        delta[static_cast<std::size_t>(ex.label)] -= 1.0;
        for (auto& v : delta) v *= inv_n;

        if (spec.kind == ModelKind::Logistic) {
            auto gw = grad.segment("weight");
            auto gb = grad.segment("bias");
            for (std::size_t i = 0; i < delta.size(); ++i) {
                gb[i] += delta[i];
                for (std::size_t j = 0; j < spec.input_dim; ++j) {
                    gw[i * spec.input_dim + j] += delta[i] * ex.features[j];
                }
            }
            continue;
        }

        // Backprop through the head and each tanh layer.
        const std::size_t layers = spec.hidden_dims.size();
        const std::vector<double>& last = t.hidden.back();
        auto gw = grad.segment("head.weight");
        auto gb = grad.segment("head.bias");
        for (std::size_t i = 0; i < delta.size(); ++i) {
            gb[i] += delta[i];
            for (std::size_t j = 0; j < last.size(); ++j) {
                gw[i * last.size() + j] += delta[i] * last[j];
            }
        }
        // delta w.r.t. the activations of the last hidden layer
        std::vector<double> dact(last.size(), 0.0);
        {
            auto w = params.segment("head.weight");
            for (std::size_t i = 0; i < delta.size(); ++i) {
                for (std::size_t j = 0; j < last.size(); ++j) {
                    dact[j] += delta[i] * w[i * last.size() + j];
                }
            }
        }
        for (std::size_t k = layers; k-- > 0;) {
            const std::string base = "layer" + std::to_string(k);
            const std::vector<double>& act = t.hidden[k];
            // through tanh: dz = dact * (1 - act^2)
            std::vector<double> dz(act.size());
            for (std::size_t j = 0; j < act.size(); ++j) dz[j] = dact[j] * (1.0 - act[j] * act[j]);

            const std::vector<double> empty;
            std::span<const double> input =
                (k == 0) ? std::span<const double>(ex.features)
                         : std::span<const double>(t.hidden[k - 1]);
            auto gwk = grad.segment(base + ".weight");
            auto gbk = grad.segment(base + ".bias");
            for (std::size_t i = 0; i < dz.size(); ++i) {
                gbk[i] += dz[i];
                for (std::size_t j = 0; j < input.size(); ++j) {
                    gwk[i * input.size() + j] += dz[i] * input[j];
                }
            }
            if (k > 0) {
                auto w = params.segment(base + ".weight");
                dact.assign(input.size(), 0.0);
                for (std::size_t i = 0; i < dz.size(); ++i) {
                    for (std::size_t j = 0; j < input.size(); ++j) {
                        dact[j] += dz[i] * w[i * input.size() + j];
                    }
                }
            }
        }
    }
    return {loss, std::move(grad)};
}

struct TrainOptions {
    int epochs = 1;
    double lr = 0.1;
    std::size_t batch_size = 32;
};

/// Mini-batch SGD over the given examples. Pure: returns an updated
/// copy, the input is untouched. Batch order reshuffles each epoch from
/// the caller's RNG stream, so identical seeds give identical bits.
inline ParamVector local_train(const ModelSpec& spec, const ParamVector& params,
                               std::span<const LabeledExample> data, const TrainOptions& opt,
                               Rng& rng) {
    if (data.empty()) throw EmptyInputError("local_train: empty dataset");
    if (opt.epochs < 1) throw ConfigError("local_train: epochs must be >= 1");
    if (opt.lr < 0.0) throw ConfigError("local_train: lr must be non-negative");
    if (opt.batch_size < 1) throw ConfigError("local_train: batch_size must be >= 1");

    ParamVector out = params;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<LabeledExample> batch;
    for (int e = 0; e < opt.epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(start + opt.batch_size, order.size());
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
            auto [loss, grad] = loss_and_grad(spec, out, batch);
            (void)loss;
            for (std::size_t i = 0; i < out.size(); ++i) {
                out.values()[i] -= opt.lr * grad.values()[i];
            }
        }
    }
    return out;
}

}  // namespace fedsim
