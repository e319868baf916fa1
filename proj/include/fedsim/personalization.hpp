#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/metrics_core.hpp"
#include "fedsim/model.hpp"
#include "fedsim/param_vector.hpp"

namespace fedsim {

/// Partition of a model's segments into a globally aggregated backbone
/// and client-local head.
struct DecoupleMask {
    std::set<std::string> backbone_segments;
    std::set<std::string> head_segments;

    void validate_against(const ParamVector& params) const {
        for (const auto& name : backbone_segments) {
            if (head_segments.count(name)) throw MaskError("segment in both sets: " + name);
        }
        for (const auto& seg : params.segments()) {
            const bool in_backbone = backbone_segments.count(seg.name) > 0;
            const bool in_head = head_segments.count(seg.name) > 0;
            if (!in_backbone && !in_head) throw MaskError("segment not covered: " + seg.name);
        }
        for (const auto& name : backbone_segments) params.find(name);
        for (const auto& name : head_segments) params.find(name);
    }

    static DecoupleMask from_spec(const ModelSpec& spec) {
        DecoupleMask m;
        m.head_segments = spec.head_segments;
        const ParamVector layout = make_params(spec);
        for (const auto& seg : layout.segments()) {
            if (!m.head_segments.count(seg.name)) m.backbone_segments.insert(seg.name);
        }
        return m;
    }
};

/// Splits params into backbone and head sub-vectors, each preserving
/// original segment order. Concatenating them back (in original order)
/// reconstructs the input bit-exactly.
inline std::pair<ParamVector, ParamVector> split_params(const ParamVector& params,
                                                        const DecoupleMask& mask) {
    mask.validate_against(params);
    ParamVector backbone, head;
    for (const auto& seg : params.segments()) {
        ParamVector& dst = mask.backbone_segments.count(seg.name) ? backbone : head;
        dst.add_segment(seg.name, seg.shape);
        auto view = dst.segment(seg.name);
        auto src = params.segment(seg.name);
        std::copy(src.begin(), src.end(), view.begin());
    }
    return {std::move(backbone), std::move(head)};
}

/// Inverse of split_params for a given full layout.
inline ParamVector merge_params(const ParamVector& layout, const ParamVector& backbone,
                                const ParamVector& head) {
    ParamVector out = layout;
    for (const auto& seg : out.segments()) {
        const ParamVector& src = backbone.has_segment(seg.name) ? backbone : head;
        auto view = out.segment(seg.name);
        auto from = src.segment(seg.name);
        std::copy(from.begin(), from.end(), view.begin());
    }
    return out;
}

struct DecoupledAggregate {
    ParamVector global;                    // full layout; head segments weighted-averaged too,
                                           // but consumers use per_client_heads for heads
    std::vector<ParamVector> per_client_heads;
};

/// FedAvg on backbone segments only; every client keeps its own head.
/// With an all-backbone mask this reduces bit-exactly to fedavg_aggregate.
inline DecoupledAggregate decoupled_aggregate(
    const std::vector<std::pair<ParamVector, std::size_t>>& client_params,
    const DecoupleMask& mask) {
    if (client_params.empty()) throw EmptyInputError("decoupled_aggregate: no clients");
    const ParamVector& ref = client_params.front().first;
    mask.validate_against(ref);
    double total = 0.0;
    for (const auto& [p, n] : client_params) {
        if (!p.same_layout(ref)) throw ShapeError("decoupled_aggregate: layout mismatch");
        total += static_cast<double>(n);
    }
    if (total == 0.0) throw ConfigError("decoupled_aggregate: all sample counts are zero");

    DecoupledAggregate out;
    out.global = ref;
    for (const auto& seg : ref.segments()) {
        if (!mask.backbone_segments.count(seg.name)) continue;
        auto dst = out.global.segment(seg.name);
        std::fill(dst.begin(), dst.end(), 0.0);
        for (const auto& [p, n] : client_params) {
            const double w = static_cast<double>(n) / total;
            auto src = p.segment(seg.name);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w * src[i];
        }
    }
    for (const auto& [p, n] : client_params) {
        out.per_client_heads.push_back(split_params(p, mask).second);
    }
    return out;
}

struct PerClientMetrics {
    std::size_t client_id = 0;
    std::size_t n_val = 0;
    BinaryMetrics metrics;
};

struct PersonalizedEvaluation {
    std::vector<PerClientMetrics> per_client;
    BinaryMetrics weighted_mean;  // sample-weighted across clients
};

/// Evaluates global backbone + each client's own head on that client's
/// validation examples. Binary metrics; score is p(class 1).
inline PersonalizedEvaluation personalized_evaluate(
    const ModelSpec& spec, const ParamVector& global_backbone,
    const std::vector<ParamVector>& client_heads,
    const std::vector<std::vector<LabeledExample>>& client_val_sets) {
    if (client_heads.size() != client_val_sets.size()) {
        throw ConfigError("personalized_evaluate: one head per client required");
    }
    const ParamVector layout = make_params(spec);
    PersonalizedEvaluation out;
    std::size_t total = 0;
    double acc = 0.0, f1 = 0.0, auc = 0.0, ll = 0.0;
    bool any_auc_undefined = false;
    for (std::size_t c = 0; c < client_heads.size(); ++c) {
        const ParamVector full = merge_params(layout, global_backbone, client_heads[c]);
        std::vector<int> y;
        std::vector<double> s;
        for (const auto& ex : client_val_sets[c]) {
            y.push_back(ex.label);
            s.push_back(forward(spec, full, ex.features)[1]);
        }
        const BinaryMetrics m = binary_metrics_core(y, s, 0.5);
        out.per_client.push_back({c, y.size(), m});
        const double w = static_cast<double>(y.size());
        total += y.size();
        acc += w * m.accuracy;
        f1 += w * m.f1;
        ll += w * m.log_loss;
        if (m.roc_auc) {
            auc += w * *m.roc_auc;
        } else {
            any_auc_undefined = true;
        }
    }
    if (total == 0) throw EmptyInputError("personalized_evaluate: no validation examples");
    const double inv = 1.0 / static_cast<double>(total);
    out.weighted_mean.accuracy = acc * inv;
    out.weighted_mean.f1 = f1 * inv;
    out.weighted_mean.log_loss = ll * inv;
    if (!any_auc_undefined) out.weighted_mean.roc_auc = auc * inv;
    return out;
}

}  // namespace fedsim
