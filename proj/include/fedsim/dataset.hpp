#pragma once

#include <cstddef>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct LabeledExample {
    std::vector<double> features;
    int label = 0;
    int domain = 0;
};

/// A homogeneous set of labeled feature vectors with domain tags.
struct LabeledDataset {
    std::vector<LabeledExample> examples;
    int num_classes = 0;
    int num_domains = 1;

    std::size_t size() const { return examples.size(); }

    std::size_t feature_dim() const {
        return examples.empty() ? 0 : examples.front().features.size();
    }

    void validate() const {
        const std::size_t d = feature_dim();
        for (const auto& ex : examples) {
            if (ex.label < 0 || ex.label >= num_classes) throw ShapeError("label out of range");
            if (ex.domain < 0 || ex.domain >= num_domains) throw ShapeError("domain out of range");
            if (ex.features.size() != d) throw ShapeError("inhomogeneous feature dimension");
        }
    }
};

struct SynthParams {
    std::size_t n = 4000;
    std::size_t dim = 16;
    int num_classes = 2;
    int num_domains = 2;
    double domain_shift = 1.0;
    double class_separation = 2.0;
};

/// Class-conditional Gaussian mixture with a per-domain mean shift.
/// Classes and domains are exactly balanced: example i falls in cell
/// i mod (C*D). Class c pushes the feature mean along axis (c mod dim),
/// domain e along axis ((C + e) mod dim), so class and domain structure
/// stay linearly separable for small C + D.
inline LabeledDataset synth_dataset(const SynthParams& p, Rng& rng) {
    if (p.n < 1 || p.dim < 1 || p.num_classes < 1 || p.num_domains < 1) {
        throw ConfigError("synth_dataset: n, dim, classes, domains must all be >= 1");
    }
    LabeledDataset ds;
    ds.num_classes = p.num_classes;
    ds.num_domains = p.num_domains;
    ds.examples.reserve(p.n);
    const std::size_t cells = static_cast<std::size_t>(p.num_classes) * p.num_domains;
    for (std::size_t i = 0; i < p.n; ++i) {
        const std::size_t cell = i % cells;
        const int label = static_cast<int>(cell % p.num_classes);
        const int domain = static_cast<int>(cell / p.num_classes);
        LabeledExample ex;
        ex.label = label;
        ex.domain = domain;
        ex.features.resize(p.dim);
        for (std::size_t j = 0; j < p.dim; ++j) ex.features[j] = rng.normal();
        ex.features[static_cast<std::size_t>(label) % p.dim] += p.class_separation;
        ex.features[(static_cast<std::size_t>(p.num_classes) + domain) % p.dim] += p.domain_shift;
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

}  // namespace fedsim
