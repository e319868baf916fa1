#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

/// Which training examples each client holds, plus per-client label and
/// domain histograms. Index lists are disjoint and cover the train set.
struct ClientAssignment {
    std::vector<std::vector<std::size_t>> client_indices;
    std::vector<std::vector<std::size_t>> label_histogram;   // [client][class]
    std::vector<std::vector<std::size_t>> domain_histogram;  // [client][domain]

    std::size_t n_clients() const { return client_indices.size(); }
};

/// Per-class random split preserving class proportions on both sides.
inline std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& data,
                                                                  double train_fraction,
                                                                  Rng& rng) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must be in (0, 1)");
    }
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.num_classes));
    for (std::size_t i = 0; i < data.size(); ++i) {
        by_class[static_cast<std::size_t>(data.examples[i].label)].push_back(i);
    }
    for (int c = 0; c < data.num_classes; ++c) {
        if (by_class[static_cast<std::size_t>(c)].empty()) {
            throw StratificationError("class " + std::to_string(c) + " has no examples");
        }
    }
    LabeledDataset train, validation;
    train.num_classes = validation.num_classes = data.num_classes;
    train.num_domains = validation.num_domains = data.num_domains;
    for (auto& idx : by_class) {
        rng.shuffle(idx);
        const auto n_train = static_cast<std::size_t>(
            std::llround(train_fraction * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_train ? train : validation).examples.push_back(data.examples[idx[i]]);
        }
    }
    return {std::move(train), std::move(validation)};
}

/// Domain partitioning plus Dirichlet label skew. Clients only receive
/// examples from domains mapped to them; within each domain, per-class
/// proportions over that domain's clients are drawn from Dirichlet(alpha).
/// Rounded remainders go round-robin; an empty client takes one example
/// from the largest so every client stays trainable.
inline ClientAssignment domain_dirichlet_partition(const LabeledDataset& train,
                                                   std::size_t n_clients,
                                                   const std::vector<std::vector<std::size_t>>& domain_map,
                                                   double alpha, Rng& rng) {
    if (alpha <= 0.0) throw ConfigError("dirichlet alpha must be positive");
    if (domain_map.size() != static_cast<std::size_t>(train.num_domains)) {
        throw ConfigError("domain_map must cover all domains");
    }
    for (std::size_t d = 0; d < domain_map.size(); ++d) {
        bool populated = false;
        for (const auto& ex : train.examples) {
            if (static_cast<std::size_t>(ex.domain) == d) {
                populated = true;
                break;
            }
        }
        if (populated && domain_map[d].empty()) {
            throw ConfigError("domain " + std::to_string(d) + " has examples but no clients");
        }
        for (auto c : domain_map[d]) {
            if (c >= n_clients) throw ConfigError("domain_map references client out of range");
        }
    }

    ClientAssignment out;
    out.client_indices.resize(n_clients);
    out.label_histogram.assign(n_clients,
                               std::vector<std::size_t>(static_cast<std::size_t>(train.num_classes), 0));
    out.domain_histogram.assign(n_clients,
                                std::vector<std::size_t>(static_cast<std::size_t>(train.num_domains), 0));

    // all skew proportions are drawn first, so they depend only on the
    // stream and the partition geometry. Partitioning two datasets (say a
    // train and a validation split) with the same stream then gives every
    // client the same per-class proportions on both.
    std::vector<std::vector<std::vector<double>>> proportions(domain_map.size());
    for (std::size_t d = 0; d < domain_map.size(); ++d) {
        if (domain_map[d].empty()) continue;
        proportions[d].resize(static_cast<std::size_t>(train.num_classes));
        for (int c = 0; c < train.num_classes; ++c) {
            proportions[d][static_cast<std::size_t>(c)] =
                rng.dirichlet(alpha, domain_map[d].size());
        }
    }

    for (std::size_t d = 0; d < domain_map.size(); ++d) {
        const auto& clients = domain_map[d];
        if (clients.empty()) continue;
        for (int c = 0; c < train.num_classes; ++c) {
            std::vector<std::size_t> pool;
            for (std::size_t i = 0; i < train.size(); ++i) {
                const auto& ex = train.examples[i];
                if (static_cast<std::size_t>(ex.domain) == d && ex.label == c) pool.push_back(i);
            }
            if (pool.empty()) continue;
            rng.shuffle(pool);
            const std::vector<double>& prop = proportions[d][static_cast<std::size_t>(c)];
            std::vector<std::size_t> counts(clients.size());
            std::size_t assigned = 0;
            for (std::size_t k = 0; k < clients.size(); ++k) {
                counts[k] = static_cast<std::size_t>(
                    std::floor(prop[k] * static_cast<double>(pool.size())));
                assigned += counts[k];
            }
            // remainder round-robin over the domain's clients
            for (std::size_t k = 0; assigned < pool.size(); k = (k + 1) % clients.size()) {
                ++counts[k];
                ++assigned;
            }
            std::size_t cursor = 0;
            for (std::size_t k = 0; k < clients.size(); ++k) {
                for (std::size_t j = 0; j < counts[k]; ++j) {
                    out.client_indices[clients[k]].push_back(pool[cursor++]);
                }
            }
        }
    }

    // minimum client size floor of 1
    for (std::size_t c = 0; c < n_clients; ++c) {
        if (!out.client_indices[c].empty()) continue;
        std::size_t donor = 0;
        for (std::size_t k = 1; k < n_clients; ++k) {
            if (out.client_indices[k].size() > out.client_indices[donor].size()) donor = k;
        }
        if (out.client_indices[donor].empty()) {
            throw ConfigError("cannot satisfy minimum client size: no examples to assign");
        }
        out.client_indices[c].push_back(out.client_indices[donor].back());
        out.client_indices[donor].pop_back();
    }

    for (std::size_t c = 0; c < n_clients; ++c) {
        std::sort(out.client_indices[c].begin(), out.client_indices[c].end());
        for (auto i : out.client_indices[c]) {
            const auto& ex = train.examples[i];
            ++out.label_histogram[c][static_cast<std::size_t>(ex.label)];
            ++out.domain_histogram[c][static_cast<std::size_t>(ex.domain)];
        }
    }
    return out;
}

/// CSV rows: client_id, example_index, label, domain.
inline std::string assignment_to_csv(const ClientAssignment& a, const LabeledDataset& train) {
    std::string csv = "client_id,example_index,label,domain\n";
    for (std::size_t c = 0; c < a.n_clients(); ++c) {
        for (auto i : a.client_indices[c]) {
            const auto& ex = train.examples[i];
            csv += std::to_string(c) + "," + std::to_string(i) + "," + std::to_string(ex.label) +
                   "," + std::to_string(ex.domain) + "\n";
        }
    }
    return csv;
}

}  // namespace fedsim
