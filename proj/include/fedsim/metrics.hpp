#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/metrics_core.hpp"

namespace fedsim {

/// One recorded prediction: ground truth, model output, optional score.
struct TraceRow {
    std::string example_id;
    std::string true_label;
    std::string predicted_label;
    std::optional<double> score;
};

/// Replayable list of per-example predictions over a declared class
/// vocabulary.
struct PredictionTrace {
    std::vector<std::string> vocabulary;
    std::vector<TraceRow> rows;

    bool in_vocab(const std::string& label) const {
        for (const auto& v : vocabulary) {
            if (v == label) return true;
        }
        return false;
    }

    void validate() const {
        for (const auto& r : rows) {
            if (!in_vocab(r.true_label)) throw VocabularyError("unknown true label: " + r.true_label);
            if (!in_vocab(r.predicted_label)) {
                throw VocabularyError("unknown predicted label: " + r.predicted_label);
            }
        }
    }
};

/// Binary metrics over a 2-class trace; the positive class is the
/// second vocabulary entry and scores are p(positive).
inline BinaryMetrics binary_metrics(const PredictionTrace& trace, double threshold = 0.5) {
    if (trace.vocabulary.size() != 2) throw VocabularyError("binary_metrics: vocabulary must have 2 classes");
    trace.validate();
    std::vector<int> y;
    std::vector<double> s;
    for (const auto& r : trace.rows) {
        if (!r.score) throw VocabularyError("binary_metrics: score missing for " + r.example_id);
        y.push_back(r.true_label == trace.vocabulary[1] ? 1 : 0);
        s.push_back(*r.score);
    }
    return binary_metrics_core(y, s, threshold);
}

struct ClassStats {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool recall_undefined = false;  // class never appears in the truth
};

struct MulticlassMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::map<std::string, ClassStats> per_class;
    std::vector<std::string> warnings;
};

inline MulticlassMetrics multiclass_metrics(const PredictionTrace& trace) {
    if (trace.rows.empty()) throw EmptyInputError("multiclass_metrics: empty trace");
    trace.validate();
    std::map<std::string, std::size_t> tp, fp, fn;
    std::size_t correct = 0;
    for (const auto& r : trace.rows) {
        if (r.true_label == r.predicted_label) {
            ++correct;
            ++tp[r.true_label];
        } else {
            ++fp[r.predicted_label];
            ++fn[r.true_label];
        }
    }
    MulticlassMetrics out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(trace.rows.size());
    double f1_sum = 0.0;
    for (const auto& cls : trace.vocabulary) {
        const double t = static_cast<double>(tp[cls]);
        const double p_den = t + static_cast<double>(fp[cls]);
        const double r_den = t + static_cast<double>(fn[cls]);
        ClassStats st;
        st.precision = p_den > 0.0 ? t / p_den : 0.0;
        if (r_den > 0.0) {
            st.recall = t / r_den;
        } else {
            st.recall = 0.0;
            st.recall_undefined = true;
            out.warnings.push_back("class '" + cls + "' absent from truth; recall set to 0");
        }
        st.f1 = (st.precision + st.recall) > 0.0
                    ? 2.0 * st.precision * st.recall / (st.precision + st.recall)
                    : 0.0;
        f1_sum += st.f1;
        out.per_class[cls] = st;
    }
    out.macro_f1 = f1_sum / static_cast<double>(trace.vocabulary.size());
    return out;
}

/// Confusion matrix keyed by class names. Excluded classes are removed
/// from the truth axis; predictions into excluded classes collapse into
/// a single "other" column (present only when exclusions exist).
struct ConfusionMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<double>> cells;
};

inline ConfusionMatrix confusion_matrix(const PredictionTrace& trace,
                                        const std::set<std::string>& exclude, bool normalize) {
    trace.validate();
    for (const auto& e : exclude) {
        if (!trace.in_vocab(e)) throw VocabularyError("excluded class not in vocabulary: " + e);
    }
    ConfusionMatrix cm;
    for (const auto& cls : trace.vocabulary) {
        if (!exclude.count(cls)) {
            cm.row_labels.push_back(cls);
            cm.col_labels.push_back(cls);
        }
    }
    if (!exclude.empty()) cm.col_labels.push_back("other");
    cm.cells.assign(cm.row_labels.size(), std::vector<double>(cm.col_labels.size(), 0.0));

    auto row_of = [&](const std::string& l) -> std::ptrdiff_t {
        for (std::size_t i = 0; i < cm.row_labels.size(); ++i) {
            if (cm.row_labels[i] == l) return static_cast<std::ptrdiff_t>(i);
        }
        return -1;
    };
    for (const auto& r : trace.rows) {
        const auto row = row_of(r.true_label);
        if (row < 0) continue;  // truth in an excluded class
        std::size_t col;
        if (exclude.count(r.predicted_label)) {
            col = cm.col_labels.size() - 1;  // "other"
        } else {
            col = static_cast<std::size_t>(row_of(r.predicted_label));
        }
        cm.cells[static_cast<std::size_t>(row)][col] += 1.0;
    }
    if (normalize) {
        for (auto& row : cm.cells) {
            double sum = 0.0;
            for (double v : row) sum += v;
            if (sum > 0.0) {
                for (auto& v : row) v /= sum;
            }
        }
    }
    return cm;
}

/// Merges semantically adjacent classes and drops ambiguous ones before
/// evaluation. Groups, retained singletons, and excluded classes are
/// pairwise disjoint and together cover the vocabulary.
struct GroupingMap {
    std::map<std::string, std::vector<std::string>> groups;
    std::vector<std::string> retained;
    std::vector<std::string> excluded;

    static constexpr const char* kExcludedToken = "__excluded__";

    // grouped name for a class; nullopt when the class is excluded
    std::optional<std::string> map_label(const std::string& cls) const {
        for (const auto& [g, members] : groups) {
            for (const auto& m : members) {
                if (m == cls) return g;
            }
        }
        for (const auto& r : retained) {
            if (r == cls) return r;
        }
        for (const auto& e : excluded) {
            if (e == cls) return std::nullopt;
        }
        throw VocabularyError("class not covered by grouping map: " + cls);
    }

    std::vector<std::string> grouped_vocabulary() const {
        std::vector<std::string> v;
        for (const auto& [g, members] : groups) v.push_back(g);
        for (const auto& r : retained) v.push_back(r);
        return v;
    }

    void validate() const {
        std::set<std::string> seen;
        auto add = [&](const std::string& cls) {
            if (!seen.insert(cls).second) {
                throw VocabularyError("class appears in more than one grouping set: " + cls);
            }
        };
        for (const auto& [g, members] : groups) {
            for (const auto& m : members) add(m);
        }
        for (const auto& r : retained) add(r);
        for (const auto& e : excluded) add(e);
    }
};

/// Rows with excluded truth are dropped; remaining labels map to their
/// group. A prediction into an excluded class maps to a reserved token
/// outside the grouped vocabulary, so it always counts as wrong.
inline PredictionTrace regroup(const PredictionTrace& trace, const GroupingMap& map) {
    trace.validate();
    map.validate();
    for (const auto& cls : trace.vocabulary) map.map_label(cls);  // coverage check

    PredictionTrace out;
    out.vocabulary = map.grouped_vocabulary();
    out.vocabulary.push_back(GroupingMap::kExcludedToken);
    for (const auto& r : trace.rows) {
        const auto true_mapped = map.map_label(r.true_label);
        if (!true_mapped) continue;
        const auto pred_mapped = map.map_label(r.predicted_label);
        TraceRow nr;
        nr.example_id = r.example_id;
        nr.true_label = *true_mapped;
        nr.predicted_label = pred_mapped ? *pred_mapped : GroupingMap::kExcludedToken;
        out.rows.push_back(std::move(nr));
    }
    return out;
}

// --- file formats ---------------------------------------------------------

/// Trace CSV: header `example_id,true_label,predicted_label,score`,
/// score blank for multiclass traces. The vocabulary is inferred from
/// the labels observed, sorted.
inline PredictionTrace parse_trace_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("trace CSV is empty");
    if (line == "example_id,true_label,predicted_label,score\r") line.pop_back();
    if (line != "example_id,true_label,predicted_label,score") {
        throw IoError("trace CSV: unexpected header: " + line);
    }
    PredictionTrace trace;
    std::set<std::string> vocab;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        fields.push_back(cur);
        if (fields.size() != 4) throw IoError("trace CSV: expected 4 fields: " + line);
        TraceRow r;
        r.example_id = fields[0];
        r.true_label = fields[1];
        r.predicted_label = fields[2];
        if (!fields[3].empty()) {
            try {
                r.score = std::stod(fields[3]);
            } catch (const std::exception&) {
                throw IoError("trace CSV: bad score: " + fields[3]);
            }
        }
        vocab.insert(r.true_label);
        vocab.insert(r.predicted_label);
        trace.rows.push_back(std::move(r));
    }
    trace.vocabulary.assign(vocab.begin(), vocab.end());
    return trace;
}

/// Grouping map JSON: {"groups": {name: [classes]}, "retained": [...],
/// "excluded": [...]}.
inline GroupingMap parse_grouping_map(const nlohmann::json& j) {
    GroupingMap m;
    if (!j.contains("groups") || !j.contains("retained") || !j.contains("excluded")) {
        throw ConfigError("grouping map requires groups, retained, excluded");
    }
    for (const auto& [name, members] : j.at("groups").items()) {
        m.groups[name] = members.get<std::vector<std::string>>();
    }
    m.retained = j.at("retained").get<std::vector<std::string>>();
    m.excluded = j.at("excluded").get<std::vector<std::string>>();
    m.validate();
    return m;
}

/// The UCF-Crime grouping used throughout the multiclass analysis.
inline GroupingMap ucf_crime_grouping() {
    GroupingMap m;
    m.groups["Destruction"] = {"Arson", "Explosion"};
    m.groups["Property Crime"] = {"Burglary", "Robbery", "Shoplifting", "Stealing", "Vandalism"};
    m.groups["Violence"] = {"Assault", "Fighting"};
    m.retained = {"RoadAccidents", "Normal Video"};
    m.excluded = {"Abuse", "Arrest", "Shooting"};
    return m;
}

}  // namespace fedsim
