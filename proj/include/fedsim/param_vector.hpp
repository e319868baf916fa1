#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

/// A named, shaped slice of a flat parameter vector.
struct Segment {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;

    std::size_t size() const {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

/// Flat real-valued parameters with named segments. The unit of
/// aggregation and communication: gradients, updates, and aggregated
/// models all share one layout.
class ParamVector {
  public:
    ParamVector() = default;

    ParamVector(std::vector<double> values, std::vector<Segment> segments)
        : values_(std::move(values)), segments_(std::move(segments)) {
        validate();
    }

    /// Incremental construction: append a zero-filled segment.
    std::size_t add_segment(std::string name, std::vector<std::size_t> shape) {
        Segment seg{std::move(name), std::move(shape), values_.size()};
        for (const auto& s : segments_) {
            if (s.name == seg.name) throw ShapeError("duplicate segment name: " + seg.name);
        }
        values_.resize(values_.size() + seg.size(), 0.0);
        segments_.push_back(std::move(seg));
        return segments_.size() - 1;
    }

    std::span<double> segment(const std::string& name) {
        const Segment& s = find(name);
        return {values_.data() + s.offset, s.size()};
    }
    std::span<const double> segment(const std::string& name) const {
        const Segment& s = find(name);
        return {values_.data() + s.offset, s.size()};
    }

    const Segment& find(const std::string& name) const {
        for (const auto& s : segments_) {
            if (s.name == name) return s;
        }
        throw ShapeError("unknown segment: " + name);
    }

    bool has_segment(const std::string& name) const {
        for (const auto& s : segments_) {
            if (s.name == name) return true;
        }
        return false;
    }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<Segment>& segments() const { return segments_; }
    std::size_t size() const { return values_.size(); }

    bool same_layout(const ParamVector& other) const {
        if (segments_.size() != other.segments_.size()) return false;
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            const Segment& a = segments_[i];
            const Segment& b = other.segments_[i];
            if (a.name != b.name || a.shape != b.shape || a.offset != b.offset) return false;
        }
        return true;
    }

    bool operator==(const ParamVector& other) const {
        return same_layout(other) && values_ == other.values_;
    }

    void validate() const {
        std::size_t expected_offset = 0;
        std::unordered_set<std::string> names;
        for (const auto& s : segments_) {
            if (s.offset != expected_offset) {
                throw ShapeError("segment '" + s.name + "' offset is not contiguous");
            }
            if (!names.insert(s.name).second) {
                throw ShapeError("duplicate segment name: " + s.name);
            }
            expected_offset += s.size();
        }
        if (expected_offset != values_.size()) {
            throw ShapeError("segment sizes do not cover the value array");
        }
    }

  private:
    std::vector<double> values_;
    std::vector<Segment> segments_;
};

inline double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace fedsim
