#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

/// Low-rank factor pair attached to one frozen base matrix. Effective
/// weight is W + (alpha/r) * B * A with A (r x d_in), B (d_out x r),
/// both row-major.
struct LoraAdapter {
    std::string target_segment;
    std::size_t rank = 16;
    double alpha = 32.0;
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    std::vector<double> a;  // r x d_in
    std::vector<double> b;  // d_out x r

    void validate() const {
        if (rank < 1) throw ShapeError("lora rank must be >= 1");
        if (a.size() != rank * d_in || b.size() != d_out * rank) {
            throw ShapeError("lora factor dimensions inconsistent with (r, d_in, d_out)");
        }
    }

    double scaling() const { return alpha / static_cast<double>(rank); }
    std::size_t n_values() const { return a.size() + b.size(); }
};

/// Standard LoRA initialization: A ~ N(0, 0.02), B = 0, so a fresh
/// adapter is exactly the identity on the base model.
inline LoraAdapter make_adapter(const std::string& target, std::size_t d_out, std::size_t d_in,
                                std::size_t rank, double alpha, Rng& rng) {
    if (rank < 1) throw ShapeError("lora rank must be >= 1");
    LoraAdapter ad;
    ad.target_segment = target;
    ad.rank = rank;
    ad.alpha = alpha;
    ad.d_in = d_in;
    ad.d_out = d_out;
    ad.a.resize(rank * d_in);
    for (auto& v : ad.a) v = rng.normal(0.0, 0.02);
    ad.b.assign(d_out * rank, 0.0);
    return ad;
}

/// W_eff = W + (alpha/r) * B * A. W is d_out x d_in row-major, unchanged.
inline std::vector<double> lora_apply(std::span<const double> w, const LoraAdapter& ad) {
    ad.validate();
    if (w.size() != ad.d_out * ad.d_in) throw ShapeError("lora_apply: base matrix shape mismatch");
    std::vector<double> out(w.begin(), w.end());
    const double s = ad.scaling();
    for (std::size_t i = 0; i < ad.d_out; ++i) {
        for (std::size_t k = 0; k < ad.rank; ++k) {
            const double bik = ad.b[i * ad.rank + k] * s;
            if (bik == 0.0) continue;
            for (std::size_t j = 0; j < ad.d_in; ++j) {
                out[i * ad.d_in + j] += bik * ad.a[k * ad.d_in + j];
            }
        }
    }
    return out;
}

/// DP fixed clipping: rescale so the L2 norm does not exceed clip_norm.
inline std::vector<double> clip_update(std::span<const double> delta, double clip_norm) {
    if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
    const double norm = l2_norm(delta);
    std::vector<double> out(delta.begin(), delta.end());
    if (norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (auto& v : out) v *= scale;
    }
    return out;
}

/// Symmetric absmax quantization, signed levels in [-(2^(bits-1)-1), 2^(bits-1)-1].
struct QuantizedTensor {
    std::vector<std::int8_t> codes;  // one code per element, unpacked
    double scale = 0.0;
    std::size_t n = 0;
};

namespace detail {
inline double round_half_away_from_zero(double x) {
    return x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5);
}
}  // namespace detail

inline QuantizedTensor quantize_absmax(std::span<const double> x, int bits) {
    if (bits != 4 && bits != 8) throw ConfigError("quantize_absmax: bits must be 4 or 8");
    const int max_code = (1 << (bits - 1)) - 1;
    QuantizedTensor q;
    q.n = x.size();
    q.codes.resize(x.size());
    double absmax = 0.0;
    for (double v : x) {
        if (!std::isfinite(v)) throw NumericError("quantize: non-finite input value");
        absmax = std::max(absmax, std::fabs(v));
    }
    if (absmax == 0.0) {
        q.scale = 0.0;
        return q;
    }
    q.scale = absmax / static_cast<double>(max_code);
    for (std::size_t i = 0; i < x.size(); ++i) {
        double c = detail::round_half_away_from_zero(x[i] / q.scale);
        c = std::clamp(c, static_cast<double>(-max_code), static_cast<double>(max_code));
        q.codes[i] = static_cast<std::int8_t>(c);
    }
    return q;
}

inline QuantizedTensor quantize4(std::span<const double> x) { return quantize_absmax(x, 4); }

inline std::vector<double> dequantize4(const QuantizedTensor& q) {
    std::vector<double> out(q.n);
    for (std::size_t i = 0; i < q.n; ++i) out[i] = static_cast<double>(q.codes[i]) * q.scale;
    return out;
}

/// Communicated size of one adapter at the given code width:
/// packed codes for A and B plus one 8-byte scale per tensor.
inline std::size_t adapter_payload_bytes(const LoraAdapter& ad, int bits) {
    ad.validate();
    if (bits != 4 && bits != 8 && bits != 16 && bits != 32) {
        throw ConfigError("adapter_payload_bytes: bits must be one of 4, 8, 16, 32");
    }
    const std::size_t code_bits = ad.rank * (ad.d_in + ad.d_out) * static_cast<std::size_t>(bits);
    return (code_bits + 7) / 8 + 2 * 8;
}

/// FedAvg over adapters: A and B averaged independently with the same
/// sample-count weights as full-model aggregation. Note this is not the
/// average of the effective updates B*A.
inline LoraAdapter lora_aggregate(const std::vector<std::pair<LoraAdapter, std::size_t>>& updates) {
    if (updates.empty()) throw EmptyInputError("lora_aggregate: no adapters");
    const LoraAdapter& ref = updates.front().first;
    double total = 0.0;
    for (const auto& [ad, n] : updates) {
        ad.validate();
        if (ad.rank != ref.rank || ad.alpha != ref.alpha || ad.d_in != ref.d_in ||
            ad.d_out != ref.d_out || ad.target_segment != ref.target_segment) {
            throw ShapeError("lora_aggregate: adapter shape/config mismatch");
        }
        total += static_cast<double>(n);
    }
    if (total == 0.0) throw ConfigError("lora_aggregate: all sample counts are zero");
    LoraAdapter out = ref;
    std::fill(out.a.begin(), out.a.end(), 0.0);
    std::fill(out.b.begin(), out.b.end(), 0.0);
    for (const auto& [ad, n] : updates) {
        const double w = static_cast<double>(n) / total;
        for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += w * ad.a[i];
        for (std::size_t i = 0; i < out.b.size(); ++i) out.b[i] += w * ad.b[i];
    }
    return out;
}

// --- wire format ---------------------------------------------------------
// header: u32 name_len, name bytes, u32 r, u32 d_in, u32 d_out,
//         f64 alpha, f64 scale_a, f64 scale_b
// body:   4-bit codes packed two per byte (low nibble first), the code
//         stream is row-major A then row-major B, concatenated before packing.
// All integers little-endian; codes stored as two's-complement nibbles.

namespace detail {

template <typename T>
inline void put_le(std::vector<std::uint8_t>& buf, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
}

inline void put_f64(std::vector<std::uint8_t>& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_le(buf, bits);
}

template <typename T>
inline T get_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

inline double get_f64(const std::uint8_t* p) {
    const std::uint64_t bits = get_le<std::uint64_t>(p);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

struct QuantizedAdapterPayload {
    std::string target_segment;
    std::size_t rank = 0;
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    double alpha = 0.0;
    QuantizedTensor qa;
    QuantizedTensor qb;
};

inline QuantizedAdapterPayload quantize_adapter(const LoraAdapter& ad) {
    QuantizedAdapterPayload p;
    p.target_segment = ad.target_segment;
    p.rank = ad.rank;
    p.d_in = ad.d_in;
    p.d_out = ad.d_out;
    p.alpha = ad.alpha;
    p.qa = quantize4(ad.a);
    p.qb = quantize4(ad.b);
    return p;
}

inline LoraAdapter dequantize_adapter(const QuantizedAdapterPayload& p) {
    LoraAdapter ad;
    ad.target_segment = p.target_segment;
    ad.rank = p.rank;
    ad.alpha = p.alpha;
    ad.d_in = p.d_in;
    ad.d_out = p.d_out;
    ad.a = dequantize4(p.qa);
    ad.b = dequantize4(p.qb);
    ad.validate();
    return ad;
}

inline std::vector<std::uint8_t> serialize_payload(const QuantizedAdapterPayload& p) {
    std::vector<std::uint8_t> buf;
    detail::put_le(buf, static_cast<std::uint32_t>(p.target_segment.size()));
    for (char c : p.target_segment) buf.push_back(static_cast<std::uint8_t>(c));
    detail::put_le(buf, static_cast<std::uint32_t>(p.rank));
    detail::put_le(buf, static_cast<std::uint32_t>(p.d_in));
    detail::put_le(buf, static_cast<std::uint32_t>(p.d_out));
    detail::put_f64(buf, p.alpha);
    detail::put_f64(buf, p.qa.scale);
    detail::put_f64(buf, p.qb.scale);
    std::uint8_t pending = 0;
    bool half = false;
    auto push_code = [&](std::int8_t code) {
        const std::uint8_t nibble = static_cast<std::uint8_t>(code) & 0x0F;
        if (!half) {
            pending = nibble;
            half = true;
        } else {
            buf.push_back(static_cast<std::uint8_t>(pending | (nibble << 4)));
            half = false;
        }
    };
    for (auto c : p.qa.codes) push_code(c);
    for (auto c : p.qb.codes) push_code(c);
    if (half) buf.push_back(pending);
    return buf;
}

inline QuantizedAdapterPayload parse_payload(std::span<const std::uint8_t> buf) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > buf.size()) throw IoError("adapter payload truncated");
    };
    need(4);
    const auto name_len = detail::get_le<std::uint32_t>(buf.data() + pos);
    pos += 4;
    need(name_len);
    QuantizedAdapterPayload p;
    p.target_segment.assign(reinterpret_cast<const char*>(buf.data() + pos), name_len);
    pos += name_len;
    need(12 + 24);
    p.rank = detail::get_le<std::uint32_t>(buf.data() + pos);
    pos += 4;
    p.d_in = detail::get_le<std::uint32_t>(buf.data() + pos);
    pos += 4;
    p.d_out = detail::get_le<std::uint32_t>(buf.data() + pos);
    pos += 4;
    p.alpha = detail::get_f64(buf.data() + pos);
    pos += 8;
    p.qa.scale = detail::get_f64(buf.data() + pos);
    pos += 8;
    p.qb.scale = detail::get_f64(buf.data() + pos);
    pos += 8;
    const std::size_t na = p.rank * p.d_in;
    const std::size_t nb = p.d_out * p.rank;
    need((na + nb + 1) / 2);
    p.qa.n = na;
    p.qb.n = nb;
    p.qa.codes.resize(na);
    p.qb.codes.resize(nb);
    std::size_t k = 0;
    auto next_code = [&]() {
        const std::uint8_t byte = buf[pos + k / 2];
        std::uint8_t nibble = (k % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
        ++k;
        // sign-extend 4-bit two's complement
        return static_cast<std::int8_t>(nibble >= 8 ? static_cast<int>(nibble) - 16
                                                    : static_cast<int>(nibble));
    };
    for (auto& c : p.qa.codes) c = next_code();
    for (auto& c : p.qb.codes) c = next_code();
    return p;
}

}  // namespace fedsim
