#pragma once

#include <cmath>
#include <cstdint>

#include "qsdt/core/errors.hpp"
#include "qsdt/core/tensor.hpp"

namespace qsdt::quant {

// Rounding used by every quantizer in the library: round-half-to-even via
// nearbyint, which honors the default FE_TONEAREST mode.
inline float round_even(float x) { return std::nearbyintf(x); }

// Learned-step quantizer spec: signed b-bit codes scaled by a learnable alpha.
struct QuantSpec {
    int bits = 4;
    float alpha = 1.0f;

    QuantSpec() = default;
    QuantSpec(int b, float a) : bits(b), alpha(a) { validate(); }

    void validate() const {
        if (bits != 2 && bits != 3 && bits != 4 && bits != 8)
            throw InputError("weight bits must be one of {2,3,4,8}");
        if (!(alpha > 0.0f) || !std::isfinite(alpha))
            throw InputError("quant scale must be positive and finite");
    }

    int qneg() const { return -(1 << (bits - 1)); }
    int qpos() const { return (1 << (bits - 1)) - 1; }
};

struct QuantizedWeight {
    CodeTensor codes;
    QuantSpec spec;
};

inline int8_t quantize_value(float w, const QuantSpec& s) {
    float t = w / s.alpha;
    const float lo = static_cast<float>(s.qneg());
    const float hi = static_cast<float>(s.qpos());
    if (t < lo) t = lo;
    if (t > hi) t = hi;
    return static_cast<int8_t>(round_even(t));
}

inline QuantizedWeight quantize(const Tensor& w, const QuantSpec& spec) {
    spec.validate();
    QuantizedWeight q;
    q.spec = spec;
    q.codes.shape = w.shape();
    q.codes.codes.resize(static_cast<size_t>(w.numel()));
    for (int64_t i = 0; i < w.numel(); ++i) {
        if (!std::isfinite(w[i])) throw InputError("non-finite weight in quantize");
        q.codes.codes[static_cast<size_t>(i)] = quantize_value(w[i], spec);
    }
    return q;
}

inline Tensor dequantize(const QuantizedWeight& q) {
    Tensor w(q.codes.shape);
    for (int64_t i = 0; i < w.numel(); ++i)
        w[i] = q.spec.alpha * static_cast<float>(q.codes.codes[static_cast<size_t>(i)]);
    return w;
}

// Fused quantize-dequantize, the training-forward hot path. Bitwise identical
// to dequantize(quantize(w, spec)).
inline Tensor quantize_dequant(const Tensor& w, const QuantSpec& spec) {
    Tensor out(w.shape());
    const float lo = static_cast<float>(spec.qneg());
    const float hi = static_cast<float>(spec.qpos());
    for (int64_t i = 0; i < w.numel(); ++i) {
        if (!std::isfinite(w[i])) throw InputError("non-finite weight in quantize");
        float t = w[i] / spec.alpha;
        t = t < lo ? lo : (t > hi ? hi : t);
        out[i] = spec.alpha * round_even(t);
    }
    return out;
}

struct QuantGrads {
    Tensor grad_w;
    float grad_alpha = 0.0f;
};

// Straight-through weight gradient plus the learned-step scale gradient:
// inside the clip range the scale picks up (Q(w) - w/alpha), outside it picks
// up the saturated code, everything summed and normalized by
// 1/sqrt(n * qpos) as in learned-step quantization practice.
inline QuantGrads quant_backward(const Tensor& grad_out, const Tensor& w, const QuantSpec& spec) {
    if (!grad_out.same_shape(w)) throw ShapeError("quant_backward shape mismatch");
    QuantGrads g;
    g.grad_w = Tensor(w.shape());
    const float lo = static_cast<float>(spec.qneg());
    const float hi = static_cast<float>(spec.qpos());
    double ga = 0.0;
    for (int64_t i = 0; i < w.numel(); ++i) {
        const float t = w[i] / spec.alpha;
        if (t < lo) {
            ga += static_cast<double>(lo) * grad_out[i];
        } else if (t > hi) {
            ga += static_cast<double>(hi) * grad_out[i];
        } else {
            g.grad_w[i] = grad_out[i];
            ga += static_cast<double>(round_even(t) - t) * grad_out[i];
        }
    }
    const double norm = 1.0 / std::sqrt(static_cast<double>(w.numel()) * spec.qpos());
    g.grad_alpha = static_cast<float>(ga * norm);
    return g;
}

// Initial scale: 2*mean(|w|)/sqrt(qpos), floored to keep the spec invariant
// alpha > 0 even for all-zero tensors.
inline float init_scale(const Tensor& w, int bits) {
    if (w.numel() == 0) throw InputError("init_scale on empty tensor");
    QuantSpec probe(bits, 1.0f);
    double mean_abs = 0.0;
    for (int64_t i = 0; i < w.numel(); ++i) mean_abs += std::abs(static_cast<double>(w[i]));
    mean_abs /= static_cast<double>(w.numel());
    const double a = 2.0 * mean_abs / std::sqrt(static_cast<double>(probe.qpos()));
    return static_cast<float>(std::max(a, 1e-8));
}

}  // namespace qsdt::quant
