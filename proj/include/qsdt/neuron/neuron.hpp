#pragma once

#include <cmath>
#include <vector>

#include "qsdt/core/errors.hpp"
#include "qsdt/core/run_mode.hpp"
#include "qsdt/core/tensor.hpp"
#include "qsdt/quant/quant.hpp"

namespace qsdt::neuron {

// Iterative LIF with soft reset: v = h + input, spike where v >= theta,
// h' = tau*v - spike.
struct LifParams {
    float tau = 0.5f;
    float theta = 1.0f;
    float surrogate_width = 1.0f;  // rectangle window width

    void validate() const {
        if (!(tau > 0.0f && tau <= 1.0f)) throw InputError("lif tau must be in (0,1]");
        if (!(theta > 0.0f) || !std::isfinite(theta)) throw InputError("lif theta must be > 0");
        if (!(surrogate_width > 0.0f)) throw InputError("surrogate width must be > 0");
    }
};

struct MembraneState {
    Tensor h;  // post-reset potential
    Tensor v;  // pre-spike potential of the latest step

    static MembraneState zeros(const std::vector<int>& shape) {
        return {Tensor(shape), Tensor(shape)};
    }
};

struct LifStepResult {
    Tensor spike;
    MembraneState state;
};

inline LifStepResult lif_step(const MembraneState& state, const Tensor& input,
                              const LifParams& p) {
    p.validate();
    if (!state.h.same_shape(input)) throw ShapeError("lif_step shape mismatch");
    LifStepResult r;
    r.spike = Tensor(input.shape());
    r.state.v = Tensor(input.shape());
    r.state.h = Tensor(input.shape());
    for (int64_t i = 0; i < input.numel(); ++i) {
        const float v = state.h[i] + input[i];
        const float s = v >= p.theta ? 1.0f : 0.0f;
        r.state.v[i] = v;
        r.spike[i] = s;
        r.state.h[i] = p.tau * v - s;
    }
    return r;
}

// Rectangle surrogate d(spike)/d(v): (1/a) * 1(|v - theta| < a/2).
inline Tensor surrogate_grad(const Tensor& v, const LifParams& p) {
    p.validate();
    Tensor g(v.shape());
    const float a = p.surrogate_width;
    for (int64_t i = 0; i < v.numel(); ++i)
        g[i] = std::abs(v[i] - p.theta) < a / 2.0f ? 1.0f / a : 0.0f;
    return g;
}

// Multi-bit neuron: emits levels {0, 1/b, ..., 1} in training; the same
// levels expand into b binary virtual timesteps at inference.
struct IeLifParams {
    int levels = 4;  // maximum integer value b

    IeLifParams() = default;
    explicit IeLifParams(int b) : levels(b) { validate(); }

    void validate() const {
        if (levels != 1 && levels != 2 && levels != 4)
            throw InputError("IE-LIF level count must be one of {1,2,4}");
    }
};

inline Tensor ielif_forward(const Tensor& v, const IeLifParams& p) {
    p.validate();
    Tensor a(v.shape());
    const float b = static_cast<float>(p.levels);
    for (int64_t i = 0; i < v.numel(); ++i) {
        float t = v[i];
        t = t < 0.0f ? 0.0f : (t > b ? b : t);
        a[i] = quant::round_even(t) / b;
    }
    return a;
}

// Straight-through: gradient passes where the clip did not bind.
inline Tensor ielif_backward(const Tensor& grad_a, const Tensor& v, const IeLifParams& p) {
    if (!grad_a.same_shape(v)) throw ShapeError("ielif_backward shape mismatch");
    Tensor g(v.shape());
    const float b = static_cast<float>(p.levels);
    for (int64_t i = 0; i < v.numel(); ++i)
        g[i] = (v[i] > 0.0f && v[i] < b) ? grad_a[i] : 0.0f;
    return g;
}

// Mode-aware IE-LIF evaluation. Capture freezes the rounding residual so the
// replay surrogate clip(v,0,b) + residual is smooth, matches the captured
// forward at the base point, and has the straight-through derivative.
inline Tensor ielif_site_forward(const Tensor& v, const IeLifParams& p, RunMode mode,
                                 SurrogateStore* store, const std::string& site) {
    p.validate();
    const float b = static_cast<float>(p.levels);
    if (mode == RunMode::kFdReplay) {
        const Tensor& resid = store->get(site);
        Tensor a(v.shape());
        for (int64_t i = 0; i < v.numel(); ++i) {
            float t = v[i];
            t = t < 0.0f ? 0.0f : (t > b ? b : t);
            a[i] = t + resid[i];
        }
        return a;
    }
    Tensor a = ielif_forward(v, p);
    if (mode == RunMode::kFdCapture && store) {
        Tensor resid(v.shape());
        for (int64_t i = 0; i < v.numel(); ++i) {
            float t = v[i];
            t = t < 0.0f ? 0.0f : (t > b ? b : t);
            resid[i] = a[i] - t;
        }
        store->put(site, std::move(resid));
    }
    return a;
}

// Training activation and inference spike train for one neuron population.
struct SpikeRecord {
    Tensor a;                    // grid-valued activations (training view)
    std::vector<Tensor> spikes;  // binary virtual timesteps (inference view)
};

// Earliest-first placement: level k/b becomes k leading ones.
inline std::vector<Tensor> expand_to_spikes(const Tensor& a, const IeLifParams& p) {
    p.validate();
    const float b = static_cast<float>(p.levels);
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(p.levels));
    for (int t = 0; t < p.levels; ++t) out.emplace_back(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
        const float scaled = a[i] * b;
        const float n = quant::round_even(scaled);
        if (std::abs(scaled - n) > 1e-4f || n < 0.0f || n > b)
            throw InputError("expand_to_spikes input off the level grid");
        for (int t = 0; t < static_cast<int>(n); ++t) out[static_cast<size_t>(t)][i] = 1.0f;
    }
    return out;
}

}  // namespace qsdt::neuron
