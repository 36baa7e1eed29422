#pragma once

#include <string>

#include "qsdt/core/ops.hpp"
#include "qsdt/core/run_mode.hpp"
#include "qsdt/quant/quant.hpp"

namespace qsdt::quant {

// Token-wise fully connected layer with learned-step weight quantization.
// bits == 32 disables quantization (full-precision twin / ablation proxy).
struct QuantLinear {
    Tensor w;     // [Din, Dout], latent full-precision master weights
    Tensor bias;  // [Dout]
    float alpha = 1.0f;
    int bits = 4;

    static QuantLinear init(int din, int dout, int bits, Rng& rng) {
        QuantLinear l;
        l.w = Tensor({din, dout});
        const float std = std::sqrt(2.0f / static_cast<float>(din));
        rng.fill_normal(l.w, 0.0f, std);
        l.bias = Tensor({dout}, 0.0f);
        l.bits = bits;
        l.alpha = bits == 32 ? 1.0f : init_scale(l.w, bits);
        return l;
    }

    bool quantized() const { return bits != 32; }
    QuantSpec spec() const { return QuantSpec(bits, alpha); }

    Tensor effective_weight(RunMode mode, SurrogateStore* store, const std::string& site) const {
        if (!quantized()) return w;
        const QuantSpec s = spec();
        if (mode == RunMode::kFdReplay) {
            const Tensor& resid = store->get(site);
            Tensor w_hat(w.shape());
            const float lo = static_cast<float>(s.qneg()), hi = static_cast<float>(s.qpos());
            for (int64_t i = 0; i < w.numel(); ++i) {
                float t = w[i] / s.alpha;
                t = t < lo ? lo : (t > hi ? hi : t);
                w_hat[i] = s.alpha * (t + resid[i]);
            }
            return w_hat;
        }
        Tensor w_hat = quantize_dequant(w, s);
        if (mode == RunMode::kFdCapture && store) {
            Tensor resid(w.shape());
            const float lo = static_cast<float>(s.qneg()), hi = static_cast<float>(s.qpos());
            for (int64_t i = 0; i < w.numel(); ++i) {
                float t = w[i] / s.alpha;
                t = t < lo ? lo : (t > hi ? hi : t);
                resid[i] = w_hat[i] / s.alpha - t;
            }
            store->put(site, std::move(resid));
        }
        return w_hat;
    }
};

struct QuantLinearCtx {
    Tensor x;      // [rows, Din]
    Tensor w_hat;  // effective weight used in the forward
};

// y = x * w_hat + bias
inline Tensor qlinear_forward(const QuantLinear& l, const Tensor& x, RunMode mode,
                              SurrogateStore* store, const std::string& site,
                              QuantLinearCtx* ctx = nullptr) {
    Tensor w_hat = l.effective_weight(mode, store, site);
    Tensor y = matmul(x, w_hat);
    const int rows = y.dim(0), dout = y.dim(1);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < dout; ++j) y.at(r, j) += l.bias[j];
    if (ctx) {
        ctx->x = x;
        ctx->w_hat = std::move(w_hat);
    }
    return y;
}

struct QuantLinearGrads {
    Tensor grad_x;
    Tensor grad_w;
    Tensor grad_bias;
    float grad_alpha = 0.0f;
};

inline QuantLinearGrads qlinear_backward(const QuantLinear& l, const Tensor& grad_y,
                                         const QuantLinearCtx& ctx) {
    QuantLinearGrads g;
    g.grad_x = matmul(grad_y, transposed(ctx.w_hat));
    Tensor grad_w_hat = matmul(transposed(ctx.x), grad_y);
    if (l.quantized()) {
        QuantGrads qg = quant_backward(grad_w_hat, l.w, l.spec());
        g.grad_w = std::move(qg.grad_w);
        g.grad_alpha = qg.grad_alpha;
    } else {
        g.grad_w = std::move(grad_w_hat);
    }
    g.grad_bias = Tensor({grad_y.dim(1)});
    for (int r = 0; r < grad_y.dim(0); ++r)
        for (int j = 0; j < grad_y.dim(1); ++j) g.grad_bias[j] += grad_y.at(r, j);
    return g;
}

}  // namespace qsdt::quant
