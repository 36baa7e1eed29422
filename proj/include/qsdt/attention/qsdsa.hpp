#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsdt/attention/mprf.hpp"
#include "qsdt/core/ops.hpp"
#include "qsdt/core/run_mode.hpp"
#include "qsdt/neuron/neuron.hpp"
#include "qsdt/quant/qlinear.hpp"

namespace qsdt::attn {

// Per-head q/k/v state of one attention module; q_mem holds the rectified
// membrane potentials (what distillation aligns), q_s the spike activations.
struct AttentionTriple {
    Tensor q_mem, k_mem, v_mem;  // [B, N, D] rectified membranes
    Tensor q_s, k_s, v_s;        // [B, N, D] grid-valued activations
};

// Spike-driven self-attention in linear order: y = SN(q_s (k_s^T v_s) * scale),
// with q/k/v produced by quantized token-wise convolutions, rectified by MPRF,
// and spiked by IE-LIF.
struct QsdsaLayer {
    quant::QuantLinear q, k, v;  // D -> D
    MprfParams mprf_q, mprf_k, mprf_v;
    neuron::IeLifParams act;
    int heads = 1;
    float attn_scale = 0.0f;  // 0 resolves to 1/head_dim

    static QsdsaLayer init(int dim, int heads, int weight_bits, int act_bits, Rng& rng) {
        if (dim % heads != 0) throw ConfigError("attention dim must be divisible by heads");
        QsdsaLayer l;
        l.q = quant::QuantLinear::init(dim, dim, weight_bits, rng);
        l.k = quant::QuantLinear::init(dim, dim, weight_bits, rng);
        l.v = quant::QuantLinear::init(dim, dim, weight_bits, rng);
        l.mprf_q = MprfParams::init(dim);
        l.mprf_k = MprfParams::init(dim);
        l.mprf_v = MprfParams::init(dim);
        l.act = neuron::IeLifParams(act_bits);
        l.heads = heads;
        l.attn_scale = 1.0f / static_cast<float>(dim / heads);
        return l;
    }

    int dim() const { return q.w.dim(0); }
    int head_dim() const { return dim() / heads; }
    float scale() const { return attn_scale > 0.0f ? attn_scale : 1.0f / static_cast<float>(head_dim()); }
};

// q_s (k_s^T v_s) per head, computed in the O(N D^2) order. kv_out, when
// given, receives the per-(sample,head) D'xD' intermediates for the backward
// pass; macs counts the multiply-accumulates actually performed.
inline Tensor linear_attention_product(const Tensor& q, const Tensor& k, const Tensor& v,
                                       int heads, float scale,
                                       std::vector<Tensor>* kv_out = nullptr,
                                       int64_t* macs = nullptr) {
    if (q.ndim() != 3 || !q.same_shape(k) || !q.same_shape(v))
        throw ShapeError("attention product expects matching [B,N,D] triples");
    const int bsz = q.dim(0), n = q.dim(1), d = q.dim(2);
    if (d % heads != 0) throw ShapeError("attention dim not divisible by heads");
    const int hd = d / heads;
    Tensor y({bsz, n, d});
    if (kv_out) kv_out->clear();
    for (int b = 0; b < bsz; ++b)
        for (int h = 0; h < heads; ++h) {
            // kv = k_h^T v_h  [hd x hd]
            Tensor kv({hd, hd});
            for (int t = 0; t < n; ++t)
                for (int i = 0; i < hd; ++i) {
                    const float kv_t = k.at(b, t, h * hd + i);
                    if (kv_t == 0.0f) continue;
                    for (int j = 0; j < hd; ++j)
                        kv.at(i, j) += kv_t * v.at(b, t, h * hd + j);
                }
            // y_h = q_h kv
            for (int t = 0; t < n; ++t)
                for (int i = 0; i < hd; ++i) {
                    const float qv = q.at(b, t, h * hd + i);
                    if (qv == 0.0f) continue;
                    for (int j = 0; j < hd; ++j)
                        y.at(b, t, h * hd + j) += qv * kv.at(i, j);
                }
            if (macs) *macs += 2LL * n * hd * hd;
            if (kv_out) kv_out->push_back(std::move(kv));
        }
    if (scale != 1.0f)
        for (int64_t i = 0; i < y.numel(); ++i) y[i] *= scale;
    return y;
}

struct QsdsaCtx {
    Tensor x_flat;  // [B*N, D] input activations
    int bsz = 0, n = 0;
    quant::QuantLinearCtx cq, ck, cv;
    MprfCtx mq, mk, mv;
    Tensor q_hat, k_hat, v_hat;  // [B*N, D] rectified membranes (FGD records)
    Tensor q_a, k_a, v_a;        // [B, N, D] spike activations
    std::vector<Tensor> kv;      // per (sample, head)
    Tensor u;                    // [B, N, D] pre-SN attention membrane
    int64_t attn_macs = 0;
};

// x: [B, N, D] grid-valued activations. Returns the output activations and
// fills ctx for the backward pass and distillation records.
inline Tensor qsdsa_forward(QsdsaLayer& layer, const Tensor& x, RunMode mode, QsdsaCtx& ctx,
                            SurrogateStore* store = nullptr, const std::string& site = "att") {
    if (x.ndim() != 3 || x.dim(2) != layer.dim())
        throw ShapeError("qsdsa_forward expects [B,N,D] with D == layer dim");
    const int bsz = x.dim(0), n = x.dim(1), d = x.dim(2);
    ctx.bsz = bsz;
    ctx.n = n;
    ctx.x_flat = x.reshaped({bsz * n, d});

    const StatMode stat = mode == RunMode::kTrain   ? StatMode::kTrainUpdate
                          : mode == RunMode::kEval  ? StatMode::kRunning
                                                    : StatMode::kTrainFrozen;

    Tensor qm = qlinear_forward(layer.q, ctx.x_flat, mode, store, site + ".q.w", &ctx.cq);
    Tensor km = qlinear_forward(layer.k, ctx.x_flat, mode, store, site + ".k.w", &ctx.ck);
    Tensor vm = qlinear_forward(layer.v, ctx.x_flat, mode, store, site + ".v.w", &ctx.cv);

    ctx.q_hat = mprf_apply(qm, layer.mprf_q, stat, &ctx.mq);
    ctx.k_hat = mprf_apply(km, layer.mprf_k, stat, &ctx.mk);
    ctx.v_hat = mprf_apply(vm, layer.mprf_v, stat, &ctx.mv);

    ctx.q_a = neuron::ielif_site_forward(ctx.q_hat, layer.act, mode, store, site + ".q.sn")
                  .reshaped({bsz, n, d});
    ctx.k_a = neuron::ielif_site_forward(ctx.k_hat, layer.act, mode, store, site + ".k.sn")
                  .reshaped({bsz, n, d});
    ctx.v_a = neuron::ielif_site_forward(ctx.v_hat, layer.act, mode, store, site + ".v.sn")
                  .reshaped({bsz, n, d});

    ctx.attn_macs = 0;
    ctx.u = linear_attention_product(ctx.q_a, ctx.k_a, ctx.v_a, layer.heads, layer.scale(),
                                     &ctx.kv, &ctx.attn_macs);
    Tensor y = neuron::ielif_site_forward(ctx.u.reshaped({bsz * n, d}), layer.act, mode, store,
                                          site + ".y.sn");
    return y.reshaped({bsz, n, d});
}

inline AttentionTriple qsdsa_records(const QsdsaCtx& ctx) {
    AttentionTriple t;
    t.q_mem = ctx.q_hat.reshaped({ctx.bsz, ctx.n, ctx.q_hat.dim(1)});
    t.k_mem = ctx.k_hat.reshaped({ctx.bsz, ctx.n, ctx.k_hat.dim(1)});
    t.v_mem = ctx.v_hat.reshaped({ctx.bsz, ctx.n, ctx.v_hat.dim(1)});
    t.q_s = ctx.q_a;
    t.k_s = ctx.k_a;
    t.v_s = ctx.v_a;
    return t;
}

struct QsdsaGrads {
    quant::QuantLinearGrads q, k, v;
    MprfGrads mq, mk, mv;
    Tensor grad_x;  // [B, N, D]
};

// Exact chain rule through the attention product and MPRF, straight-through
// masks at the IE-LIF sites. grad_mem_* are optional extra gradients flowing
// directly into the rectified membranes (the distillation path).
inline QsdsaGrads qsdsa_backward(QsdsaLayer& layer, const QsdsaCtx& ctx, const Tensor& grad_y,
                                 const Tensor* grad_mem_q = nullptr,
                                 const Tensor* grad_mem_k = nullptr,
                                 const Tensor* grad_mem_v = nullptr) {
    const int bsz = ctx.bsz, n = ctx.n, d = layer.dim();
    const int heads = layer.heads, hd = d / heads;
    const float scale = layer.scale();

    // through the output neuron
    Tensor gu = neuron::ielif_backward(grad_y.reshaped({bsz * n, d}),
                                       ctx.u.reshaped({bsz * n, d}), layer.act)
                    .reshaped({bsz, n, d});

    Tensor gq_a({bsz, n, d}), gk_a({bsz, n, d}), gv_a({bsz, n, d});
    for (int b = 0; b < bsz; ++b)
        for (int h = 0; h < heads; ++h) {
            const Tensor& kv = ctx.kv[static_cast<size_t>(b) * heads + h];
            // g_kv = q^T g_p ; gq = g_p kv^T ; gk = v g_kv^T ; gv = k g_kv
            Tensor gkv({hd, hd});
            for (int t = 0; t < n; ++t)
                for (int i = 0; i < hd; ++i) {
                    const float qv = ctx.q_a.at(b, t, h * hd + i);
                    float acc = 0.0f;
                    for (int j = 0; j < hd; ++j) {
                        const float gp = scale * gu.at(b, t, h * hd + j);
                        acc += gp * kv.at(i, j);
                        if (qv != 0.0f) gkv.at(i, j) += qv * gp;
                    }
                    gq_a.at(b, t, h * hd + i) = acc;
                }
            for (int t = 0; t < n; ++t)
                for (int i = 0; i < hd; ++i) {
                    float gk_acc = 0.0f, gv_acc = 0.0f;
                    for (int j = 0; j < hd; ++j) {
                        gk_acc += ctx.v_a.at(b, t, h * hd + j) * gkv.at(i, j);
                        gv_acc += ctx.k_a.at(b, t, h * hd + j) * gkv.at(j, i);
                    }
                    gk_a.at(b, t, h * hd + i) = gk_acc;
                    gv_a.at(b, t, h * hd + i) = gv_acc;
                }
        }

    QsdsaGrads g;
    auto through_branch = [&](const Tensor& ga, const Tensor& hat, const Tensor* extra,
                              MprfParams& mprf, const MprfCtx& mctx,
                              const quant::QuantLinear& lin, const quant::QuantLinearCtx& lctx,
                              MprfGrads& mg, quant::QuantLinearGrads& lg) {
        Tensor ghat = neuron::ielif_backward(ga.reshaped({bsz * n, d}), hat, layer.act);
        if (extra) add_inplace(ghat, extra->reshaped({bsz * n, d}));
        mg = mprf_backward(ghat, mprf, mctx);
        lg = qlinear_backward(lin, mg.grad_x, lctx);
    };
    through_branch(gq_a, ctx.q_hat, grad_mem_q, layer.mprf_q, ctx.mq, layer.q, ctx.cq, g.mq, g.q);
    through_branch(gk_a, ctx.k_hat, grad_mem_k, layer.mprf_k, ctx.mk, layer.k, ctx.ck, g.mk, g.k);
    through_branch(gv_a, ctx.v_hat, grad_mem_v, layer.mprf_v, ctx.mv, layer.v, ctx.cv, g.mv, g.v);

    Tensor gx = g.q.grad_x;
    add_inplace(gx, g.k.grad_x);
    add_inplace(gx, g.v.grad_x);
    g.grad_x = gx.reshaped({bsz, n, d});
    return g;
}

}  // namespace qsdt::attn
