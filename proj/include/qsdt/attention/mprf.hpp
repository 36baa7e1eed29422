#pragma once

#include <cmath>

#include "qsdt/core/errors.hpp"
#include "qsdt/core/tensor.hpp"

namespace qsdt::attn {

// How per-channel statistics are sourced by mprf_apply.
enum class StatMode {
    kTrainUpdate,  // batch statistics, running stats updated with momentum
    kTrainFrozen,  // batch statistics, running stats untouched
    kRunning,      // frozen running statistics (inference)
};

// Learnable per-channel rectifier: y = gamma * (x - mu)/sigma + shift, with
// running statistics so it folds into the preceding quantized weights at
// deployment.
struct MprfParams {
    Tensor gamma;
    Tensor shift;
    Tensor running_mu;
    Tensor running_var;  // population variance
    float momentum = 0.9f;

    static constexpr float kEps = 1e-5f;

    static MprfParams init(int channels) {
        MprfParams p;
        p.gamma = Tensor({channels}, 1.0f);
        p.shift = Tensor({channels}, 0.0f);
        p.running_mu = Tensor({channels}, 0.0f);
        p.running_var = Tensor({channels}, 1.0f);
        return p;
    }

    int channels() const { return gamma.dim(0); }

    float sigma_run(int c) const {
        return std::sqrt(running_var.at(c) + kEps);
    }
};

// Saved forward state for the exact backward pass.
struct MprfCtx {
    Tensor x_hat;      // normalized input, same shape as x
    Tensor inv_sigma;  // per channel
    bool batch_stats = false;
    int64_t rows = 0;
};

// x is [rows, C]; statistics are per channel over the row axis.
inline Tensor mprf_apply(const Tensor& x, MprfParams& params, StatMode mode,
                         MprfCtx* ctx = nullptr) {
    if (x.ndim() != 2 || x.dim(1) != params.channels())
        throw ShapeError("mprf_apply expects [rows, C] with C == channels");
    const int rows = x.dim(0), c = x.dim(1);

    Tensor mu({c}), var({c});
    if (mode == StatMode::kRunning) {
        mu = params.running_mu;
        var = params.running_var;
    } else {
        std::vector<double> sum(static_cast<size_t>(c), 0.0), sumsq(static_cast<size_t>(c), 0.0);
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j) {
                const double v = x.at(r, j);
                sum[static_cast<size_t>(j)] += v;
                sumsq[static_cast<size_t>(j)] += v * v;
            }
        for (int j = 0; j < c; ++j) {
            const double m = sum[static_cast<size_t>(j)] / rows;
            double v = sumsq[static_cast<size_t>(j)] / rows - m * m;
            if (v < 0.0) v = 0.0;
            mu[j] = static_cast<float>(m);
            var[j] = static_cast<float>(v);
        }
        if (mode == StatMode::kTrainUpdate) {
            for (int j = 0; j < c; ++j) {
                params.running_mu[j] = params.momentum * params.running_mu[j] +
                                       (1.0f - params.momentum) * mu[j];
                params.running_var[j] = params.momentum * params.running_var[j] +
                                        (1.0f - params.momentum) * var[j];
            }
        }
    }

    Tensor inv_sigma({c});
    for (int j = 0; j < c; ++j)
        inv_sigma[j] = 1.0f / std::sqrt(var[j] + MprfParams::kEps);

    Tensor y({rows, c});
    Tensor x_hat({rows, c});
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) {
            const float xh = (x.at(r, j) - mu[j]) * inv_sigma[j];
            x_hat.at(r, j) = xh;
            y.at(r, j) = params.gamma[j] * xh + params.shift[j];
        }
    if (ctx) {
        ctx->x_hat = std::move(x_hat);
        ctx->inv_sigma = std::move(inv_sigma);
        ctx->batch_stats = (mode != StatMode::kRunning);
        ctx->rows = rows;
    }
    return y;
}

struct MprfGrads {
    Tensor grad_x;
    Tensor grad_gamma;
    Tensor grad_shift;
};

inline MprfGrads mprf_backward(const Tensor& grad_y, const MprfParams& params,
                               const MprfCtx& ctx) {
    const int rows = static_cast<int>(ctx.rows);
    const int c = params.channels();
    if (grad_y.ndim() != 2 || grad_y.dim(0) != rows || grad_y.dim(1) != c)
        throw ShapeError("mprf_backward shape mismatch");

    MprfGrads g;
    g.grad_gamma = Tensor({c});
    g.grad_shift = Tensor({c});
    g.grad_x = Tensor({rows, c});

    std::vector<double> sum_g(static_cast<size_t>(c), 0.0), sum_gx(static_cast<size_t>(c), 0.0);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) {
            const double gy = grad_y.at(r, j);
            sum_g[static_cast<size_t>(j)] += gy;
            sum_gx[static_cast<size_t>(j)] += gy * ctx.x_hat.at(r, j);
        }
    for (int j = 0; j < c; ++j) {
        g.grad_gamma[j] = static_cast<float>(sum_gx[static_cast<size_t>(j)]);
        g.grad_shift[j] = static_cast<float>(sum_g[static_cast<size_t>(j)]);
    }

    if (ctx.batch_stats) {
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j) {
                const double mean_g = sum_g[static_cast<size_t>(j)] / rows;
                const double mean_gx = sum_gx[static_cast<size_t>(j)] / rows;
                g.grad_x.at(r, j) = static_cast<float>(
                    params.gamma[j] * ctx.inv_sigma[j] *
                    (grad_y.at(r, j) - mean_g - ctx.x_hat.at(r, j) * mean_gx));
            }
    } else {
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j)
                g.grad_x.at(r, j) = params.gamma[j] * ctx.inv_sigma[j] * grad_y.at(r, j);
    }
    return g;
}

struct FusedAffine {
    Tensor w;  // same shape as the incoming weight
    Tensor b;  // per output channel
};

// Folds the rectifier into the preceding weight/bias using frozen running
// statistics. The weight's leading axis is the output channel.
inline FusedAffine fuse_mprf(const Tensor& w_hat, const Tensor& bias, const MprfParams& params) {
    const int cout = w_hat.dim(0);
    if (cout != params.channels() || bias.dim(0) != cout)
        throw ShapeError("fuse_mprf channel mismatch");
    FusedAffine f;
    f.w = Tensor(w_hat.shape());
    f.b = Tensor({cout});
    const int64_t per_ch = w_hat.numel() / cout;
    for (int oc = 0; oc < cout; ++oc) {
        const float sigma = params.sigma_run(oc);
        if (!std::isfinite(sigma) || sigma < MprfParams::kEps)
            throw NumericError("fuse_mprf: degenerate running sigma");
        const float scale = params.gamma[oc] / sigma;
        for (int64_t i = 0; i < per_ch; ++i)
            f.w[oc * per_ch + i] = scale * w_hat[oc * per_ch + i];
        f.b[oc] = scale * (bias[oc] - params.running_mu[oc]) + params.shift[oc];
    }
    return f;
}

}  // namespace qsdt::attn
