#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "qsdt/core/errors.hpp"
#include "qsdt/core/tensor.hpp"

namespace qsdt {

// [M,K] x [K,N] -> [M,N]. Each output element accumulates in ascending-k
// order, so results are deterministic and independent of the loop nest.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul expects rank-2 tensors, got " + a.shape_str() + " and " +
                         b.shape_str());
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul inner dimensions disagree: " + a.shape_str() + " vs " +
                         b.shape_str());
    Tensor c({m, n});
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = c.data();
    for (int i = 0; i < m; ++i) {
        const float* arow = pa + static_cast<int64_t>(i) * k;
        float* crow = pc + static_cast<int64_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const float av = arow[kk];
            if (av == 0.0f) continue;
            const float* brow = pb + static_cast<int64_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

inline Tensor transposed(const Tensor& a) {
    if (a.ndim() != 2) throw ShapeError("transpose expects rank-2, got " + a.shape_str());
    const int m = a.dim(0), n = a.dim(1);
    Tensor t({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Cross-correlation over a single sample: x[Cin,H,W], w[Cout,Cin,k,k].
inline Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.ndim() != 3 || w.ndim() != 4)
        throw ShapeError("conv2d expects x[Cin,H,W], w[Cout,Cin,k,k]");
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin) throw ShapeError("conv2d channel mismatch");
    if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d kernel must be square");
    if (k % 2 != 1) throw ShapeError("conv2d kernel extent must be odd");
    if (pad < 0 || stride < 1) throw ShapeError("conv2d bad stride/pad");
    const int oh = conv_out_extent(h, k, stride, pad);
    const int ow = conv_out_extent(wd, k, stride, pad);
    if (oh < 1 || ow < 1) throw ShapeError("conv2d output extent < 1");

    Tensor y({cout, oh, ow});
    for (int oc = 0; oc < cout; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                float acc = 0.0f;
                for (int ic = 0; ic < cin; ++ic)
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= wd) continue;
                            acc += x.at(ic, iy, ix) * w.at(oc, ic, ky, kx);
                        }
                    }
                y.at(oc, oy, ox) = acc;
            }
    return y;
}

// Mean and population standard deviation (divide by n) over the given axes.
// The result drops the reduced axes; reducing everything yields shape [1].
inline std::pair<Tensor, Tensor> moments(const Tensor& x, const std::vector<int>& axes) {
    std::vector<bool> reduced(static_cast<size_t>(x.ndim()), false);
    for (int a : axes) {
        if (a < 0 || a >= x.ndim()) throw ShapeError("moments axis out of range");
        reduced[static_cast<size_t>(a)] = true;
    }
    std::vector<int> out_shape;
    for (int i = 0; i < x.ndim(); ++i)
        if (!reduced[static_cast<size_t>(i)]) out_shape.push_back(x.dim(i));
    if (out_shape.empty()) out_shape = {1};

    Tensor mean(out_shape), stdev(out_shape);
    const int64_t out_n = mean.numel();
    std::vector<double> sum(static_cast<size_t>(out_n), 0.0);
    std::vector<double> sumsq(static_cast<size_t>(out_n), 0.0);
    int64_t group = 1;

    // Row-major walk; map each source index to its kept-axes bucket.
    std::vector<int64_t> stride_out(static_cast<size_t>(x.ndim()), 0);
    {
        int64_t s = 1;
        for (int i = x.ndim() - 1; i >= 0; --i) {
            if (!reduced[static_cast<size_t>(i)]) {
                stride_out[static_cast<size_t>(i)] = s;
                s *= x.dim(i);
            } else {
                group *= x.dim(i);
            }
        }
    }
    if (group < 1) throw ShapeError("moments reduced extent must be >= 1");

    std::vector<int> idx(static_cast<size_t>(x.ndim()), 0);
    for (int64_t flat = 0; flat < x.numel(); ++flat) {
        int64_t bucket = 0;
        for (int i = 0; i < x.ndim(); ++i) bucket += idx[static_cast<size_t>(i)] * stride_out[static_cast<size_t>(i)];
        const double v = x[flat];
        sum[static_cast<size_t>(bucket)] += v;
        sumsq[static_cast<size_t>(bucket)] += v * v;
        for (int i = x.ndim() - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < x.dim(i)) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    for (int64_t i = 0; i < out_n; ++i) {
        const double mu = sum[static_cast<size_t>(i)] / static_cast<double>(group);
        double var = sumsq[static_cast<size_t>(i)] / static_cast<double>(group) - mu * mu;
        if (var < 0.0) var = 0.0;
        mean[i] = static_cast<float>(mu);
        stdev[i] = static_cast<float>(std::sqrt(var));
    }
    return {mean, stdev};
}

// -- small elementwise helpers used throughout ------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("add shape mismatch");
    Tensor c = a;
    for (int64_t i = 0; i < c.numel(); ++i) c[i] += b[i];
    return c;
}

inline void add_inplace(Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("add shape mismatch");
    for (int64_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

inline Tensor scaled(const Tensor& a, float s) {
    Tensor c = a;
    for (int64_t i = 0; i < c.numel(); ++i) c[i] *= s;
    return c;
}

inline double dot_double(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("dot shape mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

inline double frobenius_norm(const Tensor& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * a[i];
    return std::sqrt(acc);
}

inline float max_abs(const Tensor& a) {
    float m = 0.0f;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

}  // namespace qsdt
