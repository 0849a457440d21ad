#pragma once

#include "hstrnet/gemm.hpp"
#include "hstrnet/tensor.hpp"

namespace hstrnet {

namespace detail {

// col layout: rows (c*kh*kw), columns (ho*wo); zero padding.
template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int stride, int pad, int ho, int wo,
            T* col) {
    for (int ci = 0; ci < c; ++ci) {
        const T* plane = x + static_cast<size_t>(ci) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                T* row = col + static_cast<size_t>((ci * kh + ky) * kw + kx) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        std::fill(row + static_cast<size_t>(oy) * wo,
                                  row + static_cast<size_t>(oy + 1) * wo, T(0));
                        continue;
                    }
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        row[static_cast<size_t>(oy) * wo + ox] =
                            (ix >= 0 && ix < w) ? plane[static_cast<size_t>(iy) * w + ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int c, int h, int w, int kh, int kw, int stride, int pad, int ho,
                int wo, T* x) {
    for (int ci = 0; ci < c; ++ci) {
        T* plane = x + static_cast<size_t>(ci) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const T* row = col + static_cast<size_t>((ci * kh + ky) * kw + kx) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w)
                            plane[static_cast<size_t>(iy) * w + ix] +=
                                row[static_cast<size_t>(oy) * wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// 2D convolution, zero padding. x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad) {
    require(x.ndim() == 4 && w.ndim() == 4, "conv2d: rank mismatch");
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    require(w.dim(1) == cin, "conv2d: input has " + std::to_string(cin) +
                                 " channels, weight expects " + std::to_string(w.dim(1)));
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    require(ho > 0 && wo > 0, "conv2d: output would be empty");

    const bool has_bias = b.defined();
    const bool track = has_bias ? detail::track_grad<T>({&x, &w, &b})
                                : detail::track_grad<T>({&x, &w});
    auto xn = x.node();
    auto wn = w.node();
    auto bn = has_bias ? b.node() : nullptr;
    std::vector<std::shared_ptr<Node<T>>> parents{xn, wn};
    if (bn) parents.push_back(bn);

    const int krows = cin * kh * kw;
    const size_t spatial = static_cast<size_t>(ho) * wo;

    Tensor<T> out = detail::make_result<T>(
        {n, cout, ho, wo}, track, parents,
        [xn, wn, bn, n, cin, h, wd, cout, kh, kw, stride, pad, ho, wo, krows,
         spatial](Node<T>& self) {
            std::vector<T> col(static_cast<size_t>(krows) * spatial);
            std::vector<T> dcol;
            if (xn->requires_grad) {
                xn->ensure_grad();
                dcol.resize(col.size());
            }
            if (wn->requires_grad) wn->ensure_grad();
            if (bn && bn->requires_grad) bn->ensure_grad();
            const size_t x_stride = static_cast<size_t>(cin) * h * wd;
            const size_t y_stride = static_cast<size_t>(cout) * spatial;
            for (int bi = 0; bi < n; ++bi) {
                const T* dy = self.grad.data() + bi * y_stride;
                if (wn->requires_grad || xn->requires_grad)
                    detail::im2col(xn->value.data() + bi * x_stride, cin, h, wd, kh, kw, stride,
                                   pad, ho, wo, col.data());
                if (wn->requires_grad) {
                    // dW[cout, krows] += dy[cout, spatial] * col^T
                    gemm(false, true, cout, krows, static_cast<int>(spatial), T(1), dy,
                         static_cast<int>(spatial), col.data(), static_cast<int>(spatial), T(1),
                         wn->grad.data(), krows);
                }
                if (xn->requires_grad) {
                    // dcol = W^T * dy
                    gemm(true, false, krows, static_cast<int>(spatial), cout, T(1),
                         wn->value.data(), krows, dy, static_cast<int>(spatial), T(0), dcol.data(),
                         static_cast<int>(spatial));
                    detail::col2im_add(dcol.data(), cin, h, wd, kh, kw, stride, pad, ho, wo,
                                       xn->grad.data() + bi * x_stride);
                }
                if (bn && bn->requires_grad) {
                    for (int o = 0; o < cout; ++o) {
                        T acc = T(0);
                        const T* p = dy + static_cast<size_t>(o) * spatial;
                        for (size_t i = 0; i < spatial; ++i) acc += p[i];
                        bn->grad[o] += acc;
                    }
                }
            }
        });

    std::vector<T> col(static_cast<size_t>(krows) * spatial);
    const size_t x_stride = static_cast<size_t>(cin) * h * wd;
    const size_t y_stride = static_cast<size_t>(cout) * spatial;
    for (int bi = 0; bi < n; ++bi) {
        detail::im2col(x.data() + bi * x_stride, cin, h, wd, kh, kw, stride, pad, ho, wo,
                       col.data());
        gemm(false, false, cout, static_cast<int>(spatial), krows, T(1), w.data(), krows,
             col.data(), static_cast<int>(spatial), T(0), out.data() + bi * y_stride,
             static_cast<int>(spatial));
        if (has_bias) {
            for (int o = 0; o < cout; ++o) {
                T* p = out.data() + bi * y_stride + static_cast<size_t>(o) * spatial;
                const T bv = b.data()[o];
                for (size_t i = 0; i < spatial; ++i) p[i] += bv;
            }
        }
    }
    return out;
}

// Transposed convolution. x: [N,Cin,H,W], w: [Cin,Cout,kh,kw].
// out spatial: (H-1)*stride - 2*pad + kh + output_pad.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                           int pad, int output_pad) {
    require(x.ndim() == 4 && w.ndim() == 4, "conv_transpose2d: rank mismatch");
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    require(w.dim(0) == cin, "conv_transpose2d: channel mismatch");
    const int ho = (h - 1) * stride - 2 * pad + kh + output_pad;
    const int wo = (wd - 1) * stride - 2 * pad + kw + output_pad;
    require(ho > 0 && wo > 0, "conv_transpose2d: output would be empty");

    const bool has_bias = b.defined();
    const bool track = has_bias ? detail::track_grad<T>({&x, &w, &b})
                                : detail::track_grad<T>({&x, &w});
    auto xn = x.node();
    auto wn = w.node();
    auto bn = has_bias ? b.node() : nullptr;
    std::vector<std::shared_ptr<Node<T>>> parents{xn, wn};
    if (bn) parents.push_back(bn);

    const int krows = cout * kh * kw;
    const size_t in_spatial = static_cast<size_t>(h) * wd;
    const size_t out_spatial = static_cast<size_t>(ho) * wo;

    Tensor<T> out = detail::make_result<T>(
        {n, cout, ho, wo}, track, parents,
        [xn, wn, bn, n, cin, h, wd, cout, kh, kw, stride, pad, ho, wo, krows, in_spatial,
         out_spatial](Node<T>& self) {
            // dy plays the role of a convolution input: col(dy) relates the two.
            std::vector<T> col(static_cast<size_t>(krows) * in_spatial);
            if (xn->requires_grad) xn->ensure_grad();
            if (wn->requires_grad) wn->ensure_grad();
            if (bn && bn->requires_grad) bn->ensure_grad();
            const size_t x_stride = static_cast<size_t>(cin) * in_spatial;
            const size_t y_stride = static_cast<size_t>(cout) * out_spatial;
            for (int bi = 0; bi < n; ++bi) {
                const T* dy = self.grad.data() + bi * y_stride;
                detail::im2col(dy, cout, ho, wo, kh, kw, stride, pad, h, wd, col.data());
                if (xn->requires_grad) {
                    // dx[cin, in_spatial] = W[cin, krows] * col
                    gemm(false, false, cin, static_cast<int>(in_spatial), krows, T(1),
                         wn->value.data(), krows, col.data(), static_cast<int>(in_spatial), T(1),
                         xn->grad.data() + bi * x_stride, static_cast<int>(in_spatial));
                }
                if (wn->requires_grad) {
                    // dW[cin, krows] += x[cin, in_spatial] * col^T
                    gemm(false, true, cin, krows, static_cast<int>(in_spatial), T(1),
                         xn->value.data() + bi * x_stride, static_cast<int>(in_spatial),
                         col.data(), static_cast<int>(in_spatial), T(1), wn->grad.data(), krows);
                }
                if (bn && bn->requires_grad) {
                    for (int o = 0; o < cout; ++o) {
                        T acc = T(0);
                        const T* p = dy + static_cast<size_t>(o) * out_spatial;
                        for (size_t i = 0; i < out_spatial; ++i) acc += p[i];
                        bn->grad[o] += acc;
                    }
                }
            }
        });

    std::vector<T> col(static_cast<size_t>(krows) * in_spatial);
    const size_t x_stride = static_cast<size_t>(cin) * in_spatial;
    const size_t y_stride = static_cast<size_t>(cout) * out_spatial;
    for (int bi = 0; bi < n; ++bi) {
        // col = W^T * x, then scatter into the upsampled output grid.
        gemm(true, false, krows, static_cast<int>(in_spatial), cin, T(1), w.data(), krows,
             x.data() + bi * x_stride, static_cast<int>(in_spatial), T(0), col.data(),
             static_cast<int>(in_spatial));
        T* y = out.data() + bi * y_stride;
        detail::col2im_add(col.data(), cout, ho, wo, kh, kw, stride, pad, h, wd, y);
        if (has_bias) {
            for (int o = 0; o < cout; ++o) {
                T* p = y + static_cast<size_t>(o) * out_spatial;
                const T bv = b.data()[o];
                for (size_t i = 0; i < out_spatial; ++i) p[i] += bv;
            }
        }
    }
    return out;
}

}  // namespace hstrnet
