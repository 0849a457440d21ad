#pragma once

#include <cmath>

#include "hstrnet/gemm.hpp"
#include "hstrnet/tensor.hpp"

namespace hstrnet {

// y = x * W^T + b over the last dimension. x: [.., Din], w: [Dout, Din], b: [Dout] or undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    require(w.ndim() == 2, "linear: weight must be 2-d");
    const int din = w.dim(1), dout = w.dim(0);
    require(x.dim(x.ndim() - 1) == din, "linear: input width " +
                                            std::to_string(x.dim(x.ndim() - 1)) +
                                            " does not match weight " + std::to_string(din));
    const int m = static_cast<int>(x.numel()) / din;
    const bool has_bias = b.defined();
    const bool track =
        has_bias ? detail::track_grad<T>({&x, &w, &b}) : detail::track_grad<T>({&x, &w});
    auto xn = x.node();
    auto wn = w.node();
    auto bn = has_bias ? b.node() : nullptr;
    std::vector<std::shared_ptr<Node<T>>> parents{xn, wn};
    if (bn) parents.push_back(bn);

    std::vector<int> out_shape = x.shape();
    out_shape.back() = dout;

    Tensor<T> out = detail::make_result<T>(
        out_shape, track, parents, [xn, wn, bn, m, din, dout](Node<T>& self) {
            const T* dy = self.grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                // dx = dy * W
                gemm(false, false, m, din, dout, T(1), dy, dout, wn->value.data(), din, T(1),
                     xn->grad.data(), din);
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                // dW = dy^T * x
                gemm(true, false, dout, din, m, T(1), dy, dout, xn->value.data(), din, T(1),
                     wn->grad.data(), din);
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (int r = 0; r < m; ++r)
                    for (int o = 0; o < dout; ++o)
                        bn->grad[o] += dy[static_cast<size_t>(r) * dout + o];
            }
        });

    gemm(false, true, m, dout, din, T(1), x.data(), din, w.data(), din, T(0), out.data(), dout);
    if (has_bias)
        for (int r = 0; r < m; ++r)
            for (int o = 0; o < dout; ++o) out.data()[static_cast<size_t>(r) * dout + o] += b.data()[o];
    return out;
}

// Batched matrix product over the leading dimension: a [B,N,K] x b [B,K,M] -> [B,N,M].
// ta/tb transpose the per-batch operands ([B,K,N] / [B,M,K] inputs respectively).
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool ta = false, bool tb = false) {
    require(a.ndim() == 3 && b.ndim() == 3, "bmm: expects [B,*,*] operands");
    require(a.dim(0) == b.dim(0), "bmm: batch mismatch");
    const int bt = a.dim(0);
    const int n = ta ? a.dim(2) : a.dim(1);
    const int k = ta ? a.dim(1) : a.dim(2);
    const int kb = tb ? b.dim(2) : b.dim(1);
    const int m = tb ? b.dim(1) : b.dim(2);
    require(k == kb, "bmm: inner dimension mismatch");

    const bool track = detail::track_grad<T>({&a, &b});
    auto an = a.node();
    auto bn = b.node();
    const size_t as = static_cast<size_t>(a.dim(1)) * a.dim(2);
    const size_t bs = static_cast<size_t>(b.dim(1)) * b.dim(2);
    const size_t cs = static_cast<size_t>(n) * m;
    const int lda = a.dim(2), ldb = b.dim(2);

    Tensor<T> out = detail::make_result<T>(
        {bt, n, m}, track, {an, bn},
        [an, bn, bt, n, m, k, as, bs, cs, lda, ldb, ta, tb](Node<T>& self) {
            if (an->requires_grad) an->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (int i = 0; i < bt; ++i) {
                const T* dy = self.grad.data() + i * cs;
                const T* av = an->value.data() + i * as;
                const T* bv = bn->value.data() + i * bs;
                if (an->requires_grad) {
                    T* da = an->grad.data() + i * as;
                    if (!ta)
                        // da = dy * op(b)^T
                        gemm(false, !tb, n, k, m, T(1), dy, m, bv, ldb, T(1), da, lda);
                    else
                        // a used transposed: da^T accumulates as op(b) * dy^T
                        gemm(tb, true, k, n, m, T(1), bv, ldb, dy, m, T(1), da, lda);
                }
                if (bn->requires_grad) {
                    T* db = bn->grad.data() + i * bs;
                    if (!tb)
                        gemm(!ta, false, k, m, n, T(1), av, lda, dy, m, T(1), db, ldb);
                    else
                        gemm(true, ta, m, k, n, T(1), dy, m, av, lda, T(1), db, ldb);
                }
            }
        });

    for (int i = 0; i < bt; ++i)
        gemm(ta, tb, n, m, k, T(1), a.data() + i * as, lda, b.data() + i * bs, ldb, T(0),
             out.data() + i * cs, m);
    return out;
}

// Softmax over the last dimension.
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    const int d = x.dim(x.ndim() - 1);
    const int rows = static_cast<int>(x.numel()) / d;
    auto xn = x.node();
    const bool track = detail::track_grad<T>({&x});
    Tensor<T> out = detail::make_result<T>(
        x.shape(), track, {xn}, [xn, rows, d](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int r = 0; r < rows; ++r) {
                const T* y = self.value.data() + static_cast<size_t>(r) * d;
                const T* dy = self.grad.data() + static_cast<size_t>(r) * d;
                T dot = T(0);
                for (int i = 0; i < d; ++i) dot += dy[i] * y[i];
                T* dx = xn->grad.data() + static_cast<size_t>(r) * d;
                for (int i = 0; i < d; ++i) dx[i] += y[i] * (dy[i] - dot);
            }
        });
    for (int r = 0; r < rows; ++r) {
        const T* xv = x.data() + static_cast<size_t>(r) * d;
        T* y = out.data() + static_cast<size_t>(r) * d;
        T mx = xv[0];
        for (int i = 1; i < d; ++i) mx = std::max(mx, xv[i]);
        T sum = T(0);
        for (int i = 0; i < d; ++i) {
            y[i] = std::exp(xv[i] - mx);
            sum += y[i];
        }
        const T inv = T(1) / sum;
        for (int i = 0; i < d; ++i) y[i] *= inv;
    }
    return out;
}

// Layer normalization over the last dimension with learned scale/shift.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
    const int d = x.dim(x.ndim() - 1);
    require(gamma.numel() == d && beta.numel() == d, "layer_norm: affine size mismatch");
    const int rows = static_cast<int>(x.numel()) / d;
    const bool track = detail::track_grad<T>({&x, &gamma, &beta});
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();

    // Cache the normalized values and inverse stddev for the backward pass.
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto istd = std::make_shared<std::vector<T>>(rows);

    Tensor<T> out = detail::make_result<T>(
        x.shape(), track, {xn, gn, bn}, [xn, gn, bn, xhat, istd, rows, d](Node<T>& self) {
            if (xn->requires_grad) xn->ensure_grad();
            if (gn->requires_grad) gn->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (int r = 0; r < rows; ++r) {
                const T* dy = self.grad.data() + static_cast<size_t>(r) * d;
                const T* xh = xhat->data() + static_cast<size_t>(r) * d;
                if (gn->requires_grad || bn->requires_grad)
                    for (int i = 0; i < d; ++i) {
                        if (gn->requires_grad) gn->grad[i] += dy[i] * xh[i];
                        if (bn->requires_grad) bn->grad[i] += dy[i];
                    }
                if (!xn->requires_grad) continue;
                T sum_g = T(0), sum_gx = T(0);
                for (int i = 0; i < d; ++i) {
                    const T gi = dy[i] * gn->value[i];
                    sum_g += gi;
                    sum_gx += gi * xh[i];
                }
                T* dx = xn->grad.data() + static_cast<size_t>(r) * d;
                const T inv_d = T(1) / T(d);
                for (int i = 0; i < d; ++i) {
                    const T gi = dy[i] * gn->value[i];
                    dx[i] += (*istd)[r] * (gi - inv_d * sum_g - xh[i] * inv_d * sum_gx);
                }
            }
        });

    for (int r = 0; r < rows; ++r) {
        const T* xv = x.data() + static_cast<size_t>(r) * d;
        T mean = T(0);
        for (int i = 0; i < d; ++i) mean += xv[i];
        mean /= T(d);
        T var = T(0);
        for (int i = 0; i < d; ++i) var += (xv[i] - mean) * (xv[i] - mean);
        var /= T(d);
        const T is = T(1) / std::sqrt(var + eps);
        (*istd)[r] = is;
        T* xh = xhat->data() + static_cast<size_t>(r) * d;
        T* y = out.data() + static_cast<size_t>(r) * d;
        for (int i = 0; i < d; ++i) {
            xh[i] = (xv[i] - mean) * is;
            y[i] = xh[i] * gamma.data()[i] + beta.data()[i];
        }
    }
    return out;
}

}  // namespace hstrnet
