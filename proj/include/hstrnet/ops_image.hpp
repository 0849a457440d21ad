#pragma once

#include <cmath>
#include <limits>

#include "hstrnet/gemm.hpp"
#include "hstrnet/tensor.hpp"

namespace hstrnet {

namespace detail {

// Bilinear corner indices/weights for a sample position clamped to the frame.
// in_range flags report whether the pre-clamp coordinate had a live derivative.
template <typename T>
struct BilinearTap {
    int x0, x1, y0, y1;
    T wx, wy;
    bool dx_live, dy_live;
};

template <typename T>
inline BilinearTap<T> bilinear_tap(T cx, T cy, int w, int h) {
    // Non-finite coordinates (a diverged flow field) must not turn into wild
    // indices. Keep the taps in-bounds but poison the weights so the garbage
    // stays visible downstream instead of reading as a border sample.
    const bool bad = !(std::isfinite(cx) && std::isfinite(cy));
    if (bad) cx = cy = T(0);
    BilinearTap<T> t;
    t.dx_live = cx > T(0) && cx < T(w - 1);
    t.dy_live = cy > T(0) && cy < T(h - 1);
    cx = std::min(std::max(cx, T(0)), T(w - 1));
    cy = std::min(std::max(cy, T(0)), T(h - 1));
    const T fx = std::floor(cx);
    const T fy = std::floor(cy);
    t.x0 = static_cast<int>(fx);
    t.y0 = static_cast<int>(fy);
    t.x1 = std::min(t.x0 + 1, w - 1);
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.wx = cx - fx;
    t.wy = cy - fy;
    if (bad) {
        t.wx = t.wy = std::numeric_limits<T>::quiet_NaN();
        t.dx_live = t.dy_live = false;
    }
    return t;
}

template <typename T>
inline T bilinear_value(const T* plane, int w, const BilinearTap<T>& t) {
    if (t.wx == T(0) && t.wy == T(0)) return plane[static_cast<size_t>(t.y0) * w + t.x0];
    const T v00 = plane[static_cast<size_t>(t.y0) * w + t.x0];
    const T v01 = plane[static_cast<size_t>(t.y0) * w + t.x1];
    const T v10 = plane[static_cast<size_t>(t.y1) * w + t.x0];
    const T v11 = plane[static_cast<size_t>(t.y1) * w + t.x1];
    return (T(1) - t.wy) * ((T(1) - t.wx) * v00 + t.wx * v01) +
           t.wy * ((T(1) - t.wx) * v10 + t.wx * v11);
}

}  // namespace detail

// Bilinear resize of an NCHW map; sample grid uses the half-pixel-center convention.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int oh, int ow) {
    require(x.ndim() == 4, "bilinear_resize: expects NCHW");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(oh > 0 && ow > 0, "bilinear_resize: bad target size");
    if (oh == h && ow == w) return x;
    auto xn = x.node();
    const bool track = detail::track_grad<T>({&x});
    const T sy = T(h) / T(oh);
    const T sx = T(w) / T(ow);

    std::vector<detail::BilinearTap<T>> taps(static_cast<size_t>(oh) * ow);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            taps[static_cast<size_t>(oy) * ow + ox] = detail::bilinear_tap(
                (T(ox) + T(0.5)) * sx - T(0.5), (T(oy) + T(0.5)) * sy - T(0.5), w, h);

    auto taps_ptr = std::make_shared<std::vector<detail::BilinearTap<T>>>(std::move(taps));
    Tensor<T> out = detail::make_result<T>(
        {n, c, oh, ow}, track, {xn}, [xn, taps_ptr, n, c, h, w, oh, ow](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const auto& tp = *taps_ptr;
            for (int bi = 0; bi < n * c; ++bi) {
                T* dst = xn->grad.data() + static_cast<size_t>(bi) * h * w;
                const T* dy = self.grad.data() + static_cast<size_t>(bi) * oh * ow;
                for (size_t p = 0; p < tp.size(); ++p) {
                    const auto& t = tp[p];
                    const T g = dy[p];
                    dst[static_cast<size_t>(t.y0) * w + t.x0] += g * (T(1) - t.wy) * (T(1) - t.wx);
                    dst[static_cast<size_t>(t.y0) * w + t.x1] += g * (T(1) - t.wy) * t.wx;
                    dst[static_cast<size_t>(t.y1) * w + t.x0] += g * t.wy * (T(1) - t.wx);
                    dst[static_cast<size_t>(t.y1) * w + t.x1] += g * t.wy * t.wx;
                }
            }
        });

    const auto& tp = *taps_ptr;
    for (int bi = 0; bi < n * c; ++bi) {
        const T* src = x.data() + static_cast<size_t>(bi) * h * w;
        T* dst = out.data() + static_cast<size_t>(bi) * oh * ow;
        for (size_t p = 0; p < tp.size(); ++p) dst[p] = detail::bilinear_value(src, w, tp[p]);
    }
    return out;
}

template <typename T>
Tensor<T> avg_pool2x2(const Tensor<T>& x) {
    require(x.ndim() == 4, "avg_pool2x2: expects NCHW");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(h % 2 == 0 && w % 2 == 0,
            "avg_pool2x2: odd spatial size " + std::to_string(h) + "x" + std::to_string(w));
    const int oh = h / 2, ow = w / 2;
    auto xn = x.node();
    const bool track = detail::track_grad<T>({&x});
    Tensor<T> out = detail::make_result<T>(
        {n, c, oh, ow}, track, {xn}, [xn, n, c, h, w, oh, ow](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int bi = 0; bi < n * c; ++bi) {
                T* dst = xn->grad.data() + static_cast<size_t>(bi) * h * w;
                const T* dy = self.grad.data() + static_cast<size_t>(bi) * oh * ow;
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        const T g = dy[static_cast<size_t>(oy) * ow + ox] * T(0.25);
                        dst[static_cast<size_t>(2 * oy) * w + 2 * ox] += g;
                        dst[static_cast<size_t>(2 * oy) * w + 2 * ox + 1] += g;
                        dst[static_cast<size_t>(2 * oy + 1) * w + 2 * ox] += g;
                        dst[static_cast<size_t>(2 * oy + 1) * w + 2 * ox + 1] += g;
                    }
            }
        });
    for (int bi = 0; bi < n * c; ++bi) {
        const T* src = x.data() + static_cast<size_t>(bi) * h * w;
        T* dst = out.data() + static_cast<size_t>(bi) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                dst[static_cast<size_t>(oy) * ow + ox] =
                    (src[static_cast<size_t>(2 * oy) * w + 2 * ox] +
                     src[static_cast<size_t>(2 * oy) * w + 2 * ox + 1] +
                     src[static_cast<size_t>(2 * oy + 1) * w + 2 * ox] +
                     src[static_cast<size_t>(2 * oy + 1) * w + 2 * ox + 1]) *
                    T(0.25);
    }
    return out;
}

// Backward warp: out(x,y) = bilinear sample of src at (x+dx, y+dy); border-clamped.
// flow: [N,2,H,W] with channel 0 = horizontal, channel 1 = vertical displacement.
template <typename T>
Tensor<T> warp(const Tensor<T>& src, const Tensor<T>& flow) {
    require(src.ndim() == 4 && flow.ndim() == 4, "warp: expects NCHW");
    const int n = src.dim(0), c = src.dim(1), h = src.dim(2), w = src.dim(3);
    require(flow.dim(0) == n && flow.dim(1) == 2 && flow.dim(2) == h && flow.dim(3) == w,
            "warp: flow must be [N,2,H,W] matching src spatial size");
    auto sn = src.node();
    auto fn = flow.node();
    const bool track = detail::track_grad<T>({&src, &flow});
    const size_t plane = static_cast<size_t>(h) * w;

    Tensor<T> out = detail::make_result<T>(
        {n, c, h, w}, track, {sn, fn}, [sn, fn, n, c, h, w, plane](Node<T>& self) {
            const bool need_src = sn->requires_grad;
            const bool need_flow = fn->requires_grad;
            if (!need_src && !need_flow) return;
            if (need_src) sn->ensure_grad();
            if (need_flow) fn->ensure_grad();
            for (int bi = 0; bi < n; ++bi) {
                const T* fx = fn->value.data() + static_cast<size_t>(bi) * 2 * plane;
                const T* fy = fx + plane;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        const size_t p = static_cast<size_t>(y) * w + x;
                        const auto t =
                            detail::bilinear_tap<T>(T(x) + fx[p], T(y) + fy[p], w, h);
                        const size_t i00 = static_cast<size_t>(t.y0) * w + t.x0;
                        const size_t i01 = static_cast<size_t>(t.y0) * w + t.x1;
                        const size_t i10 = static_cast<size_t>(t.y1) * w + t.x0;
                        const size_t i11 = static_cast<size_t>(t.y1) * w + t.x1;
                        T gx = T(0), gy = T(0);
                        for (int ci = 0; ci < c; ++ci) {
                            const size_t off = (static_cast<size_t>(bi) * c + ci) * plane;
                            const T g = self.grad[off + p];
                            if (g == T(0)) continue;
                            if (need_src) {
                                T* ds = sn->grad.data() + off;
                                ds[i00] += g * (T(1) - t.wy) * (T(1) - t.wx);
                                ds[i01] += g * (T(1) - t.wy) * t.wx;
                                ds[i10] += g * t.wy * (T(1) - t.wx);
                                ds[i11] += g * t.wy * t.wx;
                            }
                            if (need_flow) {
                                const T* sv = sn->value.data() + off;
                                gx += g * ((T(1) - t.wy) * (sv[i01] - sv[i00]) +
                                           t.wy * (sv[i11] - sv[i10]));
                                gy += g * ((T(1) - t.wx) * (sv[i10] - sv[i00]) +
                                           t.wx * (sv[i11] - sv[i01]));
                            }
                        }
                        if (need_flow) {
                            T* df = fn->grad.data() + static_cast<size_t>(bi) * 2 * plane;
                            if (t.dx_live) df[p] += gx;
                            if (t.dy_live) df[plane + p] += gy;
                        }
                    }
            }
        });

    for (int bi = 0; bi < n; ++bi) {
        const T* fx = flow.data() + static_cast<size_t>(bi) * 2 * plane;
        const T* fy = fx + plane;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const size_t p = static_cast<size_t>(y) * w + x;
                const auto t = detail::bilinear_tap<T>(T(x) + fx[p], T(y) + fy[p], w, h);
                for (int ci = 0; ci < c; ++ci) {
                    const T* sv = src.data() + (static_cast<size_t>(bi) * c + ci) * plane;
                    out.data()[(static_cast<size_t>(bi) * c + ci) * plane + p] =
                        detail::bilinear_value(sv, w, t);
                }
            }
    }
    return out;
}

// 3x3 deformable convolution: every tap at output p samples the input at
// (p + tap displacement + offsets(p)), bilinearly with border clamping.
// offsets: [N,2,H,W]; w: [Cout,Cin,3,3]; optional taps: [9,2] static per-tap refinements.
template <typename T>
Tensor<T> deform_conv3x3(const Tensor<T>& x, const Tensor<T>& offsets, const Tensor<T>& w,
                         const Tensor<T>& b, const Tensor<T>& taps = Tensor<T>()) {
    require(x.ndim() == 4 && offsets.ndim() == 4 && w.ndim() == 4, "deform_conv3x3: rank mismatch");
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    require(offsets.dim(0) == n && offsets.dim(1) == 2 && offsets.dim(2) == h &&
                offsets.dim(3) == wd,
            "deform_conv3x3: offsets must be [N,2,H,W]");
    require(w.dim(1) == cin && w.dim(2) == 3 && w.dim(3) == 3,
            "deform_conv3x3: weight must be [Cout,Cin,3,3]");
    const int cout = w.dim(0);
    const bool has_bias = b.defined();
    const bool has_taps = taps.defined();
    if (has_taps) require(taps.numel() == 18, "deform_conv3x3: taps must hold 9 (dx,dy) pairs");

    std::vector<const Tensor<T>*> track_list{&x, &offsets, &w};
    if (has_bias) track_list.push_back(&b);
    if (has_taps) track_list.push_back(&taps);
    const bool track = detail::track_grad<T>(track_list);

    auto xn = x.node();
    auto on = offsets.node();
    auto wn = w.node();
    auto bn = has_bias ? b.node() : nullptr;
    auto tn = has_taps ? taps.node() : nullptr;
    std::vector<std::shared_ptr<Node<T>>> parents{xn, on, wn};
    if (bn) parents.push_back(bn);
    if (tn) parents.push_back(tn);

    const size_t plane = static_cast<size_t>(h) * wd;
    const int krows = cin * 9;

    // col rows are ordered ci*9 + tap so the OIHW weight flattens naturally.
    auto build_col = [n, cin, h, wd, plane, tn](const T* xv, const T* ov, int bi, T* col,
                                                std::vector<detail::BilinearTap<T>>* tap_cache) {
        const T* fx = ov + static_cast<size_t>(bi) * 2 * plane;
        const T* fy = fx + plane;
        for (int tap = 0; tap < 9; ++tap) {
            const T tdx = T(tap % 3 - 1) + (tn ? tn->value[2 * tap] : T(0));
            const T tdy = T(tap / 3 - 1) + (tn ? tn->value[2 * tap + 1] : T(0));
            detail::BilinearTap<T>* tc = tap_cache ? tap_cache->data() + tap * plane : nullptr;
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < wd; ++xx) {
                    const size_t p = static_cast<size_t>(y) * wd + xx;
                    const auto t = detail::bilinear_tap<T>(T(xx) + tdx + fx[p],
                                                           T(y) + tdy + fy[p], wd, h);
                    if (tc) tc[p] = t;
                    for (int ci = 0; ci < cin; ++ci)
                        col[(static_cast<size_t>(ci) * 9 + tap) * plane + p] =
                            detail::bilinear_value(
                                xv + (static_cast<size_t>(bi) * cin + ci) * plane, wd, t);
                }
        }
    };

    Tensor<T> out = detail::make_result<T>(
        {n, cout, h, wd}, track, parents,
        [xn, on, wn, bn, tn, n, cin, h, wd, cout, plane, krows, build_col](Node<T>& self) {
            const bool need_x = xn->requires_grad;
            const bool need_o = on->requires_grad;
            const bool need_w = wn->requires_grad;
            const bool need_t = tn && tn->requires_grad;
            if (need_x) xn->ensure_grad();
            if (need_o) on->ensure_grad();
            if (need_w) wn->ensure_grad();
            if (bn && bn->requires_grad) bn->ensure_grad();
            if (need_t) tn->ensure_grad();

            std::vector<T> col(static_cast<size_t>(krows) * plane);
            std::vector<T> dcol(col.size());
            std::vector<detail::BilinearTap<T>> tap_cache(9 * plane);
            for (int bi = 0; bi < n; ++bi) {
                build_col(xn->value.data(), on->value.data(), bi, col.data(), &tap_cache);
                const T* dy = self.grad.data() + static_cast<size_t>(bi) * cout * plane;
                if (need_w)
                    gemm(false, true, cout, krows, static_cast<int>(plane), T(1), dy,
                         static_cast<int>(plane), col.data(), static_cast<int>(plane), T(1),
                         wn->grad.data(), krows);
                if (bn && bn->requires_grad) {
                    for (int o = 0; o < cout; ++o) {
                        T acc = T(0);
                        const T* p = dy + static_cast<size_t>(o) * plane;
                        for (size_t i = 0; i < plane; ++i) acc += p[i];
                        bn->grad[o] += acc;
                    }
                }
                if (!(need_x || need_o || need_t)) continue;
                gemm(true, false, krows, static_cast<int>(plane), cout, T(1), wn->value.data(),
                     krows, dy, static_cast<int>(plane), T(0), dcol.data(),
                     static_cast<int>(plane));
                T* dox = need_o ? on->grad.data() + static_cast<size_t>(bi) * 2 * plane : nullptr;
                for (int tap = 0; tap < 9; ++tap) {
                    T tap_gx = T(0), tap_gy = T(0);
                    const detail::BilinearTap<T>* tc = tap_cache.data() + tap * plane;
                    for (size_t p = 0; p < plane; ++p) {
                        const auto& t = tc[p];
                        const size_t i00 = static_cast<size_t>(t.y0) * wd + t.x0;
                        const size_t i01 = static_cast<size_t>(t.y0) * wd + t.x1;
                        const size_t i10 = static_cast<size_t>(t.y1) * wd + t.x0;
                        const size_t i11 = static_cast<size_t>(t.y1) * wd + t.x1;
                        T gx = T(0), gy = T(0);
                        for (int ci = 0; ci < cin; ++ci) {
                            const T g = dcol[(static_cast<size_t>(ci) * 9 + tap) * plane + p];
                            if (g == T(0)) continue;
                            const size_t off = (static_cast<size_t>(bi) * cin + ci) * plane;
                            if (need_x) {
                                T* dxp = xn->grad.data() + off;
                                dxp[i00] += g * (T(1) - t.wy) * (T(1) - t.wx);
                                dxp[i01] += g * (T(1) - t.wy) * t.wx;
                                dxp[i10] += g * t.wy * (T(1) - t.wx);
                                dxp[i11] += g * t.wy * t.wx;
                            }
                            if (need_o || need_t) {
                                const T* sv = xn->value.data() + off;
                                gx += g * ((T(1) - t.wy) * (sv[i01] - sv[i00]) +
                                           t.wy * (sv[i11] - sv[i10]));
                                gy += g * ((T(1) - t.wx) * (sv[i10] - sv[i00]) +
                                           t.wx * (sv[i11] - sv[i01]));
                            }
                        }
                        if (t.dx_live) {
                            if (dox) dox[p] += gx;
                            tap_gx += gx;
                        }
                        if (t.dy_live) {
                            if (dox) dox[plane + p] += gy;
                            tap_gy += gy;
                        }
                    }
                    if (need_t) {
                        tn->grad[2 * tap] += tap_gx;
                        tn->grad[2 * tap + 1] += tap_gy;
                    }
                }
            }
        });

    std::vector<T> col(static_cast<size_t>(krows) * plane);
    for (int bi = 0; bi < n; ++bi) {
        build_col(x.data(), offsets.data(), bi, col.data(), nullptr);
        T* y = out.data() + static_cast<size_t>(bi) * cout * plane;
        gemm(false, false, cout, static_cast<int>(plane), krows, T(1), w.data(), krows, col.data(),
             static_cast<int>(plane), T(0), y, static_cast<int>(plane));
        if (has_bias)
            for (int o = 0; o < cout; ++o) {
                T* p = y + static_cast<size_t>(o) * plane;
                const T bv = b.data()[o];
                for (size_t i = 0; i < plane; ++i) p[i] += bv;
            }
    }
    return out;
}

// Replication padding on the bottom/right (or any sides) of an NCHW map.
template <typename T>
Tensor<T> pad_replicate(const Tensor<T>& x, int top, int bottom, int left, int right) {
    require(x.ndim() == 4, "pad_replicate: expects NCHW");
    require(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "pad_replicate: negative pad");
    if (top == 0 && bottom == 0 && left == 0 && right == 0) return x;
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h + top + bottom, ow = w + left + right;
    auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n) * c * oh * ow);
    size_t k = 0;
    for (int bi = 0; bi < n * c; ++bi) {
        const int64_t base = static_cast<int64_t>(bi) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            const int sy = std::min(std::max(oy - top, 0), h - 1);
            for (int ox = 0; ox < ow; ++ox) {
                const int sx = std::min(std::max(ox - left, 0), w - 1);
                (*map)[k++] = base + static_cast<int64_t>(sy) * w + sx;
            }
        }
    }
    return index_map(x, {n, c, oh, ow}, map);
}

template <typename T>
Tensor<T> crop_nchw(const Tensor<T>& x, int top, int left, int oh, int ow) {
    require(x.ndim() == 4, "crop_nchw: expects NCHW");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(top >= 0 && left >= 0 && top + oh <= h && left + ow <= w, "crop_nchw: out of bounds");
    if (top == 0 && left == 0 && oh == h && ow == w) return x;
    auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n) * c * oh * ow);
    size_t k = 0;
    for (int bi = 0; bi < n * c; ++bi) {
        const int64_t base = static_cast<int64_t>(bi) * h * w;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                (*map)[k++] = base + static_cast<int64_t>(top + oy) * w + (left + ox);
    }
    return index_map(x, {n, c, oh, ow}, map);
}

}  // namespace hstrnet
