#include "hstrnet/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "hstrnet/model.hpp"
#include "hstrnet/rng.hpp"

namespace hstrnet {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), pattern, a, b);
    return buf;
}

SelfCheck check_warp_identity() {
    Rng rng(101);
    bool ok = true;
    for (int i = 0; i < 20 && ok; ++i) {
        Tensor<float> x = Tensor<float>::uniform({1, 3, 24, 32}, rng, 0.f, 1.f);
        Tensor<float> flow = Tensor<float>::zeros({1, 2, 24, 32});
        Tensor<float> y = warp(x, flow);
        for (size_t k = 0; k < x.numel(); ++k)
            if (y.data()[k] != x.data()[k]) ok = false;
    }
    return {"warp zero-flow identity", ok, ok ? "bitwise equal on 20 images" : "mismatch"};
}

SelfCheck check_warp_ramp() {
    const int h = 12, w = 40;
    Tensor<float> x = Tensor<float>::zeros({1, 1, h, w});
    for (int y = 0; y < h; ++y)
        for (int i = 0; i < w; ++i) x.data()[y * w + i] = static_cast<float>(i) / (w - 1);
    double worst = 0.0;
    for (float dx : {1.0f, 0.5f, 2.25f}) {
        Tensor<float> flow = Tensor<float>::zeros({1, 2, h, w});
        for (int k = 0; k < h * w; ++k) flow.data()[k] = dx;
        Tensor<float> y = warp(x, flow);
        for (int yy = 0; yy < h; ++yy)
            for (int i = 0; i < w; ++i) {
                const double want = std::min<double>(i + dx, w - 1) / (w - 1);
                worst = std::max(worst, std::abs(y.data()[yy * w + i] - want));
            }
    }
    return {"warp ramp-shift oracle", worst <= 1e-6, fmt("max err %.3g (tol 1e-6)", worst)};
}

SelfCheck check_blend_endpoints() {
    Rng rng(202);
    Tensor<float> hr = Tensor<float>::uniform({1, 3, 9, 13}, rng, 0.f, 1.f);
    Tensor<float> lr = Tensor<float>::uniform({1, 3, 9, 13}, rng, 0.f, 1.f);
    FusionOutput<float> all_hr{Tensor<float>::zeros({1, 3, 9, 13}),
                               Tensor<float>::full({1, 1, 9, 13}, 1.f)};
    FusionOutput<float> all_lr{Tensor<float>::zeros({1, 3, 9, 13}),
                               Tensor<float>::zeros({1, 1, 9, 13})};
    Tensor<float> top = reconstruct(hr, lr, all_hr);
    Tensor<float> bot = reconstruct(hr, lr, all_lr);
    bool ok = true;
    for (size_t k = 0; k < hr.numel(); ++k) {
        if (top.data()[k] != hr.data()[k]) ok = false;
        if (bot.data()[k] != lr.data()[k]) ok = false;
    }
    return {"blend endpoints", ok, ok ? "mask 1 -> warped ref, mask 0 -> lr, bitwise" : "mismatch"};
}

SelfCheck check_blend_affine() {
    Rng rng(203);
    Tensor<float> hr = Tensor<float>::uniform({2, 3, 7, 11}, rng, 0.f, 1.f);
    Tensor<float> lr = Tensor<float>::uniform({2, 3, 7, 11}, rng, 0.f, 1.f);
    FusionOutput<float> out{Tensor<float>::uniform({2, 3, 7, 11}, rng, -0.5f, 0.5f),
                            Tensor<float>::uniform({2, 1, 7, 11}, rng, 0.05f, 0.95f)};
    Tensor<float> got = reconstruct(hr, lr, out);
    const size_t plane = 7 * 11;
    double worst = 0.0;
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
            for (size_t k = 0; k < plane; ++k) {
                const size_t i = (n * 3 + c) * plane + k;
                const double m = out.mask.data()[n * plane + k];
                const double want = m * hr.data()[i] + (1.0 - m) * lr.data()[i] +
                                    out.residual.data()[i];
                worst = std::max(worst, std::abs(got.data()[i] - want));
            }
    return {"blend affine form", worst <= 1e-6, fmt("max err %.3g (tol 1e-6)", worst)};
}

SelfCheck check_attention_oracle() {
    const int b = 16, win = 3, nt = win * win, d = 8, heads = 2, dh = d / heads;
    auto p = CrossAttnParams<double>::make(d, heads, win, false);
    ParamList<double> plist;
    p.register_params("attn", plist);
    init_params_random(plist, 4242);
    Rng rng(11);
    Tensor<double> tok_lr = Tensor<double>::uniform({b, nt, d}, rng, -1.0, 1.0);
    Tensor<double> tok_ref = Tensor<double>::uniform({b, nt, d}, rng, -1.0, 1.0);
    auto r = cross_frame_attention(tok_lr, tok_ref, p);

    auto project = [&](const Tensor<double>& tok, const LinearLayer<double>& lin, int bi, int ti,
                       std::vector<double>& out) {
        out.assign(static_cast<size_t>(d), 0.0);
        for (int o = 0; o < d; ++o) {
            double acc = lin.bias.data()[o];
            for (int in = 0; in < d; ++in)
                acc += lin.weight.data()[o * d + in] * tok.data()[(bi * nt + ti) * d + in];
            out[static_cast<size_t>(o)] = acc;
        }
    };

    double worst = 0.0, worst_row = 0.0;
    std::vector<double> qi, kj;
    for (int bi = 0; bi < b; ++bi) {
        std::vector<std::vector<double>> v(nt);
        for (int j = 0; j < nt; ++j) project(tok_ref, p.ref_v, bi, j, v[j]);

        // per head: attention over window tokens using that head's channels
        for (int hd = 0; hd < heads; ++hd) {
            std::vector<std::vector<double>> at_ref(nt, std::vector<double>(nt)),
                at_lr(nt, std::vector<double>(nt));
            auto fill = [&](const LinearLayer<double>& wq, const Tensor<double>& tq,
                            const LinearLayer<double>& wk, const Tensor<double>& tk,
                            std::vector<std::vector<double>>& at) {
                for (int i = 0; i < nt; ++i) {
                    std::vector<double> logit(nt);
                    double mx = -1e300;
                    for (int j = 0; j < nt; ++j) {
                        project(tq, wq, bi, i, qi);
                        project(tk, wk, bi, j, kj);
                        double dot = 0.0;
                        for (int c = hd * dh; c < (hd + 1) * dh; ++c) dot += qi[c] * kj[c];
                        const int dy = i / win - j / win + win - 1;
                        const int dx = i % win - j % win + win - 1;
                        logit[j] = dot / std::sqrt(static_cast<double>(dh)) +
                                   p.relpos.data()[hd * (2 * win - 1) * (2 * win - 1) +
                                                   dy * (2 * win - 1) + dx];
                        mx = std::max(mx, logit[j]);
                    }
                    double z = 0.0;
                    for (int j = 0; j < nt; ++j) z += std::exp(logit[j] - mx);
                    for (int j = 0; j < nt; ++j) at[i][j] = std::exp(logit[j] - mx) / z;
                }
            };
            fill(p.lr_q, tok_lr, p.ref_k, tok_ref, at_ref);
            fill(p.ref_q, tok_ref, p.lr_k, tok_lr, at_lr);

            for (int i = 0; i < nt; ++i) {
                double row = 0.0;
                for (int j = 0; j < nt; ++j)
                    row += r.at_ref.data()[((bi * heads + hd) * nt + i) * nt + j];
                worst_row = std::max(worst_row, std::abs(row - 1.0));
            }
            for (int i = 0; i < nt; ++i)
                for (int c = hd * dh; c < (hd + 1) * dh; ++c) {
                    double want = 0.0;
                    for (int j = 0; j < nt; ++j) {
                        double mid = 0.0;
                        for (int k2 = 0; k2 < nt; ++k2)
                            mid += at_ref[j][k2] * v[k2][static_cast<size_t>(c)];
                        want += at_lr[i][j] * mid;
                    }
                    const double got = r.at.data()[(bi * nt + i) * d + c];
                    worst = std::max(worst, std::abs(got - want));
                }
        }
    }
    const bool ok = worst <= 1e-5 && worst_row <= 1e-5;
    return {"cross-frame attention oracle", ok,
            fmt("max err %.3g, row-sum err %.3g (tol 1e-5)", worst, worst_row)};
}

SelfCheck check_attention_symmetry() {
    const int b = 4, win = 3, nt = win * win, d = 6;
    auto p = CrossAttnParams<float>::make(d, 1, win, false);
    ParamList<float> plist;
    p.register_params("attn", plist);
    init_params_random(plist, 99);
    // tie the two frames' projections
    p.ref_q.weight.values() = p.lr_q.weight.values();
    p.ref_q.bias.values() = p.lr_q.bias.values();
    p.ref_k.weight.values() = p.lr_k.weight.values();
    p.ref_k.bias.values() = p.lr_k.bias.values();
    Rng rng(17);
    Tensor<float> tok = Tensor<float>::uniform({b, nt, d}, rng, -1.f, 1.f);
    auto r = cross_frame_attention(tok, tok, p);
    double worst = 0.0;
    for (size_t k = 0; k < r.at_ref.numel(); ++k)
        worst = std::max(worst, std::abs(static_cast<double>(r.at_ref.data()[k]) -
                                         r.at_lr.data()[k]));
    return {"attention symmetry (tied weights)", worst <= 1e-6,
            fmt("max abs diff %.3g (tol 1e-6)", worst)};
}

SelfCheck check_deform_oracle() {
    const int c = 5, h = 10, w = 12;
    Rng rng(31);
    Tensor<double> x = Tensor<double>::uniform({1, c, h, w}, rng, -1.0, 1.0);
    Tensor<double> weight = Tensor<double>::uniform({c, c, 3, 3}, rng, -0.3, 0.3);
    Tensor<double> bias = Tensor<double>::uniform({c}, rng, -0.1, 0.1);
    Tensor<double> offsets = Tensor<double>::zeros({1, 2, h, w});
    Tensor<double> got = deform_conv3x3(x, offsets, weight, bias);
    Tensor<double> want = conv2d(pad_replicate(x, 1, 1, 1, 1), weight, bias, 1, 0);
    double worst = 0.0;
    for (size_t k = 0; k < got.numel(); ++k)
        worst = std::max(worst, std::abs(got.data()[k] - want.data()[k]));
    return {"deformable sampling oracle", worst <= 1e-6, fmt("max err %.3g (tol 1e-6)", worst)};
}

SelfCheck check_shape_ladder() {
    ModelConfig cfg;  // default widths for the context and matching stages
    cfg.motion_widths = {12, 10, 8};
    cfg.fusion_down = {8, 12, 16, 20};
    cfg.fusion_up = {20, 16, 12, 8};
    auto model = HstrNet<float>::build(cfg);
    model.init(5);
    Rng rng(41);
    bool ok = true;
    std::string detail = "output resolution equals input at ";
    for (auto [h, w] : std::vector<std::pair<int, int>>{{32, 32}, {20, 28}, {17, 33}, {380, 672}}) {
        Tensor<float> lr = Tensor<float>::uniform({1, 3, h, w}, rng, 0.f, 1.f);
        Tensor<float> ref = Tensor<float>::uniform({1, 3, h, w}, rng, 0.f, 1.f);
        Tensor<float> y = model.forward(lr, ref);
        if (y.dim(2) != h || y.dim(3) != w) ok = false;
        for (size_t k = 0; k < y.numel(); ++k)
            if (!(y.data()[k] >= 0.f && y.data()[k] <= 1.f)) ok = false;
        detail += std::to_string(h) + "x" + std::to_string(w) + " ";
    }
    return {"shape ladder", ok, ok ? detail : "resolution or range violation"};
}

template <typename T>
SelfCheck grad_probe(double step, double tol, int per_tensor,
                     const std::vector<std::string>& names, const char* label) {
    ModelConfig cfg;
    auto model = HstrNet<T>::build(cfg);
    model.init_random(9101);
    Rng rng(77);
    Tensor<T> lr = Tensor<T>::uniform({1, 3, 8, 8}, rng, T(0), T(1));
    Tensor<T> ref = Tensor<T>::uniform({1, 3, 8, 8}, rng, T(0), T(1));
    auto params = model.named_params();

    auto loss_value = [&]() {
        NoGradGuard guard;
        Tensor<T> y = model.forward_unclamped(lr, ref);
        double acc = 0.0;
        for (size_t k = 0; k < y.numel(); ++k)
            acc += static_cast<double>(y.data()[k]) * y.data()[k];
        return acc;
    };

    for (auto& p : params.items) p.tensor.zero_grad();
    Tensor<T> y = model.forward_unclamped(lr, ref);
    Tensor<T> loss = sum(mul(y, y));
    loss.backward();

    double worst = 0.0;
    for (const auto& name : names) {
        auto* p = params.find(name);
        if (p == nullptr) return {label, false, "missing parameter " + name};
        if (p->tensor.grad().empty()) return {label, false, "no gradient on " + name};
        const size_t n = p->tensor.numel();
        for (int k = 0; k < per_tensor; ++k) {
            const size_t idx = (n / 2 + static_cast<size_t>(k) * 37) % n;
            const double analytic = p->tensor.grad()[idx];
            const T old = p->tensor.data()[idx];
            p->tensor.data()[idx] = static_cast<T>(old + step);
            const double up = loss_value();
            p->tensor.data()[idx] = static_cast<T>(old - step);
            const double down = loss_value();
            p->tensor.data()[idx] = old;
            const double fd = (up - down) / (2.0 * step);
            const double rel = std::abs(fd - analytic) /
                               std::max({1.0, std::abs(fd), std::abs(analytic)});
            worst = std::max(worst, rel);
        }
    }
    return {label, worst <= tol, fmt("max rel err %.3g (tol %.0e)", worst, tol)};
}

}  // namespace

std::vector<SelfCheck> run_selftest(bool f64) {
    std::vector<SelfCheck> checks;
    checks.push_back(check_warp_identity());
    checks.push_back(check_warp_ramp());
    checks.push_back(check_blend_endpoints());
    checks.push_back(check_blend_affine());
    checks.push_back(check_attention_oracle());
    checks.push_back(check_attention_symmetry());
    checks.push_back(check_deform_oracle());
    checks.push_back(check_shape_ladder());

    const std::vector<std::string> probe_names = {
        "motion.block0.down0.weight", "motion.block2.up.weight",
        "context.conv1.weight",       "context.deform2.weight",
        "patchmatch.group1.block2.lr_q.weight", "patchmatch.merge1.weight",
        "fusion.down2.weight",        "fusion.final.bias"};
    if (f64)
        checks.push_back(
            grad_probe<double>(1e-6, 1e-4, 2, probe_names, "gradient probes (64-bit)"));
    else
        checks.push_back(grad_probe<float>(1e-2, 5e-2, 2, probe_names, "gradient probes"));
    return checks;
}

bool all_passed(const std::vector<SelfCheck>& checks) {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

}  // namespace hstrnet
