// Release gate. Each check prints one verdict line; the process exits
// nonzero if any fail. The training-based checks share one toy corpus and
// the overfit check hands its checkpoint to the cascade check.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "hstrnet/data.hpp"
#include "hstrnet/error.hpp"
#include "hstrnet/evaluate.hpp"
#include "hstrnet/metrics.hpp"
#include "hstrnet/model.hpp"
#include "hstrnet/rng.hpp"
#include "hstrnet/serialize.hpp"
#include "hstrnet/toy.hpp"
#include "hstrnet/training.hpp"

namespace fs = std::filesystem;
using namespace hstrnet;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, pattern);
    std::vsnprintf(buf, sizeof(buf), pattern, ap);
    va_end(ap);
    return buf;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require_data(in.good(), "cannot read " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Reduced widths keep the toy trainings inside the CPU budget; the stage
// wiring per variant is the production one.
ModelConfig small_config(const std::string& variant) {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.motion_widths = {16, 12, 10};
    cfg.context_widths = {8, 12, 16, 24};
    cfg.pm_dim = 16;
    cfg.fusion_down = {16, 24, 48, 96};
    cfg.fusion_up = {64, 48, 32, 24};
    return cfg;
}

struct Fixture {
    fs::path work;
    DatasetIndex toy_index;
    std::string overfit_checkpoint;  // filled by the overfit check
};

// 1. Zero flow must reproduce the input bitwise; a constant sub-pixel shift
// of a linear ramp must match the analytic ramp away from the clamped
// border. Dyadic coefficients make the expected values exact in float.
Verdict warp_identity() {
    Timer timer;
    NoGradGuard guard;
    Rng rng(9001);
    bool bitwise = true;
    for (int t = 0; t < 100 && bitwise; ++t) {
        const int h = 8 + static_cast<int>(rng.uniform_int(41));
        const int w = 8 + static_cast<int>(rng.uniform_int(41));
        Tensor<float> x = Tensor<float>::uniform({1, 3, h, w}, rng, 0.f, 1.f);
        Tensor<float> y = warp(x, Tensor<float>::zeros({1, 2, h, w}));
        for (size_t k = 0; k < x.numel(); ++k)
            if (y.data()[k] != x.data()[k]) {
                bitwise = false;
                break;
            }
    }

    const int h = 24, w = 37;
    Tensor<float> ramp = Tensor<float>::zeros({1, 1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            ramp.data()[y * w + x] = 0.25f + x * 0.0078125f + y * 0.015625f;
    double worst = 0.0;
    for (auto [dx, dy] : std::vector<std::pair<float, float>>{
             {1.75f, -2.5f}, {-0.25f, 0.5f}, {3.f, 1.f}}) {
        Tensor<float> flow = Tensor<float>::zeros({1, 2, h, w});
        for (int k = 0; k < h * w; ++k) {
            flow.data()[k] = dx;
            flow.data()[h * w + k] = dy;
        }
        Tensor<float> y = warp(ramp, flow);
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                const double sx = xx + static_cast<double>(dx);
                const double sy = yy + static_cast<double>(dy);
                if (sx < 0 || sx > w - 1 || sy < 0 || sy > h - 1) continue;
                const double want = 0.25 + sx * 0.0078125 + sy * 0.015625;
                worst = std::max(worst,
                                 std::abs(static_cast<double>(y.data()[yy * w + xx]) - want));
            }
    }
    const double sec = timer.seconds();
    const bool pass = bitwise && worst <= 1e-6 && sec < 5.0;
    return {pass, fmt("bitwise on 100 images %s, ramp err %.2e (tol 1e-6), %.1f s (cap 5)",
                      bitwise ? "ok" : "BROKEN", worst, sec)};
}

// 2. The blend must hit both endpoints exactly and obey the affine form
// mask*warped + (1-mask)*lr + residual everywhere.
Verdict blend_endpoints() {
    NoGradGuard guard;
    Rng rng(202);
    Tensor<float> hr = Tensor<float>::uniform({1, 3, 9, 13}, rng, 0.f, 1.f);
    Tensor<float> lr = Tensor<float>::uniform({1, 3, 9, 13}, rng, 0.f, 1.f);
    FusionOutput<float> all_hr{Tensor<float>::zeros({1, 3, 9, 13}),
                               Tensor<float>::full({1, 1, 9, 13}, 1.f)};
    FusionOutput<float> all_lr{Tensor<float>::zeros({1, 3, 9, 13}),
                               Tensor<float>::zeros({1, 1, 9, 13})};
    Tensor<float> top = reconstruct(hr, lr, all_hr);
    Tensor<float> bot = reconstruct(hr, lr, all_lr);
    bool exact = true;
    for (size_t k = 0; k < hr.numel(); ++k) {
        if (top.data()[k] != hr.data()[k]) exact = false;
        if (bot.data()[k] != lr.data()[k]) exact = false;
    }

    Tensor<float> hr2 = Tensor<float>::uniform({2, 3, 7, 11}, rng, 0.f, 1.f);
    Tensor<float> lr2 = Tensor<float>::uniform({2, 3, 7, 11}, rng, 0.f, 1.f);
    FusionOutput<float> mix{Tensor<float>::uniform({2, 3, 7, 11}, rng, -0.5f, 0.5f),
                            Tensor<float>::uniform({2, 1, 7, 11}, rng, 0.05f, 0.95f)};
    Tensor<float> got = reconstruct(hr2, lr2, mix);
    const size_t plane = 7 * 11;
    double worst = 0.0;
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
            for (size_t k = 0; k < plane; ++k) {
                const size_t i = (n * 3 + c) * plane + k;
                const double m = mix.mask.data()[n * plane + k];
                const double want =
                    m * hr2.data()[i] + (1.0 - m) * lr2.data()[i] + mix.residual.data()[i];
                worst = std::max(worst, std::abs(got.data()[i] - want));
            }
    const bool pass = exact && worst <= 1e-6;
    return {pass, fmt("endpoints %s, affine err %.2e (tol 1e-6)",
                      exact ? "bitwise" : "BROKEN", worst)};
}

// 3. The windowed cross-frame attention against a dense 64-bit per-window
// oracle: correspondence maps, their row sums, and the fused output. Tying
// both frames' projections and feeding one window twice must mirror the maps.
Verdict attention_oracle() {
    NoGradGuard guard;
    const int win = 3, nt = win * win, d = 16, heads = 2, dh = d / heads;
    auto p = CrossAttnParams<double>::make(d, heads, win, false);
    ParamList<double> plist;
    p.register_params("attn", plist);
    init_params_random(plist, 4242);

    Rng rng(11);
    double worst = 0.0, worst_row = 0.0;
    int windows = 0;
    std::vector<double> q_lr, k_lr, q_ref, k_ref, v_ref;
    auto project = [&](const Tensor<double>& tok, const LinearLayer<double>& lin, int bi,
                       std::vector<double>& out) {
        out.assign(static_cast<size_t>(nt) * d, 0.0);
        for (int t = 0; t < nt; ++t)
            for (int o = 0; o < d; ++o) {
                double acc = lin.bias.data()[o];
                for (int in = 0; in < d; ++in)
                    acc += lin.weight.data()[o * d + in] * tok.data()[(bi * nt + t) * d + in];
                out[static_cast<size_t>(t) * d + o] = acc;
            }
    };

    for (int call = 0; call < 10; ++call) {
        const int b = 100;
        Tensor<double> tok_lr = Tensor<double>::uniform({b, nt, d}, rng, -1.0, 1.0);
        Tensor<double> tok_ref = Tensor<double>::uniform({b, nt, d}, rng, -1.0, 1.0);
        auto r = cross_frame_attention(tok_lr, tok_ref, p);

        std::vector<std::vector<double>> at_ref(nt, std::vector<double>(nt));
        std::vector<std::vector<double>> at_lr(nt, std::vector<double>(nt));
        for (int bi = 0; bi < b; ++bi) {
            project(tok_lr, p.lr_q, bi, q_lr);
            project(tok_lr, p.lr_k, bi, k_lr);
            project(tok_ref, p.ref_q, bi, q_ref);
            project(tok_ref, p.ref_k, bi, k_ref);
            project(tok_ref, p.ref_v, bi, v_ref);
            for (int hd = 0; hd < heads; ++hd) {
                auto fill = [&](const std::vector<double>& q, const std::vector<double>& k,
                                std::vector<std::vector<double>>& at) {
                    for (int i = 0; i < nt; ++i) {
                        std::vector<double> logit(nt);
                        double mx = -1e300;
                        for (int j = 0; j < nt; ++j) {
                            double dot = 0.0;
                            for (int c = hd * dh; c < (hd + 1) * dh; ++c)
                                dot += q[static_cast<size_t>(i) * d + c] *
                                       k[static_cast<size_t>(j) * d + c];
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
                fill(q_lr, k_ref, at_ref);
                fill(q_ref, k_lr, at_lr);
                for (int i = 0; i < nt; ++i) {
                    double row_r = 0.0, row_l = 0.0;
                    for (int j = 0; j < nt; ++j) {
                        const size_t base =
                            ((static_cast<size_t>(bi) * heads + hd) * nt + i) * nt + j;
                        const double ir = r.at_ref.data()[base];
                        const double il = r.at_lr.data()[base];
                        row_r += ir;
                        row_l += il;
                        worst = std::max({worst, std::abs(ir - at_ref[i][j]),
                                          std::abs(il - at_lr[i][j])});
                    }
                    worst_row = std::max({worst_row, std::abs(row_r - 1.0),
                                          std::abs(row_l - 1.0)});
                }
                for (int i = 0; i < nt; ++i)
                    for (int c = hd * dh; c < (hd + 1) * dh; ++c) {
                        double want = 0.0;
                        for (int j = 0; j < nt; ++j) {
                            double mid = 0.0;
                            for (int k2 = 0; k2 < nt; ++k2)
                                mid += at_ref[j][k2] * v_ref[static_cast<size_t>(k2) * d + c];
                            want += at_lr[i][j] * mid;
                        }
                        const double got =
                            r.at.data()[(static_cast<size_t>(bi) * nt + i) * d + c];
                        worst = std::max(worst, std::abs(got - want));
                    }
            }
            ++windows;
        }
    }

    auto ps = CrossAttnParams<double>::make(6, 1, win, false);
    ParamList<double> plist2;
    ps.register_params("attn", plist2);
    init_params_random(plist2, 99);
    ps.ref_q.weight.values() = ps.lr_q.weight.values();
    ps.ref_q.bias.values() = ps.lr_q.bias.values();
    ps.ref_k.weight.values() = ps.lr_k.weight.values();
    ps.ref_k.bias.values() = ps.lr_k.bias.values();
    Rng rng2(17);
    Tensor<double> tok = Tensor<double>::uniform({8, nt, 6}, rng2, -1.0, 1.0);
    auto rs = cross_frame_attention(tok, tok, ps);
    double sym = 0.0;
    for (size_t k = 0; k < rs.at_ref.numel(); ++k)
        sym = std::max(sym, std::abs(rs.at_ref.data()[k] - rs.at_lr.data()[k]));

    const bool pass = windows == 1000 && worst <= 1e-5 && worst_row <= 1e-5 && sym <= 1e-6;
    return {pass, fmt("1000 windows: max err %.2e, row-sum err %.2e (tol 1e-5), "
                      "tied-weights map diff %.2e (tol 1e-6)",
                      worst, worst_row, sym)};
}

// 4. Deformable sampling: zero offsets reduce to a dense replicate-padded
// 3x3 convolution; a constant integer offset translates the dense result on
// pixels whose whole tap grid stays interior.
Verdict deform_oracle() {
    NoGradGuard guard;
    const int c = 4, h = 14, w = 17;
    Rng rng(31);
    Tensor<double> x = Tensor<double>::uniform({1, c, h, w}, rng, -1.0, 1.0);
    Tensor<double> weight = Tensor<double>::uniform({c, c, 3, 3}, rng, -0.3, 0.3);
    Tensor<double> bias = Tensor<double>::uniform({c}, rng, -0.1, 0.1);
    Tensor<double> dense = conv2d(pad_replicate(x, 1, 1, 1, 1), weight, bias, 1, 0);

    Tensor<double> zero_off = Tensor<double>::zeros({1, 2, h, w});
    Tensor<double> got0 = deform_conv3x3(x, zero_off, weight, bias);
    double worst0 = 0.0;
    for (size_t k = 0; k < got0.numel(); ++k)
        worst0 = std::max(worst0, std::abs(got0.data()[k] - dense.data()[k]));

    const int sx = 2, sy = -1;
    Tensor<double> shift_off = Tensor<double>::zeros({1, 2, h, w});
    for (int k = 0; k < h * w; ++k) {
        shift_off.data()[k] = sx;
        shift_off.data()[h * w + k] = sy;
    }
    Tensor<double> got1 = deform_conv3x3(x, shift_off, weight, bias);
    double worst1 = 0.0;
    const size_t plane = static_cast<size_t>(h) * w;
    for (int co = 0; co < c; ++co)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const int ty = y + sy, tx = xx + sx;
                if (ty < 1 || ty > h - 2 || tx < 1 || tx > w - 2) continue;
                const double a = got1.data()[co * plane + static_cast<size_t>(y) * w + xx];
                const double b = dense.data()[co * plane + static_cast<size_t>(ty) * w + tx];
                worst1 = std::max(worst1, std::abs(a - b));
            }
    const bool pass = worst0 <= 1e-6 && worst1 <= 1e-6;
    return {pass, fmt("zero-offset err %.2e, integer-shift err %.2e (tol 1e-6)", worst0, worst1)};
}

// 5. Channel/resolution ladders at the published widths on 20 random sizes,
// output resolution preserved by the forward pass, and the non-multiple-of-16
// path padded and cropped back.
Verdict shape_ladders() {
    Timer timer;
    NoGradGuard guard;
    ModelConfig pinned;  // stock context and matching widths
    pinned.motion_widths = {12, 10, 8};
    pinned.fusion_down = {8, 12, 16, 20};
    pinned.fusion_up = {20, 16, 12, 8};
    auto ladder = HstrNet<float>::build(pinned);
    ladder.init(7);
    auto walker = HstrNet<float>::build(small_config("full"));
    walker.init(7);

    const int ctx_ch[4] = {16, 32, 64, 128};
    const int pm_ch[3] = {48, 96, 192};
    Rng rng(2025);
    std::string fail;
    for (int t = 0; t < 20 && fail.empty(); ++t) {
        const int h = 16 * (2 + static_cast<int>(rng.uniform_int(27)));
        const int w = 16 * (2 + static_cast<int>(rng.uniform_int(27)));
        Tensor<float> lr = Tensor<float>::uniform({1, 3, h, w}, rng, 0.f, 1.f);
        Tensor<float> ref = Tensor<float>::uniform({1, 3, h, w}, rng, 0.f, 1.f);

        auto ctx = ladder.context.extract(ref, Tensor<float>::zeros({1, 2, h, w}));
        if (ctx.size() != 4) fail = fmt("%d context levels", static_cast<int>(ctx.size()));
        for (int k = 0; k < 4 && fail.empty(); ++k)
            if (ctx[k].dim(1) != ctx_ch[k] || ctx[k].dim(2) != h >> (k + 1) ||
                ctx[k].dim(3) != w >> (k + 1))
                fail = fmt("context level %d is %dx%dx%d at %dx%d", k, ctx[k].dim(1),
                           ctx[k].dim(2), ctx[k].dim(3), h, w);
        auto pm = ladder.patchmatch->run(lr, ref);
        for (int k = 0; k < 3 && fail.empty(); ++k)
            if (pm[k].dim(1) != pm_ch[k] || pm[k].dim(2) != h >> (k + 2) ||
                pm[k].dim(3) != w >> (k + 2))
                fail = fmt("matcher level %d is %dx%dx%d at %dx%d", k, pm[k].dim(1),
                           pm[k].dim(2), pm[k].dim(3), h, w);

        Tensor<float> y = walker.forward(lr, ref);
        if (fail.empty() && (y.dim(2) != h || y.dim(3) != w))
            fail = fmt("forward %dx%d -> %dx%d", h, w, y.dim(2), y.dim(3));
    }

    if (fail.empty()) {
        Tensor<float> lr = Tensor<float>::uniform({1, 3, 380, 672}, rng, 0.f, 1.f);
        Tensor<float> ref = Tensor<float>::uniform({1, 3, 380, 672}, rng, 0.f, 1.f);
        Tensor<float> y = ladder.forward(lr, ref);
        if (y.dim(2) != 380 || y.dim(3) != 672)
            fail = fmt("padded path returned %dx%d", y.dim(2), y.dim(3));
    }
    const double sec = timer.seconds();
    const bool pass = fail.empty() && sec < 60.0;
    return {pass, fail.empty()
                      ? fmt("context (16,32,64,128) and matcher (48,96,192) ladders on 20 "
                            "sizes in [32,448], 672x380 padded path ok, %.1f s (cap 60)",
                            sec)
                      : fail};
}

// 6. 64-bit finite differences on 20 parameter coordinates drawn across the
// whole full-variant parameter vector, plus a nonzero-gradient sweep over
// every parameter tensor from a single backward pass.
Verdict gradient_integrity() {
    Timer timer;
    auto model = HstrNet<double>::build(small_config("full"));
    model.init_random(4242);
    Rng rng(55);
    Tensor<double> lr = Tensor<double>::uniform({1, 3, 8, 8}, rng, 0.0, 1.0);
    Tensor<double> ref = Tensor<double>::uniform({1, 3, 8, 8}, rng, 0.0, 1.0);
    auto params = model.named_params();

    for (auto& p : params.items) p.tensor.zero_grad();
    Tensor<double> y = model.forward_unclamped(lr, ref);
    Tensor<double> loss = sum(mul(y, y));
    loss.backward();

    std::string dead;
    for (auto& p : params.items) {
        double mx = 0.0;
        if (!p.tensor.grad().empty())
            for (double g : p.tensor.grad()) mx = std::max(mx, std::abs(g));
        if (mx == 0.0) {
            dead = p.name;
            break;
        }
    }

    auto loss_value = [&]() {
        NoGradGuard guard;
        Tensor<double> yy = model.forward_unclamped(lr, ref);
        double acc = 0.0;
        for (size_t k = 0; k < yy.numel(); ++k) acc += yy.data()[k] * yy.data()[k];
        return acc;
    };

    const size_t total = params.scalar_count();
    Rng pick(77);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        size_t off = pick.uniform_int(total);
        size_t ti = 0;
        while (off >= params.items[ti].tensor.numel()) {
            off -= params.items[ti].tensor.numel();
            ++ti;
        }
        auto& t = params.items[ti].tensor;
        const double analytic = t.grad().empty() ? 0.0 : t.grad()[off];
        const double old = t.data()[off];
        const double step = 1e-6;
        t.data()[off] = old + step;
        const double up = loss_value();
        t.data()[off] = old - step;
        const double down = loss_value();
        t.data()[off] = old;
        const double fd = (up - down) / (2.0 * step);
        const double rel =
            std::abs(fd - analytic) / std::max({1.0, std::abs(fd), std::abs(analytic)});
        worst = std::max(worst, rel);
    }
    const double sec = timer.seconds();
    const bool pass = dead.empty() && worst < 1e-4;
    return {pass, dead.empty()
                      ? fmt("20 coordinates: max rel err %.2e (tol 1e-4), all %d tensors "
                            "carry gradient, %.1f s",
                            worst, static_cast<int>(params.items.size()), sec)
                      : "no gradient reached " + dead};
}

// 7. Closed-form PSNR value, reflexive SSIM, and bitwise symmetry of both.
Verdict metric_oracles() {
    auto constant = [](float v) {
        ImageF img = ImageF::zeros(32, 48);
        for (auto& x : img.values) x = v;
        return img;
    };
    ImageF a = constant(128.f / 255.f);
    ImageF b = constant(144.f / 255.f);
    const double p = psnr(a, b);
    const bool value_ok = std::abs(p - 24.05) <= 0.01;

    Rng rng(606);
    ImageF u = ImageF::zeros(24, 31), v = ImageF::zeros(24, 31);
    for (auto& x : u.values) x = static_cast<float>(rng.uniform());
    for (auto& x : v.values) x = static_cast<float>(rng.uniform());
    const bool sym_ok = psnr(u, v) == psnr(v, u) && ssim(u, v) == ssim(v, u);
    const bool self_ok = ssim(u, u) == 1.0;

    const bool pass = value_ok && sym_ok && self_ok;
    return {pass, fmt("psnr(128,144)=%.4f dB (want 24.05 +- 0.01), ssim(x,x)=%s, "
                      "symmetry %s",
                      p, self_ok ? "1.0" : "BROKEN", sym_ok ? "bitwise" : "BROKEN")};
}

// 8. Overfit four toy clips and beat both no-learning baselines: the
// degraded input itself and the reference frame (which is what a zero-flow
// warp of the reference produces).
Verdict toy_overfit(Fixture& fx) {
    Timer timer;
    TrainConfig cfg;
    cfg.model = small_config("full");
    cfg.lr = 2e-4;
    cfg.epochs = 2000;
    cfg.batch_size = 4;
    cfg.crop_size = 64;
    cfg.seed = 5;
    cfg.max_steps = 2000;
    cfg.out_dir = (fx.work / "overfit").string();
    TrainResult res = train(cfg, fx.toy_index);
    const double train_sec = timer.seconds();
    fx.overfit_checkpoint = res.final_checkpoint;

    auto model = model_from_checkpoint(load_checkpoint(res.final_checkpoint));
    ModelFn<float> fn = [&](const Tensor<float>& l, const Tensor<float>& r) {
        return model.forward(l, r);
    };
    MetricsReport rep = evaluate(fx.toy_index, fn, {}, "rgb", "overfit");

    double bicubic = 0.0, ref_baseline = 0.0;
    const auto items = enumerate_eval_items(fx.toy_index);
    for (const auto& it : items) {
        const auto& entry = fx.toy_index.entries[it.entry];
        auto frames = load_frames(entry);
        Sample s = make_eval_sample(frames, entry.id, fx.toy_index.layout, it.frame, {});
        bicubic += psnr(s.lr, s.gt);
        ref_baseline += psnr(s.ref, s.gt);
    }
    bicubic /= static_cast<double>(items.size());
    ref_baseline /= static_cast<double>(items.size());

    const bool margins = rep.mean_psnr_db >= bicubic + 1.0 &&
                         rep.mean_psnr_db >= ref_baseline + 0.5;
    const bool pass = margins && res.steps <= 2000 && train_sec <= 1800.0;
    return {pass, fmt("%lld steps in %.0f s (cap 1800): %.2f dB vs bicubic %.2f (+%.2f, "
                      "need 1.0) vs warped-ref %.2f (+%.2f, need 0.5)",
                      static_cast<long long>(res.steps), train_sec, rep.mean_psnr_db, bicubic,
                      rep.mean_psnr_db - bicubic, ref_baseline, rep.mean_psnr_db - ref_baseline)};
}

// 9. Under one seed and step budget the variants must order by capacity:
// late-training mean loss full <= d <= i inside a 5% slack band, parameter
// counts i <= d < full.
Verdict ablation_ordering(Fixture& fx) {
    Timer timer;
    auto run = [&](const std::string& variant, double& loss, size_t& count) {
        TrainConfig cfg;
        cfg.model = small_config(variant);
        cfg.lr = 2e-4;
        cfg.epochs = 600;
        cfg.batch_size = 4;
        cfg.crop_size = 64;
        cfg.seed = 5;
        cfg.out_dir = (fx.work / ("ablate_" + variant)).string();
        TrainResult res = train(cfg, fx.toy_index);
        const size_t n = res.epoch_mean_loss.size();
        const size_t tail = std::min<size_t>(150, n);
        double acc = 0.0;
        for (size_t e = n - tail; e < n; ++e) acc += res.epoch_mean_loss[e];
        loss = acc / static_cast<double>(tail);
        count = HstrNet<float>::build(cfg.model).param_count();
    };
    double lf = 0, ld = 0, li = 0;
    size_t pf = 0, pd = 0, pi = 0;
    run("full", lf, pf);
    run("d", ld, pd);
    run("i", li, pi);

    const bool loss_ok = lf <= 1.05 * ld && ld <= 1.05 * li;
    const bool count_ok = pi <= pd && pd < pf;
    const bool pass = loss_ok && count_ok;
    return {pass, fmt("tail loss full %.5f / d %.5f / i %.5f (5%% slack %s), params "
                      "%zu <= %zu < %zu %s, %.0f s",
                      lf, ld, li, loss_ok ? "ok" : "BROKEN", pi, pd, pf,
                      count_ok ? "ok" : "BROKEN", timer.seconds())};
}

// 10. The 4x cascade with an oracle stage must reproduce ground truth
// bitwise (the middle average halves an exact doubling), and with the
// overfit checkpoint the chained middle frame must stay near the outer ones.
Verdict cascade(Fixture& fx) {
    const auto& first = fx.toy_index.entries.front();
    auto frames = load_frames(first);
    std::array<Tensor<float>, 3> lr, gt;
    for (int i = 0; i < 3; ++i) {
        gt[i] = to_tensor(frames[2 + i]);
        lr[i] = to_tensor(degrade(frames[2 + i], 4));
    }
    std::array<Tensor<float>, 2> refs{to_tensor(frames[1]), to_tensor(frames[5])};
    ModelFn<float> oracle = [&](const Tensor<float>& x, const Tensor<float>&) {
        for (int i = 0; i < 3; ++i)
            if (x.data() == lr[i].data()) return gt[i];
        throw InvariantError("oracle stub saw an unexpected input");
    };
    auto out = upsample_4x(lr, refs, oracle);
    bool exact = true;
    for (int i = 0; i < 3; ++i)
        for (size_t k = 0; k < gt[i].numel(); ++k)
            if (out[i].data()[k] != gt[i].data()[k]) exact = false;

    if (fx.overfit_checkpoint.empty())
        return {false, "no overfit checkpoint to cascade (previous check failed)"};
    NoGradGuard guard;
    auto model = model_from_checkpoint(load_checkpoint(fx.overfit_checkpoint));
    ModelFn<float> fn = [&](const Tensor<float>& l, const Tensor<float>& r) {
        return model.forward(l, r);
    };
    double outer = 0.0, middle = 0.0;
    for (const auto& entry : fx.toy_index.entries) {
        auto fr = load_frames(entry);
        std::array<Tensor<float>, 3> l;
        for (int i = 0; i < 3; ++i) l[i] = to_tensor(degrade(fr[2 + i], 4));
        std::array<Tensor<float>, 2> r{to_tensor(fr[1]), to_tensor(fr[5])};
        auto o = upsample_4x(l, r, fn);
        outer += 0.5 * (psnr(from_tensor(o[0]), fr[2]) + psnr(from_tensor(o[2]), fr[4]));
        middle += psnr(from_tensor(o[1]), fr[3]);
    }
    outer /= static_cast<double>(fx.toy_index.entries.size());
    middle /= static_cast<double>(fx.toy_index.entries.size());
    const bool gap_ok = middle >= outer - 1.5;
    const bool pass = exact && gap_ok;
    return {pass, fmt("oracle stage %s; trained middle %.2f dB vs outer mean %.2f dB "
                      "(gap %.2f, cap 1.5)",
                      exact ? "reproduces ground truth bitwise" : "DIVERGES", middle, outer,
                      outer - middle)};
}

// 11. Same-seed runs must match to the byte: checkpoints from two identical
// trainings, and the written evaluation reports across repeated runs.
Verdict determinism(Fixture& fx) {
    Timer timer;
    auto run = [&](const std::string& tag) {
        TrainConfig cfg;
        cfg.model = small_config("full");
        cfg.lr = 2e-4;
        cfg.epochs = 25;
        cfg.batch_size = 4;
        cfg.crop_size = 64;
        cfg.seed = 5;
        cfg.out_dir = (fx.work / tag).string();
        return train(cfg, fx.toy_index).final_checkpoint;
    };
    const std::string a = run("det_a");
    const std::string b = run("det_b");
    const bool ckpt_same = slurp(a) == slurp(b);

    auto model = model_from_checkpoint(load_checkpoint(a));
    ModelFn<float> fn = [&](const Tensor<float>& l, const Tensor<float>& r) {
        return model.forward(l, r);
    };
    bool report_same = true;
    std::array<std::string, 2> csv, js;
    for (int i = 0; i < 2; ++i) {
        MetricsReport rep = evaluate(fx.toy_index, fn, {}, "rgb", "det");
        const std::string dir = (fx.work / ("report_" + std::to_string(i))).string();
        fs::create_directories(dir);
        write_report_csv(rep, dir + "/report.csv");
        write_report_json(rep, dir + "/report.json");
        csv[i] = slurp(dir + "/report.csv");
        js[i] = slurp(dir + "/report.json");
    }
    report_same = csv[0] == csv[1] && js[0] == js[1];

    const bool pass = ckpt_same && report_same;
    return {pass, fmt("checkpoints %s, reports %s, %.0f s",
                      ckpt_same ? "byte-identical" : "DIFFER",
                      report_same ? "byte-identical" : "DIFFER", timer.seconds())};
}

// 12. The latency harness must rank a larger frame above a smaller one and
// agree with itself across runs within 20%.
Verdict bench_sanity() {
    Timer timer;
    auto model = HstrNet<float>::build(small_config("full"));
    model.init(1);
    ModelFn<float> fn = [&](const Tensor<float>& l, const Tensor<float>& r) {
        return model.forward(l, r);
    };
    BenchStats small1 = benchmark_latency(fn, 128, 128, 12);
    BenchStats small2 = benchmark_latency(fn, 128, 128, 12);
    BenchStats large = benchmark_latency(fn, 256, 448, 12);
    const bool mono = large.median_ms > small1.median_ms;
    const double agree = std::abs(small1.median_ms - small2.median_ms) /
                         std::min(small1.median_ms, small2.median_ms);
    const bool pass = mono && agree <= 0.20;
    return {pass, fmt("median 256x448 %.1f ms > 128x128 %.1f ms %s; repeat gap %.1f%% "
                      "(cap 20%%), %.0f s",
                      large.median_ms, small1.median_ms, mono ? "ok" : "BROKEN",
                      100.0 * agree, timer.seconds())};
}

}  // namespace

int main() {
    Fixture fx;
    fx.work = fs::temp_directory_path() / "hstrnet_acceptance";
    std::error_code ec;
    fs::remove_all(fx.work, ec);
    fs::create_directories(fx.work);
    const std::string corpus = (fx.work / "corpus").string();
    try {
        make_toy_corpus(corpus, 8);
        fx.toy_index = index_dataset(corpus, Layout::Septuplet);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "fixture setup failed: %s\n", e.what());
        return 1;
    }

    struct Check {
        const char* name;
        std::function<Verdict()> fn;
    };
    const std::vector<Check> checks = {
        {"warp zero-flow identity and ramp oracle", [] { return warp_identity(); }},
        {"blend endpoints and affine form", [] { return blend_endpoints(); }},
        {"windowed attention vs dense oracle", [] { return attention_oracle(); }},
        {"deformable conv vs dense and shift oracles", [] { return deform_oracle(); }},
        {"pyramid shape ladders", [] { return shape_ladders(); }},
        {"gradient integrity (64-bit finite differences)", [] { return gradient_integrity(); }},
        {"metric oracles", [] { return metric_oracles(); }},
        {"toy overfit margins", [&] { return toy_overfit(fx); }},
        {"variant ablation ordering", [&] { return ablation_ordering(fx); }},
        {"4x temporal cascade", [&] { return cascade(fx); }},
        {"training and report determinism", [&] { return determinism(fx); }},
        {"latency harness sanity", [] { return bench_sanity(); }},
    };

    int passed = 0;
    for (size_t i = 0; i < checks.size(); ++i) {
        Verdict v;
        try {
            v = checks[i].fn();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        if (v.pass) ++passed;
        std::printf("[%2zu/12] %s  %s: %s\n", i + 1, v.pass ? "PASS" : "FAIL", checks[i].name,
                    v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("acceptance: %d/12 passed\n", passed);
    fs::remove_all(fx.work, ec);
    return passed == 12 ? 0 : 1;
}
