#include <doctest.h>

#include <cmath>
#include <vector>

#include "hstrnet/patchmatch.hpp"
#include "testutil.hpp"

using namespace hstrnet;
using testutil::random_tensor;

namespace {

// Straight-line re-implementation of the windowed cross-frame attention used
// as an oracle: explicit loops, no shared code with the graph ops.
struct AttnOracle {
    std::vector<double> at, at_ref, at_lr;
};

AttnOracle attn_oracle(const Tensor<double>& tok_lr, const Tensor<double>& tok_ref,
                       const CrossAttnParams<double>& p, const std::vector<double>& mask) {
    const int b = tok_lr.dim(0), nt = tok_lr.dim(1), d = p.dim;
    const int heads = p.heads, dh = d / heads, bh = b * heads;
    auto project = [&](const Tensor<double>& t, const LinearLayer<double>& l) {
        std::vector<double> out(static_cast<size_t>(b) * nt * d);
        for (int bi = 0; bi < b; ++bi)
            for (int ti = 0; ti < nt; ++ti)
                for (int o = 0; o < d; ++o) {
                    double acc = l.bias.data()[o];
                    for (int i = 0; i < d; ++i)
                        acc += t.data()[(static_cast<size_t>(bi) * nt + ti) * d + i] *
                               l.weight.data()[static_cast<size_t>(o) * d + i];
                    out[(static_cast<size_t>(bi) * nt + ti) * d + o] = acc;
                }
        return out;
    };
    auto q_lr = project(tok_lr, p.lr_q), k_lr = project(tok_lr, p.lr_k);
    auto q_ref = project(tok_ref, p.ref_q), k_ref = project(tok_ref, p.ref_k);
    auto v_ref = project(tok_ref, p.ref_v);

    auto attend = [&](const std::vector<double>& q, const std::vector<double>& k) {
        std::vector<double> out(static_cast<size_t>(bh) * nt * nt);
        for (int bi = 0; bi < b; ++bi)
            for (int h = 0; h < heads; ++h)
                for (int i = 0; i < nt; ++i) {
                    std::vector<double> row(nt);
                    for (int j = 0; j < nt; ++j) {
                        double dot = 0.0;
                        for (int c = 0; c < dh; ++c)
                            dot += q[(static_cast<size_t>(bi) * nt + i) * d + h * dh + c] *
                                   k[(static_cast<size_t>(bi) * nt + j) * d + h * dh + c];
                        row[static_cast<size_t>(j)] = dot / std::sqrt(double(dh)) +
                                                      p.relpos.data()[h * (2 * p.win - 1) * (2 * p.win - 1) +
                                                                      winmap::relpos_index(i, j, p.win)];
                        if (!mask.empty())
                            row[static_cast<size_t>(j)] +=
                                mask[((static_cast<size_t>(bi) * heads + h) * nt + i) * nt + j];
                    }
                    double mx = row[0];
                    for (double v : row) mx = std::max(mx, v);
                    double z = 0.0;
                    for (double v : row) z += std::exp(v - mx);
                    for (int j = 0; j < nt; ++j)
                        out[((static_cast<size_t>(bi) * heads + h) * nt + i) * nt + j] =
                            std::exp(row[static_cast<size_t>(j)] - mx) / z;
                }
        return out;
    };
    AttnOracle o;
    o.at_ref = attend(q_lr, k_ref);
    o.at_lr = attend(q_ref, k_lr);
    o.at.assign(static_cast<size_t>(b) * nt * d, 0.0);
    for (int bi = 0; bi < b; ++bi)
        for (int h = 0; h < heads; ++h)
            for (int i = 0; i < nt; ++i)
                for (int c = 0; c < dh; ++c) {
                    double acc = 0.0;
                    for (int j = 0; j < nt; ++j) {
                        double inner = 0.0;
                        for (int l = 0; l < nt; ++l)
                            inner += o.at_ref[((static_cast<size_t>(bi) * heads + h) * nt + j) * nt + l] *
                                     v_ref[(static_cast<size_t>(bi) * nt + l) * d + h * dh + c];
                        acc += o.at_lr[((static_cast<size_t>(bi) * heads + h) * nt + i) * nt + j] * inner;
                    }
                    o.at[(static_cast<size_t>(bi) * nt + i) * d + h * dh + c] = acc;
                }
    return o;
}

CrossAttnParams<double> random_attn(int dim, int heads, int win, bool raw, Rng& rng) {
    auto p = CrossAttnParams<double>::make(dim, heads, win, raw);
    ParamList<double> params;
    p.register_params("p", params);
    init_params_random(params, rng.uniform_int(1u << 30));
    return p;
}

}  // namespace

TEST_CASE("window partition and reverse are inverse maps") {
    Rng rng(81);
    for (int shift : {0, 1}) {
        int gh = 5, gw = 7, win = 3, d = 4, n = 2;
        int gh_p = 6, gw_p = 9;
        auto grid = random_tensor<double>({n, d, gh, gw}, rng);
        int nw = (gh_p / win) * (gw_p / win);
        auto part = winmap::partition(n, d, gh, gw, gh_p, gw_p, win, shift);
        auto tokens = index_map(grid, {n * nw, win * win, d}, part);
        auto rev = winmap::reverse(n, d, gh, gw, gh_p, gw_p, win, shift);
        auto back = index_map(tokens, {n, d, gh, gw}, rev);
        CHECK(back.values() == grid.values());
    }
}

TEST_CASE("cross-frame attention matches the loop oracle") {
    Rng rng(82);
    for (int heads : {1, 2}) {
        auto p = random_attn(8, heads, 3, false, rng);
        auto tok_lr = random_tensor<double>({3, 9, 8}, rng, -1.0, 1.0);
        auto tok_ref = random_tensor<double>({3, 9, 8}, rng, -1.0, 1.0);
        auto got = cross_frame_attention(tok_lr, tok_ref, p);
        auto want = attn_oracle(tok_lr, tok_ref, p, {});
        CHECK(testutil::max_abs_diff(got.at, want.at) < 1e-10);
        CHECK(testutil::max_abs_diff(got.at_ref, want.at_ref) < 1e-10);
        CHECK(testutil::max_abs_diff(got.at_lr, want.at_lr) < 1e-10);
    }
}

TEST_CASE("attention rows are probability distributions") {
    Rng rng(83);
    auto p = random_attn(6, 2, 3, false, rng);
    auto tok_lr = random_tensor<double>({2, 9, 6}, rng, -2.0, 2.0);
    auto tok_ref = random_tensor<double>({2, 9, 6}, rng, -2.0, 2.0);
    auto got = cross_frame_attention(tok_lr, tok_ref, p);
    for (const auto& at : {got.at_ref, got.at_lr})
        for (int row = 0; row < at.dim(0) * at.dim(1); ++row) {
            double s = 0.0;
            for (int j = 0; j < 9; ++j) {
                double v = at.data()[static_cast<size_t>(row) * 9 + j];
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("tied projections make the two correspondence maps coincide") {
    Rng rng(84);
    auto p = random_attn(6, 1, 3, false, rng);
    auto copy_into = [](LinearLayer<double>& dst, const LinearLayer<double>& src) {
        std::copy(src.weight.data(), src.weight.data() + src.weight.numel(), dst.weight.data());
        std::copy(src.bias.data(), src.bias.data() + src.bias.numel(), dst.bias.data());
    };
    copy_into(p.ref_q, p.lr_q);
    copy_into(p.ref_k, p.lr_k);
    auto tok = random_tensor<double>({2, 9, 6}, rng, -1.0, 1.0);
    auto got = cross_frame_attention(tok, tok, p);
    CHECK(got.at_ref.values() == got.at_lr.values());
}

TEST_CASE("shift mask blocks attention across wrapped regions") {
    Rng rng(85);
    int gh_p = 6, gw_p = 6, win = 3, shift = 1;
    int nw = 4, nt = 9;
    auto raw_mask = winmap::shift_mask<double>(gh_p, gw_p, win, shift, -1e9);
    bool any_blocked = false;
    for (double v : raw_mask) any_blocked = any_blocked || v != 0.0;
    CHECK(any_blocked);

    auto p = random_attn(4, 1, win, false, rng);
    auto per_window = Tensor<double>::from({nw, nt, nt}, raw_mask);
    auto mask = index_map(per_window, {nw, nt, nt}, winmap::mask_expand(1, nw, 1, nt));
    auto tok_lr = random_tensor<double>({nw, nt, 4}, rng, -1.0, 1.0);
    auto tok_ref = random_tensor<double>({nw, nt, 4}, rng, -1.0, 1.0);
    auto got = cross_frame_attention(tok_lr, tok_ref, p, mask);
    auto want = attn_oracle(tok_lr, tok_ref, p, raw_mask);
    CHECK(testutil::max_abs_diff(got.at_ref, want.at_ref) < 1e-10);
    for (size_t i = 0; i < raw_mask.size(); ++i)
        if (raw_mask[i] != 0.0) CHECK(got.at_ref.data()[i] < 1e-20);
}

TEST_CASE("raw-similarity mode skips normalization and zeroes masked pairs") {
    Rng rng(86);
    auto p = random_attn(4, 1, 3, true, rng);
    auto tok_lr = random_tensor<double>({2, 9, 4}, rng, -1.0, 1.0);
    auto tok_ref = random_tensor<double>({2, 9, 4}, rng, -1.0, 1.0);
    auto binary = Tensor<double>::zeros({2, 9, 9});
    for (size_t i = 0; i < binary.numel(); ++i) binary.data()[i] = i % 3 == 0 ? 0.0 : 1.0;
    auto got = cross_frame_attention(tok_lr, tok_ref, p, binary);
    for (size_t i = 0; i < binary.numel(); ++i)
        if (binary.data()[i] == 0.0) CHECK(got.at_ref.data()[i] == 0.0);
    double rowsum = 0.0;
    for (int j = 0; j < 9; ++j) rowsum += got.at_ref.data()[j];
    CHECK(rowsum != doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("an uninitialized block is an exact identity") {
    auto blk = PatchMatchBlock<double>::make(4, 1, 3, false, true);
    ParamList<double> params;
    blk.register_params("blk", params);
    for (auto& p : params.items)
        if (p.kind == InitKind::One)
            std::fill(p.tensor.data(), p.tensor.data() + p.tensor.numel(), 1.0);
    Rng rng(87);
    auto grid_lr = random_tensor<double>({1, 4, 5, 5}, rng);
    auto grid_ref = random_tensor<double>({1, 4, 5, 5}, rng);
    auto out = blk(grid_lr, grid_ref);
    CHECK(out.lr.values() == grid_lr.values());
    CHECK(out.ref.values() == grid_ref.values());
    for (double v : out.at_map.values()) CHECK(v == 0.0);
}

TEST_CASE("patch merge concatenates 2x2 neighborhoods in quadrant order") {
    Rng rng(88);
    int n = 1, d = 3, gh = 3, gw = 5;
    auto grid = random_tensor<double>({n, d, gh, gw}, rng);
    auto proj = LinearLayer<double>::make(4 * d, 2 * d);
    ParamList<double> params;
    proj.register_params("m", params);
    init_params_random(params, 1);
    auto merged = patch_merge(grid, proj);
    int h2 = 2, w2 = 3;
    CHECK(merged.shape() == std::vector<int>{n, 2 * d, h2, w2});
    for (int py = 0; py < h2; ++py)
        for (int px = 0; px < w2; ++px)
            for (int o = 0; o < 2 * d; ++o) {
                double acc = proj.bias.data()[o];
                for (int q = 0; q < 4; ++q) {
                    int y = 2 * py + q / 2, x = 2 * px + q % 2;
                    for (int c = 0; c < d; ++c) {
                        double v = (y >= gh || x >= gw)
                                       ? 0.0
                                       : grid.data()[(static_cast<size_t>(c) * gh + y) * gw + x];
                        acc += v * proj.weight.data()[static_cast<size_t>(o) * 4 * d + q * d + c];
                    }
                }
                CHECK(merged.data()[(static_cast<size_t>(o) * h2 + py) * w2 + px] ==
                      doctest::Approx(acc).epsilon(1e-10));
            }
}

TEST_CASE("patch matching emits three maps at halving grid resolutions") {
    ModelConfig cfg;
    cfg.variant = "full";
    cfg.pm_dim = 4;
    auto m = PatchMatchModule<double>::make(cfg);
    ParamList<double> params;
    m.register_params(params);
    init_params_random(params, 21);
    Rng rng(89);
    auto lr = random_tensor<double>({1, 3, 32, 48}, rng, 0.0, 1.0);
    auto ref = random_tensor<double>({1, 3, 32, 48}, rng, 0.0, 1.0);
    auto pm = m.run(lr, ref);
    CHECK(pm[0].shape() == std::vector<int>{1, 4, 8, 12});
    CHECK(pm[1].shape() == std::vector<int>{1, 8, 4, 6});
    CHECK(pm[2].shape() == std::vector<int>{1, 16, 2, 3});
    CHECK_THROWS_AS(m.run(Tensor<double>::zeros({1, 3, 30, 32}),
                          Tensor<double>::zeros({1, 3, 30, 32})),
                    Error&);
}

TEST_CASE("every registered patch-matching parameter receives gradient") {
    ModelConfig cfg;
    cfg.variant = "full";
    cfg.pm_dim = 4;
    auto m = PatchMatchModule<double>::make(cfg);
    ParamList<double> params;
    m.register_params(params);
    init_params_random(params, 25);
    CHECK(params.find("patchmatch.group2.block2.lr_fc1.weight") != nullptr);
    CHECK(params.find("patchmatch.group3.block2.lr_fc1.weight") == nullptr);
    Rng rng(96);
    auto lr = random_tensor<double>({1, 3, 32, 32}, rng, 0.0, 1.0);
    auto ref = random_tensor<double>({1, 3, 32, 32}, rng, 0.0, 1.0);
    auto pm = m.run(lr, ref);
    Tensor<double> loss = sum(mul(pm[0], pm[0]));
    for (int k = 1; k < 3; ++k)
        loss = add(loss, sum(mul(pm[static_cast<size_t>(k)], pm[static_cast<size_t>(k)])));
    loss.backward();
    for (const auto& p : params.items) {
        bool any = false;
        for (double g : p.tensor.grad()) {
            CHECK(std::isfinite(g));
            if (g != 0.0) any = true;
        }
        INFO("no gradient signal in " << p.name);
        CHECK(any);
    }
}

TEST_CASE("backward through a shifted block reaches the attention weights") {
    auto blk = PatchMatchBlock<double>::make(4, 2, 3, false, true);
    ParamList<double> params;
    blk.register_params("blk", params);
    init_params_random(params, 23);
    Rng rng(90);
    auto grid_lr = random_tensor<double>({1, 4, 4, 4}, rng, -1.0, 1.0, true);
    auto grid_ref = random_tensor<double>({1, 4, 4, 4}, rng, -1.0, 1.0, true);
    auto out = blk(grid_lr, grid_ref);
    sum(mul(out.lr, add(out.ref, out.at_map))).backward();
    for (const auto& p : params.items) {
        bool any = false;
        for (double g : p.tensor.grad()) {
            CHECK(std::isfinite(g));
            if (g != 0.0) any = true;
        }
        INFO("no gradient signal in " << p.name);
        CHECK(any);
    }
}
