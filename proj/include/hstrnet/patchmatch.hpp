#pragma once

#include <array>
#include <vector>

#include "hstrnet/model_config.hpp"
#include "hstrnet/nn.hpp"

namespace hstrnet {

namespace winmap {

// Gather map: [n, d, gh, gw] grid -> [n*nw, win*win, d] token windows.
// The source grid is implicitly zero-padded to (gh_p, gw_p); shift rolls the
// padded grid up-left before partitioning (cyclic).
inline std::shared_ptr<std::vector<int64_t>> partition(int n, int d, int gh, int gw, int gh_p,
                                                       int gw_p, int win, int shift) {
    const int nwy = gh_p / win, nwx = gw_p / win;
    auto map = std::make_shared<std::vector<int64_t>>(
        static_cast<size_t>(n) * nwy * nwx * win * win * d);
    size_t k = 0;
    for (int b = 0; b < n; ++b)
        for (int wy = 0; wy < nwy; ++wy)
            for (int wx = 0; wx < nwx; ++wx)
                for (int ty = 0; ty < win; ++ty)
                    for (int tx = 0; tx < win; ++tx) {
                        const int y = (wy * win + ty + shift) % gh_p;
                        const int x = (wx * win + tx + shift) % gw_p;
                        const bool pad = y >= gh || x >= gw;
                        for (int c = 0; c < d; ++c)
                            (*map)[k++] = pad ? -1
                                              : ((static_cast<int64_t>(b) * d + c) * gh + y) * gw +
                                                    x;
                    }
    return map;
}

// Inverse gather: token windows -> [n, d, gh, gw] grid (padding dropped).
inline std::shared_ptr<std::vector<int64_t>> reverse(int n, int d, int gh, int gw, int gh_p,
                                                     int gw_p, int win, int shift) {
    const int nwy = gh_p / win, nwx = gw_p / win;
    const int nw = nwy * nwx;
    auto map =
        std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n) * d * gh * gw);
    size_t k = 0;
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < d; ++c)
            for (int y = 0; y < gh; ++y)
                for (int x = 0; x < gw; ++x) {
                    const int y2 = (y - shift + gh_p) % gh_p;
                    const int x2 = (x - shift + gw_p) % gw_p;
                    const int64_t w = static_cast<int64_t>(b) * nw + (y2 / win) * nwx + x2 / win;
                    const int t = (y2 % win) * win + x2 % win;
                    (*map)[k++] = (w * win * win + t) * d + c;
                }
    return map;
}

// [b, t, d] -> [b*heads, t, dh]
inline std::shared_ptr<std::vector<int64_t>> head_split(int b, int t, int d, int heads) {
    const int dh = d / heads;
    auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(b) * t * d);
    size_t k = 0;
    for (int bi = 0; bi < b; ++bi)
        for (int h = 0; h < heads; ++h)
            for (int ti = 0; ti < t; ++ti)
                for (int c = 0; c < dh; ++c)
                    (*map)[k++] = (static_cast<int64_t>(bi) * t + ti) * d + h * dh + c;
    return map;
}

inline std::shared_ptr<std::vector<int64_t>> head_merge(int b, int t, int d, int heads) {
    const int dh = d / heads;
    auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(b) * t * d);
    size_t k = 0;
    for (int bi = 0; bi < b; ++bi)
        for (int ti = 0; ti < t; ++ti)
            for (int c = 0; c < d; ++c) {
                const int h = c / dh;
                (*map)[k++] = ((static_cast<int64_t>(bi) * heads + h) * t + ti) * dh + c % dh;
            }
    return map;
}

// Relative-position index for tokens i, j of a win*win window.
inline int relpos_index(int i, int j, int win) {
    const int dy = i / win - j / win + win - 1;
    const int dx = i % win - j % win + win - 1;
    return dy * (2 * win - 1) + dx;
}

// [heads, (2win-1)^2] table -> [bh, N, N] logits bias, bh = windows*heads with
// the head index innermost.
inline std::shared_ptr<std::vector<int64_t>> relpos_expand(int bh, int heads, int win) {
    const int nt = win * win;
    auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(bh) * nt * nt);
    size_t k = 0;
    for (int b = 0; b < bh; ++b) {
        const int h = b % heads;
        for (int i = 0; i < nt; ++i)
            for (int j = 0; j < nt; ++j)
                (*map)[k++] =
                    static_cast<int64_t>(h) * (2 * win - 1) * (2 * win - 1) + relpos_index(i, j, win);
    }
    return map;
}

// Cross-boundary attention mask for the cyclic-shift block: entry 0 when the
// two tokens came from the same pre-shift region, blocked otherwise.
// Returned per window: [nw, N, N] with `blocked` at masked positions.
template <typename T>
std::vector<T> shift_mask(int gh_p, int gw_p, int win, int shift, T blocked) {
    const int nwy = gh_p / win, nwx = gw_p / win;
    const int nt = win * win;
    auto region = [&](int coord, int extent) {
        if (coord < extent - win) return 0;
        if (coord < extent - shift) return 1;
        return 2;
    };
    std::vector<int> id(static_cast<size_t>(gh_p) * gw_p);
    for (int y2 = 0; y2 < gh_p; ++y2)
        for (int x2 = 0; x2 < gw_p; ++x2) {
            const int y = (y2 + shift) % gh_p;
            const int x = (x2 + shift) % gw_p;
            id[static_cast<size_t>(y2) * gw_p + x2] = region(y, gh_p) * 3 + region(x, gw_p);
        }
    std::vector<T> mask(static_cast<size_t>(nwy) * nwx * nt * nt, T(0));
    size_t k = 0;
    for (int wy = 0; wy < nwy; ++wy)
        for (int wx = 0; wx < nwx; ++wx)
            for (int i = 0; i < nt; ++i)
                for (int j = 0; j < nt; ++j) {
                    const int yi = wy * win + i / win, xi = wx * win + i % win;
                    const int yj = wy * win + j / win, xj = wx * win + j % win;
                    mask[k++] = id[static_cast<size_t>(yi) * gw_p + xi] ==
                                        id[static_cast<size_t>(yj) * gw_p + xj]
                                    ? T(0)
                                    : blocked;
                }
    return mask;
}

// [nw, N, N] per-window mask -> [b*nw*heads, N, N]
inline std::shared_ptr<std::vector<int64_t>> mask_expand(int n, int nw, int heads, int nt) {
    auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n) * nw * heads * nt * nt);
    size_t k = 0;
    for (int b = 0; b < n; ++b)
        for (int w = 0; w < nw; ++w)
            for (int h = 0; h < heads; ++h)
                for (int ij = 0; ij < nt * nt; ++ij)
                    (*map)[k++] = static_cast<int64_t>(w) * nt * nt + ij;
    return map;
}

}  // namespace winmap

template <typename T>
struct CrossAttnParams {
    LinearLayer<T> lr_q, lr_k, ref_q, ref_k, ref_v;
    Tensor<T> relpos;  // [heads, (2*win-1)^2]
    int dim = 0, heads = 1, win = 3;
    bool raw_eq1 = false;

    static CrossAttnParams make(int dim, int heads, int win, bool raw_eq1) {
        CrossAttnParams p;
        p.dim = dim;
        p.heads = heads;
        p.win = win;
        p.raw_eq1 = raw_eq1;
        p.lr_q = LinearLayer<T>::make(dim, dim);
        p.lr_k = LinearLayer<T>::make(dim, dim);
        p.ref_q = LinearLayer<T>::make(dim, dim);
        p.ref_k = LinearLayer<T>::make(dim, dim);
        p.ref_v = LinearLayer<T>::make(dim, dim);
        p.relpos = Tensor<T>::zeros({heads, (2 * win - 1) * (2 * win - 1)}, true);
        return p;
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        lr_q.register_params(prefix + ".lr_q", out);
        lr_k.register_params(prefix + ".lr_k", out);
        ref_q.register_params(prefix + ".ref_q", out);
        ref_k.register_params(prefix + ".ref_k", out);
        ref_v.register_params(prefix + ".ref_v", out);
        out.add(prefix + ".relpos", relpos, InitKind::Zero, 1);
    }
};

template <typename T>
struct CrossAttnResult {
    Tensor<T> at;      // [B, N, dim] fused output
    Tensor<T> at_ref;  // [B*heads, N, N] correspondence LR -> REF
    Tensor<T> at_lr;   // [B*heads, N, N] correspondence REF -> LR
};

// Cross-frame window attention:
//   AT_REF = normalize(Q_LR K_REF^T / sqrt(dh) + B)
//   AT_LR  = normalize(Q_REF K_LR^T / sqrt(dh) + B)
//   AT     = AT_LR (AT_REF V_REF)
// mask, when defined, is [B*heads, N, N]: additive pre-softmax in normalized
// mode, multiplicative (0/1) in raw mode.
template <typename T>
CrossAttnResult<T> cross_frame_attention(const Tensor<T>& tok_lr, const Tensor<T>& tok_ref,
                                         const CrossAttnParams<T>& p,
                                         const Tensor<T>& mask = Tensor<T>()) {
    require(tok_lr.ndim() == 3 && tok_ref.ndim() == 3 && tok_lr.shape() == tok_ref.shape(),
            "cross_frame_attention: token windows must be [B,N,D] with equal shapes");
    require(tok_lr.dim(2) == p.dim, "cross_frame_attention: channel mismatch");
    const int b = tok_lr.dim(0), nt = tok_lr.dim(1), d = p.dim;
    const int heads = p.heads, dh = d / heads;
    const int bh = b * heads;

    auto split = [&](const Tensor<T>& t) {
        if (heads == 1) return t;
        return index_map(t, {bh, nt, dh}, winmap::head_split(b, nt, d, heads));
    };
    Tensor<T> q_lr = split(p.lr_q(tok_lr));
    Tensor<T> k_lr = split(p.lr_k(tok_lr));
    Tensor<T> q_ref = split(p.ref_q(tok_ref));
    Tensor<T> k_ref = split(p.ref_k(tok_ref));
    Tensor<T> v_ref = split(p.ref_v(tok_ref));

    auto attend = [&](const Tensor<T>& q, const Tensor<T>& k) {
        Tensor<T> logits = bmm(q, k, false, true);
        if (p.raw_eq1) {
            if (mask.defined()) logits = mul(logits, mask);
            return logits;
        }
        logits = mul_scalar(logits, T(1) / std::sqrt(T(dh)));
        logits = add(logits, index_map(p.relpos, {bh, nt, nt},
                                       winmap::relpos_expand(bh, heads, p.win)));
        if (mask.defined()) logits = add(logits, mask);
        return softmax_lastdim(logits);
    };

    CrossAttnResult<T> r;
    r.at_ref = attend(q_lr, k_ref);
    r.at_lr = attend(q_ref, k_lr);
    Tensor<T> fused = bmm(r.at_lr, bmm(r.at_ref, v_ref));
    r.at = heads == 1 ? fused
                      : index_map(fused, {b, nt, d}, winmap::head_merge(b, nt, d, heads));
    return r;
}

// One two-stream windowed block: shared cross-frame attention feeding both
// streams through separate projections, then a per-stream feed-forward, both
// stages pre-normalized with residual bypass. The terminal block of the stack
// only produces the attention map, so the stream-update stage (whose output
// nothing would consume) is never built and no parameter sits outside the
// loss gradient.
template <typename T>
struct PatchMatchBlock {
    CrossAttnParams<T> attn;
    LayerNormLayer<T> lr_norm1, ref_norm1, lr_norm2, ref_norm2;
    LinearLayer<T> lr_proj, ref_proj;
    LinearLayer<T> lr_fc1, lr_fc2, ref_fc1, ref_fc2;
    bool shifted = false;
    bool update_streams = true;

    static PatchMatchBlock make(int dim, int heads, int win, bool raw_eq1, bool shifted,
                                bool update_streams = true) {
        PatchMatchBlock blk;
        blk.attn = CrossAttnParams<T>::make(dim, heads, win, raw_eq1);
        blk.shifted = shifted;
        blk.update_streams = update_streams;
        blk.lr_norm1 = LayerNormLayer<T>::make(dim);
        blk.ref_norm1 = LayerNormLayer<T>::make(dim);
        if (update_streams) {
            blk.lr_norm2 = LayerNormLayer<T>::make(dim);
            blk.ref_norm2 = LayerNormLayer<T>::make(dim);
            blk.lr_proj = LinearLayer<T>::make(dim, dim);
            blk.ref_proj = LinearLayer<T>::make(dim, dim);
            blk.lr_fc1 = LinearLayer<T>::make(dim, 2 * dim);
            blk.lr_fc2 = LinearLayer<T>::make(2 * dim, dim);
            blk.ref_fc1 = LinearLayer<T>::make(dim, 2 * dim);
            blk.ref_fc2 = LinearLayer<T>::make(2 * dim, dim);
        }
        return blk;
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        attn.register_params(prefix, out);
        lr_norm1.register_params(prefix + ".lr_norm1", out);
        ref_norm1.register_params(prefix + ".ref_norm1", out);
        if (!update_streams) return;
        lr_norm2.register_params(prefix + ".lr_norm2", out);
        ref_norm2.register_params(prefix + ".ref_norm2", out);
        lr_proj.register_params(prefix + ".lr_proj", out);
        ref_proj.register_params(prefix + ".ref_proj", out);
        lr_fc1.register_params(prefix + ".lr_fc1", out);
        lr_fc2.register_params(prefix + ".lr_fc2", out);
        ref_fc1.register_params(prefix + ".ref_fc1", out);
        ref_fc2.register_params(prefix + ".ref_fc2", out);
    }

    struct Result {
        Tensor<T> lr, ref;  // updated token grids, [N, D, gh, gw]
        Tensor<T> at_map;   // reassembled attention output, [N, D, gh, gw]
    };

    Result operator()(const Tensor<T>& grid_lr, const Tensor<T>& grid_ref) const {
        require(grid_lr.shape() == grid_ref.shape(), "patch_match_block: grid shape mismatch");
        const int n = grid_lr.dim(0), d = grid_lr.dim(1);
        const int gh = grid_lr.dim(2), gw = grid_lr.dim(3);
        const int win = attn.win;
        const int gh_p = (gh + win - 1) / win * win;
        const int gw_p = (gw + win - 1) / win * win;
        const int nw = (gh_p / win) * (gw_p / win);
        const int nt = win * win;
        const int shift = shifted ? win / 2 : 0;

        auto part = winmap::partition(n, d, gh, gw, gh_p, gw_p, win, shift);
        Tensor<T> w_lr = index_map(grid_lr, {n * nw, nt, d}, part);
        Tensor<T> w_ref = index_map(grid_ref, {n * nw, nt, d}, part);

        Tensor<T> mask;
        if (shifted) {
            Tensor<T> per_window = Tensor<T>::from(
                {nw, nt, nt}, winmap::shift_mask<T>(gh_p, gw_p, win, shift, T(-1e9)));
            if (attn.raw_eq1)
                for (size_t i = 0; i < per_window.numel(); ++i)
                    per_window.data()[i] = per_window.data()[i] == T(0) ? T(1) : T(0);
            mask = index_map(per_window, {n * nw * attn.heads, nt, nt},
                             winmap::mask_expand(n, nw, attn.heads, nt));
        }

        auto res = cross_frame_attention(lr_norm1(w_lr), ref_norm1(w_ref), attn, mask);
        auto rev = winmap::reverse(n, d, gh, gw, gh_p, gw_p, win, shift);
        Result out;
        out.at_map = index_map(res.at, {n, d, gh, gw}, rev);
        if (!update_streams) {
            out.lr = grid_lr;
            out.ref = grid_ref;
            return out;
        }
        Tensor<T> x_lr = add(w_lr, lr_proj(res.at));
        Tensor<T> x_ref = add(w_ref, ref_proj(res.at));
        x_lr = add(x_lr, lr_fc2(gelu(lr_fc1(lr_norm2(x_lr)))));
        x_ref = add(x_ref, ref_fc2(gelu(ref_fc1(ref_norm2(x_ref)))));
        out.lr = index_map(x_lr, {n, d, gh, gw}, rev);
        out.ref = index_map(x_ref, {n, d, gh, gw}, rev);
        return out;
    }
};

// 2x2 token-neighborhood concatenation followed by a learned 4d -> 2d map.
template <typename T>
Tensor<T> patch_merge(const Tensor<T>& grid, const LinearLayer<T>& proj) {
    const int n = grid.dim(0), d = grid.dim(1), gh = grid.dim(2), gw = grid.dim(3);
    const int h2 = (gh + 1) / 2, w2 = (gw + 1) / 2;
    auto gather = std::make_shared<std::vector<int64_t>>(
        static_cast<size_t>(n) * h2 * w2 * 4 * d);
    size_t k = 0;
    for (int b = 0; b < n; ++b)
        for (int py = 0; py < h2; ++py)
            for (int px = 0; px < w2; ++px)
                for (int q = 0; q < 4; ++q) {
                    const int y = 2 * py + q / 2, x = 2 * px + q % 2;
                    for (int c = 0; c < d; ++c)
                        (*gather)[k++] = (y >= gh || x >= gw)
                                             ? -1
                                             : ((static_cast<int64_t>(b) * d + c) * gh + y) * gw + x;
                }
    Tensor<T> tokens = index_map(grid, {n, h2 * w2, 4 * d}, gather);
    Tensor<T> merged = proj(tokens);  // [n, h2*w2, 2d]
    auto to_grid = std::make_shared<std::vector<int64_t>>(
        static_cast<size_t>(n) * 2 * d * h2 * w2);
    k = 0;
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < 2 * d; ++c)
            for (int p = 0; p < h2 * w2; ++p)
                (*to_grid)[k++] = (static_cast<int64_t>(b) * h2 * w2 + p) * 2 * d + c;
    return index_map(merged, {n, 2 * d, h2, w2}, to_grid);
}

// Three groups of (regular, shifted) blocks over a shared 4x4 patch embedding;
// each group's shifted-block attention map is one PM output.
template <typename T>
struct PatchMatchModule {
    Conv2dLayer<T> partition;
    std::vector<PatchMatchBlock<T>> blocks;  // 6: group-major, regular first
    LinearLayer<T> merge1, merge2;
    int base_dim = 48;

    static PatchMatchModule make(const ModelConfig& cfg) {
        PatchMatchModule m;
        m.base_dim = cfg.pm_dim;
        m.partition = Conv2dLayer<T>::make(3, cfg.pm_dim, 4, 4, 0);
        for (int g = 0; g < 3; ++g) {
            const int dim = cfg.pm_dim << g;
            m.blocks.push_back(
                PatchMatchBlock<T>::make(dim, cfg.pm_heads, cfg.pm_window, cfg.pm_raw_eq1, false));
            m.blocks.push_back(PatchMatchBlock<T>::make(dim, cfg.pm_heads, cfg.pm_window,
                                                        cfg.pm_raw_eq1, true, g < 2));
        }
        m.merge1 = LinearLayer<T>::make(4 * cfg.pm_dim, 2 * cfg.pm_dim);
        m.merge2 = LinearLayer<T>::make(8 * cfg.pm_dim, 4 * cfg.pm_dim);
        return m;
    }

    void register_params(ParamList<T>& out) const {
        partition.register_params("patchmatch.partition", out);
        for (int g = 0; g < 3; ++g)
            for (int s = 0; s < 2; ++s)
                blocks[static_cast<size_t>(2 * g + s)].register_params(
                    "patchmatch.group" + std::to_string(g + 1) + ".block" + std::to_string(s + 1),
                    out);
        merge1.register_params("patchmatch.merge1", out);
        merge2.register_params("patchmatch.merge2", out);
    }

    // lr, ref: [N,3,H,W], same resolution, divisible by 16.
    // Returns PM_0 [N,d,H/4,W/4], PM_1 [N,2d,H/8,W/8], PM_2 [N,4d,H/16,W/16].
    std::array<Tensor<T>, 3> run(const Tensor<T>& lr, const Tensor<T>& ref) const {
        require(lr.shape() == ref.shape(), "run_patch_matching: resolution mismatch");
        require(lr.dim(2) % 4 == 0 && lr.dim(3) % 4 == 0,
                "run_patch_matching: input must be divisible by 4, got " +
                    std::to_string(lr.dim(2)) + "x" + std::to_string(lr.dim(3)));
        Tensor<T> t_lr = partition(lr);
        Tensor<T> t_ref = partition(ref);
        std::array<Tensor<T>, 3> pm;
        for (int g = 0; g < 3; ++g) {
            auto a = blocks[static_cast<size_t>(2 * g)](t_lr, t_ref);
            auto b = blocks[static_cast<size_t>(2 * g + 1)](a.lr, a.ref);
            pm[static_cast<size_t>(g)] = b.at_map;
            t_lr = b.lr;
            t_ref = b.ref;
            if (g == 0) {
                t_lr = patch_merge(t_lr, merge1);
                t_ref = patch_merge(t_ref, merge1);
            } else if (g == 1) {
                t_lr = patch_merge(t_lr, merge2);
                t_ref = patch_merge(t_ref, merge2);
            }
        }
        return pm;
    }
};

}  // namespace hstrnet
