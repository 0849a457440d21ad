#pragma once

#include <array>
#include <vector>

#include "hstrnet/model_config.hpp"
#include "hstrnet/nn.hpp"

namespace hstrnet {

template <typename T>
struct FusionOutput {
    Tensor<T> residual;  // [N,3,H,W], unbounded
    Tensor<T> mask;      // [N,1,H,W], in (0,1)
};

// UNet-style encoder/decoder. Context and patch-matching features enter the
// encoder as matching-resolution concatenations; the decoder consumes the
// pre-downsample concatenated tensors as skips so side inputs reach it too.
template <typename T>
struct FusionModule {
    std::array<Conv2dLayer<T>, 4> downs;
    std::array<ConvT2dLayer<T>, 4> ups;
    Conv2dLayer<T> final_conv;
    bool with_pm = false;
    int in_channels = 6;

    static FusionModule make(const ModelConfig& cfg) {
        FusionModule m;
        m.with_pm = cfg.has_patchmatch();
        m.in_channels = cfg.fusion_in_channels();
        const auto& cw = cfg.context_widths;
        const int pm0 = m.with_pm ? cfg.pm_dim : 0;
        const int pm1 = m.with_pm ? 2 * cfg.pm_dim : 0;
        const int pm2 = m.with_pm ? 4 * cfg.pm_dim : 0;
        const std::array<int, 4> down_in{m.in_channels, cfg.fusion_down[0] + cw[0],
                                         cfg.fusion_down[1] + cw[1] + pm0,
                                         cfg.fusion_down[2] + cw[2] + pm1};
        for (int k = 0; k < 4; ++k)
            m.downs[k] = Conv2dLayer<T>::make(down_in[k], cfg.fusion_down[k], 3, 2, 1);
        const int bottleneck = cfg.fusion_down[3] + cw[3] + pm2;
        const std::array<int, 4> up_in{bottleneck, cfg.fusion_up[0] + down_in[3],
                                       cfg.fusion_up[1] + down_in[2],
                                       cfg.fusion_up[2] + down_in[1]};
        for (int k = 0; k < 4; ++k)
            m.ups[k] = ConvT2dLayer<T>::make(up_in[k], cfg.fusion_up[k], 3, 2, 1, 1);
        m.final_conv = Conv2dLayer<T>::make(cfg.fusion_up[3], 4, 3, 1, 1);
        m.final_conv.structural_zero = true;  // step-0 output: R = 0, m = 0.5
        return m;
    }

    void register_params(ParamList<T>& out) const {
        for (int k = 0; k < 4; ++k)
            downs[k].register_params("fusion.down" + std::to_string(k + 1), out);
        for (int k = 0; k < 4; ++k)
            ups[k].register_params("fusion.up" + std::to_string(k + 1), out);
        final_conv.register_params("fusion.final", out);
    }

    // enc_in: concatenated frame stack at full resolution; ctx: C_0..C_3 at
    // 1/2..1/16; pm: empty or PM_0..PM_2 at 1/4..1/16.
    FusionOutput<T> fuse(const Tensor<T>& enc_in, const std::vector<Tensor<T>>& ctx,
                         const std::vector<Tensor<T>>& pm) const {
        require(enc_in.dim(1) == in_channels,
                "fuse: expected " + std::to_string(in_channels) + " input channels, got " +
                    std::to_string(enc_in.dim(1)));
        require(ctx.size() == 4, "fuse: context pyramid must have 4 levels");
        require(with_pm == !pm.empty(), "fuse: patch-matching features do not match the variant");
        const int h = enc_in.dim(2), w = enc_in.dim(3);
        for (int k = 0; k < 4; ++k)
            require(ctx[static_cast<size_t>(k)].dim(2) == h >> (k + 1) &&
                        ctx[static_cast<size_t>(k)].dim(3) == w >> (k + 1),
                    "fuse: context level " + std::to_string(k) + " resolution mismatch");
        for (size_t k = 0; k < pm.size(); ++k)
            require(pm[k].dim(2) == h >> (k + 2) && pm[k].dim(3) == w >> (k + 2),
                    "fuse: patch-matching level " + std::to_string(k) + " resolution mismatch");

        // Encoder; t_k are the concatenated tensors the decoder will reuse.
        Tensor<T> t1 = concat_channels<T>({relu(downs[0](enc_in)), ctx[0]});
        std::vector<Tensor<T>> p2{relu(downs[1](t1)), ctx[1]};
        if (with_pm) p2.push_back(pm[0]);
        Tensor<T> t2 = concat_channels(p2);
        std::vector<Tensor<T>> p3{relu(downs[2](t2)), ctx[2]};
        if (with_pm) p3.push_back(pm[1]);
        Tensor<T> t3 = concat_channels(p3);
        std::vector<Tensor<T>> p4{relu(downs[3](t3)), ctx[3]};
        if (with_pm) p4.push_back(pm[2]);
        Tensor<T> bottleneck = concat_channels(p4);

        Tensor<T> u = relu(ups[0](bottleneck));
        u = relu(ups[1](concat_channels<T>({u, t3})));
        u = relu(ups[2](concat_channels<T>({u, t2})));
        u = relu(ups[3](concat_channels<T>({u, t1})));
        Tensor<T> head = final_conv(u);

        FusionOutput<T> out;
        out.residual = slice_channels(head, 0, 3);
        out.mask = sigmoid(slice_channels(head, 3, 4));
        return out;
    }
};

// result = m * hr_warped + (1 - m) * lr + R (unclamped; output formatting
// clamps to [0,1] separately so training keeps gradients at saturation).
template <typename T>
Tensor<T> reconstruct(const Tensor<T>& hr_warped, const Tensor<T>& lr,
                      const FusionOutput<T>& out) {
    require(hr_warped.shape() == lr.shape(), "reconstruct: shape mismatch");
    Tensor<T> m3 = concat_channels<T>({out.mask, out.mask, out.mask});
    Tensor<T> inv_m3 = add_scalar(mul_scalar(m3, T(-1)), T(1));
    Tensor<T> blend = add(mul(m3, hr_warped), mul(inv_m3, lr));
    return add(blend, out.residual);
}

}  // namespace hstrnet
