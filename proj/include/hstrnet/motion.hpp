#pragma once

#include <array>
#include <utility>

#include "hstrnet/model_config.hpp"
#include "hstrnet/nn.hpp"

namespace hstrnet {

// Coarse-to-fine flow estimator. Each block works at a reduced scale and emits
// a 4-channel bidirectional flow at full resolution; later blocks refine the
// previous estimate additively.
template <typename T>
struct MotionBlock {
    Conv2dLayer<T> down0, down1;
    std::array<Conv2dLayer<T>, 8> convs;
    ConvT2dLayer<T> up;
    int in_ch = 0, hidden = 0, prescale = 1;

    static MotionBlock make(int in_ch, int hidden, int prescale) {
        MotionBlock b;
        b.in_ch = in_ch;
        b.hidden = hidden;
        b.prescale = prescale;
        b.down0 = Conv2dLayer<T>::make(in_ch, hidden, 3, 2, 1);
        b.down1 = Conv2dLayer<T>::make(hidden, hidden, 3, 2, 1);
        for (auto& c : b.convs) c = Conv2dLayer<T>::make(hidden, hidden, 3, 1, 1);
        b.up = ConvT2dLayer<T>::make(hidden, 4, 4, 2, 1, 0);
        b.up.structural_zero = true;  // zero flow at step 0 keeps warp an identity
        return b;
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        down0.register_params(prefix + ".down0", out);
        down1.register_params(prefix + ".down1", out);
        for (size_t i = 0; i < convs.size(); ++i)
            convs[i].register_params(prefix + ".conv" + std::to_string(i), out);
        up.register_params(prefix + ".up", out);
    }

    // x: [N, in_ch, H, W] with H, W divisible by 4 * prescale -> flow [N,4,H,W]
    Tensor<T> operator()(const Tensor<T>& x) const {
        require(x.dim(1) == in_ch, "motion block expects " + std::to_string(in_ch) +
                                       " input channels, got " + std::to_string(x.dim(1)));
        const int h = x.dim(2), w = x.dim(3);
        require(h % (4 * prescale) == 0 && w % (4 * prescale) == 0,
                "motion block input must be divisible by " + std::to_string(4 * prescale));
        const T slope = T(0.2);
        Tensor<T> y = x;
        if (prescale > 1) y = bilinear_resize(y, h / prescale, w / prescale);
        y = leaky_relu(down0(y), slope);
        y = leaky_relu(down1(y), slope);
        Tensor<T> z = y;
        for (const auto& c : convs) z = leaky_relu(c(z), slope);
        Tensor<T> flow = up(add(y, z));
        flow = bilinear_resize(flow, h, w);
        return mul_scalar(flow, T(2 * prescale));
    }
};

template <typename T>
struct MotionModule {
    std::array<MotionBlock<T>, 3> blocks;
    bool bidirectional = false;
    bool feed_frames = false;

    static MotionModule make(const ModelConfig& cfg) {
        MotionModule m;
        m.bidirectional = cfg.bidirectional_motion();
        m.feed_frames = cfg.motion_feed_frames;
        const std::array<int, 3> prescale{4, 2, 1};
        for (int k = 0; k < 3; ++k)
            m.blocks[k] = MotionBlock<T>::make(cfg.motion_in_channels(k), cfg.motion_widths[k],
                                               prescale[k]);
        return m;
    }

    void register_params(ParamList<T>& out) const {
        for (size_t k = 0; k < 3; ++k)
            blocks[k].register_params("motion.block" + std::to_string(k), out);
    }

    // Returns (bidirectional flow [N,4,H,W], warped reference HR^W [N,3,H,W]).
    std::pair<Tensor<T>, Tensor<T>> estimate_flow(const Tensor<T>& lr,
                                                  const Tensor<T>& ref) const {
        require(lr.shape() == ref.shape(), "estimate_flow: lr/ref resolution mismatch");
        require(lr.dim(2) % 16 == 0 && lr.dim(3) % 16 == 0,
                "estimate_flow: input must be divisible by 16");
        Tensor<T> flow = blocks[0](concat_channels<T>({lr, ref}));
        for (int k = 1; k < 3; ++k) {
            std::vector<Tensor<T>> parts;
            parts.push_back(warp(ref, slice_channels(flow, 0, 2)));
            if (bidirectional) parts.push_back(warp(lr, slice_channels(flow, 2, 4)));
            parts.push_back(flow);
            if (feed_frames) {
                parts.push_back(lr);
                parts.push_back(ref);
            }
            flow = add(flow, blocks[k](concat_channels(parts)));
        }
        Tensor<T> hr_warped = warp(ref, slice_channels(flow, 0, 2));
        return {flow, hr_warped};
    }
};

}  // namespace hstrnet
