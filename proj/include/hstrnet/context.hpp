#pragma once

#include <array>
#include <vector>

#include "hstrnet/model_config.hpp"
#include "hstrnet/nn.hpp"

namespace hstrnet {

// Halve a flow field: 2x2 average pooling, then displacements scaled by 0.5
// so they stay in units of the new resolution.
template <typename T>
Tensor<T> downscale_flow(const Tensor<T>& flow) {
    return mul_scalar(avg_pool2x2(flow), T(0.5));
}

// Multi-scale features of the reference frame, aligned to the LR frame by the
// forward flow, either through flow-offset deformable convolution or through
// plain warping (the fixed-warp variants).
template <typename T>
struct ContextModule {
    std::array<Conv2dLayer<T>, 4> convs;
    std::array<DeformConvLayer<T>, 4> deforms;
    bool deformable = false;

    static ContextModule make(const ModelConfig& cfg) {
        ContextModule m;
        m.deformable = cfg.deformable_context();
        int cin = 3;
        for (int k = 0; k < 4; ++k) {
            const int cout = cfg.context_widths[k];
            m.convs[k] = Conv2dLayer<T>::make(cin, cout, 3, 2, 1);
            if (m.deformable) m.deforms[k] = DeformConvLayer<T>::make(cout, cfg.context_tap_refine);
            cin = cout;
        }
        return m;
    }

    void register_params(ParamList<T>& out) const {
        for (int k = 0; k < 4; ++k) {
            convs[k].register_params("context.conv" + std::to_string(k), out);
            if (deformable) deforms[k].register_params("context.deform" + std::to_string(k), out);
        }
    }

    // ref: [N,3,H,W] divisible by 16; flow_forward: [N,2,H,W].
    // Returns C_0..C_3 at 1/2..1/16 resolution.
    std::vector<Tensor<T>> extract(const Tensor<T>& ref, const Tensor<T>& flow_forward) const {
        require(ref.dim(2) % 16 == 0 && ref.dim(3) % 16 == 0,
                "extract_context: input must be divisible by 16");
        require(flow_forward.dim(2) == ref.dim(2) && flow_forward.dim(3) == ref.dim(3),
                "extract_context: flow resolution mismatch");
        std::vector<Tensor<T>> levels;
        Tensor<T> f = ref;
        Tensor<T> g = flow_forward;
        for (int k = 0; k < 4; ++k) {
            f = leaky_relu(convs[k](f), T(0.2));
            g = downscale_flow(g);
            levels.push_back(deformable ? deforms[k](f, g) : warp(f, g));
        }
        return levels;
    }
};

}  // namespace hstrnet
