#pragma once

#include <functional>
#include <memory>

#include "hstrnet/context.hpp"
#include "hstrnet/fusion.hpp"
#include "hstrnet/model_config.hpp"
#include "hstrnet/motion.hpp"
#include "hstrnet/patchmatch.hpp"

namespace hstrnet {

struct PadRecord {
    int orig_h = 0, orig_w = 0;
    int padded_h = 0, padded_w = 0;
    int pad_bottom = 0, pad_right = 0;

    static PadRecord to_multiple(int h, int w, int multiple) {
        PadRecord r;
        r.orig_h = h;
        r.orig_w = w;
        r.padded_h = (h + multiple - 1) / multiple * multiple;
        r.padded_w = (w + multiple - 1) / multiple * multiple;
        r.pad_bottom = r.padded_h - h;
        r.pad_right = r.padded_w - w;
        return r;
    }
};

template <typename T>
struct HstrNet {
    ModelConfig cfg;
    MotionModule<T> motion;
    ContextModule<T> context;
    std::shared_ptr<PatchMatchModule<T>> patchmatch;  // variant full only
    FusionModule<T> fusion;

    static HstrNet build(const ModelConfig& cfg) {
        cfg.validate();
        HstrNet m;
        m.cfg = cfg;
        m.motion = MotionModule<T>::make(cfg);
        m.context = ContextModule<T>::make(cfg);
        if (cfg.has_patchmatch())
            m.patchmatch = std::make_shared<PatchMatchModule<T>>(PatchMatchModule<T>::make(cfg));
        m.fusion = FusionModule<T>::make(cfg);
        return m;
    }

    ParamList<T> named_params() const {
        ParamList<T> out;
        motion.register_params(out);
        context.register_params(out);
        if (patchmatch) patchmatch->register_params(out);
        fusion.register_params(out);
        return out;
    }

    size_t param_count() const { return named_params().scalar_count(); }

    void init(uint64_t seed) {
        auto params = named_params();
        init_params(params, seed, true);
    }

    void init_random(uint64_t seed) {
        auto params = named_params();
        init_params_random(params, seed);
    }

    // Unclamped reconstruction at the input resolution (training target).
    Tensor<T> forward_unclamped(const Tensor<T>& lr, const Tensor<T>& ref) const {
        require(lr.ndim() == 4 && lr.dim(1) == 3, "forward: expects [N,3,H,W] frames");
        require(lr.shape() == ref.shape(),
                "forward: lr is " + std::to_string(lr.dim(2)) + "x" + std::to_string(lr.dim(3)) +
                    " but ref is " + std::to_string(ref.dim(2)) + "x" +
                    std::to_string(ref.dim(3)));
        const PadRecord pad = PadRecord::to_multiple(lr.dim(2), lr.dim(3), 16);
        Tensor<T> lr_p = pad_replicate(lr, 0, pad.pad_bottom, 0, pad.pad_right);
        Tensor<T> ref_p = pad_replicate(ref, 0, pad.pad_bottom, 0, pad.pad_right);

        auto [flow, hr_warped] = motion.estimate_flow(lr_p, ref_p);
        auto ctx = context.extract(ref_p, slice_channels(flow, 0, 2));

        std::vector<Tensor<T>> pm;
        if (patchmatch) {
            auto pm_arr = patchmatch->run(lr_p, ref_p);
            pm.assign(pm_arr.begin(), pm_arr.end());
        }

        std::vector<Tensor<T>> enc_parts{hr_warped};
        if (cfg.bidirectional_motion())
            enc_parts.push_back(warp(lr_p, slice_channels(flow, 2, 4)));
        enc_parts.push_back(lr_p);
        auto fused = fusion.fuse(concat_channels(enc_parts), ctx, pm);
        Tensor<T> rec = reconstruct(hr_warped, lr_p, fused);
        return crop_nchw(rec, 0, 0, pad.orig_h, pad.orig_w);
    }

    // Output-formatting path: reconstruction clamped to the image range.
    Tensor<T> forward(const Tensor<T>& lr, const Tensor<T>& ref) const {
        return clamp(forward_unclamped(lr, ref), T(0), T(1));
    }
};

template <typename T>
using ModelFn = std::function<Tensor<T>(const Tensor<T>&, const Tensor<T>&)>;

// 4x temporal upsampling over one five-frame group: the outer frames are
// predicted from the HR endpoints, the middle frame is the average of
// predictions chained through both intermediates.
template <typename T>
std::array<Tensor<T>, 3> upsample_4x(const std::array<Tensor<T>, 3>& lr,
                                     const std::array<Tensor<T>, 2>& refs, const ModelFn<T>& m) {
    for (const auto& t : lr)
        require(t.shape() == refs[0].shape() && t.shape() == refs[1].shape(),
                "upsample_4x: all five frames must share one resolution");
    std::array<Tensor<T>, 3> out;
    out[0] = m(lr[0], refs[0]);
    out[2] = m(lr[2], refs[1]);
    out[1] = mul_scalar(add(m(lr[1], out[0]), m(lr[1], out[2])), T(0.5));
    return out;
}

}  // namespace hstrnet
