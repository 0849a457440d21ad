#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "hstrnet/ops_conv.hpp"
#include "hstrnet/ops_image.hpp"
#include "hstrnet/ops_token.hpp"
#include "hstrnet/tensor.hpp"

namespace hstrnet {

enum class InitKind { FanInUniform, Zero, One };

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
    InitKind kind = InitKind::FanInUniform;
    int fan_in = 1;
    // Zeroed by the default init so step-0 behavior is the documented identity
    // (zero flow, 0.5/0.5 blend). The randomized init used by gradient tests
    // ignores the flag.
    bool structural_zero = false;
};

template <typename T>
struct ParamList {
    std::vector<NamedParam<T>> items;

    void add(std::string name, Tensor<T> t, InitKind kind, int fan_in,
             bool structural_zero = false) {
        items.push_back({std::move(name), std::move(t), kind, fan_in, structural_zero});
    }

    NamedParam<T>* find(const std::string& name) {
        for (auto& p : items)
            if (p.name == name) return &p;
        return nullptr;
    }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& p : items) n += p.tensor.numel();
        return n;
    }
};

template <typename T>
struct Conv2dLayer {
    Tensor<T> weight, bias;
    int stride = 1, pad = 1;
    bool structural_zero = false;

    static Conv2dLayer make(int cin, int cout, int k, int stride, int pad) {
        Conv2dLayer l;
        l.weight = Tensor<T>::zeros({cout, cin, k, k}, true);
        l.bias = Tensor<T>::zeros({cout}, true);
        l.stride = stride;
        l.pad = pad;
        return l;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, pad); }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        const int fan = weight.dim(1) * weight.dim(2) * weight.dim(3);
        out.add(prefix + ".weight", weight, InitKind::FanInUniform, fan, structural_zero);
        out.add(prefix + ".bias", bias, InitKind::Zero, fan, structural_zero);
    }
};

template <typename T>
struct ConvT2dLayer {
    Tensor<T> weight, bias;
    int stride = 2, pad = 1, output_pad = 0;
    bool structural_zero = false;

    static ConvT2dLayer make(int cin, int cout, int k, int stride, int pad, int output_pad) {
        ConvT2dLayer l;
        l.weight = Tensor<T>::zeros({cin, cout, k, k}, true);
        l.bias = Tensor<T>::zeros({cout}, true);
        l.stride = stride;
        l.pad = pad;
        l.output_pad = output_pad;
        return l;
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        return conv_transpose2d(x, weight, bias, stride, pad, output_pad);
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        // Each output position receives cin * (k/stride)^2 taps on average.
        const int k = weight.dim(2);
        const int fan = std::max(1, weight.dim(0) * (k / stride) * (k / stride));
        out.add(prefix + ".weight", weight, InitKind::FanInUniform, fan, structural_zero);
        out.add(prefix + ".bias", bias, InitKind::Zero, fan, structural_zero);
    }
};

template <typename T>
struct LinearLayer {
    Tensor<T> weight, bias;
    bool structural_zero = false;

    static LinearLayer make(int din, int dout) {
        LinearLayer l;
        l.weight = Tensor<T>::zeros({dout, din}, true);
        l.bias = Tensor<T>::zeros({dout}, true);
        return l;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        const int fan = weight.dim(1);
        out.add(prefix + ".weight", weight, InitKind::FanInUniform, fan, structural_zero);
        out.add(prefix + ".bias", bias, InitKind::Zero, fan, structural_zero);
    }
};

template <typename T>
struct LayerNormLayer {
    Tensor<T> weight, bias;

    static LayerNormLayer make(int d) {
        LayerNormLayer l;
        l.weight = Tensor<T>::zeros({d}, true);
        l.bias = Tensor<T>::zeros({d}, true);
        return l;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, weight, bias); }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        out.add(prefix + ".weight", weight, InitKind::One, 1);
        out.add(prefix + ".bias", bias, InitKind::Zero, 1);
    }
};

template <typename T>
struct DeformConvLayer {
    Tensor<T> weight, bias;
    Tensor<T> taps;  // optional static per-tap offset refinements, [9,2]

    static DeformConvLayer make(int c, bool tap_refine) {
        DeformConvLayer l;
        l.weight = Tensor<T>::zeros({c, c, 3, 3}, true);
        l.bias = Tensor<T>::zeros({c}, true);
        if (tap_refine) l.taps = Tensor<T>::zeros({9, 2}, true);
        return l;
    }

    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& offsets) const {
        return deform_conv3x3(x, offsets, weight, bias, taps);
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        const int fan = weight.dim(1) * 9;
        out.add(prefix + ".weight", weight, InitKind::FanInUniform, fan);
        out.add(prefix + ".bias", bias, InitKind::Zero, fan);
        if (taps.defined()) out.add(prefix + ".taps", taps, InitKind::Zero, 1);
    }
};

// Fills every parameter from its init rule. When honor_structural_zeros is
// false, flagged layers get the same random treatment as everything else
// (used by gradient-coverage tests that need signal through all paths).
template <typename T>
void init_params(ParamList<T>& params, uint64_t seed, bool honor_structural_zeros) {
    Rng rng(seed);
    for (auto& p : params.items) {
        T* d = p.tensor.data();
        const size_t n = p.tensor.numel();
        if (p.structural_zero && honor_structural_zeros) {
            std::fill(d, d + n, T(0));
            continue;
        }
        switch (p.kind) {
            case InitKind::FanInUniform: {
                const T bound = T(1) / std::sqrt(static_cast<T>(p.fan_in));
                for (size_t i = 0; i < n; ++i) d[i] = static_cast<T>(rng.uniform(-bound, bound));
                break;
            }
            case InitKind::Zero:
                std::fill(d, d + n, T(0));
                break;
            case InitKind::One:
                std::fill(d, d + n, T(1));
                break;
        }
    }
}

// Randomized variant for gradient tests: every tensor gets nonzero values.
template <typename T>
void init_params_random(ParamList<T>& params, uint64_t seed) {
    Rng rng(seed);
    for (auto& p : params.items) {
        T* d = p.tensor.data();
        const size_t n = p.tensor.numel();
        const T bound = p.kind == InitKind::FanInUniform
                            ? T(1) / std::sqrt(static_cast<T>(p.fan_in))
                            : T(0.1);
        for (size_t i = 0; i < n; ++i) d[i] = static_cast<T>(rng.uniform(-bound, bound));
        if (p.kind == InitKind::One)
            for (size_t i = 0; i < n; ++i) d[i] += T(1);
    }
}

}  // namespace hstrnet
