#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "hstrnet/error.hpp"
#include "hstrnet/rng.hpp"

namespace hstrnet {

// Reverse-mode autograd over dense row-major tensors. Graphs are built
// dynamically; a node keeps its parents alive until the last handle to the
// result goes away. Values are float in production, double in the
// gradient-check / oracle test mode.

inline bool& grad_mode_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    NoGradGuard() : prev_(grad_mode_enabled()) { grad_mode_enabled() = false; }
    ~NoGradGuard() { grad_mode_enabled() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

template <typename T>
struct Node {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward;

    size_t numel() const {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        return n;
    }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        auto node = std::make_shared<Node<T>>();
        node->shape = std::move(shape);
        node->value.assign(node->numel(), T(0));
        node->requires_grad = requires_grad;
        return Tensor(node);
    }

    static Tensor full(std::vector<int> shape, T fill, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::fill(t.data(), t.data() + t.numel(), fill);
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
        auto node = std::make_shared<Node<T>>();
        node->shape = std::move(shape);
        require(node->numel() == values.size(), "tensor literal size does not match shape");
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(node);
    }

    static Tensor uniform(std::vector<int> shape, Rng& rng, T lo, T hi,
                          bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    size_t numel() const { return node_->numel(); }
    T* data() { return node_->value.data(); }
    const T* data() const { return node_->value.data(); }
    std::vector<T>& values() { return node_->value; }
    const std::vector<T>& values() const { return node_->value; }
    T item() const {
        require(numel() == 1, "item() on non-scalar tensor");
        return node_->value[0];
    }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rq) { node_->requires_grad = rq; }
    std::shared_ptr<Node<T>> node() const { return node_; }

    const std::vector<T>& grad() const { return node_->grad; }
    std::vector<T>& grad_mut() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

    Tensor detach() const {
        auto node = std::make_shared<Node<T>>();
        node->shape = node_->shape;
        node->value = node_->value;
        return Tensor(node);
    }

    // Accumulates d(sum of seeded grads)/dx into every reachable leaf grad.
    void backward() {
        node_->ensure_grad();
        std::fill(node_->grad.begin(), node_->grad.end(), T(1));
        run_backward();
    }

    void backward_with(const std::vector<T>& seed) {
        require(seed.size() == numel(), "backward seed size mismatch");
        node_->ensure_grad();
        std::copy(seed.begin(), seed.end(), node_->grad.begin());
        run_backward();
    }

  private:
    void run_backward() {
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> seen;
        std::vector<std::pair<Node<T>*, size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node<T>* p = n->parents[idx++].get();
                if (seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        // order is post-order: parents before children; walk it backwards.
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<T>* n = *it;
            if (n->backward && !n->grad.empty()) n->backward(*n);
        }
    }

    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
inline bool track_grad(std::initializer_list<const Tensor<T>*> inputs) {
    if (!grad_mode_enabled()) return false;
    for (const Tensor<T>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

template <typename T>
inline bool track_grad(const std::vector<const Tensor<T>*>& inputs) {
    if (!grad_mode_enabled()) return false;
    for (const Tensor<T>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

template <typename T>
inline Tensor<T> make_result(std::vector<int> shape, bool track,
                             std::vector<std::shared_ptr<Node<T>>> parents,
                             std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value.assign(node->numel(), T(0));
    if (track) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return Tensor<T>(node);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "add: shape mismatch");
    const bool track = detail::track_grad<T>({&a, &b});
    auto an = a.node(), bn = b.node();
    Tensor<T> out = detail::make_result<T>(
        a.shape(), track, {an, bn}, [an, bn](Node<T>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
            }
        });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch");
    const bool track = detail::track_grad<T>({&a, &b});
    auto an = a.node(), bn = b.node();
    Tensor<T> out = detail::make_result<T>(
        a.shape(), track, {an, bn}, [an, bn](Node<T>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
            }
        });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch");
    const bool track = detail::track_grad<T>({&a, &b});
    auto an = a.node(), bn = b.node();
    Tensor<T> out = detail::make_result<T>(
        a.shape(), track, {an, bn}, [an, bn](Node<T>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    an->grad[i] += self.grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    bn->grad[i] += self.grad[i] * an->value[i];
            }
        });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
    const bool track = detail::track_grad<T>({&a});
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), track, {an}, [an, s](Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * s;
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    const bool track = detail::track_grad<T>({&a});
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), track, {an}, [an](Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + s;
    return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    const bool track = detail::track_grad<T>({&a});
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), track, {an}, [an, slope](Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += self.grad[i] * (an->value[i] > T(0) ? T(1) : slope);
    });
    for (size_t i = 0; i < out.numel(); ++i) {
        const T v = a.data()[i];
        out.data()[i] = v > T(0) ? v : slope * v;
    }
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return leaky_relu(a, T(0));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    const bool track = detail::track_grad<T>({&a});
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), track, {an}, [an](Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const T y = self.value[i];
            an->grad[i] += self.grad[i] * y * (T(1) - y);
        }
    });
    for (size_t i = 0; i < out.numel(); ++i)
        out.data()[i] = T(1) / (T(1) + std::exp(-a.data()[i]));
    return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    const bool track = detail::track_grad<T>({&a});
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), track, {an}, [an](Node<T>& self) {
        an->ensure_grad();
        const T inv_sqrt2 = T(0.7071067811865475);
        const T inv_sqrt2pi = T(0.3989422804014327);
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const T x = an->value[i];
            const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
            an->grad[i] += self.grad[i] * (cdf + x * pdf);
        }
    });
    for (size_t i = 0; i < out.numel(); ++i) {
        const T x = a.data()[i];
        out.data()[i] = T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475)));
    }
    return out;
}

template <typename T>
Tensor<T> abs_t(const Tensor<T>& a) {
    const bool track = detail::track_grad<T>({&a});
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), track, {an}, [an](Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const T v = an->value[i];
            an->grad[i] += self.grad[i] * (v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)));
        }
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = std::abs(a.data()[i]);
    return out;
}

// Clamp to [lo, hi]; the derivative is zero in the saturated regions.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    const bool track = detail::track_grad<T>({&a});
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), track, {an}, [an, lo, hi](Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (an->value[i] > lo && an->value[i] < hi) an->grad[i] += self.grad[i];
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = std::clamp(a.data()[i], lo, hi);
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    const bool track = detail::track_grad<T>({&a});
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>({1}, track, {an}, [an](Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += self.grad[0];
    });
    T acc = T(0);
    for (size_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
    out.data()[0] = acc;
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    const T inv = T(1) / static_cast<T>(a.numel());
    return mul_scalar(sum(a), inv);
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<int> shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    require(n == a.numel(), "reshape: element count mismatch");
    const bool track = detail::track_grad<T>({&a});
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(std::move(shape), track, {an}, [an](Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
    std::copy(a.data(), a.data() + a.numel(), out.data());
    return out;
}

// Gather through a precomputed flat index map; entries of -1 read as zero.
// Covers padding, cropping, window partitioning, cyclic shifts and
// broadcast-style expansion. The backward pass scatter-adds.
template <typename T>
Tensor<T> index_map(const Tensor<T>& a, std::vector<int> out_shape,
                    std::shared_ptr<std::vector<int64_t>> map) {
    const bool track = detail::track_grad<T>({&a});
    auto an = a.node();
    Tensor<T> out =
        detail::make_result<T>(std::move(out_shape), track, {an}, [an, map](Node<T>& self) {
            an->ensure_grad();
            const auto& m = *map;
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (m[i] >= 0) an->grad[static_cast<size_t>(m[i])] += self.grad[i];
        });
    require(map->size() == out.numel(), "index_map: map size mismatch");
    const auto& m = *map;
    for (size_t i = 0; i < out.numel(); ++i)
        out.data()[i] = m[i] >= 0 ? a.data()[static_cast<size_t>(m[i])] : T(0);
    return out;
}

// Concatenate along the channel axis of NCHW tensors.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    require(!parts.empty(), "concat_channels: empty input");
    const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
    int c_total = 0;
    bool track = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    for (const auto& p : parts) {
        require(p.ndim() == 4 && p.dim(0) == n && p.dim(2) == h && p.dim(3) == w,
                "concat_channels: incompatible shapes");
        c_total += p.dim(1);
        parents.push_back(p.node());
        track = track || (grad_mode_enabled() && p.requires_grad());
    }
    const size_t plane = static_cast<size_t>(h) * w;
    Tensor<T> out = detail::make_result<T>(
        {n, c_total, h, w}, track, parents, [parents, n, c_total, plane](Node<T>& self) {
            for (int b = 0; b < n; ++b) {
                size_t c_off = 0;
                for (const auto& p : parents) {
                    const size_t pc = p->numel() / (static_cast<size_t>(n) * plane);
                    if (p->requires_grad) {
                        p->ensure_grad();
                        const size_t src = (static_cast<size_t>(b) * c_total + c_off) * plane;
                        const size_t dst = static_cast<size_t>(b) * pc * plane;
                        for (size_t i = 0; i < pc * plane; ++i) p->grad[dst + i] += self.grad[src + i];
                    }
                    c_off += pc;
                }
            }
        });
    for (int b = 0; b < n; ++b) {
        size_t c_off = 0;
        for (const auto& p : parts) {
            const size_t pc = static_cast<size_t>(p.dim(1));
            const size_t dst = (static_cast<size_t>(b) * c_total + c_off) * plane;
            const size_t src = static_cast<size_t>(b) * pc * plane;
            std::copy(p.data() + src, p.data() + src + pc * plane, out.data() + dst);
            c_off += pc;
        }
    }
    return out;
}

// Extract a channel range [c0, c1) of an NCHW tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, int c0, int c1) {
    require(a.ndim() == 4 && c0 >= 0 && c1 <= a.dim(1) && c0 < c1, "slice_channels: bad range");
    const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
    auto map = std::make_shared<std::vector<int64_t>>();
    map->reserve(static_cast<size_t>(n) * (c1 - c0) * h * w);
    for (int b = 0; b < n; ++b)
        for (int ch = c0; ch < c1; ++ch) {
            const int64_t base = (static_cast<int64_t>(b) * c + ch) * h * w;
            for (int i = 0; i < h * w; ++i) map->push_back(base + i);
        }
    return index_map(a, {n, c1 - c0, h, w}, map);
}

// ---------------------------------------------------------------------------
// Finite-difference reference for tests and the self-test command.
// f must be a pure function of the tensor values.
// ---------------------------------------------------------------------------

template <typename T>
T central_difference(const std::function<T()>& f, T& param, T step) {
    const T saved = param;
    param = saved + step;
    const T hi = f();
    param = saved - step;
    const T lo = f();
    param = saved;
    return (hi - lo) / (T(2) * step);
}

}  // namespace hstrnet
