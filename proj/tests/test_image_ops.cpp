#include <doctest.h>

#include <cmath>

#include "hstrnet/error.hpp"
#include "hstrnet/ops_conv.hpp"
#include "hstrnet/ops_image.hpp"
#include "testutil.hpp"

using namespace hstrnet;
using testutil::check_gradients;
using testutil::random_tensor;

namespace {

template <typename T>
Tensor<T> constant_flow(int n, int h, int w, T dx, T dy) {
    auto flow = Tensor<T>::zeros({n, 2, h, w});
    auto* d = flow.data();
    size_t plane = static_cast<size_t>(h) * w;
    for (int ni = 0; ni < n; ++ni) {
        std::fill(d + (ni * 2 + 0) * plane, d + (ni * 2 + 0) * plane + plane, dx);
        std::fill(d + (ni * 2 + 1) * plane, d + (ni * 2 + 1) * plane + plane, dy);
    }
    return flow;
}

// Dense 3x3 conv over a replication-padded input; matches deformable sampling
// with all offsets zero, including the border rows.
template <typename T>
Tensor<T> clamped_conv3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return conv2d(pad_replicate(x, 1, 1, 1, 1), w, b, 1, 0);
}

}  // namespace

TEST_CASE("bilinear_resize identity returns input unchanged") {
    Rng rng(31);
    auto x = random_tensor<float>({1, 3, 7, 9}, rng);
    auto y = bilinear_resize(x, 7, 9);
    CHECK(y.node() == x.node());
}

TEST_CASE("bilinear_resize preserves constants and linear ramps") {
    auto c = Tensor<double>::full({1, 1, 6, 8}, 0.37);
    auto cu = bilinear_resize(c, 12, 16);
    auto cd = bilinear_resize(c, 3, 4);
    for (double v : cu.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    for (double v : cd.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

    int h = 8, w = 12;
    auto ramp = Tensor<double>::zeros({1, 1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) ramp.data()[y * w + x] = x;
    auto down = bilinear_resize(ramp, h / 2, w / 2);
    for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < w / 2; ++x) {
            double expect = (x + 0.5) * 2.0 - 0.5;
            CHECK(down.data()[y * (w / 2) + x] == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("bilinear_resize gradients match finite differences") {
    Rng rng(32);
    auto x = random_tensor<double>({1, 2, 4, 5}, rng, -1.0, 1.0, true);
    check_gradients(
        [&] {
            auto y = bilinear_resize(x, 7, 9);
            return sum(mul(y, y));
        },
        {&x});
    check_gradients(
        [&] {
            auto y = bilinear_resize(x, 2, 3);
            return sum(mul(y, y));
        },
        {&x});
}

TEST_CASE("avg_pool2x2 averages quads and rejects odd sizes") {
    auto x = Tensor<double>::from({1, 1, 2, 4}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0});
    auto y = avg_pool2x2(x);
    CHECK(y.shape() == std::vector<int>{1, 1, 1, 2});
    CHECK(y.values() == std::vector<double>{3.5, 5.5});

    auto odd = Tensor<double>::zeros({1, 1, 3, 4});
    CHECK_THROWS_AS(avg_pool2x2(odd), Error&);

    Rng rng(33);
    auto g = random_tensor<double>({1, 2, 4, 6}, rng, -1.0, 1.0, true);
    check_gradients(
        [&] {
            auto p = avg_pool2x2(g);
            return sum(mul(p, p));
        },
        {&g});
}

TEST_CASE("warp with zero flow is the identity bitwise") {
    Rng rng(34);
    auto x = random_tensor<float>({2, 3, 5, 7}, rng);
    auto flow = Tensor<float>::zeros({2, 2, 5, 7});
    auto y = warp(x, flow);
    CHECK(y.values() == x.values());
}

TEST_CASE("warp of a ramp matches the analytic shift") {
    int h = 5, w = 9;
    auto ramp = Tensor<double>::zeros({1, 1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) ramp.data()[y * w + x] = x;

    for (double dx : {1.0, 0.5, 2.25}) {
        auto out = warp(ramp, constant_flow<double>(1, h, w, dx, 0.0));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double expect = std::min(x + dx, double(w - 1));
                CHECK(std::abs(out.data()[y * w + x] - expect) < 1e-6);
            }
    }
}

TEST_CASE("warp gradients match finite differences") {
    Rng rng(35);
    auto src = random_tensor<double>({1, 2, 5, 6}, rng, -1.0, 1.0, true);
    // Fractional parts stay well away from integers so sampling weights are
    // smooth under the finite-difference step.
    auto flow = random_tensor<double>({1, 2, 5, 6}, rng, 0.2, 0.45, true);
    check_gradients(
        [&] {
            auto y = warp(src, flow);
            return sum(mul(y, y));
        },
        {&src, &flow}, 1e-4);
}

TEST_CASE("deform_conv3x3 with zero offsets equals clamped dense conv") {
    Rng rng(36);
    auto x = random_tensor<double>({1, 3, 6, 7}, rng, -1.0, 1.0);
    auto w = random_tensor<double>({4, 3, 3, 3}, rng, -1.0, 1.0);
    auto b = random_tensor<double>({4}, rng, -1.0, 1.0);
    auto offsets = Tensor<double>::zeros({1, 2, 6, 7});
    auto y = deform_conv3x3(x, offsets, w, b);
    auto ref = clamped_conv3x3(x, w, b);
    CHECK(testutil::max_abs_diff(y, ref.values()) < 1e-12);
}

TEST_CASE("deform_conv3x3 with integer offsets samples the shifted window") {
    Rng rng(37);
    int h = 7, w = 8;
    auto x = random_tensor<double>({1, 2, h, w}, rng, -1.0, 1.0);
    auto wt = random_tensor<double>({3, 2, 3, 3}, rng, -1.0, 1.0);
    auto b = random_tensor<double>({3}, rng, -1.0, 1.0);
    int sx = 1, sy = -1;
    auto y = deform_conv3x3(x, constant_flow<double>(1, h, w, double(sx), double(sy)), wt, b);
    auto dense = clamped_conv3x3(x, wt, b);
    // Interior of the shifted grid: every tap lands in bounds, so the result
    // must equal the dense conv read at the displaced position.
    for (int co = 0; co < 3; ++co)
        for (int py = 0; py < h; ++py)
            for (int px = 0; px < w; ++px) {
                int qx = px + sx, qy = py + sy;
                if (qx < 1 || qx >= w - 1 || qy < 1 || qy >= h - 1) continue;
                size_t yi = (static_cast<size_t>(co) * h + py) * w + px;
                size_t di = (static_cast<size_t>(co) * h + qy) * w + qx;
                CHECK(std::abs(y.data()[yi] - dense.data()[di]) < 1e-12);
            }
}

TEST_CASE("deform_conv3x3 gradients match finite differences") {
    Rng rng(38);
    auto x = random_tensor<double>({1, 2, 5, 5}, rng, -1.0, 1.0, true);
    auto offsets = random_tensor<double>({1, 2, 5, 5}, rng, 0.2, 0.45, true);
    auto w = random_tensor<double>({2, 2, 3, 3}, rng, -1.0, 1.0, true);
    auto b = random_tensor<double>({2}, rng, -1.0, 1.0, true);
    check_gradients(
        [&] {
            auto y = deform_conv3x3(x, offsets, w, b);
            return sum(mul(y, y));
        },
        {&x, &offsets, &w, &b}, 1e-4);
}

TEST_CASE("deform_conv3x3 per-tap refinements shift individual taps") {
    Rng rng(39);
    auto x = random_tensor<double>({1, 2, 6, 6}, rng, -1.0, 1.0, true);
    auto offsets = random_tensor<double>({1, 2, 6, 6}, rng, 0.2, 0.4, true);
    auto w = random_tensor<double>({2, 2, 3, 3}, rng, -1.0, 1.0, true);
    auto b = random_tensor<double>({2}, rng, -1.0, 1.0, true);
    auto taps = random_tensor<double>({9, 2}, rng, 0.05, 0.15, true);

    auto zero_taps = Tensor<double>::zeros({9, 2});
    auto with_zero = deform_conv3x3(x, offsets, w, b, zero_taps);
    auto without = deform_conv3x3(x, offsets, w, b);
    CHECK(testutil::max_abs_diff(with_zero, without.values()) < 1e-12);

    check_gradients(
        [&] {
            auto y = deform_conv3x3(x, offsets, w, b, taps);
            return sum(mul(y, y));
        },
        {&x, &offsets, &w, &b, &taps}, 1e-4);
}

TEST_CASE("pad_replicate repeats border pixels and crop inverts it") {
    auto x = Tensor<double>::from({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    auto p = pad_replicate(x, 1, 1, 1, 1);
    CHECK(p.shape() == std::vector<int>{1, 1, 4, 4});
    CHECK(p.values() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
    auto back = crop_nchw(p, 1, 1, 2, 2);
    CHECK(back.values() == x.values());

    CHECK(pad_replicate(x, 0, 0, 0, 0).node() == x.node());
    CHECK(crop_nchw(x, 0, 0, 2, 2).node() == x.node());

    Rng rng(40);
    auto g = random_tensor<double>({1, 2, 3, 4}, rng, -1.0, 1.0, true);
    check_gradients(
        [&] {
            auto y = pad_replicate(g, 2, 1, 0, 2);
            return sum(mul(y, y));
        },
        {&g});
    check_gradients(
        [&] {
            auto y = crop_nchw(pad_replicate(g, 1, 1, 1, 1), 0, 2, 3, 3);
            return sum(mul(y, y));
        },
        {&g});
}
