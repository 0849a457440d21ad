#include "hstrnet/metrics.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "hstrnet/error.hpp"

namespace hstrnet {

namespace {

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const ImageF& a, const ImageF& b) {
    require_data(a.height == b.height && a.width == b.width,
                 "metric inputs must share a resolution");
}

std::array<double, kWin> gaussian_window() {
    std::array<double, kWin> w{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double x = i - (kWin - 1) / 2;
        w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// Separable valid-mode filtering: [h,w] -> [h-10, w-10].
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w) {
    static const std::array<double, kWin> win = gaussian_window();
    const int wo = w - kWin + 1, ho = h - kWin + 1;
    std::vector<double> rows(static_cast<size_t>(h) * wo);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) acc += win[k] * plane[y * w + x + k];
            rows[y * wo + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(ho) * wo);
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) acc += win[k] * rows[(y + k) * wo + x];
            out[y * wo + x] = acc;
        }
    return out;
}

std::vector<double> channel_plane(const ImageF& img, int c) {
    std::vector<double> out(static_cast<size_t>(img.height) * img.width);
    const size_t base = static_cast<size_t>(c) * out.size();
    for (size_t i = 0; i < out.size(); ++i) out[i] = img.values[base + i];
    return out;
}

std::vector<double> luma_plane(const ImageF& img) {
    std::vector<double> out(static_cast<size_t>(img.height) * img.width);
    const size_t plane = out.size();
    for (size_t i = 0; i < plane; ++i)
        out[i] = 0.299 * img.values[i] + 0.587 * img.values[plane + i] +
                 0.114 * img.values[2 * plane + i];
    return out;
}

std::vector<std::vector<double>> metric_planes(const ImageF& img, const std::string& space) {
    if (space == "y") return {luma_plane(img)};
    require_config(space == "rgb", "unknown metric space '" + space + "' (use rgb or y)");
    return {channel_plane(img, 0), channel_plane(img, 1), channel_plane(img, 2)};
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, h, w);
    const auto mu_b = filter_valid(b, h, w);
    const auto m_aa = filter_valid(aa, h, w);
    const auto m_bb = filter_valid(bb, h, w);
    const auto m_ab = filter_valid(ab, h, w);
    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double va = m_aa[i] - mu_a[i] * mu_a[i];
        const double vb = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        acc += ((2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2));
    }
    return acc / static_cast<double>(mu_a.size());
}

}  // namespace

double psnr(const ImageF& a, const ImageF& b, const std::string& metric_space) {
    check_pair(a, b);
    const auto pa = metric_planes(a, metric_space);
    const auto pb = metric_planes(b, metric_space);
    double sq = 0.0;
    size_t n = 0;
    for (size_t c = 0; c < pa.size(); ++c) {
        for (size_t i = 0; i < pa[c].size(); ++i) {
            const double d = pa[c][i] - pb[c][i];
            sq += d * d;
        }
        n += pa[c].size();
    }
    const double mse = sq / static_cast<double>(n);
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageF& a, const ImageF& b, const std::string& metric_space) {
    check_pair(a, b);
    require_data(a.height >= kWin && a.width >= kWin,
                 "ssim needs images at least 11x11");
    const auto pa = metric_planes(a, metric_space);
    const auto pb = metric_planes(b, metric_space);
    double acc = 0.0;
    for (size_t c = 0; c < pa.size(); ++c) acc += ssim_plane(pa[c], pb[c], a.height, a.width);
    return acc / static_cast<double>(pa.size());
}

ImageF to_luma(const ImageF& img) {
    ImageF out = ImageF::zeros(img.height, img.width);
    const auto y = luma_plane(img);
    const size_t plane = y.size();
    for (size_t i = 0; i < plane; ++i) {
        const float v = static_cast<float>(y[i]);
        out.values[i] = v;
        out.values[plane + i] = v;
        out.values[2 * plane + i] = v;
    }
    return out;
}

}  // namespace hstrnet
