#include "hstrnet/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "hstrnet/error.hpp"

namespace hstrnet {

ImageF load_image(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    require_data(!bgr.empty(), "cannot read image: " + path);
    ImageF img = ImageF::zeros(bgr.rows, bgr.cols);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            img.at(0, y, x) = row[x][2] / 255.f;
            img.at(1, y, x) = row[x][1] / 255.f;
            img.at(2, y, x) = row[x][0] / 255.f;
        }
    }
    return img;
}

void save_image_png(const ImageF& img, const std::string& path) {
    cv::Mat bgr(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(img.at(c, y, x), 0.f, 1.f);
                row[x][2 - c] = static_cast<uint8_t>(std::lround(v * 255.f));
            }
        }
    }
    require_data(cv::imwrite(path, bgr), "cannot write image: " + path);
}

namespace {

double cubic_kernel(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

struct ResampleTaps {
    std::vector<int> index;      // flattened [out, taps]
    std::vector<double> weight;  // normalized per output position
    int taps = 0;
};

ResampleTaps make_taps(int in_size, int out_size) {
    const double ratio = static_cast<double>(in_size) / out_size;
    const double scale = std::max(1.0, ratio);  // kernel stretch when shrinking
    const int taps = 2 * static_cast<int>(std::ceil(2.0 * scale));
    ResampleTaps t;
    t.taps = taps;
    t.index.resize(static_cast<size_t>(out_size) * taps);
    t.weight.resize(static_cast<size_t>(out_size) * taps);
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) * ratio - 0.5;
        const int start = static_cast<int>(std::floor(center)) - taps / 2 + 1;
        double sum = 0.0;
        for (int k = 0; k < taps; ++k) {
            const double w = cubic_kernel((center - (start + k)) / scale) / scale;
            t.weight[static_cast<size_t>(o) * taps + k] = w;
            t.index[static_cast<size_t>(o) * taps + k] =
                std::clamp(start + k, 0, in_size - 1);
            sum += w;
        }
        for (int k = 0; k < taps; ++k) t.weight[static_cast<size_t>(o) * taps + k] /= sum;
    }
    return t;
}

}  // namespace

ImageF bicubic_resize(const ImageF& img, int out_h, int out_w) {
    require(out_h > 0 && out_w > 0, "bicubic_resize: output size must be positive");
    if (out_h == img.height && out_w == img.width) return img;
    const ResampleTaps tx = make_taps(img.width, out_w);
    const ResampleTaps ty = make_taps(img.height, out_h);

    // Horizontal pass in double, then vertical, then one rounding to float.
    std::vector<double> mid(static_cast<size_t>(3) * img.height * out_w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (int k = 0; k < tx.taps; ++k)
                    acc += tx.weight[static_cast<size_t>(x) * tx.taps + k] *
                           img.at(c, y, tx.index[static_cast<size_t>(x) * tx.taps + k]);
                mid[(static_cast<size_t>(c) * img.height + y) * out_w + x] = acc;
            }
    ImageF out = ImageF::zeros(out_h, out_w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (int k = 0; k < ty.taps; ++k)
                    acc += ty.weight[static_cast<size_t>(y) * ty.taps + k] *
                           mid[(static_cast<size_t>(c) * img.height +
                                ty.index[static_cast<size_t>(y) * ty.taps + k]) *
                                   out_w +
                               x];
                out.at(c, y, x) = static_cast<float>(acc);
            }
    return out;
}

ImageF degrade(const ImageF& hr, int factor) {
    require_data(factor >= 2, "degrade: factor must be at least 2");
    require_data(hr.height % factor == 0 && hr.width % factor == 0,
                 "degrade: " + std::to_string(hr.height) + "x" + std::to_string(hr.width) +
                     " is not divisible by factor " + std::to_string(factor));
    ImageF low = bicubic_resize(hr, hr.height / factor, hr.width / factor);
    ImageF out = bicubic_resize(low, hr.height, hr.width);
    for (float& v : out.values) v = std::clamp(v, 0.f, 1.f);
    return out;
}

namespace {

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = std::abs(i) % period;
    return i < n ? i : period - i;
}

}  // namespace

ImageF rotate_bilinear(const ImageF& img, double degrees) {
    const double rad = degrees * M_PI / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    ImageF out = ImageF::zeros(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double sx = c * dx + s * dy + cx;
            const double sy = -s * dx + c * dy + cy;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double wx = sx - x0, wy = sy - y0;
            const int xi0 = reflect_index(x0, img.width);
            const int xi1 = reflect_index(x0 + 1, img.width);
            const int yi0 = reflect_index(y0, img.height);
            const int yi1 = reflect_index(y0 + 1, img.height);
            for (int ch = 0; ch < 3; ++ch) {
                const double v = (1 - wy) * ((1 - wx) * img.at(ch, yi0, xi0) +
                                             wx * img.at(ch, yi0, xi1)) +
                                 wy * ((1 - wx) * img.at(ch, yi1, xi0) +
                                       wx * img.at(ch, yi1, xi1));
                out.at(ch, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    return out;
}

ImageF hflip(const ImageF& img) {
    ImageF out = ImageF::zeros(img.height, img.width);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

ImageF crop(const ImageF& img, int y0, int x0, int h, int w) {
    require(y0 >= 0 && x0 >= 0 && y0 + h <= img.height && x0 + w <= img.width,
            "crop: window out of bounds");
    ImageF out = ImageF::zeros(h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

Tensor<float> to_tensor(const ImageF& img) {
    auto t = Tensor<float>::zeros({1, 3, img.height, img.width});
    std::copy(img.values.begin(), img.values.end(), t.data());
    return t;
}

Tensor<float> to_batch(const std::vector<ImageF>& imgs) {
    require(!imgs.empty(), "to_batch: no images");
    const int h = imgs[0].height, w = imgs[0].width;
    auto t = Tensor<float>::zeros({static_cast<int>(imgs.size()), 3, h, w});
    for (size_t i = 0; i < imgs.size(); ++i) {
        require(imgs[i].height == h && imgs[i].width == w, "to_batch: resolution mismatch");
        std::copy(imgs[i].values.begin(), imgs[i].values.end(), t.data() + i * imgs[i].numel());
    }
    return t;
}

ImageF from_tensor(const Tensor<float>& t, int batch_index) {
    require(t.ndim() == 4 && t.dim(1) == 3, "from_tensor: expects [N,3,H,W]");
    require(batch_index >= 0 && batch_index < t.dim(0), "from_tensor: batch index out of range");
    ImageF img = ImageF::zeros(t.dim(2), t.dim(3));
    const float* src = t.data() + static_cast<size_t>(batch_index) * img.numel();
    for (size_t i = 0; i < img.numel(); ++i) img.values[i] = std::clamp(src[i], 0.f, 1.f);
    return img;
}

}  // namespace hstrnet
