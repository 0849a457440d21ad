#pragma once

#include <string>
#include <vector>

#include "hstrnet/tensor.hpp"

namespace hstrnet {

// RGB image, channel-major planes, values in [0,1].
struct ImageF {
    int height = 0;
    int width = 0;
    std::vector<float> values;  // 3 * height * width

    static ImageF zeros(int h, int w) {
        ImageF img;
        img.height = h;
        img.width = w;
        img.values.assign(static_cast<size_t>(3) * h * w, 0.f);
        return img;
    }

    float& at(int c, int y, int x) {
        return values[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return values[(static_cast<size_t>(c) * height + y) * width + x];
    }
    size_t numel() const { return values.size(); }
};

ImageF load_image(const std::string& path);
void save_image_png(const ImageF& img, const std::string& path);

// Catmull-Rom bicubic (a = -0.5), half-pixel-center mapping, clamped borders.
// Downscaling stretches the kernel by the scale factor so it low-passes.
ImageF bicubic_resize(const ImageF& img, int out_h, int out_w);

// Synthetic LR: bicubic downsample by `factor`, then bicubic upsample back.
ImageF degrade(const ImageF& hr, int factor = 4);

ImageF rotate_bilinear(const ImageF& img, double degrees);  // reflected borders
ImageF hflip(const ImageF& img);
ImageF crop(const ImageF& img, int y0, int x0, int h, int w);

Tensor<float> to_tensor(const ImageF& img);                   // [1,3,H,W]
Tensor<float> to_batch(const std::vector<ImageF>& imgs);      // [N,3,H,W]
ImageF from_tensor(const Tensor<float>& t, int batch_index = 0);

}  // namespace hstrnet
