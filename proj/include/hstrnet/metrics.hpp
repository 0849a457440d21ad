#pragma once

#include <string>

#include "hstrnet/image.hpp"

namespace hstrnet {

// Fidelity metrics over [0,1] images. metric_space is "rgb" (average over the
// three channels) or "y" (BT.601 luma). PSNR is capped at 100 dB so identical
// images stay finite.
double psnr(const ImageF& a, const ImageF& b, const std::string& metric_space = "rgb");

// Gaussian-window SSIM (11x11, sigma 1.5, C1=0.01^2, C2=0.03^2), averaged over
// fully-valid window positions.
double ssim(const ImageF& a, const ImageF& b, const std::string& metric_space = "rgb");

ImageF to_luma(const ImageF& img);

}  // namespace hstrnet
