#pragma once
// Minimal deterministic PNG writer (zlib-backed); enough to dump generated
// images, heatmaps and binary masks.

#include <string>

#include "dp/tensor.hpp"

namespace dp {

// [3,H,W] in [-1,1] -> 8-bit RGB
void write_png_rgb(const std::string& path, const TensorF& image);

// [H,W] in [0,1] -> 8-bit grayscale
void write_png_gray(const std::string& path, const TensorF& map);

// [H,W] binary -> 1-bit grayscale
void write_png_mask(const std::string& path, const TensorF& mask);

}  // namespace dp
