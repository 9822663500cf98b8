#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "voxsyn/tensor.hpp"

namespace voxsyn::image {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

struct ImageBuffer {
    Index height = 0, width = 0;
    std::vector<Rgb> pixels;

    Rgb& at(Index y, Index x) { return pixels[static_cast<size_t>(y * width + x)]; }
    const Rgb& at(Index y, Index x) const { return pixels[static_cast<size_t>(y * width + x)]; }
};

void write_ppm(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_ppm(const std::filesystem::path& path);

// Diverging blue-white-red map; t clamped to [-1, 1], 0 maps to white.
Rgb diverging_color(double t);

// q-th percentile (q in [0,1]) of |values|.
double percentile_abs(const Tensor& values, double q);

// Alpha-blended overlay of a signed (or absolute) difference slice on a
// grayscale background slice; `vmax` sets the symmetric color range.
ImageBuffer heatmap_overlay(const Tensor& background_slice, const Tensor& delta_slice,
                            double vmax, bool absolute, double alpha = 0.5);

}  // namespace voxsyn::image
