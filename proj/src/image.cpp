#include "voxsyn/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace voxsyn::image {

void write_ppm(const std::filesystem::path& path, const ImageBuffer& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + path.string());
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size() * 3));
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw IoError("not a binary ppm: " + path.string());
    ImageBuffer img;
    long maxval = 0;
    in >> img.width >> img.height >> maxval;
    if (maxval != 255) throw IoError("unsupported ppm maxval: " + path.string());
    in.get();  // single whitespace after the header
    img.pixels.resize(static_cast<size_t>(img.width * img.height));
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size() * 3));
    if (!in) throw IoError("truncated ppm: " + path.string());
    return img;
}

Rgb diverging_color(double t) {
    t = std::min(1.0, std::max(-1.0, t));
    // endpoints of the classic cool-warm map
    const double neg[3] = {0.230, 0.299, 0.754};
    const double pos[3] = {0.706, 0.016, 0.150};
    double rgb[3];
    if (t < 0) {
        const double a = -t;
        for (int i = 0; i < 3; ++i) rgb[i] = (1 - a) * 1.0 + a * neg[i];
    } else {
        for (int i = 0; i < 3; ++i) rgb[i] = (1 - t) * 1.0 + t * pos[i];
    }
    Rgb c;
    c.r = static_cast<std::uint8_t>(std::lround(rgb[0] * 255.0));
    c.g = static_cast<std::uint8_t>(std::lround(rgb[1] * 255.0));
    c.b = static_cast<std::uint8_t>(std::lround(rgb[2] * 255.0));
    return c;
}

double percentile_abs(const Tensor& values, double q) {
    if (values.size() == 0) throw ValidationError("percentile of an empty tensor");
    std::vector<double> v(static_cast<size_t>(values.size()));
    for (Index i = 0; i < values.size(); ++i) v[static_cast<size_t>(i)] = std::abs(values[i]);
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

ImageBuffer heatmap_overlay(const Tensor& background_slice, const Tensor& delta_slice,
                            double vmax, bool absolute, double alpha) {
    check_same_shape(background_slice, delta_slice, "heatmap_overlay");
    if (background_slice.rank() != 2) throw ShapeError("heatmap expects rank-2 slices");
    const Index H = background_slice.dim(0), W = background_slice.dim(1);
    ImageBuffer img;
    img.height = H;
    img.width = W;
    img.pixels.resize(static_cast<size_t>(H * W));
    const double scale = vmax > 0 ? 1.0 / vmax : 0.0;
    for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
            // background in [-1,1] -> gray in [0,1]
            const double g = std::min(1.0, std::max(0.0, (background_slice(y, x) + 1.0) / 2.0));
            double t = delta_slice(y, x) * scale;
            if (absolute) t = std::abs(t);
            const Rgb c = diverging_color(t);
            Rgb& px = img.at(y, x);
            px.r = static_cast<std::uint8_t>(
                std::lround(((1 - alpha) * g * 255.0) + alpha * c.r));
            px.g = static_cast<std::uint8_t>(
                std::lround(((1 - alpha) * g * 255.0) + alpha * c.g));
            px.b = static_cast<std::uint8_t>(
                std::lround(((1 - alpha) * g * 255.0) + alpha * c.b));
        }
    return img;
}

}  // namespace voxsyn::image
