#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "voxsyn/tabular.hpp"
#include "voxsyn/tensor.hpp"

namespace voxsyn::volume {

// Lung-CT default window; intensities are clipped then mapped affinely onto
// [-1, 1].
struct NormalizationWindow {
    double lo = -1000.0;
    double hi = 400.0;
};

double normalize_value(double hu, const NormalizationWindow& w);
Tensor normalize_intensity(const Tensor& hu, const NormalizationWindow& w);

struct VolumeSample {
    std::string subject_id;
    Tensor image;        // rank-3 (z, y, x), normalized intensity
    TensorT<int> mask;   // rank-3, labels in [0, num_classes)
    tabular::ClinicalRecord record;
    std::array<double, 3> spacing{1, 1, 1};
};

inline constexpr Index kDefaultMaskClasses = 4;  // background, right lung, left lung, airway

// Loads an aligned image/mask pair, validates shapes and labels, normalizes
// intensities.
VolumeSample load_sample(const std::filesystem::path& image_path,
                         const std::filesystem::path& mask_path,
                         const tabular::ClinicalRecord& record,
                         Index num_classes = kDefaultMaskClasses,
                         const NormalizationWindow& window = {});

}  // namespace voxsyn::volume
