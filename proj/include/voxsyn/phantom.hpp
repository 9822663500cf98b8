#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "voxsyn/tensor.hpp"

// Synthetic chest fixtures: two ellipsoid lungs, a tube airway, procedural
// texture. The smoker cohort gets a constructed lung-density elevation plus
// dot-like bright spots, so text-conditioned models have a learnable signal
// at desk scale.

namespace voxsyn::phantom {

struct PhantomConfig {
    int subjects = 5;
    std::array<Index, 3> size{16, 16, 16};  // (z, y, x)
    std::uint64_t seed = 17;
    std::string container = ".nii";  // ".nii" or ".rvol"
    double lung_hu = -800.0;
    double smoker_shift_hu = 180.0;  // added to lung tissue when smoker == yes
    double noise_hu = 25.0;
    int smoker_dots = 3;  // bright dots per smoker lung volume
};

// Mask labels.
inline constexpr int kBackground = 0;
inline constexpr int kRightLung = 1;
inline constexpr int kLeftLung = 2;
inline constexpr int kAirway = 3;
inline const std::vector<std::string> kClassNames = {"background", "right_lung", "left_lung",
                                                     "airway"};

struct PhantomVolume {
    Tensor image_hu;    // rank-3 (z, y, x), Hounsfield-like units
    TensorT<int> mask;  // rank-3 labels
};

// One subject's geometry and texture; deterministic in (cfg.seed, index).
PhantomVolume build_volume(const PhantomConfig& cfg, int index, bool smoker);

struct PhantomDataset {
    std::filesystem::path manifest;  // dataset manifest (TSV)
    std::filesystem::path csv;       // clinical records
    std::vector<std::string> subject_ids;
};

// Writes volumes, masks, manifest and clinical CSV under out_dir. Subjects
// alternate smoker yes/no starting with yes.
PhantomDataset generate(const PhantomConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace voxsyn::phantom
