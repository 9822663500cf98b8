#pragma once

#include <array>
#include <map>
#include <vector>

#include "voxsyn/rng.hpp"
#include "voxsyn/tensor.hpp"
#include "voxsyn/volume.hpp"

namespace voxsyn::crops {

// Minimum counts over a set of classes combined (the default criterion is
// "some fraction of the crop lies in either lung class").
struct ClassGroupMin {
    std::vector<int> classes;
    long min_voxels = 0;
};

struct CropSpec {
    std::array<Index, 3> size{64, 256, 256};  // (z, y, x)
    std::map<int, long> min_mask_voxels;      // class label -> minimum count inside the crop
    std::vector<ClassGroupMin> min_group_voxels;
    int max_attempts = 20;

    bool has_criteria() const { return !min_mask_voxels.empty() || !min_group_voxels.empty(); }
};

struct Crop {
    Tensor image;       // (z, y, x)
    TensorT<int> mask;  // (z, y, x)
    std::array<Index, 3> offset{0, 0, 0};
    bool fallback = false;  // criteria unmet after max_attempts; best draw returned
};

// Uniform random crop satisfying the per-class minimum-voxel criteria, with a
// best-so-far fallback after max_attempts.
Crop random_crop(const volume::VolumeSample& sample, const CropSpec& spec, Rng& rng);

// n independent draws from a per-sample stream derived from
// (global_seed, subject_id); the evaluation protocol.
std::vector<Crop> eval_crops(const volume::VolumeSample& sample, const CropSpec& spec,
                             std::uint64_t global_seed, int n = 5);

}  // namespace voxsyn::crops
