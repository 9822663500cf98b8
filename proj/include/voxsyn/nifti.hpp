#pragma once

#include <array>
#include <filesystem>

#include "voxsyn/tensor.hpp"

// Minimal single-file volume IO. NIfTI-1 (.nii, uncompressed) is the primary
// container; .rvol is a trivial text-header + raw-binary fallback used for
// synthetic fixtures. Tensors are rank-3 (z, y, x) with x fastest, matching
// the on-disk order of both formats.

namespace voxsyn::nifti {

struct VolumeFile {
    Tensor data;                             // rank-3 (z, y, x), double
    std::array<double, 3> spacing{1, 1, 1};  // mm per axis (z, y, x)
};

enum class StorageType { Float32, Int16, Uint8 };

// Dispatches on extension: .nii or .rvol.
VolumeFile read_volume(const std::filesystem::path& path);

void write_volume(const std::filesystem::path& path, const Tensor& data,
                  const std::array<double, 3>& spacing, StorageType dtype = StorageType::Float32);

}  // namespace voxsyn::nifti
