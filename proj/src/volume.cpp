#include "voxsyn/volume.hpp"

#include <cmath>

#include "voxsyn/nifti.hpp"

namespace voxsyn::volume {

double normalize_value(double hu, const NormalizationWindow& w) {
    const double c = std::min(std::max(hu, w.lo), w.hi);
    return 2.0 * (c - w.lo) / (w.hi - w.lo) - 1.0;
}

Tensor normalize_intensity(const Tensor& hu, const NormalizationWindow& w) {
    if (!(w.hi > w.lo)) throw ConfigError("normalization window must have hi > lo");
    Tensor out(hu.dims());
    for (Index i = 0; i < hu.size(); ++i) out[i] = normalize_value(hu[i], w);
    return out;
}

VolumeSample load_sample(const std::filesystem::path& image_path,
                         const std::filesystem::path& mask_path,
                         const tabular::ClinicalRecord& record, Index num_classes,
                         const NormalizationWindow& window) {
    nifti::VolumeFile img = nifti::read_volume(image_path);
    nifti::VolumeFile msk = nifti::read_volume(mask_path);
    if (img.data.dims() != msk.data.dims())
        throw ShapeError("image/mask shape mismatch: " + img.data.shape_str() + " vs " +
                         msk.data.shape_str() + " (" + image_path.string() + ")");

    VolumeSample s;
    s.subject_id = record.subject_id;
    s.record = record;
    s.spacing = img.spacing;
    s.image = normalize_intensity(img.data, window);
    s.mask.resize(msk.data.dims());
    long bad_count = 0;
    int first_bad = 0;
    for (Index i = 0; i < msk.data.size(); ++i) {
        const double v = msk.data[i];
        const long k = std::lround(v);
        if (std::abs(v - static_cast<double>(k)) > 1e-6 || k < 0 || k >= num_classes) {
            if (bad_count == 0) first_bad = static_cast<int>(k);
            ++bad_count;
            continue;
        }
        s.mask[i] = static_cast<int>(k);
    }
    if (bad_count > 0)
        throw ValidationError("mask " + mask_path.string() + " holds label " +
                              std::to_string(first_bad) + " outside [0," +
                              std::to_string(num_classes) + ") at " + std::to_string(bad_count) +
                              " voxels");
    return s;
}

}  // namespace voxsyn::volume
