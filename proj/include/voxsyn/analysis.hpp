#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "voxsyn/crops.hpp"
#include "voxsyn/embedding.hpp"
#include "voxsyn/train.hpp"

// Counterfactual attribute perturbation: synthesize the same crop twice with
// one clinical attribute edited in the text, holding the mask, the crop
// coordinates, the weights and the entire noise stream fixed, so the voxel
// difference is attributable to the text condition alone.

namespace voxsyn::analysis {

struct CounterfactualSpec {
    std::string attribute;
    std::string from_value;
    std::string to_value;
    std::uint64_t seed = 17;
};

struct CounterfactualResult {
    Tensor vol_from;  // rank-3 (z, y, x)
    Tensor vol_to;
    crops::Crop crop;  // shared mask / coordinates / background
    std::string text_from;
    std::string text_to;
};

CounterfactualResult counterfactual_pair(training::GeneratorBundle& model,
                                         const volume::VolumeSample& sample,
                                         const CounterfactualSpec& spec,
                                         const tabular::Schema& schema,
                                         const embedding::EncoderHandle& encoder,
                                         const crops::CropSpec& crop_spec);

struct DifferenceSummary {
    double mean_delta = 0.0;
    double mean_abs_delta = 0.0;
    double fraction_positive = 0.0;
    std::map<int, double> class_mean;  // signed mean per mask class
    double lung_mean = 0.0;            // right+left lung classes combined
};

struct DifferenceMap {
    Tensor delta;  // signed, vol_to - vol_from, normalized intensity units
    DifferenceSummary summary;
};

DifferenceMap difference_map(const Tensor& vol_from, const Tensor& vol_to,
                             const TensorT<int>& mask);

// Writes signed and absolute overlays for one axial slice; color range is
// symmetric at the 99th percentile of |delta|.
struct HeatmapPaths {
    std::filesystem::path signed_map;
    std::filesystem::path absolute_map;
};

HeatmapPaths render_heatmap(const DifferenceMap& diff, const Tensor& background,
                            Index slice_index, const std::filesystem::path& out_prefix);

}  // namespace voxsyn::analysis
