#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "voxsyn/tensor.hpp"

// Pluggable feature extractors for the patch-wise metrics. The statistics
// stub (channelwise mean/std plus an intensity histogram) is analytic and
// always available; the slice classifier runs a small 2D network per axial
// slice and mean-pools, loading its weights from a checkpoint.

namespace voxsyn::extractor {

struct FeatureExtraction {
    Eigen::MatrixXd features;     // (n_crops, F)
    Eigen::MatrixXd class_probs;  // (n_crops, C); rows sum to 1
    std::string extractor_id;
};

class FeatureExtractor {
  public:
    virtual ~FeatureExtractor() = default;
    virtual std::string id() const = 0;
    // crops: rank-3 (z, y, x) tensors in normalized intensity, uniform shape.
    virtual FeatureExtraction extract(const std::vector<Tensor>& crops) = 0;
};

// features = [mean, std, hist...]; class_probs = the histogram fractions.
class StatsExtractor final : public FeatureExtractor {
  public:
    explicit StatsExtractor(int bins = 16, double lo = -1.0, double hi = 1.0);
    std::string id() const override;
    FeatureExtraction extract(const std::vector<Tensor>& crops) override;

    int bins() const { return bins_; }

  private:
    int bins_;
    double lo_, hi_;
};

// Per-slice 2D classifier (stride-2 conv stack, global average pool, linear
// head); features and probabilities are mean-pooled over the axial slices.
class SliceClassifierExtractor final : public FeatureExtractor {
  public:
    explicit SliceClassifierExtractor(const std::filesystem::path& weights);
    ~SliceClassifierExtractor() override;
    std::string id() const override;
    FeatureExtraction extract(const std::vector<Tensor>& crops) override;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Writes a freshly initialized slice-classifier checkpoint (random projection
// features); stands in when no trained classifier is available.
void write_slice_classifier(const std::filesystem::path& path, std::uint64_t seed, Index base = 8,
                            int layers = 3, Index classes = 8);

// name: "stats" or "slice2d" (the latter needs weights_path).
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name,
                                                 const std::filesystem::path& weights_path = {});

}  // namespace voxsyn::extractor
