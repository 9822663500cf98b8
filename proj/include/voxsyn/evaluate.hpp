#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "voxsyn/crops.hpp"
#include "voxsyn/dataset.hpp"
#include "voxsyn/embedding.hpp"
#include "voxsyn/extractor.hpp"
#include "voxsyn/metrics.hpp"
#include "voxsyn/train.hpp"

// Patch-wise evaluation: per test subject, n random crops drawn from a
// subject-derived stream; each crop's mask (plus the subject's text when the
// model uses it) drives one synthesis; FID/KID are computed real-vs-synthetic
// and IS on the synthetic set.

namespace voxsyn::evaluation {

struct EvalProtocol {
    crops::CropSpec crop;
    int crops_per_subject = 5;
    std::uint64_t seed = 17;
    int kid_subsets = 100;
    Index kid_subset_size = 0;  // 0 resolves to min(n_real, n_fake, 100)
    int is_folds = 10;
};

struct MetricReport {
    double fid = 0.0;
    double kid_mean = 0.0, kid_std = 0.0;
    double is_mean = 0.0, is_std = 0.0;
    long n_real = 0, n_fake = 0;
    std::string extractor_id;
    std::string checkpoint;
    nlohmann::json protocol;  // effective protocol echo
};

MetricReport evaluate_model(training::GeneratorBundle& model, const dataset::Dataset& test_set,
                            const embedding::EncoderHandle* encoder,
                            extractor::FeatureExtractor& extractor, const EvalProtocol& protocol);

// Metric computation on already-assembled crop sets (the degenerate
// real-vs-real case is the identity oracle: FID ~ 0, KID = 0).
MetricReport evaluate_sets(const std::vector<Tensor>& real_crops,
                           const std::vector<Tensor>& fake_crops,
                           extractor::FeatureExtractor& extractor, const EvalProtocol& protocol);

// key=value text serialization; numbers survive a round trip losslessly.
void write_report(const MetricReport& r, const std::filesystem::path& path);
MetricReport read_report(const std::filesystem::path& path);

// machine-readable row for aggregation across models
void append_report_csv(const MetricReport& r, const std::string& model_label,
                       const std::filesystem::path& path);

}  // namespace voxsyn::evaluation
