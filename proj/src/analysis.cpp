#include "voxsyn/analysis.hpp"

#include <cmath>

#include "voxsyn/image.hpp"
#include "voxsyn/phantom.hpp"

namespace voxsyn::analysis {

CounterfactualResult counterfactual_pair(training::GeneratorBundle& model,
                                         const volume::VolumeSample& sample,
                                         const CounterfactualSpec& spec,
                                         const tabular::Schema& schema,
                                         const embedding::EncoderHandle& encoder,
                                         const crops::CropSpec& crop_spec) {
    if (!model.use_text)
        throw ConfigError("counterfactual analysis needs a text-conditioned model");
    const tabular::AttributeSchema* attr = nullptr;
    for (const auto& a : schema)
        if (a.name == spec.attribute) attr = &a;
    if (!attr) throw ValidationError("attribute '" + spec.attribute + "' not in schema");
    for (const std::string* v : {&spec.from_value, &spec.to_value})
        if (!tabular::value_valid(*attr, *v))
            throw ValidationError("value '" + *v + "' invalid for attribute '" + spec.attribute +
                                  "'");

    tabular::ClinicalRecord rec_from = sample.record;
    rec_from.values[spec.attribute] = spec.from_value;
    tabular::ClinicalRecord rec_to = sample.record;
    rec_to.values[spec.attribute] = spec.to_value;

    CounterfactualResult r;
    r.text_from = tabular::render_record(tabular::validate_record(rec_from, schema), schema).text;
    r.text_to = tabular::render_record(tabular::validate_record(rec_to, schema), schema).text;
    embedding::TextEmbedding emb_from = encoder.embed(r.text_from);
    embedding::TextEmbedding emb_to = encoder.embed(r.text_to);

    // one deterministic crop per subject, shared by both syntheses
    r.crop = crops::eval_crops(sample, crop_spec, spec.seed, 1).front();

    // identical rng streams: the two syntheses consume the same draws
    Rng rng_from(derive_seed(spec.seed, "counterfactual"));
    Rng rng_to(derive_seed(spec.seed, "counterfactual"));
    Tensor a = training::synthesize_crop(model, r.crop.mask, &emb_from, rng_from);
    Tensor b = training::synthesize_crop(model, r.crop.mask, &emb_to, rng_to);
    r.vol_from = a.reshaped({a.dim(2), a.dim(3), a.dim(4)});
    r.vol_to = b.reshaped({b.dim(2), b.dim(3), b.dim(4)});
    return r;
}

DifferenceMap difference_map(const Tensor& vol_from, const Tensor& vol_to,
                             const TensorT<int>& mask) {
    check_same_shape(vol_from, vol_to, "difference_map");
    if (vol_from.dims() != mask.dims())
        throw ShapeError("difference_map: mask shape " + mask.shape_str() +
                         " does not match volumes " + vol_from.shape_str());
    DifferenceMap d;
    d.delta.resize(vol_from.dims());
    std::map<int, double> class_sum;
    std::map<int, long> class_count;
    double sum = 0.0, abs_sum = 0.0;
    long positive = 0;
    double lung_sum = 0.0;
    long lung_count = 0;
    for (Index i = 0; i < d.delta.size(); ++i) {
        const double v = vol_to[i] - vol_from[i];
        d.delta[i] = v;
        sum += v;
        abs_sum += std::abs(v);
        positive += v > 0.0;
        class_sum[mask[i]] += v;
        class_count[mask[i]] += 1;
        if (mask[i] == phantom::kRightLung || mask[i] == phantom::kLeftLung) {
            lung_sum += v;
            ++lung_count;
        }
    }
    const double n = static_cast<double>(d.delta.size());
    d.summary.mean_delta = sum / n;
    d.summary.mean_abs_delta = abs_sum / n;
    d.summary.fraction_positive = static_cast<double>(positive) / n;
    for (const auto& [cls, s] : class_sum)
        d.summary.class_mean[cls] = s / static_cast<double>(class_count[cls]);
    d.summary.lung_mean = lung_count > 0 ? lung_sum / static_cast<double>(lung_count) : 0.0;
    return d;
}

HeatmapPaths render_heatmap(const DifferenceMap& diff, const Tensor& background,
                            Index slice_index, const std::filesystem::path& out_prefix) {
    check_same_shape(diff.delta, background, "render_heatmap");
    if (slice_index < 0 || slice_index >= diff.delta.dim(0))
        throw ValidationError("slice index " + std::to_string(slice_index) + " outside [0," +
                              std::to_string(diff.delta.dim(0)) + ")");
    const Index H = diff.delta.dim(1), W = diff.delta.dim(2);
    Tensor bg({H, W}), dl({H, W});
    for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
            bg(y, x) = background(slice_index, y, x);
            dl(y, x) = diff.delta(slice_index, y, x);
        }
    const double vmax = image::percentile_abs(diff.delta, 0.99);
    HeatmapPaths paths;
    paths.signed_map = out_prefix.string() + "_signed.ppm";
    paths.absolute_map = out_prefix.string() + "_abs.ppm";
    image::write_ppm(paths.signed_map, image::heatmap_overlay(bg, dl, vmax, false));
    image::write_ppm(paths.absolute_map, image::heatmap_overlay(bg, dl, vmax, true));
    return paths;
}

}  // namespace voxsyn::analysis
