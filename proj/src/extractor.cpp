#include "voxsyn/extractor.hpp"

#include <cmath>

#include "voxsyn/checkpoint.hpp"
#include "voxsyn/nn.hpp"
#include "voxsyn/ops.hpp"
#include "voxsyn/rng.hpp"

namespace voxsyn::extractor {

StatsExtractor::StatsExtractor(int bins, double lo, double hi) : bins_(bins), lo_(lo), hi_(hi) {
    if (bins_ < 2) throw ConfigError("stats extractor needs at least 2 bins");
    if (!(hi_ > lo_)) throw ConfigError("stats extractor needs hi > lo");
}

std::string StatsExtractor::id() const { return "stats-" + std::to_string(bins_); }

FeatureExtraction StatsExtractor::extract(const std::vector<Tensor>& crops) {
    if (crops.empty()) throw ValidationError("extractor got zero crops");
    for (size_t i = 1; i < crops.size(); ++i)
        if (crops[i].dims() != crops[0].dims())
            throw ShapeError("extractor crops must share one shape; crop " + std::to_string(i) +
                             " is " + crops[i].shape_str());
    FeatureExtraction out;
    out.extractor_id = id();
    const Index n = static_cast<Index>(crops.size());
    out.features.resize(n, 2 + bins_);
    out.class_probs.resize(n, bins_);
    for (Index r = 0; r < n; ++r) {
        const Tensor& c = crops[static_cast<size_t>(r)];
        const double m = c.array().mean();
        const double var = (c.array() - m).square().mean();
        out.features(r, 0) = m;
        out.features(r, 1) = std::sqrt(var);
        std::vector<double> hist(static_cast<size_t>(bins_), 0.0);
        const double scale = static_cast<double>(bins_) / (hi_ - lo_);
        for (Index i = 0; i < c.size(); ++i) {
            int b = static_cast<int>((c[i] - lo_) * scale);
            b = std::min(std::max(b, 0), bins_ - 1);
            hist[static_cast<size_t>(b)] += 1.0;
        }
        for (int b = 0; b < bins_; ++b) {
            const double frac = hist[static_cast<size_t>(b)] / static_cast<double>(c.size());
            out.features(r, 2 + b) = frac;
            out.class_probs(r, b) = frac;
        }
    }
    return out;
}

namespace {

struct SliceNet {
    Index base = 8;
    int layers = 3;
    Index classes = 8;
    std::vector<nn::Conv3d<Real>> convs;
    nn::Linear<Real> head;
    nn::ParamRegistry<Real> reg;

    void build(std::uint64_t seed) {
        Rng rng(derive_seed(seed, "slice_classifier"));
        convs.resize(static_cast<size_t>(layers));
        Index c = 1;
        for (int i = 0; i < layers; ++i) {
            const Index out = base << i;
            convs[static_cast<size_t>(i)].build(c, out, 3, 2, 1, rng);
            c = out;
        }
        head.build(feature_dim(), classes, rng);
        for (size_t i = 0; i < convs.size(); ++i)
            convs[i].collect(reg, "slice.conv" + std::to_string(i));
        head.collect(reg, "slice.head");
    }

    Index feature_dim() const { return base << (layers - 1); }

    // slice: (1, 1, 1, H, W) -> (features, probs)
    std::pair<Eigen::VectorXd, Eigen::VectorXd> run(const Tensor& slice) {
        Tensor h = slice;
        for (auto& conv : convs) h = ops::silu_forward(conv.forward(h));
        // global average pool over the remaining spatial extent
        const Index C = h.dim(1);
        const Index spatial = h.size() / C;
        Tensor pooled({1, C});
        for (Index c = 0; c < C; ++c) {
            double acc = 0;
            for (Index i = 0; i < spatial; ++i) acc += h.data()[c * spatial + i];
            pooled(0, c) = acc / static_cast<double>(spatial);
        }
        Tensor logits = head.forward(pooled);
        Tensor probs = ops::softmax_rows(logits);
        Eigen::VectorXd f(C), p(classes);
        for (Index c = 0; c < C; ++c) f[c] = pooled(0, c);
        for (Index c = 0; c < classes; ++c) p[c] = probs(0, c);
        return {f, p};
    }
};

}  // namespace

struct SliceClassifierExtractor::Impl {
    SliceNet net;
    std::string weights_id;
};

SliceClassifierExtractor::SliceClassifierExtractor(const std::filesystem::path& weights)
    : impl_(new Impl) {
    checkpoint::Container c = checkpoint::load(weights);
    if (c.meta.value("type", "") != "slice_classifier")
        throw IoError("checkpoint is not a slice classifier: " + weights.string());
    impl_->net.base = c.meta.value("base", 8);
    impl_->net.layers = c.meta.value("layers", 3);
    impl_->net.classes = c.meta.value("classes", 8);
    impl_->net.build(c.meta.value("seed", 0ull));
    checkpoint::load_params(c, impl_->net.reg);
    impl_->weights_id = c.meta.value("id", weights.stem().string());
}

SliceClassifierExtractor::~SliceClassifierExtractor() = default;

std::string SliceClassifierExtractor::id() const { return "slice2d-" + impl_->weights_id; }

FeatureExtraction SliceClassifierExtractor::extract(const std::vector<Tensor>& crops) {
    if (crops.empty()) throw ValidationError("extractor got zero crops");
    for (size_t i = 1; i < crops.size(); ++i)
        if (crops[i].dims() != crops[0].dims())
            throw ShapeError("extractor crops must share one shape");
    const Index F = impl_->net.feature_dim();
    const Index C = impl_->net.classes;
    FeatureExtraction out;
    out.extractor_id = id();
    out.features.resize(static_cast<Index>(crops.size()), F);
    out.class_probs.resize(static_cast<Index>(crops.size()), C);
    for (size_t r = 0; r < crops.size(); ++r) {
        const Tensor& crop = crops[r];
        const Index Z = crop.dim(0), H = crop.dim(1), W = crop.dim(2);
        Eigen::VectorXd fsum = Eigen::VectorXd::Zero(F);
        Eigen::VectorXd psum = Eigen::VectorXd::Zero(C);
        Tensor slice({1, 1, 1, H, W});
        for (Index z = 0; z < Z; ++z) {
            std::copy(crop.data() + z * H * W, crop.data() + (z + 1) * H * W, slice.data());
            auto [f, p] = impl_->net.run(slice);
            fsum += f;
            psum += p;
        }
        // per-slice probabilities each sum to 1, so the slice mean does too
        out.features.row(static_cast<Index>(r)) = fsum / static_cast<double>(Z);
        out.class_probs.row(static_cast<Index>(r)) = psum / static_cast<double>(Z);
    }
    return out;
}

void write_slice_classifier(const std::filesystem::path& path, std::uint64_t seed, Index base,
                            int layers, Index classes) {
    SliceNet net;
    net.base = base;
    net.layers = layers;
    net.classes = classes;
    net.build(seed);
    checkpoint::Container c;
    c.meta["type"] = "slice_classifier";
    c.meta["base"] = base;
    c.meta["layers"] = layers;
    c.meta["classes"] = classes;
    c.meta["seed"] = seed;
    c.meta["id"] = "seed" + std::to_string(seed);
    checkpoint::store_params(c, net.reg);
    checkpoint::save(path, c);
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name,
                                                 const std::filesystem::path& weights_path) {
    if (name == "stats") return std::make_unique<StatsExtractor>();
    if (name == "slice2d") {
        if (weights_path.empty())
            throw ConfigError("slice2d extractor needs a weights checkpoint path");
        return std::make_unique<SliceClassifierExtractor>(weights_path);
    }
    throw ConfigError("unknown extractor '" + name + "' (expected stats or slice2d)");
}

}  // namespace voxsyn::extractor
