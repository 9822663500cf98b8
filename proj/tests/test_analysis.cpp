#include <cmath>

#include "doctest.h"
#include "support_common.hpp"
#include "voxsyn/analysis.hpp"
#include "voxsyn/image.hpp"
#include "voxsyn/ops.hpp"
#include "voxsyn/phantom.hpp"

using namespace voxsyn;
using namespace voxsyn::analysis;

namespace {

dataset::Dataset smoker_dataset(int subjects, Index size) {
    phantom::PhantomConfig pc;
    pc.subjects = subjects;
    pc.size = {size, size, size};
    pc.seed = 11;
    dataset::Dataset ds;
    ds.has_text = true;
    tabular::Schema schema = tabular::default_schema();
    for (int i = 0; i < subjects; ++i) {
        const bool smoker = (i % 2) == 0;
        phantom::PhantomVolume v = phantom::build_volume(pc, i, smoker);
        volume::VolumeSample s;
        s.subject_id = "a" + std::to_string(i);
        s.image = volume::normalize_intensity(v.image_hu, {});
        s.mask = v.mask;
        s.record.subject_id = s.subject_id;
        s.record.values["smoker"] = smoker ? "yes" : "no";
        ds.texts.push_back(tabular::render_record(s.record, schema));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

embedding::EncoderHandle stub_encoder(Index dim = 12) {
    embedding::EncoderConfig ec;
    ec.encoder_id = "stub-analysis";
    ec.dimension = dim;
    return embedding::EncoderHandle(ec);
}

training::TrainConfig toy_cfg(training::BackboneKind kind, long epochs) {
    training::TrainConfig cfg;
    cfg.backbone = kind;
    cfg.use_text = true;
    cfg.lr = 2e-3;
    cfg.batch_size = 2;
    cfg.epochs = epochs;
    cfg.decay_start_epoch = epochs - 1;
    cfg.seed = 23;
    cfg.base_channels = 4;
    cfg.depth_levels = 2;
    cfg.gn_groups = 2;
    cfg.crop.size = {8, 8, 8};
    cfg.timesteps = 8;
    cfg.disc_base = 4;
    cfg.disc_layers = 1;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("analysis");

TEST_CASE("difference_map: analytic cases and brute-force per-class means") {
    Tensor a({2, 2, 2}), b({2, 2, 2});
    Rng rng(1);
    ops::fill_gaussian(a, rng, 0.3);

    SUBCASE("identical volumes give all-zero summaries") {
        TensorT<int> mask = TensorT<int>::zeros({2, 2, 2});
        DifferenceMap d = difference_map(a, a, mask);
        for (Index i = 0; i < d.delta.size(); ++i) CHECK(d.delta[i] == 0.0);
        CHECK(d.summary.mean_delta == 0.0);
        CHECK(d.summary.mean_abs_delta == 0.0);
        CHECK(d.summary.fraction_positive == 0.0);
    }

    SUBCASE("constant shift") {
        for (Index i = 0; i < b.size(); ++i) b[i] = a[i] + 0.1;
        TensorT<int> mask = TensorT<int>::zeros({2, 2, 2});
        DifferenceMap d = difference_map(a, b, mask);
        CHECK(d.summary.mean_delta == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(d.summary.fraction_positive == 1.0);
    }

    SUBCASE("per-class means match masked brute force on a random 8^3 pair") {
        Tensor x({8, 8, 8}), y({8, 8, 8});
        Rng r2(2);
        ops::fill_gaussian(x, r2, 0.4);
        ops::fill_gaussian(y, r2, 0.4);
        TensorT<int> mask({8, 8, 8});
        for (Index i = 0; i < mask.size(); ++i)
            mask[i] = static_cast<int>(r2.uniform_index(4));
        DifferenceMap d = difference_map(x, y, mask);
        for (int cls = 0; cls < 4; ++cls) {
            double s = 0;
            long n = 0;
            for (Index i = 0; i < mask.size(); ++i)
                if (mask[i] == cls) {
                    s += y[i] - x[i];
                    ++n;
                }
            if (n == 0) continue;
            CHECK(d.summary.class_mean.at(cls) == doctest::Approx(s / n).epsilon(1e-12));
        }
        // summary recomputability from the stored delta
        double mean = 0;
        for (Index i = 0; i < d.delta.size(); ++i) mean += d.delta[i];
        mean /= static_cast<double>(d.delta.size());
        CHECK(std::abs(mean - d.summary.mean_delta) < 1e-10);
    }

    SUBCASE("shape mismatch") {
        Tensor wrong({2, 2, 4});
        wrong.set_zero();
        TensorT<int> mask = TensorT<int>::zeros({2, 2, 2});
        CHECK_THROWS_AS(difference_map(a, wrong, mask), ShapeError);
    }
}

TEST_CASE("antisymmetry: swapping from/to negates delta exactly") {
    Tensor a({4, 4, 4}), b({4, 4, 4});
    Rng rng(3);
    ops::fill_gaussian(a, rng, 0.3);
    ops::fill_gaussian(b, rng, 0.3);
    TensorT<int> mask = TensorT<int>::zeros({4, 4, 4});
    DifferenceMap ab = difference_map(a, b, mask);
    DifferenceMap ba = difference_map(b, a, mask);
    for (Index i = 0; i < ab.delta.size(); ++i) CHECK(ab.delta[i] == -ba.delta[i]);
}

TEST_CASE("null counterfactual produces exactly zero delta (both backbones)") {
    dataset::Dataset ds = smoker_dataset(2, 8);
    embedding::EncoderHandle enc = stub_encoder();
    tabular::Schema schema = tabular::default_schema();
    crops::CropSpec cs;
    cs.size = {8, 8, 8};

    for (auto kind : {training::BackboneKind::Pix2pix, training::BackboneKind::Ddpm}) {
        CAPTURE(training::backbone_name(kind));
        training::GeneratorBundle g = training::build_generator(toy_cfg(kind, 1), 12, "stub-analysis");
        CounterfactualSpec spec;
        spec.attribute = "smoker";
        spec.from_value = "yes";
        spec.to_value = "yes";
        spec.seed = 31;
        CounterfactualResult r = counterfactual_pair(g, ds.samples[0], spec, schema, enc, cs);
        CHECK((r.vol_from.array() == r.vol_to.array()).all());
        DifferenceMap d = difference_map(r.vol_from, r.vol_to, r.crop.mask);
        CHECK(d.summary.mean_abs_delta == 0.0);

        // repeating the call reproduces both volumes bitwise
        CounterfactualResult r2 = counterfactual_pair(g, ds.samples[0], spec, schema, enc, cs);
        CHECK((r.vol_from.array() == r2.vol_from.array()).all());
    }
}

TEST_CASE("counterfactual on a trained toy model yields nonzero delta") {
    testsup::TempDir dir;
    dataset::Dataset ds = smoker_dataset(2, 8);
    embedding::EncoderHandle enc = stub_encoder();
    training::TrainConfig cfg = toy_cfg(training::BackboneKind::Pix2pix, 20);
    training::TrainResult tr = training::train_model(cfg, ds, &enc, dir.path());
    training::GeneratorBundle g = training::load_generator(tr.final_checkpoint);

    CounterfactualSpec spec;
    spec.attribute = "smoker";
    spec.from_value = "yes";
    spec.to_value = "no";
    spec.seed = 31;
    tabular::Schema schema = tabular::default_schema();
    crops::CropSpec cs;
    cs.size = {8, 8, 8};
    CounterfactualResult r = counterfactual_pair(g, ds.samples[0], spec, schema, enc, cs);
    DifferenceMap d = difference_map(r.vol_from, r.vol_to, r.crop.mask);
    CHECK(d.summary.mean_abs_delta > 0.0);
    CHECK(r.text_from != r.text_to);
}

TEST_CASE("counterfactual input validation") {
    dataset::Dataset ds = smoker_dataset(1, 8);
    embedding::EncoderHandle enc = stub_encoder();
    tabular::Schema schema = tabular::default_schema();
    crops::CropSpec cs;
    cs.size = {8, 8, 8};

    // non-text model
    training::TrainConfig plain = toy_cfg(training::BackboneKind::Pix2pix, 1);
    plain.use_text = false;
    training::GeneratorBundle g0 = training::build_generator(plain, 0, "");
    CounterfactualSpec spec{"smoker", "yes", "no", 1};
    CHECK_THROWS_AS(counterfactual_pair(g0, ds.samples[0], spec, schema, enc, cs), ConfigError);

    training::GeneratorBundle g =
        training::build_generator(toy_cfg(training::BackboneKind::Pix2pix, 1), 12, "stub-analysis");
    CounterfactualSpec bad_attr{"height", "1", "2", 1};
    CHECK_THROWS_AS(counterfactual_pair(g, ds.samples[0], bad_attr, schema, enc, cs),
                    ValidationError);
    CounterfactualSpec bad_value{"smoker", "sometimes", "no", 1};
    CHECK_THROWS_AS(counterfactual_pair(g, ds.samples[0], bad_value, schema, enc, cs),
                    ValidationError);
}

TEST_CASE("heatmap: neutral for zero delta, opposite colors for +/- blobs, round trip") {
    testsup::TempDir dir;
    const Index n = 16;
    Tensor bg = Tensor::zeros({4, n, n});
    DifferenceMap d;
    d.delta = Tensor::zeros({4, n, n});

    SUBCASE("zero delta renders a uniformly neutral overlay") {
        HeatmapPaths hp = render_heatmap(d, bg, 2, dir / "zero");
        image::ImageBuffer img = image::read_ppm(hp.signed_map);
        REQUIRE(img.height == n);
        REQUIRE(img.width == n);
        const image::Rgb first = img.at(0, 0);
        for (Index y = 0; y < n; ++y)
            for (Index x = 0; x < n; ++x) {
                CHECK(img.at(y, x).r == first.r);
                CHECK(img.at(y, x).g == first.g);
                CHECK(img.at(y, x).b == first.b);
            }
    }

    SUBCASE("synthetic +blob/-blob phantom shows opposing colors at known coordinates") {
        for (Index y = 2; y < 6; ++y)
            for (Index x = 2; x < 6; ++x) d.delta(1, y, x) = 0.5;   // positive blob
        for (Index y = 10; y < 14; ++y)
            for (Index x = 10; x < 14; ++x) d.delta(1, y, x) = -0.5;  // negative blob
        HeatmapPaths hp = render_heatmap(d, bg, 1, dir / "blobs");
        image::ImageBuffer img = image::read_ppm(hp.signed_map);
        CHECK(img.at(3, 3).r > img.at(3, 3).b);    // warm at the positive blob
        CHECK(img.at(12, 12).b > img.at(12, 12).r);  // cool at the negative blob
        // neutral elsewhere
        CHECK(img.at(8, 8).r == img.at(8, 8).b);

        image::ImageBuffer abs_img = image::read_ppm(hp.absolute_map);
        CHECK(abs_img.at(3, 3).r > abs_img.at(3, 3).b);
        CHECK(abs_img.at(12, 12).r > abs_img.at(12, 12).b);  // absolute map folds the sign
    }

    SUBCASE("out-of-range slice index") {
        CHECK_THROWS_AS(render_heatmap(d, bg, 7, dir / "oops"), ValidationError);
    }
}

TEST_CASE("percentile and colormap basics") {
    Tensor v({5});
    v[0] = -4;
    v[1] = 1;
    v[2] = 0;
    v[3] = 2;
    v[4] = -3;
    CHECK(image::percentile_abs(v, 1.0) == 4.0);
    CHECK(image::percentile_abs(v, 0.0) == 0.0);
    image::Rgb white = image::diverging_color(0.0);
    CHECK(white.r == 255);
    CHECK(white.g == 255);
    CHECK(white.b == 255);
    image::Rgb hot = image::diverging_color(1.0);
    image::Rgb cold = image::diverging_color(-1.0);
    CHECK(hot.r > hot.b);
    CHECK(cold.b > cold.r);
}

TEST_SUITE_END();
