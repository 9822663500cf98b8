#include <cmath>

#include "doctest.h"
#include "test_support.hpp"
#include "voxsyn/unet.hpp"

using namespace voxsyn;
using backbones::GeneratorConfig;
using backbones::UNet3d;

namespace {

Tensor random_tensor(std::vector<Index> dims, std::uint64_t seed, double scale = 1.0) {
    Tensor t(std::move(dims));
    Rng rng(seed);
    ops::fill_gaussian(t, rng, scale);
    return t;
}

TensorT<int> random_mask(std::vector<Index> dims, Index k, std::uint64_t seed) {
    TensorT<int> m(std::move(dims));
    Rng rng(seed);
    for (Index i = 0; i < m.size(); ++i) m[i] = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
    return m;
}

GeneratorConfig desk_unet() {
    GeneratorConfig cfg;
    cfg.in_channels = 4;
    cfg.out_channels = 1;
    cfg.base_channels = 4;
    cfg.depth_levels = 2;
    cfg.gn_groups = 2;
    cfg.tanh_out = true;
    return cfg;
}

double l2_diff(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (Index i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_SUITE_BEGIN("backbones");

TEST_CASE("unet shape contract and finiteness") {
    UNet3d<double> net(desk_unet(), 7);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor mask = ops::one_hot<double>(random_mask({1, 8, 8, 8}, 4, 50 + static_cast<std::uint64_t>(trial)), 4);
        Tensor y = backbones::unet_forward(net, mask);
        REQUIRE(y.dims() == std::vector<Index>({1, 1, 8, 8, 8}));
        CHECK(y.all_finite());
    }
}

TEST_CASE("unet rejects indivisible spatial extents") {
    GeneratorConfig cfg = desk_unet();
    UNet3d<double> net(cfg, 7);
    CHECK_THROWS_AS(net.validate_spatial(6, 8, 8), ShapeError);
    Tensor bad = random_tensor({1, 4, 6, 8, 8}, 1);
    CHECK_THROWS_AS(net.forward(bad), ShapeError);
    CHECK_THROWS_AS((UNet3d<double>(GeneratorConfig{.depth_levels = 1}, 1)), ConfigError);
}

TEST_CASE("different masks give different outputs") {
    UNet3d<double> net(desk_unet(), 8);
    Tensor m1 = ops::one_hot<double>(random_mask({1, 8, 8, 8}, 4, 60), 4);
    Tensor m2 = ops::one_hot<double>(random_mask({1, 8, 8, 8}, 4, 61), 4);
    Tensor y1 = net.forward(m1);
    Tensor y2 = net.forward(m2);
    CHECK(l2_diff(y1, y2) > 1e-8);
}

TEST_CASE("forward determinism given weights and input") {
    UNet3d<double> net(desk_unet(), 9);
    Tensor mask = ops::one_hot<double>(random_mask({2, 8, 8, 8}, 4, 70), 4);
    Tensor y1 = net.forward(mask);
    Tensor y2 = net.forward(mask);
    CHECK((y1.array() == y2.array()).all());
}

TEST_CASE("generator output respects tanh bounds") {
    UNet3d<double> net(desk_unet(), 10);
    Tensor mask = ops::one_hot<double>(random_mask({1, 8, 8, 8}, 4, 80), 4);
    Tensor y = net.forward(mask);
    for (Index i = 0; i < y.size(); ++i) {
        CHECK(y[i] <= 1.0);
        CHECK(y[i] >= -1.0);
    }
}

TEST_CASE("pix2pix text path: embedding sensitivity and config errors") {
    GeneratorConfig cfg = desk_unet();
    cfg.fusion_kind = fusion::Kind::CrossAttention;
    cfg.fusion_embed_dim = 12;
    UNet3d<double> net(cfg, 11);
    Tensor mask = ops::one_hot<double>(random_mask({1, 8, 8, 8}, 4, 90), 4);
    Tensor e1 = random_tensor({1, 12}, 91);
    Tensor e2 = random_tensor({1, 12}, 92);
    Tensor y1 = backbones::pix2pix_forward(net, mask, &e1);
    Tensor y2 = backbones::pix2pix_forward(net, mask, &e2);
    CHECK(l2_diff(y1, y2) > 0.0);

    // fusion stack present but no embedding
    CHECK_THROWS_AS(net.forward(mask), ConfigError);
    // embedding given but fusion none
    UNet3d<double> plain(desk_unet(), 12);
    CHECK_THROWS_AS(plain.forward(mask, nullptr, &e1), ConfigError);
}

TEST_CASE("ddpm unet: shapes, timestep sensitivity, range check") {
    GeneratorConfig cfg = desk_unet();
    cfg.in_channels = 5;  // 1 image + 4 mask classes
    cfg.tanh_out = false;
    cfg.time_dim = 16;
    cfg.max_timesteps = 250;
    UNet3d<double> net(cfg, 13);
    Tensor noisy = random_tensor({1, 1, 8, 8, 8}, 100);
    Tensor mask = ops::one_hot<double>(random_mask({1, 8, 8, 8}, 4, 101), 4);
    Tensor y0 = backbones::ddpm_unet_forward(net, noisy, mask, {0});
    REQUIRE(y0.dims() == std::vector<Index>({1, 1, 8, 8, 8}));
    Tensor y249 = backbones::ddpm_unet_forward(net, noisy, mask, {249});
    CHECK(l2_diff(y0, y249) > 1e-10);
    CHECK_THROWS_AS(backbones::ddpm_unet_forward(net, noisy, mask, {250}), ValidationError);
    CHECK_THROWS_AS(backbones::ddpm_unet_forward(net, noisy, mask, {-1}), ValidationError);
}

TEST_CASE("text-ablation consistency: affine fusion at identity init matches no-text path") {
    GeneratorConfig plain_cfg = desk_unet();
    plain_cfg.in_channels = 5;
    plain_cfg.tanh_out = false;
    plain_cfg.time_dim = 16;
    plain_cfg.max_timesteps = 250;
    GeneratorConfig fused_cfg = plain_cfg;
    fused_cfg.fusion_kind = fusion::Kind::Affine;
    fused_cfg.fusion_embed_dim = 12;

    // same seed: the shared backbone draws identical weights in build order
    UNet3d<double> plain(plain_cfg, 14);
    UNet3d<double> fused(fused_cfg, 14);
    Tensor noisy = random_tensor({1, 1, 8, 8, 8}, 110);
    Tensor mask = ops::one_hot<double>(random_mask({1, 8, 8, 8}, 4, 111), 4);
    Tensor emb = random_tensor({1, 12}, 112);
    Tensor ya = backbones::ddpm_unet_forward(plain, noisy, mask, {5});
    Tensor yb = backbones::ddpm_unet_forward(fused, noisy, mask, {5}, &emb);
    CHECK((ya.array() == yb.array()).all());
}

TEST_CASE("fusion attachment points are selectable per level") {
    GeneratorConfig cfg = desk_unet();
    cfg.fusion_kind = fusion::Kind::CrossAttention;
    cfg.fusion_embed_dim = 6;
    cfg.fusion_points = {0};  // bottleneck only
    UNet3d<double> net(cfg, 31);
    nn::ParamRegistry<double> all;
    net.collect(all, "probe");
    long fusion_params = 0;
    for (auto& r : all.refs()) fusion_params += r.name.find("fusion") != std::string::npos;
    CHECK(fusion_params == 6);  // q.w q.b k.w k.b v.w v.b for exactly one layer

    Tensor mask = ops::one_hot<double>(random_mask({1, 8, 8, 8}, 4, 300), 4);
    Tensor e1 = random_tensor({1, 6}, 301);
    Tensor e2 = random_tensor({1, 6}, 302);
    Tensor y1 = net.forward(mask, nullptr, &e1);
    Tensor y2 = net.forward(mask, nullptr, &e2);
    CHECK(l2_diff(y1, y2) > 0.0);

    // directional derivative agrees with the analytic input gradient
    Tensor lw = testsup::loss_weights(y1.dims(), 303);
    net.params().zero_grads();
    net.forward(mask, nullptr, &e1);
    Tensor dmask = net.backward(lw);
    Tensor dir = random_tensor(mask.dims(), 304);
    const double h = 1e-6;
    Tensor mp(mask.dims()), mm(mask.dims());
    for (Index i = 0; i < mask.size(); ++i) {
        mp[i] = mask[i] + h * dir[i];
        mm[i] = mask[i] - h * dir[i];
    }
    auto wsum = [&](const Tensor& t) {
        double acc = 0;
        for (Index i = 0; i < t.size(); ++i) acc += t[i] * lw[i];
        return acc;
    };
    const double fd = (wsum(net.forward(mp, nullptr, &e1)) - wsum(net.forward(mm, nullptr, &e1))) /
                      (2.0 * h);
    double dot = 0;
    for (Index i = 0; i < mask.size(); ++i) dot += dmask[i] * dir[i];
    CHECK(fd == doctest::Approx(dot).epsilon(1e-4));

    cfg.fusion_points = {5};
    CHECK_THROWS_AS((UNet3d<double>(cfg, 31)), ConfigError);
}

TEST_CASE("full unet gradient check on a tiny configuration") {
    GeneratorConfig cfg;
    cfg.in_channels = 2;
    cfg.out_channels = 1;
    cfg.base_channels = 2;
    cfg.depth_levels = 2;
    cfg.gn_groups = 1;
    cfg.tanh_out = true;
    cfg.time_dim = 4;
    cfg.max_timesteps = 16;
    cfg.fusion_kind = fusion::Kind::Affine;
    cfg.fusion_embed_dim = 3;
    cfg.fusion_mlp_hidden = 4;
    UNet3d<double> net(cfg, 15);
    // nudge fusion away from identity so its gradients are generic
    Rng prng(16);
    for (auto& r : net.params().refs())
        for (Index i = 0; i < r.value->size(); ++i) (*r.value)[i] += 0.05 * prng.gaussian();

    Tensor x = random_tensor({1, 2, 4, 4, 4}, 120, 0.5);
    Tensor emb = random_tensor({1, 3}, 121);
    std::vector<long> ts{3};
    Tensor lw = testsup::loss_weights({1, 1, 4, 4, 4}, 122);

    auto loss = [&]() {
        double s = 0;
        Tensor y = net.forward(x, &ts, &emb);
        for (Index i = 0; i < y.size(); ++i) s += y[i] * lw[i];
        return s;
    };
    net.params().zero_grads();
    net.forward(x, &ts, &emb);
    Tensor dx = net.backward(lw);
    for (auto& r : net.params().refs())
        testsup::check_gradient(loss, *r.value, *r.grad,
                                {.rtol = 2e-3, .atol = 2e-5, .stride = 13}, r.name);
    testsup::check_gradient(loss, x, dx, {.rtol = 2e-3, .atol = 2e-5, .stride = 5}, "unet.x");
}

TEST_CASE("discriminator: score grid geometry and batch equivariance") {
    backbones::DiscriminatorConfig dc;
    dc.in_channels = 5;
    dc.base_channels = 4;
    dc.n_layers = 3;
    dc.gn_groups = 2;
    backbones::PatchDiscriminator<double> disc(dc, 17);
    Tensor img = random_tensor({2, 1, 64, 64, 64}, 130);
    Tensor mask = ops::one_hot<double>(random_mask({2, 64, 64, 64}, 4, 131), 4);
    Tensor s = backbones::discriminator_forward(disc, img, mask);
    REQUIRE(s.dims() == std::vector<Index>({2, 1, 8, 8, 8}));
    CHECK(s.all_finite());

    // swapping the batch order permutes scores identically
    Tensor img_sw(img.dims()), mask_sw(mask.dims());
    const Index half_i = img.size() / 2, half_m = mask.size() / 2;
    std::copy(img.data() + half_i, img.data() + 2 * half_i, img_sw.data());
    std::copy(img.data(), img.data() + half_i, img_sw.data() + half_i);
    std::copy(mask.data() + half_m, mask.data() + 2 * half_m, mask_sw.data());
    std::copy(mask.data(), mask.data() + half_m, mask_sw.data() + half_m);
    Tensor s_sw = backbones::discriminator_forward(disc, img_sw, mask_sw);
    const Index half_s = s.size() / 2;
    for (Index i = 0; i < half_s; ++i) {
        CHECK(s_sw[i] == s[half_s + i]);
        CHECK(s_sw[half_s + i] == s[i]);
    }
}

TEST_CASE("discriminator input order (image, mask) is significant") {
    backbones::DiscriminatorConfig dc;
    dc.in_channels = 2;
    dc.base_channels = 4;
    dc.n_layers = 1;
    dc.gn_groups = 2;
    backbones::PatchDiscriminator<double> disc(dc, 18);
    Tensor a = random_tensor({1, 1, 8, 8, 8}, 140);
    Tensor b = random_tensor({1, 1, 8, 8, 8}, 141);
    Tensor s_ab = disc.forward(ops::concat_channels(a, b));
    Tensor s_ba = disc.forward(ops::concat_channels(b, a));
    CHECK(l2_diff(s_ab, s_ba) > 1e-10);

    Tensor misaligned = random_tensor({1, 1, 8, 8, 16}, 142);
    CHECK_THROWS_AS(backbones::discriminator_forward(disc, a, misaligned), ShapeError);
}

TEST_CASE("discriminator gradient check") {
    backbones::DiscriminatorConfig dc;
    dc.in_channels = 2;
    dc.base_channels = 2;
    dc.n_layers = 2;
    dc.gn_groups = 1;
    backbones::PatchDiscriminator<double> disc(dc, 19);
    Tensor x = random_tensor({1, 2, 8, 8, 8}, 150, 0.5);
    Tensor s0 = disc.forward(x);
    Tensor lw = testsup::loss_weights(s0.dims(), 151);
    auto loss = [&]() {
        Tensor s = disc.forward(x);
        double acc = 0;
        for (Index i = 0; i < s.size(); ++i) acc += s[i] * lw[i];
        return acc;
    };
    disc.params().zero_grads();
    disc.forward(x);
    Tensor dx = disc.backward(lw);
    for (auto& r : disc.params().refs())
        testsup::check_gradient(loss, *r.value, *r.grad,
                                {.rtol = 2e-3, .atol = 2e-5, .stride = 17}, r.name);
    testsup::check_gradient(loss, x, dx, {.rtol = 2e-3, .atol = 2e-5, .stride = 29}, "disc.x");
}

TEST_SUITE_END();
