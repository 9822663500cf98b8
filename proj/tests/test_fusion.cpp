#include <cmath>
#include <cstring>

#include "doctest.h"
#include "test_support.hpp"
#include "voxsyn/fusion.hpp"

using namespace voxsyn;

namespace {

Tensor random_tensor(std::vector<Index> dims, std::uint64_t seed, double scale = 1.0) {
    Tensor t(std::move(dims));
    Rng rng(seed);
    ops::fill_gaussian(t, rng, scale);
    return t;
}

double weighted_sum(const Tensor& y, const Tensor& w) {
    double s = 0.0;
    for (Index i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
}

// Give the unit generic parameters so conditioning actually does something.
template <typename Layer>
void randomize_params(Layer& layer, std::uint64_t seed) {
    nn::ParamRegistry<double> reg;
    layer.collect(reg, "t");
    Rng rng(seed);
    for (auto& r : reg.refs())
        for (Index i = 0; i < r.value->size(); ++i) (*r.value)[i] = 0.3 * rng.gaussian();
}

}  // namespace

TEST_SUITE_BEGIN("fusion");

TEST_CASE("affine fusion block is the identity at construction") {
    Rng rng(1);
    fusion::AffineFusionBlock<double> unit;
    unit.build(16, 4, 32, rng);
    Tensor x = random_tensor({2, 4, 3, 3, 3}, 2);
    Tensor emb = random_tensor({2, 16}, 3);
    Tensor y = unit.forward(x, emb);
    REQUIRE(y.same_shape(x));
    CHECK(std::memcmp(y.data(), x.data(), sizeof(double) * static_cast<size_t>(x.size())) == 0);
}

TEST_CASE("affine modulation hand case: e=1, gamma=2, theta=3 -> 5") {
    Rng rng(4);
    fusion::AffineFusionBlock<double> unit;
    unit.build(8, 1, 16, rng);
    // zero-initialized final layers ignore the hidden path; the bias is the output
    unit.fuse1.params.gamma_out.b[0] = 1.0;  // gamma = 1 + 1 = 2
    unit.fuse1.params.theta_out.b[0] = 3.0;
    Tensor x = Tensor::full({1, 1, 1, 1, 1}, 1.0);
    Tensor emb = random_tensor({1, 8}, 5);
    Tensor y = unit.forward(x, emb);
    CHECK(y[0] == 5.0);  // conv and second modulation still at identity
}

TEST_CASE("affine fusion gradients vs finite differences on 2x2x2x2x2") {
    Rng rng(6);
    fusion::AffineFusionBlock<double> unit;
    unit.build(6, 2, 8, rng);
    randomize_params(unit, 7);
    Tensor x = random_tensor({2, 2, 2, 2, 2}, 8);
    Tensor emb = random_tensor({2, 6}, 9);
    Tensor lw = testsup::loss_weights(x.dims(), 10);

    auto loss = [&]() { return weighted_sum(unit.forward(x, emb), lw); };
    nn::ParamRegistry<double> reg;
    unit.collect(reg, "aff");
    reg.zero_grads();
    unit.forward(x, emb);
    Tensor dx = unit.backward(lw);

    for (auto& r : reg.refs())
        testsup::check_gradient(loss, *r.value, *r.grad, {.rtol = 1e-3, .atol = 1e-5, .stride = 3},
                                r.name);
    testsup::check_gradient(loss, x, dx, {.rtol = 1e-3, .atol = 1e-5}, "aff.x");
}

TEST_CASE("affine fusion conditioning sensitivity") {
    Rng rng(11);
    fusion::AffineFusionBlock<double> unit;
    unit.build(6, 3, 8, rng);
    randomize_params(unit, 12);
    Tensor x = random_tensor({1, 3, 2, 2, 2}, 13);
    Tensor e1 = random_tensor({1, 6}, 14);
    Tensor e2 = random_tensor({1, 6}, 15);
    Tensor y1 = unit.forward(x, e1);
    Tensor y2 = unit.forward(x, e2);
    double d = 0;
    for (Index i = 0; i < y1.size(); ++i) d += std::abs(y1[i] - y2[i]);
    CHECK(d > 1e-6);
}

TEST_CASE("affine fusion shape errors") {
    Rng rng(16);
    fusion::AffineFusionBlock<double> unit;
    unit.build(6, 3, 8, rng);
    Tensor bad_c = random_tensor({1, 4, 2, 2, 2}, 17);
    Tensor emb = random_tensor({1, 6}, 18);
    CHECK_THROWS_AS(unit.forward(bad_c, emb), ShapeError);
    Tensor x = random_tensor({2, 3, 2, 2, 2}, 19);
    Tensor emb1 = random_tensor({1, 6}, 20);
    CHECK_THROWS_AS(unit.forward(x, emb1), ShapeError);
}

TEST_CASE("cross-attention weights sum to one over flattened positions") {
    Rng rng(21);
    fusion::CrossAttentionFusion<double> unit;
    unit.build(5, 4, 0, true, rng);
    Tensor x = random_tensor({2, 4, 3, 3, 3}, 22);
    Tensor emb = random_tensor({2, 5}, 23);
    unit.forward(x, emb);
    const Tensor& w = unit.last_weights();
    REQUIRE(w.dims() == std::vector<Index>({2, 27}));
    for (Index b = 0; b < 2; ++b) {
        double s = 0;
        for (Index n = 0; n < 27; ++n) s += w(b, n);
        CHECK(std::abs(s - 1.0) < 1e-5);
    }
}

TEST_CASE("cross-attention degenerate 1x1x1 spatial extent") {
    Rng rng(24);
    SUBCASE("with residual") {
        fusion::CrossAttentionFusion<double> unit;
        unit.build(5, 3, 0, true, rng);
        Tensor x = random_tensor({1, 3, 1, 1, 1}, 25);
        Tensor emb = random_tensor({1, 5}, 26);
        Tensor y = unit.forward(x, emb);
        Tensor v = unit.conv_v.forward(x);
        for (Index i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(x[i] + v[i]).epsilon(1e-12));
    }
    SUBCASE("without residual: output equals V(X)") {
        fusion::CrossAttentionFusion<double> unit;
        unit.build(5, 3, 0, false, rng);
        Tensor x = random_tensor({1, 3, 1, 1, 1}, 27);
        Tensor emb = random_tensor({1, 5}, 28);
        Tensor y = unit.forward(x, emb);
        Tensor v = unit.conv_v.forward(x);
        for (Index i = 0; i < 3; ++i) CHECK(y[i] == v[i]);
    }
}

TEST_CASE("cross-attention zero key yields exactly uniform weights") {
    Rng rng(29);
    fusion::CrossAttentionFusion<double> unit;
    unit.build(5, 2, 0, true, rng);
    unit.w_k.w.set_zero();
    unit.w_k.b.set_zero();
    Tensor x = random_tensor({2, 2, 2, 3, 2}, 30);
    Tensor emb = random_tensor({2, 5}, 31);
    unit.forward(x, emb);
    const Tensor& w = unit.last_weights();
    const double uniform = 1.0 / 12.0;
    for (Index i = 0; i < w.size(); ++i) CHECK(w[i] == uniform);
}

TEST_CASE("cross-attention gradients vs finite differences") {
    Rng rng(32);
    fusion::CrossAttentionFusion<double> unit;
    unit.build(4, 2, 3, true, rng);
    randomize_params(unit, 33);
    Tensor x = random_tensor({2, 2, 2, 2, 2}, 34);
    Tensor emb = random_tensor({2, 4}, 35);
    Tensor lw = testsup::loss_weights(x.dims(), 36);

    auto loss = [&]() { return weighted_sum(unit.forward(x, emb), lw); };
    nn::ParamRegistry<double> reg;
    unit.collect(reg, "ca");
    reg.zero_grads();
    unit.forward(x, emb);
    Tensor dx = unit.backward(lw);
    for (auto& r : reg.refs())
        testsup::check_gradient(loss, *r.value, *r.grad, {.rtol = 1e-3, .atol = 1e-5}, r.name);
    testsup::check_gradient(loss, x, dx, {.rtol = 1e-3, .atol = 1e-5}, "ca.x");
}

TEST_CASE("cross-attention conditioning sensitivity") {
    Rng rng(37);
    fusion::CrossAttentionFusion<double> unit;
    unit.build(4, 3, 0, true, rng);
    randomize_params(unit, 38);
    Tensor x = random_tensor({1, 3, 2, 2, 2}, 39);
    Tensor e1 = random_tensor({1, 4}, 40);
    Tensor e2 = random_tensor({1, 4}, 41);
    Tensor y1 = unit.forward(x, e1);
    Tensor y2 = unit.forward(x, e2);
    double d = 0;
    for (Index i = 0; i < y1.size(); ++i) d += std::abs(y1[i] - y2[i]);
    CHECK(d > 1e-8);
}

TEST_CASE("fusion stack construction") {
    Rng rng(42);
    fusion::StackConfig cfg;
    cfg.kind = fusion::Kind::Affine;
    cfg.levels = {32};
    cfg.embed_dim = 8;
    auto s1 = fusion::make_fusion_stack<double>(cfg, rng);
    CHECK(s1.size() == 1);
    CHECK(s1.at(0).channels() == 32);

    cfg.kind = fusion::Kind::CrossAttention;
    cfg.levels = {16, 32, 64};
    auto s3 = fusion::make_fusion_stack<double>(cfg, rng);
    CHECK(s3.size() == 3);
    // layers are independently parameterized
    nn::ParamRegistry<double> reg;
    s3.collect(reg, "stack");
    CHECK(reg.refs().size() == 3 * 6);  // q.w q.b k.w k.b v.w v.b per layer

    // per-layer contracts hold at every level
    for (Index i = 0; i < 3; ++i) {
        const Index c = cfg.levels[static_cast<size_t>(i)];
        Tensor x = random_tensor({1, c, 2, 2, 2}, 100 + static_cast<std::uint64_t>(i));
        Tensor emb = random_tensor({1, 8}, 200 + static_cast<std::uint64_t>(i));
        Tensor y = s3.at(i).forward(x, emb);
        CHECK(y.same_shape(x));
        auto& ca = dynamic_cast<fusion::CrossAttentionFusion<double>&>(s3.at(i));
        double s = 0;
        for (Index n = 0; n < 8; ++n) s += ca.last_weights()(0, n);
        CHECK(std::abs(s - 1.0) < 1e-5);
    }

    cfg.levels = {16, -2};
    CHECK_THROWS_AS(fusion::make_fusion_stack<double>(cfg, rng), ConfigError);
    cfg.levels.clear();
    CHECK_THROWS_AS(fusion::make_fusion_stack<double>(cfg, rng), ConfigError);
}

TEST_CASE("affine stack identity at every level") {
    Rng rng(43);
    fusion::StackConfig cfg;
    cfg.kind = fusion::Kind::Affine;
    cfg.levels = {4, 8, 16};
    cfg.embed_dim = 8;
    auto stack = fusion::make_fusion_stack<double>(cfg, rng);
    for (Index i = 0; i < 3; ++i) {
        const Index c = cfg.levels[static_cast<size_t>(i)];
        Tensor x = random_tensor({1, c, 2, 2, 2}, 300 + static_cast<std::uint64_t>(i));
        Tensor emb = random_tensor({1, 8}, 400 + static_cast<std::uint64_t>(i));
        Tensor y = stack.at(i).forward(x, emb);
        CHECK(std::memcmp(y.data(), x.data(), sizeof(double) * static_cast<size_t>(x.size())) ==
              0);
    }
}

TEST_SUITE_END();
