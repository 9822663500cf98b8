#include <cmath>

#include "doctest.h"
#include "test_support.hpp"
#include "voxsyn/nn.hpp"
#include "voxsyn/ops.hpp"
#include "voxsyn/tensor.hpp"

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

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    t.fill(1.5);
    CHECK(t(1, 2, 3) == 1.5);
    t(0, 1, 2) = -2.0;
    CHECK(t[0 * 12 + 1 * 4 + 2] == -2.0);
    CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
    CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
    Tensor r = t.reshaped({6, 4});
    CHECK(r(1, 2) == -2.0);
    CHECK(t.all_finite());
    t[0] = std::nan("");
    CHECK(!t.all_finite());
}

TEST_CASE("rng determinism and stream derivation") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42), d(43);
    int diff = 0;
    for (int i = 0; i < 10; ++i) diff += c.next_u64() != d.next_u64();
    CHECK(diff == 10);
    CHECK(derive_seed(1, "left") != derive_seed(1, "right"));
    CHECK(derive_seed(1, "x") == derive_seed(1, "x"));

    // restore() resumes the exact stream
    Rng e(7);
    e.gaussian();
    auto st = e.state();
    const bool hs = e.has_spare();
    const double sp = e.spare();
    const double next = e.gaussian();
    Rng f;
    f.restore(st, hs, sp);
    CHECK(f.gaussian() == next);
}

TEST_CASE("gaussian moments") {
    Rng rng(123);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        s += g;
        s2 += g * g;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("conv3d forward matches direct computation") {
    const Index B = 2, Cin = 3, Cout = 2, D = 4, H = 5, W = 6;
    Tensor x = random_tensor({B, Cin, D, H, W}, 1);
    Tensor w = random_tensor({Cout, Cin, 3, 3, 3}, 2, 0.3);
    Tensor bias = random_tensor({Cout}, 3);
    ops::ConvGeom g{3, 1, 1};
    Tensor y = ops::conv3d_forward(x, w, bias, g);
    REQUIRE(y.dims() == std::vector<Index>({B, Cout, D, H, W}));
    // brute force at a few positions
    Rng pick(9);
    for (int trial = 0; trial < 20; ++trial) {
        const Index b = static_cast<Index>(pick.uniform_index(B));
        const Index co = static_cast<Index>(pick.uniform_index(Cout));
        const Index z = static_cast<Index>(pick.uniform_index(D));
        const Index yy = static_cast<Index>(pick.uniform_index(H));
        const Index xx = static_cast<Index>(pick.uniform_index(W));
        double acc = bias[co];
        for (Index ci = 0; ci < Cin; ++ci)
            for (Index kd = 0; kd < 3; ++kd)
                for (Index kh = 0; kh < 3; ++kh)
                    for (Index kw = 0; kw < 3; ++kw) {
                        const Index iz = z + kd - 1, iy = yy + kh - 1, ix = xx + kw - 1;
                        if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                        acc += w(co, ci, kd, kh, kw) * x(b, ci, iz, iy, ix);
                    }
        CHECK(y(b, co, z, yy, xx) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("conv3d stride-2 output geometry") {
    Tensor x = random_tensor({1, 2, 8, 8, 8}, 4);
    Tensor w = random_tensor({3, 2, 3, 3, 3}, 5, 0.3);
    Tensor bias = Tensor::zeros({3});
    Tensor y = ops::conv3d_forward(x, w, bias, {3, 2, 1});
    CHECK(y.dims() == std::vector<Index>({1, 3, 4, 4, 4}));
    Tensor w4 = random_tensor({3, 2, 4, 4, 4}, 6, 0.3);
    Tensor y4 = ops::conv3d_forward(x, w4, bias, {4, 2, 1});
    CHECK(y4.dims() == std::vector<Index>({1, 3, 4, 4, 4}));
}

TEST_CASE("conv3d gradients vs finite differences") {
    nn::Conv3d<double> conv;
    Rng rng(11);
    conv.build(2, 3, 3, 1, 1, rng);
    Tensor x = random_tensor({1, 2, 3, 4, 3}, 12);
    Tensor lw = testsup::loss_weights({1, 3, 3, 4, 3}, 13);

    auto loss = [&]() {
        Tensor y = ops::conv3d_forward(x, conv.w, conv.b, conv.geom);
        return weighted_sum(y, lw);
    };
    conv.gw.set_zero();
    conv.gb.set_zero();
    Tensor y = conv.forward(x);
    Tensor dx = conv.backward(lw);

    testsup::check_gradient(loss, conv.w, conv.gw, {.stride = 7}, "conv.w");
    testsup::check_gradient(loss, conv.b, conv.gb, {}, "conv.b");
    testsup::check_gradient(loss, x, dx, {.stride = 5}, "conv.x");
}

TEST_CASE("strided conv gradients") {
    nn::Conv3d<double> conv;
    Rng rng(21);
    conv.build(2, 2, 4, 2, 1, rng);
    Tensor x = random_tensor({1, 2, 4, 4, 4}, 22);
    Tensor y0 = conv.forward(x);
    Tensor lw = testsup::loss_weights(y0.dims(), 23);
    auto loss = [&]() {
        Tensor y = ops::conv3d_forward(x, conv.w, conv.b, conv.geom);
        return weighted_sum(y, lw);
    };
    conv.gw.set_zero();
    conv.gb.set_zero();
    conv.forward(x);
    Tensor dx = conv.backward(lw);
    testsup::check_gradient(loss, conv.w, conv.gw, {.stride = 11}, "sconv.w");
    testsup::check_gradient(loss, x, dx, {.stride = 7}, "sconv.x");
}

TEST_CASE("linear gradients") {
    nn::Linear<double> lin;
    Rng rng(31);
    lin.build(5, 4, rng);
    Tensor x = random_tensor({3, 5}, 32);
    Tensor lw = testsup::loss_weights({3, 4}, 33);
    auto loss = [&]() { return weighted_sum(ops::linear_forward(x, lin.w, lin.b), lw); };
    lin.gw.set_zero();
    lin.gb.set_zero();
    lin.forward(x);
    Tensor dx = lin.backward(lw);
    testsup::check_gradient(loss, lin.w, lin.gw, {}, "lin.w");
    testsup::check_gradient(loss, lin.b, lin.gb, {}, "lin.b");
    testsup::check_gradient(loss, x, dx, {}, "lin.x");
}

TEST_CASE("groupnorm forward statistics and gradients") {
    const Index B = 2, C = 4, D = 2, H = 3, W = 2;
    Tensor x = random_tensor({B, C, D, H, W}, 41);
    nn::GroupNorm<double> gn;
    gn.build(C, 2);
    Tensor y = gn.forward(x);
    // unit gamma, zero beta: each group has mean ~0, var ~1
    const Index spatial = D * H * W;
    for (Index b = 0; b < B; ++b)
        for (Index g = 0; g < 2; ++g) {
            double s = 0, s2 = 0;
            for (Index cc = 0; cc < 2; ++cc)
                for (Index i = 0; i < spatial; ++i) {
                    const double v = y.data()[((b * C + g * 2 + cc) * spatial) + i];
                    s += v;
                    s2 += v * v;
                }
            const double m = s / (2 * spatial);
            CHECK(std::abs(m) < 1e-10);
            CHECK(s2 / (2 * spatial) - m * m == doctest::Approx(1.0).epsilon(1e-4));
        }

    Tensor lw = testsup::loss_weights(x.dims(), 42);
    auto loss = [&]() {
        ops::GroupNormCacheT<double> cache;
        Tensor yy = ops::groupnorm_forward(x, gn.gamma, gn.beta, gn.groups, gn.eps, cache);
        return weighted_sum(yy, lw);
    };
    gn.ggamma.set_zero();
    gn.gbeta.set_zero();
    gn.forward(x);
    Tensor dx = gn.backward(lw);
    testsup::check_gradient(loss, gn.gamma, gn.ggamma, {}, "gn.gamma");
    testsup::check_gradient(loss, gn.beta, gn.gbeta, {}, "gn.beta");
    testsup::check_gradient(loss, x, dx, {.stride = 3}, "gn.x");
}

TEST_CASE("activation gradients") {
    Tensor x = random_tensor({2, 3, 2, 2, 2}, 51);
    Tensor lw = testsup::loss_weights(x.dims(), 52);

    SUBCASE("silu") {
        auto loss = [&]() { return weighted_sum(ops::silu_forward(x), lw); };
        Tensor dx = ops::silu_backward(x, lw);
        testsup::check_gradient(loss, x, dx, {}, "silu.x");
    }
    SUBCASE("tanh") {
        auto loss = [&]() { return weighted_sum(ops::tanh_forward(x), lw); };
        Tensor y = ops::tanh_forward(x);
        Tensor dx = ops::tanh_backward(y, lw);
        testsup::check_gradient(loss, x, dx, {}, "tanh.x");
    }
    SUBCASE("leaky relu") {
        auto loss = [&]() { return weighted_sum(ops::leaky_relu_forward(x, 0.2), lw); };
        Tensor dx = ops::leaky_relu_backward(x, lw, 0.2);
        testsup::check_gradient(loss, x, dx, {}, "lrelu.x");
    }
}

TEST_CASE("upsample nearest x2 and its adjoint") {
    Tensor x = random_tensor({1, 2, 2, 2, 2}, 61);
    Tensor y = ops::upsample2_forward(x);
    CHECK(y.dims() == std::vector<Index>({1, 2, 4, 4, 4}));
    CHECK(y(0, 1, 3, 3, 3) == x(0, 1, 1, 1, 1));
    Tensor lw = testsup::loss_weights(y.dims(), 62);
    auto loss = [&]() { return weighted_sum(ops::upsample2_forward(x), lw); };
    Tensor dx = ops::upsample2_backward(lw);
    testsup::check_gradient(loss, x, dx, {}, "upsample.x");
}

TEST_CASE("softmax rows: normalization, uniform case, gradient") {
    Tensor logits = random_tensor({3, 7}, 71);
    Tensor w = ops::softmax_rows(logits);
    for (Index b = 0; b < 3; ++b) {
        double s = 0;
        for (Index i = 0; i < 7; ++i) s += w(b, i);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    Tensor zeros = Tensor::zeros({2, 5});
    Tensor u = ops::softmax_rows(zeros);
    for (Index i = 0; i < u.size(); ++i) CHECK(u[i] == 1.0 / 5.0);

    Tensor lw = testsup::loss_weights({3, 7}, 72);
    auto loss = [&]() { return weighted_sum(ops::softmax_rows(logits), lw); };
    Tensor dl = ops::softmax_rows_backward(w, lw);
    testsup::check_gradient(loss, logits, dl, {.rtol = 1e-4}, "softmax.logits");
}

TEST_CASE("concat/split channels round trip") {
    Tensor a = random_tensor({2, 3, 2, 2, 2}, 81);
    Tensor b = random_tensor({2, 2, 2, 2, 2}, 82);
    Tensor y = ops::concat_channels(a, b);
    CHECK(y.dims() == std::vector<Index>({2, 5, 2, 2, 2}));
    auto [a2, b2] = ops::split_channels(y, 3);
    CHECK((a2.array() == a.array()).all());
    CHECK((b2.array() == b.array()).all());
}

TEST_CASE("one-hot encoding") {
    TensorT<int> mask({1, 2, 2, 2});
    for (Index i = 0; i < mask.size(); ++i) mask[i] = static_cast<int>(i % 3);
    Tensor y = ops::one_hot<double>(mask, 4);
    CHECK(y.dims() == std::vector<Index>({1, 4, 2, 2, 2}));
    for (Index z = 0; z < 2; ++z)
        for (Index h = 0; h < 2; ++h)
            for (Index w = 0; w < 2; ++w) {
                double s = 0;
                for (Index k = 0; k < 4; ++k) s += y(0, k, z, h, w);
                CHECK(s == 1.0);
                CHECK(y(0, mask(0, z, h, w), z, h, w) == 1.0);
            }
    mask[0] = 7;
    CHECK_THROWS_AS(ops::one_hot<double>(mask, 4), ValidationError);
}

TEST_CASE("timestep embedding distinguishes steps") {
    Tensor e0 = ops::timestep_embedding<double>({0, 10}, 16);
    CHECK(e0.dims() == std::vector<Index>({2, 16}));
    double diff = 0;
    for (Index i = 0; i < 16; ++i) diff += std::abs(e0(0, i) - e0(1, i));
    CHECK(diff > 0.1);
    // t=0: cos components are 1, sin components are 0
    for (Index i = 0; i < 8; ++i) {
        CHECK(e0(0, i) == 1.0);
        CHECK(e0(0, 8 + i) == 0.0);
    }
}

TEST_CASE("losses and their gradients") {
    Tensor a = random_tensor({2, 1, 2, 2, 2}, 91);
    Tensor b = random_tensor({2, 1, 2, 2, 2}, 92);
    Tensor da;
    const double mse = ops::mse_loss(a, b, &da);
    CHECK(mse > 0);
    auto mloss = [&]() { return ops::mse_loss(a, b); };
    testsup::check_gradient(mloss, a, da, {}, "mse.a");

    Tensor dl;
    ops::l1_loss(a, b, &dl);
    auto lloss = [&]() { return ops::l1_loss(a, b); };
    testsup::check_gradient(lloss, a, dl, {}, "l1.a");

    Tensor dc;
    const double c = ops::mse_to_constant(a, 1.0, &dc);
    CHECK(c > 0);
    auto closs = [&]() { return ops::mse_to_constant(a, 1.0); };
    testsup::check_gradient(closs, a, dc, {}, "mse_const.a");
}

TEST_CASE("adam reduces a quadratic") {
    nn::ParamRegistry<double> reg;
    Tensor w = random_tensor({8}, 101);
    Tensor g = Tensor::zeros({8});
    reg.add("w", w, g);
    nn::Adam<double> adam({.lr = 0.05});
    for (int it = 0; it < 400; ++it) {
        for (Index i = 0; i < 8; ++i) g[i] = 2.0 * (w[i] - 3.0);
        adam.step(reg);
        reg.zero_grads();
    }
    for (Index i = 0; i < 8; ++i) CHECK(w[i] == doctest::Approx(3.0).epsilon(1e-3));
}
