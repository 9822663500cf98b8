#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "voxsyn/rng.hpp"
#include "voxsyn/tensor.hpp"
#include "voxsyn/unet.hpp"

namespace voxsyn::diffusion {

enum class SigmaMode { Beta, PosteriorBeta };

struct NoiseSchedule {
    long T = 0;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;

    void finalize() {
        T = static_cast<long>(betas.size());
        alphas.resize(betas.size());
        alpha_bars.resize(betas.size());
        double prod = 1.0;
        for (size_t i = 0; i < betas.size(); ++i) {
            if (!(betas[i] > 0.0 && betas[i] < 1.0))
                throw ConfigError("beta[" + std::to_string(i) + "] outside (0,1)");
            alphas[i] = 1.0 - betas[i];
            prod *= alphas[i];
            alpha_bars[i] = prod;
            if (!(alpha_bars[i] > 0.0 && alpha_bars[i] < 1.0))
                throw ConfigError("alpha_bar[" + std::to_string(i) + "] outside (0,1)");
            if (i > 0 && !(alpha_bars[i] < alpha_bars[i - 1]))
                throw ConfigError("alpha_bar must be strictly decreasing");
        }
    }

    void check_t(long t) const {
        if (t < 0 || t >= T)
            throw ValidationError("timestep " + std::to_string(t) + " outside [0," +
                                  std::to_string(T) + ")");
    }
};

inline NoiseSchedule linear_schedule(long T, double beta_start = 1e-4, double beta_end = 2e-2) {
    if (T < 1) throw ConfigError("schedule needs T >= 1");
    NoiseSchedule s;
    s.betas.resize(static_cast<size_t>(T));
    for (long t = 0; t < T; ++t)
        s.betas[static_cast<size_t>(t)] =
            T == 1 ? beta_start
                   : beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                      static_cast<double>(T - 1);
    s.finalize();
    return s;
}

inline NoiseSchedule cosine_schedule(long T, double offset = 8e-3) {
    if (T < 1) throw ConfigError("schedule needs T >= 1");
    NoiseSchedule s;
    s.betas.resize(static_cast<size_t>(T));
    auto f = [&](double t) {
        const double a = (t / static_cast<double>(T) + offset) / (1.0 + offset) * 1.5707963267948966;
        const double c = std::cos(a);
        return c * c;
    };
    const double f0 = f(0.0);
    double prev = 1.0;
    for (long t = 0; t < T; ++t) {
        const double cur = f(static_cast<double>(t + 1)) / f0;
        double beta = 1.0 - cur / prev;
        beta = std::min(std::max(beta, 1e-8), 0.999);
        s.betas[static_cast<size_t>(t)] = beta;
        prev = cur;
    }
    s.finalize();
    return s;
}

inline NoiseSchedule make_schedule(const std::string& name, long T) {
    if (name == "linear") return linear_schedule(T);
    if (name == "cosine") return cosine_schedule(T);
    throw ConfigError("unknown beta schedule: " + name);
}

// Closed form x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, one t per batch item.
template <typename S>
TensorT<S> add_noise(const TensorT<S>& x0, const std::vector<long>& ts, const TensorT<S>& eps,
                     const NoiseSchedule& sched) {
    check_same_shape(x0, eps, "add_noise");
    if (static_cast<Index>(ts.size()) != x0.dim(0))
        throw ShapeError("add_noise: one timestep per batch item");
    TensorT<S> xt(x0.dims());
    const Index per = x0.size() / x0.dim(0);
    for (Index b = 0; b < x0.dim(0); ++b) {
        sched.check_t(ts[static_cast<size_t>(b)]);
        const double abar = sched.alpha_bars[static_cast<size_t>(ts[static_cast<size_t>(b)])];
        const S c0 = static_cast<S>(std::sqrt(abar));
        const S c1 = static_cast<S>(std::sqrt(1.0 - abar));
        const S* px = x0.data() + b * per;
        const S* pe = eps.data() + b * per;
        S* pt = xt.data() + b * per;
        for (Index i = 0; i < per; ++i) pt[i] = c0 * px[i] + c1 * pe[i];
    }
    return xt;
}

template <typename S>
TensorT<S> add_noise(const TensorT<S>& x0, long t, const TensorT<S>& eps,
                     const NoiseSchedule& sched) {
    return add_noise(x0, std::vector<long>(static_cast<size_t>(x0.dim(0)), t), eps, sched);
}

// Exact inversion of add_noise given the true noise.
template <typename S>
TensorT<S> predict_x0(const TensorT<S>& xt, const std::vector<long>& ts, const TensorT<S>& eps,
                      const NoiseSchedule& sched) {
    TensorT<S> x0(xt.dims());
    const Index per = xt.size() / xt.dim(0);
    for (Index b = 0; b < xt.dim(0); ++b) {
        const double abar = sched.alpha_bars[static_cast<size_t>(ts[static_cast<size_t>(b)])];
        const S c0 = static_cast<S>(std::sqrt(abar));
        const S c1 = static_cast<S>(std::sqrt(1.0 - abar));
        const S* pt = xt.data() + b * per;
        const S* pe = eps.data() + b * per;
        S* px = x0.data() + b * per;
        for (Index i = 0; i < per; ++i) px[i] = (pt[i] - c1 * pe[i]) / c0;
    }
    return x0;
}

template <typename S>
struct TrainingDraw {
    std::vector<long> ts;
    TensorT<S> eps;
    TensorT<S> xt;
};

template <typename S>
TrainingDraw<S> make_training_draw(const TensorT<S>& x0, const NoiseSchedule& sched, Rng& rng) {
    TrainingDraw<S> d;
    d.ts.resize(static_cast<size_t>(x0.dim(0)));
    for (auto& t : d.ts) t = static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(sched.T)));
    d.eps.resize(x0.dims());
    ops::fill_gaussian(d.eps, rng);
    d.xt = add_noise(x0, d.ts, d.eps, sched);
    return d;
}

// Noise-prediction callable: (x_t, timesteps) -> predicted eps.
template <typename S>
using NoiseModelFn = std::function<TensorT<S>(const TensorT<S>&, const std::vector<long>&)>;

// Epsilon-prediction MSE at a uniformly sampled t (forward only).
template <typename S>
S training_loss(const NoiseModelFn<S>& model, const TensorT<S>& x0, const NoiseSchedule& sched,
                Rng& rng, TrainingDraw<S>* draw_out = nullptr) {
    TrainingDraw<S> d = make_training_draw(x0, sched, rng);
    TensorT<S> pred = model(d.xt, d.ts);
    const S loss = ops::mse_loss(pred, d.eps);
    if (draw_out) *draw_out = std::move(d);
    return loss;
}

// Overload binding the conditional noise model.
template <typename S>
S training_loss(backbones::UNet3d<S>& net, const TensorT<S>& x0, const TensorT<S>& mask_onehot,
                const TensorT<S>* emb, const NoiseSchedule& sched, Rng& rng) {
    NoiseModelFn<S> fn = [&](const TensorT<S>& xt, const std::vector<long>& ts) {
        return backbones::ddpm_unet_forward(net, xt, mask_onehot, ts, emb);
    };
    return training_loss<S>(fn, x0, sched, rng);
}

struct SampleOptions {
    SigmaMode sigma_mode = SigmaMode::Beta;
    // Optional inspection hook, called after each reverse step with (t, state).
    std::function<void(long, const Tensor&)> snapshot;
    long snapshot_every = 0;
};

// Ancestral sampling, t = T-1 .. 0. Deterministic given the rng seed.
template <typename S>
TensorT<S> sample(const NoiseModelFn<S>& model, const NoiseSchedule& sched, Rng& rng,
                  const std::vector<Index>& shape, const SampleOptions& opt = {}) {
    TensorT<S> x(shape);
    ops::fill_gaussian(x, rng);
    TensorT<S> z(shape);
    for (long t = sched.T - 1; t >= 0; --t) {
        const size_t ti = static_cast<size_t>(t);
        const std::vector<long> ts(static_cast<size_t>(shape[0]), t);
        TensorT<S> eps = model(x, ts);
        const double beta = sched.betas[ti];
        const double alpha = sched.alphas[ti];
        const double abar = sched.alpha_bars[ti];
        const S c_eps = static_cast<S>(beta / std::sqrt(1.0 - abar));
        const S c_x = static_cast<S>(1.0 / std::sqrt(alpha));
        double sigma2 = beta;
        if (opt.sigma_mode == SigmaMode::PosteriorBeta) {
            const double abar_prev = t > 0 ? sched.alpha_bars[ti - 1] : 1.0;
            sigma2 = beta * (1.0 - abar_prev) / (1.0 - abar);
        }
        const S sigma = static_cast<S>(std::sqrt(sigma2));
        if (t > 0) ops::fill_gaussian(z, rng);
        for (Index i = 0; i < x.size(); ++i) {
            const S mu = c_x * (x[i] - c_eps * eps[i]);
            x[i] = t > 0 ? mu + sigma * z[i] : mu;
        }
        if (!x.all_finite())
            throw NumericalError("sampling diverged (non-finite state) at step t=" +
                                 std::to_string(t));
        if (opt.snapshot && opt.snapshot_every > 0 && (t % opt.snapshot_every == 0))
            opt.snapshot(t, x);
    }
    return x;
}

// Overload for the conditional diffusion U-Net.
template <typename S>
TensorT<S> sample(backbones::UNet3d<S>& net, const TensorT<S>& mask_onehot, const TensorT<S>* emb,
                  const NoiseSchedule& sched, Rng& rng, const std::vector<Index>& shape,
                  const SampleOptions& opt = {}) {
    NoiseModelFn<S> fn = [&](const TensorT<S>& xt, const std::vector<long>& ts) {
        return backbones::ddpm_unet_forward(net, xt, mask_onehot, ts, emb);
    };
    return sample<S>(fn, sched, rng, shape, opt);
}

}  // namespace voxsyn::diffusion
