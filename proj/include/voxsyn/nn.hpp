#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "voxsyn/ops.hpp"
#include "voxsyn/rng.hpp"
#include "voxsyn/tensor.hpp"

namespace voxsyn::nn {

template <typename S>
struct ParamRef {
    std::string name;
    TensorT<S>* value = nullptr;
    TensorT<S>* grad = nullptr;
};

// Flat list of named (value, grad) pairs; registration order is the canonical
// order used by the optimizer and checkpoints.
template <typename S>
class ParamRegistry {
  public:
    void add(const std::string& name, TensorT<S>& value, TensorT<S>& grad) {
        refs_.push_back({name, &value, &grad});
    }
    const std::vector<ParamRef<S>>& refs() const { return refs_; }
    void zero_grads() {
        for (auto& r : refs_) r.grad->set_zero();
    }
    Index total_size() const {
        Index n = 0;
        for (const auto& r : refs_) n += r.value->size();
        return n;
    }

  private:
    std::vector<ParamRef<S>> refs_;
};

enum class InitKind { HeNormal, Zero, Dirac, ScaledHe };

template <typename S>
struct Conv3d {
    Index cin = 0, cout = 0;
    ops::ConvGeom geom;
    TensorT<S> w, b, gw, gb;
    TensorT<S> x_;  // cached input

    void build(Index in, Index out, Index k, Index stride, Index pad, Rng& rng,
               InitKind init = InitKind::HeNormal, S init_scale = S(1)) {
        cin = in;
        cout = out;
        geom = {k, stride, pad};
        w.resize({out, in, k, k, k});
        b = TensorT<S>::zeros({out});
        gw = TensorT<S>::zeros(w.dims());
        gb = TensorT<S>::zeros({out});
        switch (init) {
            case InitKind::Zero:
                w.set_zero();
                break;
            case InitKind::Dirac: {
                if (in != out) throw ConfigError("dirac init requires cin == cout");
                w.set_zero();
                const Index c = k / 2;
                for (Index i = 0; i < out; ++i) w(i, i, c, c, c) = S(1);
                break;
            }
            case InitKind::HeNormal:
            case InitKind::ScaledHe: {
                const S fan_in = static_cast<S>(in * k * k * k);
                const S std = std::sqrt(S(2) / fan_in) * init_scale;
                ops::fill_gaussian(w, rng, std);
                break;
            }
        }
    }

    TensorT<S> forward(const TensorT<S>& x) {
        x_ = x;
        return ops::conv3d_forward(x, w, b, geom);
    }
    TensorT<S> backward(const TensorT<S>& dy) {
        return ops::conv3d_backward(x_, w, dy, geom, gw, gb);
    }
    void collect(ParamRegistry<S>& r, const std::string& prefix) {
        r.add(prefix + ".w", w, gw);
        r.add(prefix + ".b", b, gb);
    }
};

template <typename S>
struct Linear {
    TensorT<S> w, b, gw, gb;
    TensorT<S> x_;

    void build(Index in, Index out, Rng& rng, InitKind init = InitKind::HeNormal,
               S init_scale = S(1)) {
        w.resize({out, in});
        b = TensorT<S>::zeros({out});
        gw = TensorT<S>::zeros(w.dims());
        gb = TensorT<S>::zeros({out});
        if (init == InitKind::Zero) {
            w.set_zero();
        } else {
            const S std = std::sqrt(S(2) / static_cast<S>(in)) * init_scale;
            ops::fill_gaussian(w, rng, std);
        }
    }

    TensorT<S> forward(const TensorT<S>& x) {
        x_ = x;
        return ops::linear_forward(x, w, b);
    }
    TensorT<S> backward(const TensorT<S>& dy) {
        return ops::linear_backward(x_, w, dy, gw, gb);
    }
    void collect(ParamRegistry<S>& r, const std::string& prefix) {
        r.add(prefix + ".w", w, gw);
        r.add(prefix + ".b", b, gb);
    }
};

template <typename S>
struct GroupNorm {
    Index groups = 1;
    S eps = S(1e-5);
    TensorT<S> gamma, beta, ggamma, gbeta;
    TensorT<S> x_;
    ops::GroupNormCacheT<S> cache_;

    void build(Index channels, Index g) {
        groups = std::min(g, channels);
        while (channels % groups != 0) --groups;  // largest divisor <= requested
        gamma = TensorT<S>::full({channels}, S(1));
        beta = TensorT<S>::zeros({channels});
        ggamma = TensorT<S>::zeros({channels});
        gbeta = TensorT<S>::zeros({channels});
    }

    TensorT<S> forward(const TensorT<S>& x) {
        x_ = x;
        return ops::groupnorm_forward(x, gamma, beta, groups, eps, cache_);
    }
    TensorT<S> backward(const TensorT<S>& dy) {
        return ops::groupnorm_backward(x_, gamma, dy, groups, cache_, ggamma, gbeta);
    }
    void collect(ParamRegistry<S>& r, const std::string& prefix) {
        r.add(prefix + ".gamma", gamma, ggamma);
        r.add(prefix + ".beta", beta, gbeta);
    }
};

// conv -> (+ per-channel timestep bias) -> groupnorm -> SiLU
template <typename S>
struct ConvBlock {
    Conv3d<S> conv;
    GroupNorm<S> norm;
    bool with_time = false;
    Linear<S> time_proj;
    TensorT<S> pre_act_;   // input to SiLU
    TensorT<S> temb_;      // cached time embedding (B, tdim)

    void build(Index in, Index out, Index gn_groups, Rng& rng, Index time_dim = 0) {
        conv.build(in, out, 3, 1, 1, rng);
        norm.build(out, gn_groups);
        with_time = time_dim > 0;
        if (with_time) time_proj.build(time_dim, out, rng, InitKind::HeNormal, S(0.2));
    }

    TensorT<S> forward(const TensorT<S>& x, const TensorT<S>* temb = nullptr) {
        TensorT<S> h = conv.forward(x);
        if (with_time) {
            if (!temb) throw ConfigError("ConvBlock built with time conditioning needs temb");
            temb_ = *temb;
            TensorT<S> bias = time_proj.forward(*temb);  // (B, C)
            const Index B = h.dim(0), C = h.dim(1);
            const Index spatial = h.size() / (B * C);
            for (Index b = 0; b < B; ++b)
                for (Index c = 0; c < C; ++c) {
                    S* p = h.data() + (b * C + c) * spatial;
                    const S v = bias(b, c);
                    for (Index i = 0; i < spatial; ++i) p[i] += v;
                }
        }
        pre_act_ = norm.forward(h);
        return ops::silu_forward(pre_act_);
    }

    TensorT<S> backward(const TensorT<S>& dy, TensorT<S>* dtemb_accum = nullptr) {
        TensorT<S> dpre = ops::silu_backward(pre_act_, dy);
        TensorT<S> dh = norm.backward(dpre);
        if (with_time) {
            const Index B = dh.dim(0), C = dh.dim(1);
            const Index spatial = dh.size() / (B * C);
            TensorT<S> dbias({B, C});
            for (Index b = 0; b < B; ++b)
                for (Index c = 0; c < C; ++c) {
                    const S* p = dh.data() + (b * C + c) * spatial;
                    S acc = 0;
                    for (Index i = 0; i < spatial; ++i) acc += p[i];
                    dbias(b, c) = acc;
                }
            TensorT<S> dt = time_proj.backward(dbias);
            if (dtemb_accum) dtemb_accum->array() += dt.array();
        }
        return conv.backward(dh);
    }

    void collect(ParamRegistry<S>& r, const std::string& prefix) {
        conv.collect(r, prefix + ".conv");
        norm.collect(r, prefix + ".norm");
        if (with_time) time_proj.collect(r, prefix + ".time");
    }
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename S>
class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamRegistry<S>& params, double lr_override = -1.0) {
        const auto& refs = params.refs();
        if (m_.size() != refs.size()) {
            m_.clear();
            v_.clear();
            for (const auto& r : refs) {
                m_.push_back(TensorT<S>::zeros(r.value->dims()));
                v_.push_back(TensorT<S>::zeros(r.value->dims()));
            }
            t_ = 0;
        }
        ++t_;
        const S lr = static_cast<S>(lr_override >= 0 ? lr_override : cfg_.lr);
        const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
        const S eps = static_cast<S>(cfg_.eps);
        const S bc1 = S(1) - std::pow(b1, static_cast<S>(t_));
        const S bc2 = S(1) - std::pow(b2, static_cast<S>(t_));
        for (size_t i = 0; i < refs.size(); ++i) {
            TensorT<S>& w = *refs[i].value;
            TensorT<S>& g = *refs[i].grad;
            TensorT<S>& m = m_[i];
            TensorT<S>& v = v_[i];
            for (Index j = 0; j < w.size(); ++j) {
                m[j] = b1 * m[j] + (S(1) - b1) * g[j];
                v[j] = b2 * v[j] + (S(1) - b2) * g[j] * g[j];
                const S mhat = m[j] / bc1;
                const S vhat = v[j] / bc2;
                w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    long step_count() const { return t_; }
    const std::vector<TensorT<S>>& moments_m() const { return m_; }
    const std::vector<TensorT<S>>& moments_v() const { return v_; }

    void restore(std::vector<TensorT<S>> m, std::vector<TensorT<S>> v, long t) {
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = t;
    }

    const AdamConfig& config() const { return cfg_; }

  private:
    AdamConfig cfg_;
    std::vector<TensorT<S>> m_, v_;
    long t_ = 0;
};

}  // namespace voxsyn::nn
