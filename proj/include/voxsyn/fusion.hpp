#pragma once

#include <memory>
#include <string>
#include <vector>

#include "voxsyn/nn.hpp"
#include "voxsyn/ops.hpp"
#include "voxsyn/tensor.hpp"

// Text-visual conditioning units. Both are shape-preserving on
// (B, C, D, H, W) feature maps and consume one embedding vector per batch
// item. Gradients flow to unit parameters and to the visual input; the text
// encoder upstream is frozen, so no gradient is emitted for the embedding.

namespace voxsyn::fusion {

enum class Kind { None, Affine, CrossAttention };

inline const char* kind_name(Kind k) {
    switch (k) {
        case Kind::Affine: return "affine";
        case Kind::CrossAttention: return "cross_attention";
        default: return "none";
    }
}

inline Kind kind_from_name(const std::string& s) {
    if (s == "affine") return Kind::Affine;
    if (s == "cross_attention") return Kind::CrossAttention;
    if (s == "none" || s.empty()) return Kind::None;
    throw ConfigError("unknown fusion kind: " + s);
}

// Two-layer perceptrons producing per-channel scale and shift from the text
// embedding. Final layers are zero-initialized so the transform starts as the
// identity (scale 1, shift 0).
template <typename S>
struct AffineParams {
    nn::Linear<S> gamma_in, gamma_out;
    nn::Linear<S> theta_in, theta_out;
    TensorT<S> gamma_hidden_, theta_hidden_;  // pre-activation caches

    void build(Index embed_dim, Index channels, Index hidden, Rng& rng) {
        gamma_in.build(embed_dim, hidden, rng);
        gamma_out.build(hidden, channels, rng, nn::InitKind::Zero);
        theta_in.build(embed_dim, hidden, rng);
        theta_out.build(hidden, channels, rng, nn::InitKind::Zero);
    }

    // Returns (gamma, theta), each (B, C); gamma carries the +1 offset.
    std::pair<TensorT<S>, TensorT<S>> forward(const TensorT<S>& emb) {
        gamma_hidden_ = gamma_in.forward(emb);
        TensorT<S> g = gamma_out.forward(ops::silu_forward(gamma_hidden_));
        for (Index i = 0; i < g.size(); ++i) g[i] += S(1);
        theta_hidden_ = theta_in.forward(emb);
        TensorT<S> t = theta_out.forward(ops::silu_forward(theta_hidden_));
        return {std::move(g), std::move(t)};
    }

    void backward(const TensorT<S>& dgamma, const TensorT<S>& dtheta) {
        gamma_in.backward(ops::silu_backward(gamma_hidden_, gamma_out.backward(dgamma)));
        theta_in.backward(ops::silu_backward(theta_hidden_, theta_out.backward(dtheta)));
    }

    void collect(nn::ParamRegistry<S>& r, const std::string& p) {
        gamma_in.collect(r, p + ".gamma_in");
        gamma_out.collect(r, p + ".gamma_out");
        theta_in.collect(r, p + ".theta_in");
        theta_out.collect(r, p + ".theta_out");
    }
};

// One application of the channelwise affine modulation:
//   y[b,c,:] = gamma[b,c] * x[b,c,:] + theta[b,c]
template <typename S>
struct AffineTransform {
    AffineParams<S> params;
    TensorT<S> x_, gamma_;

    void build(Index embed_dim, Index channels, Index hidden, Rng& rng) {
        params.build(embed_dim, channels, hidden, rng);
    }

    TensorT<S> forward(const TensorT<S>& x, const TensorT<S>& emb) {
        auto [gamma, theta] = params.forward(emb);
        x_ = x;
        gamma_ = gamma;
        const Index B = x.dim(0), C = x.dim(1);
        const Index spatial = x.size() / (B * C);
        TensorT<S> y(x.dims());
        for (Index b = 0; b < B; ++b)
            for (Index c = 0; c < C; ++c) {
                const S g = gamma(b, c), t = theta(b, c);
                const S* px = x.data() + (b * C + c) * spatial;
                S* py = y.data() + (b * C + c) * spatial;
                for (Index i = 0; i < spatial; ++i) py[i] = g * px[i] + t;
            }
        return y;
    }

    TensorT<S> backward(const TensorT<S>& dy) {
        const Index B = x_.dim(0), C = x_.dim(1);
        const Index spatial = x_.size() / (B * C);
        TensorT<S> dgamma({B, C}), dtheta({B, C});
        TensorT<S> dx(x_.dims());
        for (Index b = 0; b < B; ++b)
            for (Index c = 0; c < C; ++c) {
                const S g = gamma_(b, c);
                const S* px = x_.data() + (b * C + c) * spatial;
                const S* pdy = dy.data() + (b * C + c) * spatial;
                S* pdx = dx.data() + (b * C + c) * spatial;
                S sg = 0, st = 0;
                for (Index i = 0; i < spatial; ++i) {
                    sg += pdy[i] * px[i];
                    st += pdy[i];
                    pdx[i] = g * pdy[i];
                }
                dgamma(b, c) = sg;
                dtheta(b, c) = st;
            }
        params.backward(dgamma, dtheta);
        return dx;
    }

    void collect(nn::ParamRegistry<S>& r, const std::string& p) { params.collect(r, p); }
};

template <typename S>
struct FusionLayer {
    virtual ~FusionLayer() = default;
    virtual TensorT<S> forward(const TensorT<S>& x, const TensorT<S>& emb) = 0;
    virtual TensorT<S> backward(const TensorT<S>& dy) = 0;
    virtual void collect(nn::ParamRegistry<S>& r, const std::string& prefix) = 0;
    virtual Index channels() const = 0;
    virtual Kind kind() const = 0;
};

// Affine fusion block: modulation, a 3x3x3 convolution, then a second
// independently parameterized modulation. The convolution starts as the
// identity (Dirac kernel), so a freshly built block is the identity map.
template <typename S>
struct AffineFusionBlock final : FusionLayer<S> {
    AffineTransform<S> fuse1, fuse2;
    nn::Conv3d<S> conv;
    Index channels_ = 0;

    void build(Index embed_dim, Index channels, Index hidden, Rng& rng) {
        channels_ = channels;
        fuse1.build(embed_dim, channels, hidden, rng);
        fuse2.build(embed_dim, channels, hidden, rng);
        conv.build(channels, channels, 3, 1, 1, rng, nn::InitKind::Dirac);
    }

    TensorT<S> forward(const TensorT<S>& x, const TensorT<S>& emb) override {
        if (x.dim(1) != channels_)
            throw ShapeError("affine fusion expects C=" + std::to_string(channels_) + ", got C=" +
                             std::to_string(x.dim(1)));
        if (x.dim(0) != emb.dim(0))
            throw ShapeError("affine fusion: batch mismatch between features and embedding");
        return fuse2.forward(conv.forward(fuse1.forward(x, emb)), emb);
    }

    TensorT<S> backward(const TensorT<S>& dy) override {
        return fuse1.backward(conv.backward(fuse2.backward(dy)));
    }

    void collect(nn::ParamRegistry<S>& r, const std::string& p) override {
        fuse1.collect(r, p + ".fuse1");
        conv.collect(r, p + ".conv");
        fuse2.collect(r, p + ".fuse2");
    }

    Index channels() const override { return channels_; }
    Kind kind() const override { return Kind::Affine; }
};

// Cross-attention with the text embedding as the sole key: queries and values
// come from the feature map via 1x1x1 convolutions, the softmax runs over
// flattened spatial positions, and the resulting per-position weight
// multiplies the value map. A residual connection keeps the unit
// identity-recoverable.
template <typename S>
struct CrossAttentionFusion final : FusionLayer<S> {
    nn::Conv3d<S> conv_q, conv_v;
    nn::Linear<S> w_k;  // no-bias linear map of the embedding into key space
    Index channels_ = 0, key_dim = 0;
    bool residual = true;
    S scale = S(1);

    TensorT<S> weights_, values_, q_, k_;

    void build(Index embed_dim, Index channels, Index key_dim_in, bool residual_in, Rng& rng) {
        channels_ = channels;
        key_dim = key_dim_in > 0 ? key_dim_in : channels;
        residual = residual_in;
        scale = S(1) / std::sqrt(static_cast<S>(key_dim));
        conv_q.build(channels, key_dim, 1, 1, 0, rng);
        conv_v.build(channels, channels, 1, 1, 0, rng, nn::InitKind::ScaledHe, S(0.1));
        w_k.build(embed_dim, key_dim, rng);
        w_k.b.set_zero();
    }

    // Attention weights over flattened spatial positions, (B, N); cached by
    // the last forward.
    const TensorT<S>& last_weights() const { return weights_; }

    TensorT<S> forward(const TensorT<S>& x, const TensorT<S>& emb) override {
        if (x.dim(1) != channels_)
            throw ShapeError("cross-attention expects C=" + std::to_string(channels_) +
                             ", got C=" + std::to_string(x.dim(1)));
        if (x.dim(0) != emb.dim(0))
            throw ShapeError("cross-attention: batch mismatch between features and embedding");
        const Index B = x.dim(0), C = channels_;
        const Index N = x.dim(2) * x.dim(3) * x.dim(4);
        q_ = conv_q.forward(x);            // (B, Ck, ...)
        values_ = conv_v.forward(x);       // (B, C, ...)
        k_ = w_k.forward(emb);             // (B, Ck)
        TensorT<S> logits({B, N});
        for (Index b = 0; b < B; ++b) {
            for (Index n = 0; n < N; ++n) {
                S acc = 0;
                for (Index ck = 0; ck < key_dim; ++ck) acc += q_[(b * key_dim + ck) * N + n] * k_(b, ck);
                logits(b, n) = acc * scale;
            }
        }
        weights_ = ops::softmax_rows(logits);
        TensorT<S> y(x.dims());
        for (Index b = 0; b < B; ++b)
            for (Index c = 0; c < C; ++c) {
                const S* pv = values_.data() + (b * C + c) * N;
                const S* pw = weights_.data() + b * N;
                S* py = y.data() + (b * C + c) * N;
                if (residual) {
                    const S* px = x.data() + (b * C + c) * N;
                    for (Index n = 0; n < N; ++n) py[n] = px[n] + pw[n] * pv[n];
                } else {
                    for (Index n = 0; n < N; ++n) py[n] = pw[n] * pv[n];
                }
            }
        return y;
    }

    TensorT<S> backward(const TensorT<S>& dy) override {
        const Index B = dy.dim(0), C = channels_;
        const Index N = dy.dim(2) * dy.dim(3) * dy.dim(4);
        TensorT<S> dweights = TensorT<S>::zeros({B, N});
        TensorT<S> dvalues(values_.dims());
        for (Index b = 0; b < B; ++b) {
            S* pdw = dweights.data() + b * N;
            const S* pw = weights_.data() + b * N;
            for (Index c = 0; c < C; ++c) {
                const S* pdy = dy.data() + (b * C + c) * N;
                const S* pv = values_.data() + (b * C + c) * N;
                S* pdv = dvalues.data() + (b * C + c) * N;
                for (Index n = 0; n < N; ++n) {
                    pdw[n] += pdy[n] * pv[n];
                    pdv[n] = pdy[n] * pw[n];
                }
            }
        }
        TensorT<S> dlogits = ops::softmax_rows_backward(weights_, dweights);
        TensorT<S> dq(q_.dims());
        TensorT<S> dk = TensorT<S>::zeros({B, key_dim});
        for (Index b = 0; b < B; ++b)
            for (Index ck = 0; ck < key_dim; ++ck) {
                const S* pq = q_.data() + (b * key_dim + ck) * N;
                S* pdq = dq.data() + (b * key_dim + ck) * N;
                const S kv = k_(b, ck);
                S acc = 0;
                for (Index n = 0; n < N; ++n) {
                    const S dl = dlogits(b, n) * scale;
                    pdq[n] = dl * kv;
                    acc += dl * pq[n];
                }
                dk(b, ck) = acc;
            }
        w_k.backward(dk);
        TensorT<S> dx = conv_q.backward(dq);
        TensorT<S> dxv = conv_v.backward(dvalues);
        for (Index i = 0; i < dx.size(); ++i) {
            dx[i] += dxv[i];
            if (residual) dx[i] += dy[i];
        }
        return dx;
    }

    void collect(nn::ParamRegistry<S>& r, const std::string& p) override {
        conv_q.collect(r, p + ".q");
        w_k.collect(r, p + ".k");
        conv_v.collect(r, p + ".v");
    }

    Index channels() const override { return channels_; }
    Kind kind() const override { return Kind::CrossAttention; }
};

struct StackConfig {
    Kind kind = Kind::None;
    std::vector<Index> levels;  // channel count per fusion point
    Index embed_dim = 0;
    Index mlp_hidden = 0;  // 0 = max(channels, 32)
    Index key_dim = 0;     // 0 = channels at that level
    bool residual = true;
};

// One independently parameterized shape-preserving layer per level.
template <typename S>
struct FusionStack {
    StackConfig config;
    std::vector<std::unique_ptr<FusionLayer<S>>> layers;

    bool empty() const { return layers.empty(); }
    Index size() const { return static_cast<Index>(layers.size()); }
    FusionLayer<S>& at(Index i) { return *layers[static_cast<size_t>(i)]; }

    void collect(nn::ParamRegistry<S>& r, const std::string& prefix) {
        for (size_t i = 0; i < layers.size(); ++i)
            layers[i]->collect(r, prefix + ".fusion" + std::to_string(i));
    }
};

template <typename S>
FusionStack<S> make_fusion_stack(const StackConfig& cfg, Rng& rng) {
    FusionStack<S> stack;
    stack.config = cfg;
    if (cfg.kind == Kind::None) return stack;
    if (cfg.levels.empty()) throw ConfigError("fusion stack needs at least one level");
    if (cfg.embed_dim <= 0) throw ConfigError("fusion stack needs a positive embedding dim");
    for (Index c : cfg.levels) {
        if (c <= 0) throw ConfigError("fusion level channel count must be positive");
        if (cfg.kind == Kind::Affine) {
            auto l = std::make_unique<AffineFusionBlock<S>>();
            const Index hidden = cfg.mlp_hidden > 0 ? cfg.mlp_hidden : std::max<Index>(c, 32);
            l->build(cfg.embed_dim, c, hidden, rng);
            stack.layers.push_back(std::move(l));
        } else {
            auto l = std::make_unique<CrossAttentionFusion<S>>();
            l->build(cfg.embed_dim, c, cfg.key_dim, cfg.residual, rng);
            stack.layers.push_back(std::move(l));
        }
    }
    return stack;
}

// Free-function forms of the two units.
template <typename S>
TensorT<S> affine_fuse(AffineFusionBlock<S>& unit, const TensorT<S>& features,
                       const TensorT<S>& embedding) {
    return unit.forward(features, embedding);
}

template <typename S>
TensorT<S> cross_attention_fuse(CrossAttentionFusion<S>& unit, const TensorT<S>& features,
                                const TensorT<S>& embedding) {
    return unit.forward(features, embedding);
}

}  // namespace voxsyn::fusion
