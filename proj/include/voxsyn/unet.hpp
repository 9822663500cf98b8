#pragma once

#include <string>
#include <vector>

#include "voxsyn/fusion.hpp"
#include "voxsyn/nn.hpp"
#include "voxsyn/ops.hpp"
#include "voxsyn/tensor.hpp"

// Volumetric generator backbones. One parametric U-Net covers the pure
// mask-to-image generator, the GAN generator (with cross-attention text
// fusion), and the noise-prediction network of the diffusion model (with
// timestep conditioning and affine text fusion).

namespace voxsyn::backbones {

struct GeneratorConfig {
    Index in_channels = 4;
    Index out_channels = 1;
    Index base_channels = 32;
    Index depth_levels = 4;  // resolution scales; spatial dims must divide 2^depth_levels
    Index gn_groups = 8;
    bool tanh_out = true;
    Index time_dim = 0;       // 0 disables timestep conditioning
    long max_timesteps = 0;   // upper bound (exclusive) for timesteps when time_dim > 0
    fusion::Kind fusion_kind = fusion::Kind::None;
    Index fusion_embed_dim = 0;
    Index fusion_key_dim = 0;
    Index fusion_mlp_hidden = 0;
    bool fusion_residual = true;
    // fusion attachment points: 0 = bottleneck, then decoder levels from deep
    // to shallow; empty = every point
    std::vector<Index> fusion_points;

    void validate() const {
        if (depth_levels < 2) throw ConfigError("depth_levels must be >= 2");
        if (base_channels <= 0 || in_channels <= 0 || out_channels <= 0)
            throw ConfigError("channel counts must be positive");
        if (fusion_kind != fusion::Kind::None && fusion_embed_dim <= 0)
            throw ConfigError("fusion requires a positive embedding dimension");
        for (Index pt : fusion_points)
            if (pt < 0 || pt >= depth_levels)
                throw ConfigError("fusion point " + std::to_string(pt) + " outside [0," +
                                  std::to_string(depth_levels) + ")");
    }

    std::vector<Index> level_channels() const {
        std::vector<Index> c;
        for (Index i = 0; i < depth_levels; ++i) c.push_back(base_channels << i);
        return c;
    }

    // Fusion attaches at the bottleneck and after decoder levels; point k has
    // the channel count of resolution depth_levels-1-k.
    std::vector<Index> active_fusion_points() const {
        if (!fusion_points.empty()) return fusion_points;
        std::vector<Index> all;
        for (Index i = 0; i < depth_levels; ++i) all.push_back(i);
        return all;
    }

    std::vector<Index> fusion_levels() const {
        auto c = level_channels();
        std::vector<Index> lv;
        for (Index pt : active_fusion_points())
            lv.push_back(c[static_cast<size_t>(depth_levels - 1 - pt)]);
        return lv;
    }
};

template <typename S>
class UNet3d {
  public:
    UNet3d(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(derive_seed(seed, "unet3d"));
        const auto ch = cfg_.level_channels();
        const Index L = cfg_.depth_levels;
        stem_.build(cfg_.in_channels, ch[0], 3, 1, 1, rng);
        enc_b1_.resize(static_cast<size_t>(L - 1));
        enc_b2_.resize(static_cast<size_t>(L - 1));
        down_.resize(static_cast<size_t>(L - 1));
        for (Index i = 0; i < L - 1; ++i) {
            enc_b1_[i].build(ch[i], ch[i], cfg_.gn_groups, rng, cfg_.time_dim);
            enc_b2_[i].build(ch[i], ch[i], cfg_.gn_groups, rng, cfg_.time_dim);
            down_[i].build(ch[i], ch[i + 1], 3, 2, 1, rng);
        }
        mid1_.build(ch[L - 1], ch[L - 1], cfg_.gn_groups, rng, cfg_.time_dim);
        mid2_.build(ch[L - 1], ch[L - 1], cfg_.gn_groups, rng, cfg_.time_dim);
        up_conv_.resize(static_cast<size_t>(L - 1));
        dec_b1_.resize(static_cast<size_t>(L - 1));
        dec_b2_.resize(static_cast<size_t>(L - 1));
        for (Index i = 0; i < L - 1; ++i) {
            up_conv_[i].build(ch[i + 1], ch[i], 3, 1, 1, rng);
            dec_b1_[i].build(2 * ch[i], ch[i], cfg_.gn_groups, rng, cfg_.time_dim);
            dec_b2_[i].build(ch[i], ch[i], cfg_.gn_groups, rng, cfg_.time_dim);
        }
        head_.build(ch[0], cfg_.out_channels, 1, 1, 0, rng);
        if (cfg_.time_dim > 0) {
            time1_.build(cfg_.time_dim, cfg_.time_dim, rng);
            time2_.build(cfg_.time_dim, cfg_.time_dim, rng);
        }
        if (cfg_.fusion_kind != fusion::Kind::None) {
            fusion::StackConfig fc;
            fc.kind = cfg_.fusion_kind;
            fc.levels = cfg_.fusion_levels();
            fc.embed_dim = cfg_.fusion_embed_dim;
            fc.key_dim = cfg_.fusion_key_dim;
            fc.mlp_hidden = cfg_.fusion_mlp_hidden;
            fc.residual = cfg_.fusion_residual;
            fusion_ = fusion::make_fusion_stack<S>(fc, rng);
            fusion_slot_.assign(static_cast<size_t>(L), -1);
            Index slot = 0;
            for (Index pt : cfg_.active_fusion_points())
                fusion_slot_[static_cast<size_t>(pt)] = slot++;
        }
        collect(registry_, "unet");
    }

    // the registry points into member tensors
    UNet3d(const UNet3d&) = delete;
    UNet3d& operator=(const UNet3d&) = delete;

    const GeneratorConfig& config() const { return cfg_; }
    nn::ParamRegistry<S>& params() { return registry_; }

    void validate_spatial(Index d, Index h, Index w) const {
        const Index div = Index(1) << cfg_.depth_levels;
        for (Index n : {d, h, w})
            if (n % div != 0)
                throw ShapeError("spatial extent " + std::to_string(n) + " not divisible by 2^" +
                                 std::to_string(cfg_.depth_levels));
    }

    bool has_fusion() const { return !fusion_.empty(); }
    fusion::FusionStack<S>& fusion_stack() { return fusion_; }

    TensorT<S> forward(const TensorT<S>& x, const std::vector<long>* timesteps = nullptr,
                       const TensorT<S>* emb = nullptr) {
        if (x.dim(1) != cfg_.in_channels)
            throw ShapeError("unet expects " + std::to_string(cfg_.in_channels) +
                             " input channels, got " + std::to_string(x.dim(1)));
        validate_spatial(x.dim(2), x.dim(3), x.dim(4));
        if (emb && fusion_.empty())
            throw ConfigError("embedding given but the model has no fusion stack");
        if (!fusion_.empty() && !emb)
            throw ConfigError("model has a fusion stack but no embedding was given");

        TensorT<S> temb;
        const TensorT<S>* temb_ptr = nullptr;
        if (cfg_.time_dim > 0) {
            if (!timesteps) throw ConfigError("timestep-conditioned model needs timesteps");
            if (static_cast<Index>(timesteps->size()) != x.dim(0))
                throw ShapeError("one timestep per batch item required");
            for (long t : *timesteps)
                if (t < 0 || t >= cfg_.max_timesteps)
                    throw ValidationError("timestep " + std::to_string(t) + " outside [0," +
                                          std::to_string(cfg_.max_timesteps) + ")");
            TensorT<S> e = ops::timestep_embedding<S>(*timesteps, cfg_.time_dim);
            time_hidden_ = time1_.forward(e);
            temb = time2_.forward(ops::silu_forward(time_hidden_));
            temb_ = temb;
            temb_ptr = &temb_;
        }

        const Index L = cfg_.depth_levels;
        TensorT<S> h = stem_.forward(x);
        skips_.assign(static_cast<size_t>(L - 1), {});
        for (Index i = 0; i < L - 1; ++i) {
            h = enc_b1_[i].forward(h, temb_ptr);
            h = enc_b2_[i].forward(h, temb_ptr);
            skips_[i] = h;
            h = down_[i].forward(h);
        }
        h = mid1_.forward(h, temb_ptr);
        h = mid2_.forward(h, temb_ptr);
        if (fusion_slot(0) >= 0) h = fusion_.at(fusion_slot(0)).forward(h, *emb);
        for (Index i = L - 2; i >= 0; --i) {
            h = ops::upsample2_forward(h);
            h = up_conv_[i].forward(h);
            h = ops::concat_channels(h, skips_[i]);
            h = dec_b1_[i].forward(h, temb_ptr);
            h = dec_b2_[i].forward(h, temb_ptr);
            const Index slot = fusion_slot(L - 1 - i);
            if (slot >= 0) h = fusion_.at(slot).forward(h, *emb);
        }
        h = head_.forward(h);
        if (cfg_.tanh_out) {
            tanh_out_ = ops::tanh_forward(h);
            return tanh_out_;
        }
        return h;
    }

    // Accumulates parameter gradients; returns gradient w.r.t. the input.
    TensorT<S> backward(const TensorT<S>& dy_in) {
        const Index L = cfg_.depth_levels;
        TensorT<S> dy = dy_in;
        if (cfg_.tanh_out) dy = ops::tanh_backward(tanh_out_, dy);
        TensorT<S> dtemb;
        TensorT<S>* dt = nullptr;
        if (cfg_.time_dim > 0) {
            dtemb = TensorT<S>::zeros(temb_.dims());
            dt = &dtemb;
        }
        TensorT<S> dh = head_.backward(dy);
        std::vector<TensorT<S>> dskips(static_cast<size_t>(L - 1));
        for (Index i = 0; i <= L - 2; ++i) {
            const Index slot = fusion_slot(L - 1 - i);
            if (slot >= 0) dh = fusion_.at(slot).backward(dh);
            dh = dec_b2_[i].backward(dh, dt);
            dh = dec_b1_[i].backward(dh, dt);
            auto [dup, dskip] = ops::split_channels(dh, up_conv_[i].cout);
            dskips[i] = std::move(dskip);
            dh = ops::upsample2_backward(up_conv_[i].backward(dup));
        }
        if (fusion_slot(0) >= 0) dh = fusion_.at(fusion_slot(0)).backward(dh);
        dh = mid2_.backward(dh, dt);
        dh = mid1_.backward(dh, dt);
        for (Index i = L - 2; i >= 0; --i) {
            TensorT<S> ds = down_[i].backward(dh);
            ds.array() += dskips[i].array();
            dh = enc_b2_[i].backward(ds, dt);
            dh = enc_b1_[i].backward(dh, dt);
        }
        TensorT<S> dx = stem_.backward(dh);
        if (cfg_.time_dim > 0)
            time1_.backward(ops::silu_backward(time_hidden_, time2_.backward(dtemb)));
        return dx;
    }

    void collect(nn::ParamRegistry<S>& r, const std::string& p) {
        stem_.collect(r, p + ".stem");
        for (size_t i = 0; i < enc_b1_.size(); ++i) {
            const std::string lp = p + ".enc" + std::to_string(i);
            enc_b1_[i].collect(r, lp + ".b1");
            enc_b2_[i].collect(r, lp + ".b2");
            down_[i].collect(r, lp + ".down");
        }
        mid1_.collect(r, p + ".mid1");
        mid2_.collect(r, p + ".mid2");
        for (size_t i = 0; i < dec_b1_.size(); ++i) {
            const std::string lp = p + ".dec" + std::to_string(i);
            up_conv_[i].collect(r, lp + ".up");
            dec_b1_[i].collect(r, lp + ".b1");
            dec_b2_[i].collect(r, lp + ".b2");
        }
        head_.collect(r, p + ".head");
        if (cfg_.time_dim > 0) {
            time1_.collect(r, p + ".time1");
            time2_.collect(r, p + ".time2");
        }
        if (!fusion_.empty()) fusion_.collect(r, p);
    }

  private:
    GeneratorConfig cfg_;
    nn::Conv3d<S> stem_, head_;
    std::vector<nn::ConvBlock<S>> enc_b1_, enc_b2_, dec_b1_, dec_b2_;
    std::vector<nn::Conv3d<S>> down_, up_conv_;
    nn::ConvBlock<S> mid1_, mid2_;
    nn::Linear<S> time1_, time2_;
    fusion::FusionStack<S> fusion_;
    std::vector<Index> fusion_slot_;
    nn::ParamRegistry<S> registry_;

    Index fusion_slot(Index point) const {
        if (fusion_.empty()) return -1;
        return fusion_slot_[static_cast<size_t>(point)];
    }

    // forward caches (one forward in flight per instance)
    std::vector<TensorT<S>> skips_;
    TensorT<S> temb_, time_hidden_, tanh_out_;
};

struct DiscriminatorConfig {
    Index in_channels = 5;  // image + mask one-hot
    Index base_channels = 64;
    Index n_layers = 3;  // number of stride-2 convolutions
    Index gn_groups = 8;
};

// Patch-based volumetric critic: a grid of real-valued scores whose spatial
// extent shrinks by 2^n_layers.
template <typename S>
class PatchDiscriminator {
  public:
    PatchDiscriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        if (cfg.n_layers < 1) throw ConfigError("discriminator needs at least one layer");
        Rng rng(derive_seed(seed, "patch_disc"));
        Index c = cfg.base_channels;
        conv0_.build(cfg.in_channels, c, 4, 2, 1, rng);
        mid_convs_.resize(static_cast<size_t>(cfg.n_layers - 1));
        mid_norms_.resize(static_cast<size_t>(cfg.n_layers - 1));
        for (Index i = 0; i < cfg.n_layers - 1; ++i) {
            mid_convs_[i].build(c, c * 2, 4, 2, 1, rng);
            mid_norms_[i].build(c * 2, cfg.gn_groups);
            c *= 2;
        }
        pre_.build(c, c, 3, 1, 1, rng);
        pre_norm_.build(c, cfg.gn_groups);
        score_.build(c, 1, 3, 1, 1, rng);
        collect(registry_, "disc");
    }

    PatchDiscriminator(const PatchDiscriminator&) = delete;
    PatchDiscriminator& operator=(const PatchDiscriminator&) = delete;

    nn::ParamRegistry<S>& params() { return registry_; }
    const DiscriminatorConfig& config() const { return cfg_; }

    TensorT<S> forward(const TensorT<S>& x) {
        if (x.dim(1) != cfg_.in_channels)
            throw ShapeError("discriminator expects " + std::to_string(cfg_.in_channels) +
                             " channels, got " + std::to_string(x.dim(1)));
        acts_.clear();
        TensorT<S> h = conv0_.forward(x);
        acts_.push_back(h);
        h = ops::leaky_relu_forward(h, slope_);
        for (size_t i = 0; i < mid_convs_.size(); ++i) {
            h = mid_convs_[i].forward(h);
            h = mid_norms_[i].forward(h);
            acts_.push_back(h);
            h = ops::leaky_relu_forward(h, slope_);
        }
        h = pre_.forward(h);
        h = pre_norm_.forward(h);
        acts_.push_back(h);
        h = ops::leaky_relu_forward(h, slope_);
        return score_.forward(h);
    }

    TensorT<S> backward(const TensorT<S>& dscore) {
        TensorT<S> dh = score_.backward(dscore);
        dh = ops::leaky_relu_backward(acts_.back(), dh, slope_);
        dh = pre_norm_.backward(dh);
        dh = pre_.backward(dh);
        for (size_t i = mid_convs_.size(); i-- > 0;) {
            dh = ops::leaky_relu_backward(acts_[i + 1], dh, slope_);
            dh = mid_norms_[i].backward(dh);
            dh = mid_convs_[i].backward(dh);
        }
        dh = ops::leaky_relu_backward(acts_[0], dh, slope_);
        return conv0_.backward(dh);
    }

    void collect(nn::ParamRegistry<S>& r, const std::string& p) {
        conv0_.collect(r, p + ".conv0");
        for (size_t i = 0; i < mid_convs_.size(); ++i) {
            mid_convs_[i].collect(r, p + ".conv" + std::to_string(i + 1));
            mid_norms_[i].collect(r, p + ".norm" + std::to_string(i + 1));
        }
        pre_.collect(r, p + ".pre");
        pre_norm_.collect(r, p + ".pre_norm");
        score_.collect(r, p + ".score");
    }

  private:
    DiscriminatorConfig cfg_;
    S slope_ = S(0.2);
    nn::Conv3d<S> conv0_, pre_, score_;
    std::vector<nn::Conv3d<S>> mid_convs_;
    std::vector<nn::GroupNorm<S>> mid_norms_;
    nn::GroupNorm<S> pre_norm_;
    nn::ParamRegistry<S> registry_;
    std::vector<TensorT<S>> acts_;
};

// Free-function forms of the backbone forwards.

template <typename S>
TensorT<S> unet_forward(UNet3d<S>& net, const TensorT<S>& mask_onehot) {
    return net.forward(mask_onehot);
}

template <typename S>
TensorT<S> pix2pix_forward(UNet3d<S>& net, const TensorT<S>& mask_onehot,
                           const TensorT<S>* embedding = nullptr) {
    return net.forward(mask_onehot, nullptr, embedding);
}

// Input convention: image channels first, then the mask one-hot.
template <typename S>
TensorT<S> discriminator_forward(PatchDiscriminator<S>& disc, const TensorT<S>& image,
                                 const TensorT<S>& mask_onehot) {
    for (int i : {0, 2, 3, 4})
        if (image.dim(i) != mask_onehot.dim(i))
            throw ShapeError("discriminator: image/mask misaligned: " + image.shape_str() +
                             " vs " + mask_onehot.shape_str());
    return disc.forward(ops::concat_channels(image, mask_onehot));
}

// Channel concatenation order: noisy image first, then the mask one-hot.
template <typename S>
TensorT<S> ddpm_unet_forward(UNet3d<S>& net, const TensorT<S>& noisy, const TensorT<S>& mask_onehot,
                             const std::vector<long>& timesteps,
                             const TensorT<S>* embedding = nullptr) {
    return net.forward(ops::concat_channels(noisy, mask_onehot), &timesteps, embedding);
}

}  // namespace voxsyn::backbones
