#include "voxsyn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "voxsyn/checkpoint.hpp"

namespace voxsyn::training {

using nlohmann::json;

BackboneKind backbone_from_name(const std::string& name) {
    if (name == "unet") return BackboneKind::Unet;
    if (name == "pix2pix") return BackboneKind::Pix2pix;
    if (name == "ddpm") return BackboneKind::Ddpm;
    throw ConfigError("unknown backbone: " + name);
}

const char* backbone_name(BackboneKind k) {
    switch (k) {
        case BackboneKind::Unet: return "unet";
        case BackboneKind::Pix2pix: return "pix2pix";
        case BackboneKind::Ddpm: return "ddpm";
    }
    return "unet";
}

void TrainConfig::validate() const {
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (decay_start_epoch < 0 || decay_start_epoch >= epochs)
        throw ConfigError("decay_start_epoch must lie in [0, epochs)");
    if (backbone == BackboneKind::Unet && use_text)
        throw ConfigError("the pure U-Net baseline is mask-only; use pix2pix or ddpm for text");
    if (backbone == BackboneKind::Ddpm && timesteps < 1)
        throw ConfigError("timesteps must be positive");
    effective_fusion_kind();
}

fusion::Kind TrainConfig::effective_fusion_kind() const {
    if (!use_text) return fusion::Kind::None;
    if (!fusion_kind.empty()) return fusion::kind_from_name(fusion_kind);
    return backbone == BackboneKind::Ddpm ? fusion::Kind::Affine : fusion::Kind::CrossAttention;
}

double lr_schedule(long epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs)
        throw ValidationError("epoch " + std::to_string(epoch) + " outside [0," +
                              std::to_string(cfg.epochs) + ")");
    if (epoch < cfg.decay_start_epoch) return cfg.lr;
    const double remaining = static_cast<double>(cfg.epochs - epoch);
    const double span = static_cast<double>(cfg.epochs - cfg.decay_start_epoch);
    return cfg.lr * remaining / span;
}

namespace {

backbones::GeneratorConfig make_generator_config(const TrainConfig& cfg, Index embed_dim) {
    backbones::GeneratorConfig g;
    g.base_channels = cfg.base_channels;
    g.depth_levels = cfg.depth_levels;
    g.gn_groups = cfg.gn_groups;
    g.out_channels = 1;
    if (cfg.backbone == BackboneKind::Ddpm) {
        g.in_channels = 1 + cfg.mask_classes;
        g.tanh_out = false;
        g.time_dim = 4 * cfg.base_channels;
        g.max_timesteps = cfg.timesteps;
    } else {
        g.in_channels = cfg.mask_classes;
        g.tanh_out = true;
    }
    const fusion::Kind fk = cfg.effective_fusion_kind();
    if (fk != fusion::Kind::None) {
        g.fusion_kind = fk;
        g.fusion_embed_dim = embed_dim;
        g.fusion_key_dim = cfg.fusion_key_dim;
        g.fusion_mlp_hidden = cfg.fusion_mlp_hidden;
        g.fusion_residual = cfg.fusion_residual;
        g.fusion_points = cfg.fusion_levels;
    }
    return g;
}

diffusion::SigmaMode sigma_from_name(const std::string& s) {
    if (s == "beta") return diffusion::SigmaMode::Beta;
    if (s == "posterior") return diffusion::SigmaMode::PosteriorBeta;
    throw ConfigError("unknown sigma mode: " + s);
}

json gcfg_to_json(const backbones::GeneratorConfig& g) {
    json j;
    j["in_channels"] = g.in_channels;
    j["out_channels"] = g.out_channels;
    j["base_channels"] = g.base_channels;
    j["depth_levels"] = g.depth_levels;
    j["gn_groups"] = g.gn_groups;
    j["tanh_out"] = g.tanh_out;
    j["time_dim"] = g.time_dim;
    j["max_timesteps"] = g.max_timesteps;
    j["fusion_kind"] = fusion::kind_name(g.fusion_kind);
    j["fusion_embed_dim"] = g.fusion_embed_dim;
    j["fusion_key_dim"] = g.fusion_key_dim;
    j["fusion_mlp_hidden"] = g.fusion_mlp_hidden;
    j["fusion_residual"] = g.fusion_residual;
    j["fusion_points"] = g.fusion_points;
    return j;
}

backbones::GeneratorConfig gcfg_from_json(const json& j) {
    backbones::GeneratorConfig g;
    g.in_channels = j.at("in_channels").get<Index>();
    g.out_channels = j.at("out_channels").get<Index>();
    g.base_channels = j.at("base_channels").get<Index>();
    g.depth_levels = j.at("depth_levels").get<Index>();
    g.gn_groups = j.at("gn_groups").get<Index>();
    g.tanh_out = j.at("tanh_out").get<bool>();
    g.time_dim = j.at("time_dim").get<Index>();
    g.max_timesteps = j.at("max_timesteps").get<long>();
    g.fusion_kind = fusion::kind_from_name(j.at("fusion_kind").get<std::string>());
    g.fusion_embed_dim = j.at("fusion_embed_dim").get<Index>();
    g.fusion_key_dim = j.at("fusion_key_dim").get<Index>();
    g.fusion_mlp_hidden = j.at("fusion_mlp_hidden").get<Index>();
    g.fusion_residual = j.at("fusion_residual").get<bool>();
    g.fusion_points = j.value("fusion_points", std::vector<Index>{});
    return g;
}

std::string u64_hex(std::uint64_t v) { return hex64(v); }

std::uint64_t hex_u64(const std::string& s) { return std::stoull(s, nullptr, 16); }

json rng_to_json(const Rng& rng) {
    json j;
    json st = json::array();
    for (auto w : rng.state()) st.push_back(u64_hex(w));
    j["state"] = st;
    j["has_spare"] = rng.has_spare();
    std::uint64_t bits = 0;
    const double sp = rng.spare();
    std::memcpy(&bits, &sp, 8);
    j["spare_bits"] = u64_hex(bits);
    return j;
}

void rng_from_json(const json& j, Rng& rng) {
    std::array<std::uint64_t, 4> st{};
    for (int i = 0; i < 4; ++i) st[static_cast<size_t>(i)] = hex_u64(j.at("state")[i]);
    std::uint64_t bits = hex_u64(j.at("spare_bits").get<std::string>());
    double sp = 0;
    std::memcpy(&sp, &bits, 8);
    rng.restore(st, j.at("has_spare").get<bool>(), sp);
}

void store_adam(checkpoint::Container& c, const std::string& tag, const nn::Adam<Real>& adam,
                const nn::ParamRegistry<Real>& params) {
    c.meta["opt_" + tag + "_t"] = adam.step_count();
    const auto& m = adam.moments_m();
    const auto& v = adam.moments_v();
    for (size_t i = 0; i < m.size(); ++i) {
        const std::string& name = params.refs()[i].name;
        c.tensors["opt." + tag + ".m." + name] = m[i];
        c.tensors["opt." + tag + ".v." + name] = v[i];
    }
}

void load_adam(const checkpoint::Container& c, const std::string& tag, nn::Adam<Real>& adam,
               const nn::ParamRegistry<Real>& params) {
    if (!c.meta.contains("opt_" + tag + "_t")) return;  // fresh optimizer
    std::vector<Tensor> m, v;
    for (const auto& r : params.refs()) {
        auto im = c.tensors.find("opt." + tag + ".m." + r.name);
        auto iv = c.tensors.find("opt." + tag + ".v." + r.name);
        if (im == c.tensors.end() || iv == c.tensors.end())
            throw IoError("checkpoint misses optimizer state for " + r.name);
        m.push_back(im->second);
        v.push_back(iv->second);
    }
    adam.restore(std::move(m), std::move(v), c.meta["opt_" + tag + "_t"].get<long>());
}

struct Batch {
    Tensor real;    // (B, 1, z, y, x)
    Tensor maskoh;  // (B, K, z, y, x)
    Tensor emb;     // (B, E) when text in use
    bool has_emb = false;
};

Batch make_batch(const dataset::Dataset& ds, const std::vector<size_t>& idx,
                 const TrainConfig& cfg, const std::vector<embedding::TextEmbedding>& embs,
                 Rng& rng) {
    const Index B = static_cast<Index>(idx.size());
    const auto& sz = cfg.crop.size;
    Batch b;
    b.real.resize({B, 1, sz[0], sz[1], sz[2]});
    TensorT<int> masks({B, sz[0], sz[1], sz[2]});
    for (Index i = 0; i < B; ++i) {
        crops::Crop c = crops::random_crop(ds.samples[idx[static_cast<size_t>(i)]], cfg.crop, rng);
        std::copy(c.image.data(), c.image.data() + c.image.size(),
                  b.real.data() + i * c.image.size());
        std::copy(c.mask.data(), c.mask.data() + c.mask.size(),
                  masks.data() + i * c.mask.size());
    }
    b.maskoh = ops::one_hot<Real>(masks, cfg.mask_classes);
    if (!embs.empty()) {
        b.has_emb = true;
        const Index E = embs.front().dimension();
        b.emb.resize({B, E});
        for (Index i = 0; i < B; ++i) {
            const auto& e = embs[idx[static_cast<size_t>(i)]];
            for (Index k = 0; k < E; ++k)
                b.emb(i, k) = static_cast<double>(e.vector[static_cast<size_t>(k)]);
        }
    }
    return b;
}

struct LossLog {
    std::ofstream csv;
    long step = 0;

    explicit LossLog(const std::filesystem::path& path) : csv(path) {
        if (!csv) throw IoError("cannot write loss history: " + path.string());
        csv << "step,term,value\n";
    }
    void add(const std::string& term, double value) {
        csv << step << ',' << term << ',' << value << '\n';
        if (!std::isfinite(value))
            throw NumericalError("non-finite " + term + " at step " + std::to_string(step));
    }
};

}  // namespace

GeneratorBundle build_generator(const TrainConfig& cfg, Index embed_dim,
                                const std::string& encoder_id) {
    cfg.validate();
    GeneratorBundle b;
    b.kind = cfg.backbone;
    b.use_text = cfg.use_text;
    b.mask_classes = cfg.mask_classes;
    b.embed_dim = cfg.use_text ? embed_dim : 0;
    b.encoder_id = cfg.use_text ? encoder_id : "";
    b.gcfg = make_generator_config(cfg, b.embed_dim);
    b.net = std::make_unique<backbones::UNet3d<Real>>(b.gcfg, cfg.seed);
    if (cfg.backbone == BackboneKind::Ddpm) {
        b.schedule = diffusion::make_schedule(cfg.beta_schedule, cfg.timesteps);
        b.sigma_mode = sigma_from_name(cfg.sigma_mode);
        b.meta["diffusion"] = {{"T", cfg.timesteps},
                               {"beta_schedule", cfg.beta_schedule},
                               {"sigma_mode", cfg.sigma_mode}};
    }
    b.meta["backbone"] = backbone_name(cfg.backbone);
    b.meta["use_text"] = cfg.use_text;
    b.meta["mask_classes"] = cfg.mask_classes;
    b.meta["embed_dim"] = b.embed_dim;
    b.meta["encoder_id"] = b.encoder_id;
    b.meta["arch"] = gcfg_to_json(b.gcfg);
    b.meta["init_seed"] = cfg.seed;
    return b;
}

GeneratorBundle load_generator(const std::filesystem::path& checkpoint_path) {
    checkpoint::Container c = checkpoint::load(checkpoint_path);
    if (c.meta.value("format", "") != "voxsyn-checkpoint")
        throw IoError("not a model checkpoint: " + checkpoint_path.string());
    GeneratorBundle b;
    b.kind = backbone_from_name(c.meta.at("backbone").get<std::string>());
    b.use_text = c.meta.at("use_text").get<bool>();
    b.mask_classes = c.meta.at("mask_classes").get<Index>();
    b.embed_dim = c.meta.at("embed_dim").get<Index>();
    b.encoder_id = c.meta.value("encoder_id", "");
    b.gcfg = gcfg_from_json(c.meta.at("arch"));
    b.net = std::make_unique<backbones::UNet3d<Real>>(b.gcfg, c.meta.value("init_seed", 0ull));
    checkpoint::load_params(c, b.net->params());
    if (b.kind == BackboneKind::Ddpm) {
        const auto& dj = c.meta.at("diffusion");
        b.schedule = diffusion::make_schedule(dj.at("beta_schedule").get<std::string>(),
                                              dj.at("T").get<long>());
        b.sigma_mode = sigma_from_name(dj.at("sigma_mode").get<std::string>());
    }
    b.meta = c.meta;
    return b;
}

Tensor synthesize_crop(GeneratorBundle& g, const TensorT<int>& mask_crop,
                       const embedding::TextEmbedding* emb, Rng& rng) {
    if (g.use_text && !emb)
        throw ConfigError("model was trained with text conditioning; an embedding is required");
    if (!g.use_text && emb)
        throw ConfigError("model has no text pathway but an embedding was given");
    TensorT<int> m4 = mask_crop.reshaped({1, mask_crop.dim(0), mask_crop.dim(1), mask_crop.dim(2)});
    Tensor maskoh = ops::one_hot<Real>(m4, g.mask_classes);
    Tensor e;
    const Tensor* ep = nullptr;
    if (emb) {
        e = emb->as_tensor();
        ep = &e;
    }
    if (g.kind == BackboneKind::Ddpm) {
        diffusion::SampleOptions opt;
        opt.sigma_mode = g.sigma_mode;
        return diffusion::sample<Real>(*g.net, maskoh, ep, g.schedule, rng,
                                       {1, 1, mask_crop.dim(0), mask_crop.dim(1), mask_crop.dim(2)},
                                       opt);
    }
    return g.net->forward(maskoh, nullptr, ep);
}

namespace {

struct TrainerState {
    GeneratorBundle gen;
    std::unique_ptr<backbones::PatchDiscriminator<Real>> disc;
    nn::Adam<Real> adam_g{{.lr = 0, .beta1 = 0.5, .beta2 = 0.999}};
    nn::Adam<Real> adam_d{{.lr = 0, .beta1 = 0.5, .beta2 = 0.999}};
    Rng data_rng, noise_rng;
    long next_epoch = 0;
};

void save_train_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg,
                           TrainerState& st, long epochs_done, long steps, double last_loss) {
    checkpoint::Container c;
    c.meta = st.gen.meta;
    c.meta["format"] = "voxsyn-checkpoint";
    c.meta["version"] = 1;
    c.meta["epoch"] = epochs_done;
    c.meta["steps"] = steps;
    c.meta["seed"] = cfg.seed;
    c.meta["last_loss"] = last_loss;
    c.meta["train"] = {{"lr", cfg.lr},
                       {"batch_size", cfg.batch_size},
                       {"epochs", cfg.epochs},
                       {"decay_start_epoch", cfg.decay_start_epoch},
                       {"adv_weight", cfg.adv_weight},
                       {"l1_weight", cfg.l1_weight}};
    c.meta["rng_data"] = rng_to_json(st.data_rng);
    c.meta["rng_noise"] = rng_to_json(st.noise_rng);
    checkpoint::store_params(c, st.gen.net->params());
    store_adam(c, "g", st.adam_g, st.gen.net->params());
    if (st.disc) {
        checkpoint::store_params(c, st.disc->params());
        store_adam(c, "d", st.adam_d, st.disc->params());
    }
    checkpoint::save(path, c);
}

}  // namespace

TrainResult train_model(const TrainConfig& cfg, const dataset::Dataset& ds,
                        const embedding::EncoderHandle* encoder,
                        const std::filesystem::path& run_dir,
                        const std::filesystem::path& resume_from) {
    cfg.validate();
    if (ds.samples.empty()) throw ValidationError("training dataset is empty");
    if (cfg.use_text) {
        if (!encoder) throw ConfigError("use_text requires an encoder");
        if (!ds.has_text) throw ConfigError("use_text requires clinical records in the dataset");
    }
    std::filesystem::create_directories(run_dir);

    // embeddings precomputed once per subject (the cache makes re-runs free)
    std::vector<embedding::TextEmbedding> embs;
    if (cfg.use_text)
        for (const auto& t : ds.texts) embs.push_back(encoder->embed(t.text));

    TrainerState st;
    st.gen = build_generator(cfg, cfg.use_text ? encoder->config().dimension : 0,
                             cfg.use_text ? encoder->config().encoder_id : "");
    st.gen.net->validate_spatial(cfg.crop.size[0], cfg.crop.size[1], cfg.crop.size[2]);
    if (cfg.backbone == BackboneKind::Pix2pix) {
        backbones::DiscriminatorConfig dc;
        dc.in_channels = 1 + cfg.mask_classes;
        dc.base_channels = cfg.disc_base;
        dc.n_layers = cfg.disc_layers;
        dc.gn_groups = cfg.gn_groups;
        st.disc = std::make_unique<backbones::PatchDiscriminator<Real>>(dc, cfg.seed + 1);
    }
    const nn::AdamConfig gan_adam{.lr = 0, .beta1 = 0.5, .beta2 = 0.999};
    const nn::AdamConfig ddpm_adam{.lr = 0, .beta1 = 0.9, .beta2 = 0.999};
    st.adam_g = nn::Adam<Real>(cfg.backbone == BackboneKind::Ddpm ? ddpm_adam : gan_adam);
    st.adam_d = nn::Adam<Real>(gan_adam);
    st.data_rng.reseed(derive_seed(cfg.seed, "train_data"));
    st.noise_rng.reseed(derive_seed(cfg.seed, "train_noise"));

    if (!resume_from.empty()) {
        checkpoint::Container c = checkpoint::load(resume_from);
        checkpoint::load_params(c, st.gen.net->params());
        load_adam(c, "g", st.adam_g, st.gen.net->params());
        if (st.disc) {
            checkpoint::load_params(c, st.disc->params());
            load_adam(c, "d", st.adam_d, st.disc->params());
        }
        rng_from_json(c.meta.at("rng_data"), st.data_rng);
        rng_from_json(c.meta.at("rng_noise"), st.noise_rng);
        st.next_epoch = c.meta.at("epoch").get<long>();
    }

    LossLog log(run_dir / "loss_history.csv");
    std::ofstream progress(run_dir / "train_log.txt", std::ios::app);
    TrainResult result;
    result.steps = 0;
    double last_primary = 0.0;
    bool first_recorded = false;
    const std::filesystem::path final_path = run_dir / "final.vxc";

    std::vector<size_t> order(ds.samples.size());
    std::iota(order.begin(), order.end(), size_t(0));

    try {
        for (long epoch = st.next_epoch; epoch < cfg.epochs; ++epoch) {
            const double lr = lr_schedule(epoch, cfg);
            // seeded shuffle
            for (size_t i = order.size(); i > 1; --i) {
                const size_t j = st.data_rng.uniform_index(i);
                std::swap(order[i - 1], order[j]);
            }
            double epoch_loss = 0.0;
            long epoch_batches = 0;
            for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch_size)) {
                std::vector<size_t> idx(order.begin() + static_cast<long>(pos),
                                        order.begin() +
                                            static_cast<long>(std::min(
                                                pos + static_cast<size_t>(cfg.batch_size),
                                                order.size())));
                Batch b = make_batch(ds, idx, cfg, embs, st.data_rng);
                const Tensor* ep = b.has_emb ? &b.emb : nullptr;
                ++log.step;
                ++result.steps;
                double primary = 0.0;

                if (cfg.backbone == BackboneKind::Ddpm) {
                    diffusion::TrainingDraw<Real> draw =
                        diffusion::make_training_draw(b.real, st.gen.schedule, st.noise_rng);
                    st.gen.net->params().zero_grads();
                    Tensor pred = backbones::ddpm_unet_forward(*st.gen.net, draw.xt, b.maskoh,
                                                               draw.ts, ep);
                    Tensor dpred;
                    const double loss = ops::mse_loss(pred, draw.eps, &dpred);
                    st.gen.net->backward(dpred);
                    st.adam_g.step(st.gen.net->params(), lr);
                    log.add("ddpm_mse", loss);
                    primary = loss;
                } else if (cfg.backbone == BackboneKind::Unet) {
                    st.gen.net->params().zero_grads();
                    Tensor fake = st.gen.net->forward(b.maskoh, nullptr, ep);
                    Tensor dfake;
                    const double loss = ops::l1_loss(fake, b.real, &dfake);
                    st.gen.net->backward(dfake);
                    st.adam_g.step(st.gen.net->params(), lr);
                    log.add("l1", loss);
                    primary = loss;
                } else {
                    // generator forward
                    Tensor fake = st.gen.net->forward(b.maskoh, nullptr, ep);
                    // discriminator update
                    st.disc->params().zero_grads();
                    Tensor s_real = st.disc->forward(ops::concat_channels(b.real, b.maskoh));
                    Tensor ds_real;
                    const double d_real = ops::mse_to_constant(s_real, 1.0, &ds_real);
                    ds_real.array() *= 0.5;
                    st.disc->backward(ds_real);
                    Tensor s_fake = st.disc->forward(ops::concat_channels(fake, b.maskoh));
                    Tensor ds_fake;
                    const double d_fake = ops::mse_to_constant(s_fake, 0.0, &ds_fake);
                    ds_fake.array() *= 0.5;
                    st.disc->backward(ds_fake);
                    st.adam_d.step(st.disc->params(), lr);
                    log.add("d_real", d_real);
                    log.add("d_fake", d_fake);

                    // generator update: adversarial + L1
                    st.gen.net->params().zero_grads();
                    st.disc->params().zero_grads();
                    Tensor s_adv = st.disc->forward(ops::concat_channels(fake, b.maskoh));
                    Tensor ds_adv;
                    const double g_adv = ops::mse_to_constant(s_adv, 1.0, &ds_adv);
                    ds_adv.array() *= cfg.adv_weight;
                    Tensor dinput = st.disc->backward(ds_adv);
                    auto [dfake_adv, dmask_unused] = ops::split_channels(dinput, 1);
                    Tensor dfake_l1;
                    const double g_l1 = ops::l1_loss(fake, b.real, &dfake_l1);
                    Tensor dfake(dfake_adv.dims());
                    for (Index i = 0; i < dfake.size(); ++i)
                        dfake[i] = dfake_adv[i] + cfg.l1_weight * dfake_l1[i];
                    st.gen.net->backward(dfake);
                    st.adam_g.step(st.gen.net->params(), lr);
                    st.disc->params().zero_grads();
                    log.add("g_adv", g_adv);
                    log.add("g_l1", g_l1);
                    primary = g_l1;
                }

                if (!first_recorded) {
                    result.first_primary_loss = primary;
                    first_recorded = true;
                }
                last_primary = primary;
                epoch_loss += primary;
                ++epoch_batches;
            }
            {
                std::ostringstream rec;
                rec << "{\"epoch\":" << epoch << ",\"lr\":" << lr << ",\"mean_primary\":"
                    << (epoch_loss / std::max(1L, epoch_batches)) << "}";
                progress << rec.str() << "\n";
                progress.flush();
                const long cadence = std::max(1L, cfg.epochs / 10);
                if (epoch % cadence == 0 || epoch + 1 == cfg.epochs)
                    std::cout << rec.str() << "\n";
            }
            result.epochs_run = epoch + 1;
            if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
                epoch + 1 < cfg.epochs) {
                char name[32];
                std::snprintf(name, sizeof(name), "epoch_%06ld.vxc", epoch + 1);
                save_train_checkpoint(run_dir / name, cfg, st, epoch + 1, result.steps,
                                      last_primary);
            }
        }
    } catch (const NumericalError&) {
        // keep whatever periodic checkpoint exists; mark the abort and rethrow
        std::ofstream(run_dir / "ABORTED") << "numerical failure; last good checkpoints retained\n";
        throw;
    }

    save_train_checkpoint(final_path, cfg, st, cfg.epochs, result.steps, last_primary);
    result.final_checkpoint = final_path;
    result.last_primary_loss = last_primary;
    return result;
}

TrainResult train_pix2pix(TrainConfig cfg, const dataset::Dataset& ds,
                          const embedding::EncoderHandle* encoder,
                          const std::filesystem::path& run_dir) {
    cfg.backbone = BackboneKind::Pix2pix;
    return train_model(cfg, ds, encoder, run_dir);
}

TrainResult train_ddpm(TrainConfig cfg, const dataset::Dataset& ds,
                       const embedding::EncoderHandle* encoder,
                       const std::filesystem::path& run_dir) {
    cfg.backbone = BackboneKind::Ddpm;
    return train_model(cfg, ds, encoder, run_dir);
}

}  // namespace voxsyn::training
