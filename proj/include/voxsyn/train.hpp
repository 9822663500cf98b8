#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "json.hpp"
#include "voxsyn/crops.hpp"
#include "voxsyn/dataset.hpp"
#include "voxsyn/diffusion.hpp"
#include "voxsyn/embedding.hpp"
#include "voxsyn/unet.hpp"

namespace voxsyn::training {

enum class BackboneKind { Unet, Pix2pix, Ddpm };

BackboneKind backbone_from_name(const std::string& name);
const char* backbone_name(BackboneKind k);

struct TrainConfig {
    BackboneKind backbone = BackboneKind::Pix2pix;
    bool use_text = false;
    double lr = 1e-4;  // 1e-5 for the diffusion backbone
    Index batch_size = 2;
    long epochs = 1800;
    long decay_start_epoch = 800;
    std::uint64_t seed = 17;

    // architecture
    Index mask_classes = 4;
    Index base_channels = 32;
    Index depth_levels = 4;
    Index gn_groups = 8;

    // data
    crops::CropSpec crop;

    // adversarial objective
    double adv_weight = 1.0;
    double l1_weight = 100.0;
    Index disc_base = 64;
    Index disc_layers = 3;

    // diffusion
    long timesteps = 250;
    std::string beta_schedule = "linear";
    std::string sigma_mode = "beta";

    // fusion (kind is per-backbone: cross-attention in the GAN, affine in the
    // diffusion model; both overridable)
    std::string fusion_kind;  // empty = backbone default
    std::vector<Index> fusion_levels;  // attachment points; empty = all
    Index fusion_key_dim = 0;
    Index fusion_mlp_hidden = 0;
    bool fusion_residual = true;

    long checkpoint_every = 0;  // epochs between periodic checkpoints; 0 = final only

    void validate() const;
    fusion::Kind effective_fusion_kind() const;
};

double lr_schedule(long epoch, const TrainConfig& cfg);

// A generator plus everything needed to run it: architecture config, the
// diffusion schedule when applicable, and the conditioning contract.
struct GeneratorBundle {
    BackboneKind kind = BackboneKind::Unet;
    bool use_text = false;
    Index mask_classes = 4;
    Index embed_dim = 0;
    std::string encoder_id;
    backbones::GeneratorConfig gcfg;
    std::unique_ptr<backbones::UNet3d<Real>> net;
    diffusion::NoiseSchedule schedule;  // valid when kind == Ddpm
    diffusion::SigmaMode sigma_mode = diffusion::SigmaMode::Beta;
    nlohmann::json meta;  // checkpoint echo
};

GeneratorBundle build_generator(const TrainConfig& cfg, Index embed_dim,
                                const std::string& encoder_id);
GeneratorBundle load_generator(const std::filesystem::path& checkpoint_path);

// One synthesized crop from a mask crop (plus text when the model uses it).
// GAN/U-Net generators are deterministic; the diffusion model consumes rng.
Tensor synthesize_crop(GeneratorBundle& g, const TensorT<int>& mask_crop,
                       const embedding::TextEmbedding* emb, Rng& rng);

struct TrainResult {
    std::filesystem::path final_checkpoint;
    long steps = 0;
    long epochs_run = 0;
    double first_primary_loss = 0.0;
    double last_primary_loss = 0.0;
};

// Full training loop with seeded determinism, periodic checkpointing, a loss
// history CSV and a progress log; NaN losses abort with the last good
// checkpoint retained. `resume_from` continues a run bitwise.
TrainResult train_model(const TrainConfig& cfg, const dataset::Dataset& ds,
                        const embedding::EncoderHandle* encoder,
                        const std::filesystem::path& run_dir,
                        const std::filesystem::path& resume_from = {});

// Free-function entry points for the two adversarial/diffusion trainers.
TrainResult train_pix2pix(TrainConfig cfg, const dataset::Dataset& ds,
                          const embedding::EncoderHandle* encoder,
                          const std::filesystem::path& run_dir);
TrainResult train_ddpm(TrainConfig cfg, const dataset::Dataset& ds,
                       const embedding::EncoderHandle* encoder,
                       const std::filesystem::path& run_dir);

}  // namespace voxsyn::training
