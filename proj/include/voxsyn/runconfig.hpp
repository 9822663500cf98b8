#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "voxsyn/crops.hpp"
#include "voxsyn/embedding.hpp"
#include "voxsyn/evaluate.hpp"
#include "voxsyn/train.hpp"
#include "voxsyn/volume.hpp"

// Layered run configuration: defaults <- preset <- config file <- environment
// <- --set pairs <- dedicated flags. Unknown keys are rejected, and the
// effective tree is echoed into every artifact directory.

namespace voxsyn::runconfig {

using nlohmann::json;

json defaults();

// "full" (crop 256x256x64, 1800 epochs) or "desk" (8-16^3 volumes, minutes
// on CPU).
json preset_overlay(const std::string& name);

// Recursive merge; a key absent from `base` is a ConfigError naming its path.
void merge_validated(json& base, const json& overlay, const std::string& path = "");

json load_config_file(const std::filesystem::path& path);

// VOXSYN_<SECTION>_<KEY>=value (upper-case, '_' separating path segments).
void apply_environment(json& cfg, const char* prefix = "VOXSYN_");

// "section.key=value"; value parsed as JSON when possible, else as a string.
void apply_set_pair(json& cfg, const std::string& pair);

void write_echo(const json& cfg, const std::filesystem::path& dir);

// Typed views over the merged tree.
training::TrainConfig train_config(const json& cfg);
crops::CropSpec crop_spec(const json& cfg);
volume::NormalizationWindow window(const json& cfg);
embedding::EncoderConfig encoder_config(const json& cfg);
evaluation::EvalProtocol eval_protocol(const json& cfg);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace voxsyn::runconfig
