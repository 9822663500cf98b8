#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "voxsyn/nn.hpp"
#include "voxsyn/tensor.hpp"

// Single binary container: named float64 tensors plus a JSON metadata block
// (config echo, epoch, seed, encoder id). Writes are atomic
// (write-then-rename).

namespace voxsyn::checkpoint {

struct Container {
    nlohmann::json meta;
    std::map<std::string, Tensor> tensors;
};

void save(const std::filesystem::path& path, const Container& c);
Container load(const std::filesystem::path& path);

// Copy registry values into / out of a container. Loading is strict: every
// registered parameter must be present with matching shape.
void store_params(Container& c, const nn::ParamRegistry<Real>& params);
void load_params(const Container& c, nn::ParamRegistry<Real>& params);

}  // namespace voxsyn::checkpoint
