#include "voxsyn/crops.hpp"

#include <algorithm>

namespace voxsyn::crops {

namespace {

struct Candidate {
    std::array<Index, 3> offset;
    double score = -1.0;
    bool satisfied = false;
};

Candidate evaluate_offset(const volume::VolumeSample& s, const CropSpec& spec,
                          const std::array<Index, 3>& off) {
    Candidate c;
    c.offset = off;
    if (!spec.has_criteria()) {
        c.score = 1.0;
        c.satisfied = true;
        return c;
    }
    std::map<int, long> counts;
    for (const auto& [cls, need] : spec.min_mask_voxels) counts[cls] = 0;
    for (const auto& g : spec.min_group_voxels)
        for (int cls : g.classes) counts[cls] = 0;
    for (Index z = 0; z < spec.size[0]; ++z)
        for (Index y = 0; y < spec.size[1]; ++y)
            for (Index x = 0; x < spec.size[2]; ++x) {
                auto it = counts.find(s.mask(off[0] + z, off[1] + y, off[2] + x));
                if (it != counts.end()) ++it->second;
            }
    double score = 0.0;
    bool ok = true;
    auto apply = [&](long have, long need) {
        if (need <= 0) {
            score += 1.0;
            return;
        }
        score += std::min(static_cast<double>(have) / static_cast<double>(need), 1.0);
        if (have < need) ok = false;
    };
    for (const auto& [cls, need] : spec.min_mask_voxels) apply(counts[cls], need);
    for (const auto& g : spec.min_group_voxels) {
        long have = 0;
        for (int cls : g.classes) have += counts[cls];
        apply(have, g.min_voxels);
    }
    c.score = score;
    c.satisfied = ok;
    return c;
}

Crop extract(const volume::VolumeSample& s, const CropSpec& spec,
             const std::array<Index, 3>& off) {
    Crop c;
    c.offset = off;
    c.image.resize({spec.size[0], spec.size[1], spec.size[2]});
    c.mask.resize({spec.size[0], spec.size[1], spec.size[2]});
    for (Index z = 0; z < spec.size[0]; ++z)
        for (Index y = 0; y < spec.size[1]; ++y)
            for (Index x = 0; x < spec.size[2]; ++x) {
                c.image(z, y, x) = s.image(off[0] + z, off[1] + y, off[2] + x);
                c.mask(z, y, x) = s.mask(off[0] + z, off[1] + y, off[2] + x);
            }
    return c;
}

}  // namespace

Crop random_crop(const volume::VolumeSample& sample, const CropSpec& spec, Rng& rng) {
    if (spec.max_attempts < 1) throw ConfigError("crop max_attempts must be positive");
    std::array<Index, 3> room{};
    for (int a = 0; a < 3; ++a) {
        room[a] = sample.image.dim(a) - spec.size[static_cast<size_t>(a)];
        if (spec.size[static_cast<size_t>(a)] <= 0 || room[a] < 0)
            throw ShapeError("volume " + sample.image.shape_str() + " smaller than crop (" +
                             std::to_string(spec.size[0]) + "," + std::to_string(spec.size[1]) +
                             "," + std::to_string(spec.size[2]) + ") for subject " +
                             sample.subject_id);
    }
    Candidate best;
    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
        std::array<Index, 3> off{};
        for (int a = 0; a < 3; ++a)
            off[a] = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(room[a] + 1)));
        Candidate c = evaluate_offset(sample, spec, off);
        if (c.satisfied) {
            Crop crop = extract(sample, spec, off);
            crop.fallback = false;
            return crop;
        }
        if (c.score > best.score) best = c;
    }
    Crop crop = extract(sample, spec, best.offset);
    crop.fallback = true;
    return crop;
}

std::vector<Crop> eval_crops(const volume::VolumeSample& sample, const CropSpec& spec,
                             std::uint64_t global_seed, int n) {
    const std::uint64_t seed =
        derive_seed(derive_seed(global_seed, "eval_crops"), sample.subject_id);
    Rng rng(seed);
    std::vector<Crop> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(random_crop(sample, spec, rng));
    return out;
}

}  // namespace voxsyn::crops
