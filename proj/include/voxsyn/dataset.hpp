#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxsyn/tabular.hpp"
#include "voxsyn/volume.hpp"

namespace voxsyn::dataset {

struct SubjectEntry {
    std::string subject_id;
    std::filesystem::path image;
    std::filesystem::path mask;
};

// Manifest: one tab-separated line per subject "subject_id<TAB>image<TAB>mask";
// relative paths resolve against the manifest directory.
std::vector<SubjectEntry> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<SubjectEntry>& entries, const std::filesystem::path& path);

struct Dataset {
    std::vector<volume::VolumeSample> samples;
    std::vector<tabular::TextDescription> texts;  // parallel to samples when text is in use
    bool has_text = false;
};

// Loads every subject; when csv_path is non-empty, clinical records are
// matched by subject_id, validated and rendered.
Dataset load_dataset(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& csv_path, const tabular::Schema& schema,
                     Index num_classes = volume::kDefaultMaskClasses,
                     const volume::NormalizationWindow& window = {});

}  // namespace voxsyn::dataset
