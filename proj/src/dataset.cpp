#include "voxsyn/dataset.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace voxsyn::dataset {

std::vector<SubjectEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset manifest: " + path.string());
    const std::filesystem::path base = path.parent_path();
    std::vector<SubjectEntry> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        SubjectEntry e;
        std::string img, msk;
        if (!std::getline(ls, e.subject_id, '\t') || !std::getline(ls, img, '\t') ||
            !std::getline(ls, msk, '\t'))
            throw ValidationError("manifest line " + std::to_string(lineno) +
                                  " needs subject_id<TAB>image<TAB>mask: " + path.string());
        const std::filesystem::path imgp(img), mskp(msk);
        e.image = imgp.is_absolute() ? imgp : base / imgp;
        e.mask = mskp.is_absolute() ? mskp : base / mskp;
        out.push_back(std::move(e));
    }
    if (out.empty()) throw ValidationError("dataset manifest is empty: " + path.string());
    return out;
}

void write_manifest(const std::vector<SubjectEntry>& entries,
                    const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset manifest: " + path.string());
    for (const auto& e : entries)
        out << e.subject_id << '\t' << e.image.string() << '\t' << e.mask.string() << '\n';
}

Dataset load_dataset(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& csv_path, const tabular::Schema& schema,
                     Index num_classes, const volume::NormalizationWindow& window) {
    const auto entries = load_manifest(manifest_path);
    std::map<std::string, tabular::ClinicalRecord> by_id;
    Dataset ds;
    ds.has_text = !csv_path.empty();
    if (ds.has_text) {
        for (auto& r : tabular::records_from_csv(csv_path, schema))
            by_id[r.subject_id] = std::move(r);
    }
    for (const auto& e : entries) {
        tabular::ClinicalRecord record;
        record.subject_id = e.subject_id;
        if (ds.has_text) {
            auto it = by_id.find(e.subject_id);
            if (it == by_id.end())
                throw ValidationError("subject '" + e.subject_id + "' missing from " +
                                      csv_path.string());
            record = tabular::validate_record(it->second, schema);
        }
        ds.samples.push_back(volume::load_sample(e.image, e.mask, record, num_classes, window));
        if (ds.has_text) ds.texts.push_back(tabular::render_record(record, schema));
    }
    return ds;
}

}  // namespace voxsyn::dataset
