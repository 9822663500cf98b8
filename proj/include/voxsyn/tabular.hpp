#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voxsyn/tensor.hpp"

// Declarative tabular-to-text conversion. A schema lists the attributes in
// rendering order; each row becomes one sentence per present-and-valid
// attribute, and anything missing or out of range is simply omitted.

namespace voxsyn::tabular {

enum class AttrKind { Categorical, Numeric, Boolean };

struct AttributeSchema {
    std::string name;
    AttrKind kind = AttrKind::Categorical;
    std::vector<std::string> valid_values;  // categorical; empty = free-text passthrough
    double min_value = 0.0;                 // numeric range, inclusive
    double max_value = 0.0;
    std::string phrase_template;  // exactly one {v} placeholder

    void validate() const;
};

using Schema = std::vector<AttributeSchema>;

struct ClinicalRecord {
    std::string subject_id;
    std::map<std::string, std::string> values;  // absent attribute = absent key

    bool has(const std::string& name) const { return values.count(name) > 0; }
};

struct TextDescription {
    std::string text;
    std::vector<std::string> rendered_attributes;  // schema order
};

// Pinned defaults: age [0,120], gender {male,female}, smoker {yes,no,ex-smoker},
// diagnosis free-text passthrough.
Schema default_schema();

Schema load_schema(const std::filesystem::path& path);
void save_schema(const Schema& schema, const std::filesystem::path& path);

// True when `value` parses and lies in the attribute's valid set/range.
bool value_valid(const AttributeSchema& attr, const std::string& value);

// Replaces out-of-range or malformed values by absent; in-range values pass
// through unchanged. Unknown attribute names are an error.
ClinicalRecord validate_record(const ClinicalRecord& record, const Schema& schema);

// Sentence-per-attribute rendering in schema order; present-and-valid
// attributes only. An empty record renders the fixed fallback sentence.
TextDescription render_record(const ClinicalRecord& record, const Schema& schema);

std::vector<TextDescription> render_table(const std::vector<ClinicalRecord>& records,
                                          const Schema& schema);

inline constexpr const char* kEmptyRecordText = "A patient.";

// CSV ingestion: header row, a subject_id column, empty cell = absent.
// strict: any non-schema column is an error; otherwise extra columns are
// ignored.
std::vector<ClinicalRecord> records_from_csv(const std::filesystem::path& path,
                                             const Schema& schema, bool strict = true);

void write_texts(const std::vector<TextDescription>& texts, const std::filesystem::path& path);

// Sidecar manifest: subject_id -> rendered_attributes (JSON).
void write_render_manifest(const std::vector<ClinicalRecord>& records,
                           const std::vector<TextDescription>& texts,
                           const std::filesystem::path& path);

}  // namespace voxsyn::tabular
