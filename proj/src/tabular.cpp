#include "voxsyn/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "json.hpp"
#include "voxsyn/csvio.hpp"

namespace voxsyn::tabular {

using nlohmann::json;

void AttributeSchema::validate() const {
    if (name.empty()) throw ConfigError("attribute name must be non-empty");
    size_t first = phrase_template.find("{v}");
    if (first == std::string::npos)
        throw ConfigError("template for '" + name + "' lacks the {v} placeholder");
    if (phrase_template.find("{v}", first + 1) != std::string::npos)
        throw ConfigError("template for '" + name + "' has more than one {v} placeholder");
    if (kind == AttrKind::Numeric && !(min_value <= max_value))
        throw ConfigError("numeric range for '" + name + "' is empty");
}

Schema default_schema() {
    Schema s;
    s.push_back({"gender", AttrKind::Categorical, {"male", "female"}, 0, 0,
                 "The patient is {v}."});
    s.push_back({"age", AttrKind::Numeric, {}, 0.0, 120.0, "The patient is {v} years old."});
    s.push_back({"smoker", AttrKind::Categorical, {"yes", "no", "ex-smoker"}, 0, 0,
                 "The smoking status of the patient is {v}."});
    s.push_back({"diagnosis", AttrKind::Categorical, {}, 0, 0, "The diagnosis is {v}."});
    for (const auto& a : s) a.validate();
    return s;
}

namespace {

const char* kind_name(AttrKind k) {
    switch (k) {
        case AttrKind::Categorical: return "categorical";
        case AttrKind::Numeric: return "numeric";
        case AttrKind::Boolean: return "boolean";
    }
    return "categorical";
}

AttrKind kind_from(const std::string& s) {
    if (s == "categorical") return AttrKind::Categorical;
    if (s == "numeric") return AttrKind::Numeric;
    if (s == "boolean") return AttrKind::Boolean;
    throw ConfigError("unknown attribute kind: " + s);
}

const AttributeSchema* find_attr(const Schema& schema, const std::string& name) {
    for (const auto& a : schema)
        if (a.name == name) return &a;
    return nullptr;
}

bool parse_number(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

Schema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("schema parse error in " + path.string() + ": " + e.what());
    }
    if (!j.contains("attributes") || !j["attributes"].is_array())
        throw ConfigError("schema file needs an 'attributes' array");
    Schema s;
    for (const auto& a : j["attributes"]) {
        AttributeSchema attr;
        attr.name = a.at("name").get<std::string>();
        attr.kind = kind_from(a.value("kind", "categorical"));
        attr.phrase_template = a.at("template").get<std::string>();
        if (attr.kind == AttrKind::Numeric) {
            attr.min_value = a.at("min").get<double>();
            attr.max_value = a.at("max").get<double>();
        } else if (a.contains("values")) {
            attr.valid_values = a["values"].get<std::vector<std::string>>();
        }
        attr.validate();
        s.push_back(std::move(attr));
    }
    if (s.empty()) throw ConfigError("schema must list at least one attribute");
    return s;
}

void save_schema(const Schema& schema, const std::filesystem::path& path) {
    json j;
    j["attributes"] = json::array();
    for (const auto& a : schema) {
        json e;
        e["name"] = a.name;
        e["kind"] = kind_name(a.kind);
        e["template"] = a.phrase_template;
        if (a.kind == AttrKind::Numeric) {
            e["min"] = a.min_value;
            e["max"] = a.max_value;
        } else if (!a.valid_values.empty()) {
            e["values"] = a.valid_values;
        }
        j["attributes"].push_back(e);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write schema file: " + path.string());
    out << j.dump(2) << "\n";
}

bool value_valid(const AttributeSchema& attr, const std::string& value) {
    if (value.empty()) return false;
    switch (attr.kind) {
        case AttrKind::Numeric: {
            double v = 0.0;
            return parse_number(value, v) && v >= attr.min_value && v <= attr.max_value;
        }
        case AttrKind::Boolean: {
            const std::string v = lower(value);
            return v == "yes" || v == "no" || v == "true" || v == "false" || v == "0" || v == "1";
        }
        case AttrKind::Categorical:
            if (attr.valid_values.empty()) return true;  // free-text passthrough
            return std::find(attr.valid_values.begin(), attr.valid_values.end(), value) !=
                   attr.valid_values.end();
    }
    return false;
}

ClinicalRecord validate_record(const ClinicalRecord& record, const Schema& schema) {
    if (schema.empty()) throw ConfigError("schema must be non-empty");
    ClinicalRecord out;
    out.subject_id = record.subject_id;
    for (const auto& [name, value] : record.values) {
        const AttributeSchema* attr = find_attr(schema, name);
        if (!attr)
            throw ValidationError("unknown attribute '" + name + "' in record '" +
                                  record.subject_id + "'");
        if (value_valid(*attr, value)) out.values[name] = value;
        // invalid values become absent
    }
    return out;
}

TextDescription render_record(const ClinicalRecord& record, const Schema& schema) {
    if (schema.empty()) throw ConfigError("schema must be non-empty");
    for (const auto& [name, value] : record.values)
        if (!find_attr(schema, name))
            throw ValidationError("unknown attribute '" + name + "' in record '" +
                                  record.subject_id + "'");
    TextDescription out;
    for (const auto& attr : schema) {
        auto it = record.values.find(attr.name);
        if (it == record.values.end()) continue;
        if (!value_valid(attr, it->second)) continue;  // omission, never imputation
        std::string sentence = attr.phrase_template;
        sentence.replace(sentence.find("{v}"), 3, it->second);
        if (!out.text.empty()) out.text += ' ';
        out.text += sentence;
        out.rendered_attributes.push_back(attr.name);
    }
    if (out.rendered_attributes.empty()) out.text = kEmptyRecordText;
    return out;
}

std::vector<TextDescription> render_table(const std::vector<ClinicalRecord>& records,
                                          const Schema& schema) {
    std::vector<TextDescription> out;
    out.reserve(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        try {
            out.push_back(render_record(records[i], schema));
        } catch (const Error& e) {
            throw ValidationError("row " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::vector<ClinicalRecord> records_from_csv(const std::filesystem::path& path,
                                             const Schema& schema, bool strict) {
    csvio::Table t = csvio::read_csv(path);
    const long sid = t.column("subject_id");
    if (sid < 0) throw ValidationError("csv needs a subject_id column: " + path.string());
    std::vector<long> attr_cols;
    for (size_t c = 0; c < t.header.size(); ++c) {
        if (static_cast<long>(c) == sid) continue;
        if (find_attr(schema, t.header[c])) {
            attr_cols.push_back(static_cast<long>(c));
        } else if (strict) {
            throw ValidationError("unknown column '" + t.header[c] + "' in " + path.string() +
                                  " (strict mode)");
        }
    }
    std::vector<ClinicalRecord> out;
    for (const auto& row : t.rows) {
        ClinicalRecord r;
        r.subject_id = row[static_cast<size_t>(sid)];
        for (long c : attr_cols) {
            const std::string& v = row[static_cast<size_t>(c)];
            if (!v.empty()) r.values[t.header[static_cast<size_t>(c)]] = v;
        }
        out.push_back(std::move(r));
    }
    return out;
}

void write_texts(const std::vector<TextDescription>& texts, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write text file: " + path.string());
    for (const auto& t : texts) out << t.text << '\n';
}

void write_render_manifest(const std::vector<ClinicalRecord>& records,
                           const std::vector<TextDescription>& texts,
                           const std::filesystem::path& path) {
    if (records.size() != texts.size())
        throw ShapeError("render manifest: records and texts differ in length");
    json j = json::array();
    for (size_t i = 0; i < records.size(); ++i) {
        json e;
        e["subject_id"] = records[i].subject_id;
        e["rendered_attributes"] = texts[i].rendered_attributes;
        j.push_back(e);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write render manifest: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace voxsyn::tabular
