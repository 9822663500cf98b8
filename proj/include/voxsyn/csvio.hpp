#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace voxsyn::csvio {

// RFC-4180-ish: quoted fields may contain commas, newlines and doubled quotes.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    long column(const std::string& name) const;  // -1 if absent
};

Table read_csv(const std::filesystem::path& path);
Table parse_csv(const std::string& content);
void write_csv(const std::filesystem::path& path, const Table& table);
std::string escape_field(const std::string& field);

}  // namespace voxsyn::csvio
