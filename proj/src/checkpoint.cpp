#include "voxsyn/checkpoint.hpp"

#include <unistd.h>

#include <cstring>
#include <fstream>

namespace voxsyn::checkpoint {

namespace {
constexpr char kMagic[8] = {'V', 'X', 'C', 'K', 'P', 'T', '0', '1'};
}

void save(const std::filesystem::path& path, const Container& c) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
        out.write(kMagic, 8);
        const std::string meta = c.meta.dump();
        const std::uint64_t meta_len = meta.size();
        out.write(reinterpret_cast<const char*>(&meta_len), 8);
        out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
        const std::uint64_t n = c.tensors.size();
        out.write(reinterpret_cast<const char*>(&n), 8);
        for (const auto& [name, t] : c.tensors) {
            const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
            out.write(reinterpret_cast<const char*>(&name_len), 4);
            out.write(name.data(), name_len);
            const std::uint8_t dtype = 2;  // float64
            const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
            out.write(reinterpret_cast<const char*>(&dtype), 1);
            out.write(reinterpret_cast<const char*>(&rank), 1);
            for (int d = 0; d < t.rank(); ++d) {
                const std::uint64_t dim = static_cast<std::uint64_t>(t.dim(d));
                out.write(reinterpret_cast<const char*>(&dim), 8);
            }
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(8 * t.size()));
        }
        if (!out) throw IoError("failed writing checkpoint: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Container load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("bad checkpoint magic: " + path.string());
    Container c;
    std::uint64_t meta_len = 0;
    in.read(reinterpret_cast<char*>(&meta_len), 8);
    std::string meta(meta_len, '\0');
    in.read(meta.data(), static_cast<std::streamsize>(meta_len));
    try {
        c.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint metadata parse error in " + path.string() + ": " + e.what());
    }
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), 4);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        std::uint8_t dtype = 0, rank = 0;
        in.read(reinterpret_cast<char*>(&dtype), 1);
        in.read(reinterpret_cast<char*>(&rank), 1);
        if (dtype != 2) throw IoError("checkpoint tensor '" + name + "' has unsupported dtype");
        if (rank < 1 || rank > 5)
            throw IoError("checkpoint tensor '" + name + "' has unsupported rank");
        std::vector<Index> dims(rank);
        for (auto& d : dims) {
            std::uint64_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 8);
            d = static_cast<Index>(v);
        }
        Tensor t(dims);
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(8 * t.size()));
        if (!in) throw IoError("truncated checkpoint: " + path.string());
        c.tensors.emplace(std::move(name), std::move(t));
    }
    return c;
}

void store_params(Container& c, const nn::ParamRegistry<Real>& params) {
    for (const auto& r : params.refs()) c.tensors[r.name] = *r.value;
}

void load_params(const Container& c, nn::ParamRegistry<Real>& params) {
    for (auto& r : params.refs()) {
        auto it = c.tensors.find(r.name);
        if (it == c.tensors.end())
            throw IoError("checkpoint is missing parameter '" + r.name + "'");
        if (it->second.dims() != r.value->dims())
            throw ShapeError("checkpoint parameter '" + r.name + "' has shape " +
                             it->second.shape_str() + ", model expects " + r.value->shape_str());
        *r.value = it->second;
    }
}

}  // namespace voxsyn::checkpoint
