#include "voxsyn/embedding.hpp"

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "voxsyn/rng.hpp"

namespace voxsyn::embedding {

Backend backend_from_name(const std::string& name) {
    if (name == "stub" || name == "deterministic-stub") return Backend::DeterministicStub;
    if (name == "clinical-lm") return Backend::ClinicalLm;
    if (name == "contrastive-vlm") return Backend::ContrastiveVlm;
    throw ConfigError("unknown encoder backend: " + name);
}

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::DeterministicStub: return "deterministic-stub";
        case Backend::ClinicalLm: return "clinical-lm";
        case Backend::ContrastiveVlm: return "contrastive-vlm";
    }
    return "deterministic-stub";
}

bool TextEmbedding::all_finite() const {
    for (float v : vector)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor TextEmbedding::as_tensor() const {
    Tensor t({1, dimension()});
    for (Index i = 0; i < dimension(); ++i) t[i] = static_cast<double>(vector[static_cast<size_t>(i)]);
    return t;
}

Tensor stack_embeddings(const std::vector<TextEmbedding>& embs) {
    if (embs.empty()) throw ShapeError("cannot stack zero embeddings");
    const Index e = embs.front().dimension();
    Tensor t({static_cast<Index>(embs.size()), e});
    for (size_t b = 0; b < embs.size(); ++b) {
        if (embs[b].dimension() != e) throw ShapeError("embedding dimensions differ in batch");
        for (Index i = 0; i < e; ++i)
            t(static_cast<Index>(b), i) = static_cast<double>(embs[b].vector[static_cast<size_t>(i)]);
    }
    return t;
}

namespace {

// Whitespace tokens; keeps the rule the same for every backend.
std::pair<std::string, bool> truncate_tokens(const std::string& text, long max_tokens) {
    std::istringstream in(text);
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    if (max_tokens <= 0 || static_cast<long>(tokens.size()) <= max_tokens) return {text, false};
    std::string out;
    for (long i = 0; i < max_tokens; ++i) {
        if (i) out += ' ';
        out += tokens[static_cast<size_t>(i)];
    }
    return {out, true};
}

std::uint64_t file_checksum(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

}  // namespace

EncoderHandle::EncoderHandle(EncoderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.dimension <= 0) throw ConfigError("encoder dimension must be positive");
    if (cfg_.backend != Backend::DeterministicStub) {
        if (cfg_.weights_path.empty())
            throw IoError(std::string("encoder backend '") + backend_name(cfg_.backend) +
                          "' needs an embedding table (weights_path)");
        std::ifstream in(cfg_.weights_path, std::ios::binary);
        if (!in)
            throw IoError("cannot load embedding table for backend '" +
                          std::string(backend_name(cfg_.backend)) + "': " +
                          cfg_.weights_path.string());
        char magic[4];
        in.read(magic, 4);
        if (std::memcmp(magic, "VXET", 4) != 0)
            throw IoError("bad embedding table magic: " + cfg_.weights_path.string());
        std::uint32_t dim = 0;
        std::uint64_t count = 0;
        in.read(reinterpret_cast<char*>(&dim), 4);
        in.read(reinterpret_cast<char*>(&count), 8);
        if (static_cast<Index>(dim) != cfg_.dimension)
            throw ConfigError("embedding table dimension " + std::to_string(dim) +
                              " != configured " + std::to_string(cfg_.dimension));
        for (std::uint64_t i = 0; i < count; ++i) {
            std::uint64_t h = 0;
            in.read(reinterpret_cast<char*>(&h), 8);
            std::vector<float> v(static_cast<size_t>(dim));
            in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(4 * dim));
            if (!in) throw IoError("truncated embedding table: " + cfg_.weights_path.string());
            table_[h] = std::move(v);
        }
        table_checksum_ = file_checksum(cfg_.weights_path);
    }
}

std::uint64_t EncoderHandle::params_checksum() const {
    if (cfg_.backend == Backend::DeterministicStub) {
        std::uint64_t h = fnv1a64(cfg_.encoder_id);
        return derive_seed(h, static_cast<std::uint64_t>(cfg_.dimension));
    }
    return table_checksum_;
}

TextEmbedding EncoderHandle::compute(const std::string& effective, bool truncated,
                                     const std::string& original) const {
    ++calls_;
    TextEmbedding e;
    e.encoder_id = cfg_.encoder_id;
    e.truncated = truncated;
    e.source_text_hash = hex64(fnv1a64(original));
    if (cfg_.backend == Backend::DeterministicStub) {
        // Seeded hash-to-Gaussian map, normalized to unit length in float32.
        const std::uint64_t seed =
            derive_seed(fnv1a64(cfg_.encoder_id), fnv1a64(effective));
        Rng rng(seed);
        e.vector.resize(static_cast<size_t>(cfg_.dimension));
        double norm2 = 0.0;
        for (auto& v : e.vector) {
            v = static_cast<float>(rng.gaussian());
            norm2 += static_cast<double>(v) * static_cast<double>(v);
        }
        const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
        for (auto& v : e.vector) v *= inv;
    } else {
        auto it = table_.find(fnv1a64(effective));
        if (it == table_.end())
            throw ValidationError("text not present in the exported embedding table (encoder '" +
                                  cfg_.encoder_id + "'): \"" + effective + "\"");
        e.vector = it->second;
    }
    return e;
}

TextEmbedding EncoderHandle::embed(const std::string& text) const {
    if (text.empty()) throw ValidationError("cannot embed empty text");
    auto [effective, truncated] = truncate_tokens(text, cfg_.max_tokens);
    if (!cfg_.cache_dir.empty()) {
        const auto file = cache_path(cfg_.cache_dir, cfg_.encoder_id, effective);
        TextEmbedding cached;
        if (read_cached(file, cfg_.dimension, cached)) {
            ++cache_hits_;
            cached.encoder_id = cfg_.encoder_id;
            cached.source_text_hash = hex64(fnv1a64(text));
            return cached;
        }
        TextEmbedding fresh = compute(effective, truncated, text);
        write_cached(file, fresh);
        return fresh;
    }
    return compute(effective, truncated, text);
}

TextEmbedding EncoderHandle::embed(const tabular::TextDescription& text) const {
    return embed(text.text);
}

std::vector<TextEmbedding> EncoderHandle::embed_batch(const std::vector<std::string>& texts) const {
    std::vector<TextEmbedding> out;
    out.reserve(texts.size());
    for (size_t i = 0; i < texts.size(); ++i) {
        try {
            out.push_back(embed(texts[i]));
        } catch (const Error& e) {
            throw ValidationError("batch row " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::filesystem::path cache_path(const std::filesystem::path& dir, const std::string& encoder_id,
                                 const std::string& text) {
    const std::uint64_t h = derive_seed(fnv1a64(encoder_id), fnv1a64(text));
    return dir / (hex64(h) + ".emb");
}

bool read_cached(const std::filesystem::path& file, Index expected_dim, TextEmbedding& out) {
    std::ifstream in(file, std::ios::binary);
    if (!in) return false;
    char header[16];
    in.read(header, 16);
    if (!in || std::memcmp(header, "VXEB", 4) != 0) return false;
    std::uint32_t dim = 0;
    std::memcpy(&dim, header + 4, 4);
    if (static_cast<Index>(dim) != expected_dim) return false;
    out.truncated = header[8] != 0;
    out.vector.resize(dim);
    in.read(reinterpret_cast<char*>(out.vector.data()), static_cast<std::streamsize>(4 * dim));
    return static_cast<bool>(in);
}

void write_cached(const std::filesystem::path& file, const TextEmbedding& emb) {
    std::filesystem::create_directories(file.parent_path());
    const std::filesystem::path tmp = file.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write embedding cache: " + tmp.string());
        char header[16] = {0};
        std::memcpy(header, "VXEB", 4);
        const std::uint32_t dim = static_cast<std::uint32_t>(emb.vector.size());
        std::memcpy(header + 4, &dim, 4);
        header[8] = emb.truncated ? 1 : 0;
        out.write(header, 16);
        out.write(reinterpret_cast<const char*>(emb.vector.data()),
                  static_cast<std::streamsize>(4 * emb.vector.size()));
    }
    std::filesystem::rename(tmp, file);  // atomic on the same filesystem
}

void write_embedding_table(const std::filesystem::path& path, Index dimension,
                           const std::vector<std::pair<std::string, std::vector<float>>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write embedding table: " + path.string());
    out.write("VXET", 4);
    const std::uint32_t dim = static_cast<std::uint32_t>(dimension);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    const std::uint64_t count = rows.size();
    out.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& [text, vec] : rows) {
        if (static_cast<Index>(vec.size()) != dimension)
            throw ShapeError("embedding table row for \"" + text + "\" has wrong dimension");
        const std::uint64_t h = fnv1a64(text);
        out.write(reinterpret_cast<const char*>(&h), 8);
        out.write(reinterpret_cast<const char*>(vec.data()),
                  static_cast<std::streamsize>(4 * vec.size()));
    }
}

}  // namespace voxsyn::embedding
