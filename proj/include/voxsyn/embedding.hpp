#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "voxsyn/tabular.hpp"
#include "voxsyn/tensor.hpp"

// Frozen text encoders behind one handle. The deterministic stub maps text to
// a seeded unit-norm pseudo-random vector so the full pipeline runs without
// model downloads; the pretrained backends consume embedding tables exported
// offline from the actual frozen encoders.

namespace voxsyn::embedding {

enum class Backend { DeterministicStub, ClinicalLm, ContrastiveVlm };

Backend backend_from_name(const std::string& name);
const char* backend_name(Backend b);

struct TextEmbedding {
    std::vector<float> vector;
    std::string source_text_hash;  // hex of the original text
    std::string encoder_id;
    bool truncated = false;

    Index dimension() const { return static_cast<Index>(vector.size()); }
    bool all_finite() const;

    // Embedding as a (1, E) tensor for the fusion units.
    Tensor as_tensor() const;
};

// Rows stacked into a (n, E) tensor.
Tensor stack_embeddings(const std::vector<TextEmbedding>& embs);

struct EncoderConfig {
    std::string encoder_id = "stub-768";
    Backend backend = Backend::DeterministicStub;
    Index dimension = 768;
    long max_tokens = 128;
    std::filesystem::path cache_dir;     // empty disables the cache
    std::filesystem::path weights_path;  // embedding table for pretrained backends
};

class EncoderHandle {
  public:
    explicit EncoderHandle(EncoderConfig cfg);

    TextEmbedding embed(const std::string& text) const;
    TextEmbedding embed(const tabular::TextDescription& text) const;
    std::vector<TextEmbedding> embed_batch(const std::vector<std::string>& texts) const;

    // Checksum over encoder parameters; constant across embed calls.
    std::uint64_t params_checksum() const;

    const EncoderConfig& config() const { return cfg_; }
    long call_count() const { return calls_; }     // backend computations
    long cache_hits() const { return cache_hits_; }

  private:
    TextEmbedding compute(const std::string& effective, bool truncated,
                          const std::string& original) const;

    EncoderConfig cfg_;
    std::uint64_t table_checksum_ = 0;
    std::unordered_map<std::uint64_t, std::vector<float>> table_;
    mutable long calls_ = 0;
    mutable long cache_hits_ = 0;
};

// Cache file layout: 16-byte header (magic "VXEB", u32 dimension, u8 truncated,
// 7 reserved) + little-endian float32 payload. Written atomically.
std::filesystem::path cache_path(const std::filesystem::path& dir, const std::string& encoder_id,
                                 const std::string& text);
bool read_cached(const std::filesystem::path& file, Index expected_dim, TextEmbedding& out);
void write_cached(const std::filesystem::path& file, const TextEmbedding& emb);

// Embedding-table container for the pretrained backends:
// magic "VXET", u32 dimension, u64 count, then (u64 text_hash, float32[dim]) entries.
void write_embedding_table(const std::filesystem::path& path, Index dimension,
                           const std::vector<std::pair<std::string, std::vector<float>>>& rows);

}  // namespace voxsyn::embedding
