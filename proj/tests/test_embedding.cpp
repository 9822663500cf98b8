#include <filesystem>
#include <set>

#include "doctest.h"
#include "support_common.hpp"
#include "voxsyn/embedding.hpp"

using namespace voxsyn;
using namespace voxsyn::embedding;

namespace {

EncoderConfig stub_config(Index dim = 32) {
    EncoderConfig cfg;
    cfg.encoder_id = "stub-test";
    cfg.backend = Backend::DeterministicStub;
    cfg.dimension = dim;
    cfg.max_tokens = 16;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("embedding");

TEST_CASE("stub determinism, shape and finiteness") {
    EncoderHandle enc(stub_config());
    TextEmbedding a = enc.embed("The patient is male.");
    TextEmbedding b = enc.embed("The patient is male.");
    REQUIRE(a.dimension() == 32);
    CHECK(a.vector == b.vector);
    CHECK(a.all_finite());
    CHECK(!a.truncated);
    CHECK(a.encoder_id == "stub-test");
    CHECK(a.source_text_hash.size() == 16);

    // unit norm
    double n2 = 0;
    for (float v : a.vector) n2 += static_cast<double>(v) * v;
    CHECK(n2 == doctest::Approx(1.0).epsilon(1e-5));

    // determinism across handles (process-restart equivalent)
    EncoderHandle enc2(stub_config());
    CHECK(enc2.embed("The patient is male.").vector == a.vector);
}

TEST_CASE("distinct texts give distinct embeddings (collision check on a corpus)") {
    EncoderHandle enc(stub_config(16));
    std::set<std::vector<float>> seen;
    for (int age = 0; age <= 120; ++age) {
        const std::string t = "The patient is " + std::to_string(age) + " years old.";
        auto e = enc.embed(t);
        CHECK(seen.insert(e.vector).second);
    }
    for (const char* t : {"The patient is male.", "The patient is female.", "A patient.",
                          "The smoking status of the patient is yes."})
        CHECK(seen.insert(enc.embed(t).vector).second);
}

TEST_CASE("dimension honors the handle configuration") {
    for (Index dim : {8, 64, 768}) {
        EncoderHandle enc(stub_config(dim));
        CHECK(enc.embed("A patient.").dimension() == dim);
    }
}

TEST_CASE("empty text rejected; token limit truncates with flag") {
    EncoderHandle enc(stub_config());
    CHECK_THROWS_AS(enc.embed(""), ValidationError);

    std::string long_text = "w";
    for (int i = 0; i < 40; ++i) long_text += " w" + std::to_string(i);
    TextEmbedding t = enc.embed(long_text);
    CHECK(t.truncated);
    // truncation makes the embedding equal to that of the first 16 tokens
    std::string head = "w";
    for (int i = 0; i < 15; ++i) head += " w" + std::to_string(i);
    CHECK(t.vector == enc.embed(head).vector);
}

TEST_CASE("embed_batch equals sequential embed") {
    EncoderHandle enc(stub_config());
    std::vector<std::string> texts;
    for (int i = 0; i < 10; ++i) texts.push_back("text number " + std::to_string(i));
    auto batch = enc.embed_batch(texts);
    REQUIRE(batch.size() == 10);
    for (size_t i = 0; i < texts.size(); ++i) CHECK(batch[i].vector == enc.embed(texts[i]).vector);
    CHECK(enc.embed_batch({}).empty());
    auto two = enc.embed_batch({"same", "same"});
    CHECK(two[0].vector == two[1].vector);
    CHECK_THROWS_WITH_AS(enc.embed_batch({"ok", ""}), doctest::Contains("row 1"), ValidationError);
}

TEST_CASE("frozenness: checksum unchanged by embedding calls") {
    EncoderHandle enc(stub_config());
    const auto before = enc.params_checksum();
    for (int i = 0; i < 50; ++i) enc.embed("call " + std::to_string(i));
    CHECK(enc.params_checksum() == before);
}

TEST_CASE("disk cache: hit avoids recompute and round-trips bits") {
    testsup::TempDir dir;
    EncoderConfig cfg = stub_config();
    cfg.cache_dir = dir.path() / "cache";
    EncoderHandle enc(cfg);
    TextEmbedding a = enc.embed("cached text");
    CHECK(enc.call_count() == 1);
    CHECK(enc.cache_hits() == 0);
    TextEmbedding b = enc.embed("cached text");
    CHECK(enc.call_count() == 1);  // served from disk
    CHECK(enc.cache_hits() == 1);
    CHECK(a.vector == b.vector);

    // a second handle (fresh process equivalent) also hits the cache
    EncoderHandle enc2(cfg);
    TextEmbedding c = enc2.embed("cached text");
    CHECK(enc2.call_count() == 0);
    CHECK(c.vector == a.vector);
}

TEST_CASE("pretrained backends: explicit load error without a table, lookup with one") {
    testsup::TempDir dir;
    EncoderConfig cfg;
    cfg.encoder_id = "clinical-lm-demo";
    cfg.backend = Backend::ClinicalLm;
    cfg.dimension = 4;
    cfg.weights_path = dir / "missing_table.bin";
    CHECK_THROWS_AS(EncoderHandle{cfg}, IoError);

    // export a table, then embed through it
    write_embedding_table(dir / "table.bin", 4,
                          {{"A patient.", {1.f, 0.f, 0.f, 0.f}},
                           {"The patient is male.", {0.f, 1.f, 0.f, 0.f}}});
    cfg.weights_path = dir / "table.bin";
    EncoderHandle enc(cfg);
    CHECK(enc.embed("A patient.").vector == std::vector<float>{1.f, 0.f, 0.f, 0.f});
    CHECK_THROWS_AS(enc.embed("not in table"), ValidationError);
    CHECK(enc.params_checksum() != 0);
}

TEST_CASE("backend names round trip") {
    for (const char* n : {"deterministic-stub", "clinical-lm", "contrastive-vlm"})
        CHECK(std::string(backend_name(backend_from_name(n))) == n);
    CHECK(backend_from_name("stub") == Backend::DeterministicStub);
    CHECK_THROWS_AS(backend_from_name("gpt"), ConfigError);
}

TEST_CASE("stacking embeddings into a conditioning tensor") {
    EncoderHandle enc(stub_config(8));
    auto a = enc.embed("one");
    auto b = enc.embed("two");
    Tensor t = stack_embeddings({a, b});
    REQUIRE(t.dims() == std::vector<Index>({2, 8}));
    CHECK(t(0, 3) == static_cast<double>(a.vector[3]));
    CHECK(t(1, 5) == static_cast<double>(b.vector[5]));
    Tensor one = a.as_tensor();
    CHECK(one.dims() == std::vector<Index>({1, 8}));
}

TEST_SUITE_END();
