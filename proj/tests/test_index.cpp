#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "support/retrieval_oracle.hpp"
#include "support/stub_embed_server.hpp"
#include "support/test_support.hpp"
#include "toolgate/errors.hpp"
#include "toolgate/index.hpp"

using namespace toolgate;
using toolgate::testing::brute_force_topk;
using toolgate::testing::embed_query;
using toolgate::testing::make_tool;
using toolgate::testing::StubEmbedServer;
using toolgate::testing::synthetic_registry;
using toolgate::testing::temp_path;

namespace {

EmbedderConfig fallback_config(int dim = 128, std::uint64_t seed = 7) {
    EmbedderConfig cfg;
    cfg.provider = EmbedderConfig::Provider::local_fallback;
    cfg.dimension = dim;
    cfg.seed = seed;
    return cfg;
}

EmbedderConfig remote_config(const std::string& endpoint, const std::string& auth_env = "") {
    return EmbedderConfig::from_json({{"provider", "remote"},
                                      {"endpoint", endpoint},
                                      {"model", "stub-embed-1"},
                                      {"auth_env", auth_env},
                                      {"max_retries", 2}});
}

std::string file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// Deterministic per-text stub vectors.
std::vector<std::vector<float>> hashed_vectors(const std::vector<std::string>& inputs,
                                               int dim = 8) {
    std::vector<std::vector<float>> out;
    for (const auto& text : inputs) {
        std::vector<float> vec(static_cast<std::size_t>(dim));
        std::uint64_t h = stable_hash64(text);
        for (auto& x : vec) {
            h = h * 6364136223846793005ULL + 1442695040888963407ULL;
            x = static_cast<float>((h >> 32) % 1000) / 999.0f + 0.001f;
        }
        out.push_back(std::move(vec));
    }
    return out;
}

}  // namespace

TEST_CASE("canonical_tool_text is deterministic and content-sensitive") {
    const ToolSpec a = make_tool("azure_delete_vm", "Delete a virtual machine",
                                 {{"vm_name", {{"type", "string"}}}});
    CHECK(canonical_tool_text(a) == canonical_tool_text(a));

    ToolSpec b = a;
    b.description = "Remove a virtual machine";
    CHECK(canonical_tool_text(a) != canonical_tool_text(b));

    // Bindings and service labels are not part of the embedded text.
    ToolSpec c = a;
    c.service = "other";
    CHECK(canonical_tool_text(a) == canonical_tool_text(c));
}

TEST_CASE("canonical_tool_text contains every nested property name") {
    const json nested = {{"board",
                          {{"type", "object"},
                           {"properties",
                            {{"columns",
                              {{"type", "array"},
                               {"items",
                                {{"type", "object"},
                                 {"properties",
                                  {{"name", {{"type", "string"}}},
                                   {"limit", {{"type", "integer"}}}}}}}}}}}}}};
    const std::string text =
        canonical_tool_text(make_tool("plane_create_board", "Create a board", nested));
    for (const char* needle : {"board", "columns", "name", "limit"})
        CHECK(text.find(needle) != std::string::npos);
}

TEST_CASE("fallback embedder is deterministic and unit-norm") {
    auto embedder = make_embedder(fallback_config());
    const auto a = embedder->embed({"delete the virtual machine", "delete the virtual machine"});
    CHECK(a[0] == a[1]);
    CHECK(euclidean_norm(a[0]) == doctest::Approx(1.0).epsilon(1e-9));

    auto embedder2 = make_embedder(fallback_config());
    CHECK(embedder2->embed({"delete the virtual machine"})[0] == a[0]);
}

TEST_CASE("fallback dimension below 64 is rejected") {
    EmbedderConfig cfg = fallback_config(32);
    CHECK_THROWS_AS(make_embedder(cfg), Error);
}

TEST_CASE("cosine similarity basics") {
    const EmbeddingVector v = EmbeddingVector::of({3.0f, 4.0f});
    CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-12));

    const EmbeddingVector ex = EmbeddingVector::of({1.0f, 0.0f});
    const EmbeddingVector ey = EmbeddingVector::of({0.0f, 1.0f});
    CHECK(cosine_similarity(ex, ey) == doctest::Approx(0.0));

    CHECK_THROWS_AS(cosine_similarity(v, EmbeddingVector::of({1.0f, 2.0f, 3.0f})), Error);
    CHECK_THROWS_AS(cosine_similarity(v, EmbeddingVector::of({0.0f, 0.0f})), Error);
}

TEST_CASE("cosine similarity matches naive arithmetic on random 64-dim pairs") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> a(64), b(64);
        for (auto& x : a) x = dist(rng);
        for (auto& x : b) x = dist(rng);
        double dot = 0, na = 0, nb = 0;
        for (int i = 0; i < 64; ++i) {
            dot += double(a[i]) * double(b[i]);
            na += double(a[i]) * double(a[i]);
            nb += double(b[i]) * double(b[i]);
        }
        const double expected = dot / (std::sqrt(na) * std::sqrt(nb));
        const double actual =
            cosine_similarity(EmbeddingVector::of(a), EmbeddingVector::of(b));
        CHECK(actual == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("build_index embeds every tool exactly once") {
    const ToolRegistry registry = synthetic_registry(1000);
    const ToolIndex index = ToolIndex::build(registry, fallback_config());
    CHECK(index.size() == 1000);
    CHECK(index.dimension() == 128);
}

TEST_CASE("rebuilding with the same config is byte-identical") {
    const ToolRegistry registry = synthetic_registry(200);
    const auto path_a = temp_path("index-a"), path_b = temp_path("index-b");
    ToolIndex::build(registry, fallback_config()).save(path_a);
    ToolIndex::build(registry, fallback_config()).save(path_b);
    CHECK(file_bytes(path_a) == file_bytes(path_b));
    std::filesystem::remove(path_a);
    std::filesystem::remove(path_b);
}

TEST_CASE("index save/load round-trips and fingerprint gates queries") {
    const ToolRegistry registry = synthetic_registry(50);
    const ToolIndex index = ToolIndex::build(registry, fallback_config(128, 7));
    const auto path = temp_path("index");
    index.save(path);

    const ToolIndex loaded = ToolIndex::load(path);
    CHECK(loaded.size() == index.size());
    loaded.ensure_compatible(fallback_config(128, 7));

    // A different seed is a different embedding space.
    CHECK_THROWS_AS(loaded.ensure_compatible(fallback_config(128, 8)), Error);
    CHECK_THROWS_AS(loaded.ensure_compatible(fallback_config(256, 7)), Error);

    const RetrievalResult a = index.search({"rotate the secret", 5});
    const RetrievalResult b = loaded.search({"rotate the secret", 5});
    REQUIRE(a.hits.size() == b.hits.size());
    for (std::size_t i = 0; i < a.hits.size(); ++i) {
        CHECK(a.hits[i].name == b.hits[i].name);
        CHECK(a.hits[i].score == doctest::Approx(b.hits[i].score).epsilon(1e-12));
    }
    std::filesystem::remove(path);
}

TEST_CASE("empty registry cannot be indexed") {
    CHECK_THROWS_AS(ToolIndex::build(ToolRegistry(), fallback_config()), Error);
}

TEST_CASE("remote embedder stores stub vectors verbatim") {
    StubEmbedServer stub([](const auto& inputs) { return hashed_vectors(inputs); });
    ToolRegistry registry(0);
    registry.add_tools({make_tool("tool_a", "first"), make_tool("tool_b", "second")});
    const ToolIndex index = ToolIndex::build(registry, remote_config(stub.endpoint()));
    REQUIRE(index.size() == 2);
    CHECK(index.dimension() == 8);

    const auto expected = hashed_vectors({canonical_tool_text(*registry.find("tool_a"))});
    CHECK(index.vector_at(0).values == expected[0]);
}

TEST_CASE("remote embedder honors batching") {
    std::vector<std::size_t> batch_sizes;
    StubEmbedServer stub([&](const auto& inputs) {
        batch_sizes.push_back(inputs.size());
        return hashed_vectors(inputs);
    });
    EmbedderConfig cfg = remote_config(stub.endpoint());
    cfg.batch_size = 3;
    auto embedder = make_embedder(cfg);
    const auto vectors = embedder->embed({"a", "b", "c", "d", "e", "f", "g"});
    CHECK(vectors.size() == 7);
    CHECK(batch_sizes == std::vector<std::size_t>{3, 3, 1});
}

TEST_CASE("remote auth failure is a configuration error") {
    StubEmbedServer stub([](const auto& inputs) -> std::vector<std::vector<float>> {
        throw StubEmbedServer::StatusError{401, R"({"error":"bad key"})"};
    });
    auto embedder = make_embedder(remote_config(stub.endpoint()));
    try {
        embedder->embed({"text"});
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::config);
    }
}

TEST_CASE("missing auth environment variable fails before any request") {
    unsetenv("TOOLGATE_TEST_MISSING_KEY");
    CHECK_THROWS_AS(
        make_embedder(remote_config("http://127.0.0.1:1", "TOOLGATE_TEST_MISSING_KEY")), Error);
}

TEST_CASE("non-retryable provider errors carry the upstream message") {
    StubEmbedServer stub([](const auto&) -> std::vector<std::vector<float>> {
        throw StubEmbedServer::StatusError{400, R"({"error":"model overloaded with nonsense"})"};
    });
    auto embedder = make_embedder(remote_config(stub.endpoint()));
    try {
        embedder->embed({"text"});
        FAIL("expected provider error");
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::provider);
        CHECK(std::string(e.what()).find("model overloaded") != std::string::npos);
    }
    CHECK(stub.request_count() == 1);
}

TEST_CASE("transient provider failures are retried with success") {
    int calls = 0;
    StubEmbedServer stub([&](const auto& inputs) -> std::vector<std::vector<float>> {
        if (++calls == 1) throw StubEmbedServer::StatusError{429, R"({"error":"slow down"})"};
        return hashed_vectors(inputs);
    });
    auto embedder = make_embedder(remote_config(stub.endpoint()));
    const auto vectors = embedder->embed({"text"});
    CHECK(vectors.size() == 1);
    CHECK(stub.request_count() == 2);
}

TEST_CASE("dimension drift across a batch is an integrity error") {
    StubEmbedServer stub([](const auto& inputs) {
        auto out = hashed_vectors(inputs);
        if (out.size() > 1) out[1].push_back(0.5f);  // widen one vector
        return out;
    });
    auto embedder = make_embedder(remote_config(stub.endpoint()));
    try {
        embedder->embed({"a", "b"});
        FAIL("expected integrity error");
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::integrity);
    }
}

TEST_CASE("zero vectors abort the build") {
    StubEmbedServer stub([](const auto& inputs) {
        std::vector<std::vector<float>> out(inputs.size(), std::vector<float>(8, 0.0f));
        return out;
    });
    ToolRegistry registry(0);
    registry.add_tools({make_tool("tool_zero", "zeroed")});
    CHECK_THROWS_AS(ToolIndex::build(registry, remote_config(stub.endpoint())), Error);
}

TEST_CASE("searching a tool's own canonical text ranks it first with score 1") {
    const ToolRegistry registry = synthetic_registry(100);
    const ToolIndex index = ToolIndex::build(registry, fallback_config());
    const ToolSpec& spec = registry.begin()->second;
    const RetrievalResult result = index.search({canonical_tool_text(spec), 5});
    REQUIRE(!result.hits.empty());
    CHECK(result.hits[0].name == spec.name);
    CHECK(result.hits[0].score == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("k larger than the index returns everything sorted") {
    const ToolRegistry registry = synthetic_registry(12);
    const ToolIndex index = ToolIndex::build(registry, fallback_config());
    const RetrievalResult result = index.search({"queue snapshot", 50});
    CHECK(result.hits.size() == 12);
    for (std::size_t i = 1; i < result.hits.size(); ++i) {
        const bool ordered = result.hits[i - 1].score > result.hits[i].score ||
                             (result.hits[i - 1].score == result.hits[i].score &&
                              result.hits[i - 1].name < result.hits[i].name);
        CHECK(ordered);
    }
}

TEST_CASE("invalid queries are rejected") {
    const ToolRegistry registry = synthetic_registry(5);
    const ToolIndex index = ToolIndex::build(registry, fallback_config());
    CHECK_THROWS_AS(index.search({"", 5}), Error);
    CHECK_THROWS_AS(index.search({"ok", 0}), Error);
    // A query with no alphanumeric tokens embeds to zero.
    CHECK_THROWS_AS(index.search({"!!! ???", 5}), Error);
}

TEST_CASE("search equals the brute-force oracle over a randomized corpus") {
    std::mt19937_64 rng(2024);
    static const char* query_words[] = {"delete", "vm",     "rotate", "secret", "backup",
                                        "queue",  "policy", "region", "tag",    "cluster"};
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t size = 1 + rng() % 300;
        const ToolRegistry registry = synthetic_registry(size, rng());
        const ToolIndex index = ToolIndex::build(registry, fallback_config(64 + (trial % 3) * 64));

        std::string query;
        const int words = 1 + static_cast<int>(rng() % 5);
        for (int w = 0; w < words; ++w) {
            if (w) query += " ";
            query += query_words[rng() % 10];
        }
        const int k = 1 + static_cast<int>(rng() % 20);

        const RetrievalResult actual = index.search({query, k});
        const auto expected = brute_force_topk(index, embed_query(index, query), k);

        REQUIRE(actual.hits.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(actual.hits[i].name == expected[i].name);
            CHECK(actual.hits[i].score ==
                  doctest::Approx(expected[i].score).epsilon(1e-9));
        }
    }
}

TEST_CASE("top-k hits are a prefix of top-(k+1)") {
    const ToolRegistry registry = synthetic_registry(150);
    const ToolIndex index = ToolIndex::build(registry, fallback_config());
    for (int k = 1; k < 14; ++k) {
        const auto smaller = index.search({"restore the cluster snapshot", k}).hits;
        const auto larger = index.search({"restore the cluster snapshot", k + 1}).hits;
        REQUIRE(larger.size() >= smaller.size());
        for (std::size_t i = 0; i < smaller.size(); ++i)
            CHECK(smaller[i].name == larger[i].name);
    }
}

TEST_CASE("scaling the query vector does not change the ranking") {
    const ToolRegistry registry = synthetic_registry(120);
    const ToolIndex index = ToolIndex::build(registry, fallback_config());
    const EmbeddingVector q = embed_query(index, "deploy the alert webhook");

    std::vector<float> scaled_values = q.values;
    for (auto& x : scaled_values) x *= 3.7f;
    const EmbeddingVector scaled = EmbeddingVector::of(scaled_values);

    const auto base = index.search_embedded(q, 10, "q");
    const auto after = index.search_embedded(scaled, 10, "q");
    REQUIRE(base.hits.size() == after.hits.size());
    for (std::size_t i = 0; i < base.hits.size(); ++i) {
        CHECK(base.hits[i].name == after.hits[i].name);
        CHECK(base.hits[i].score == doctest::Approx(after.hits[i].score).epsilon(1e-6));
    }
}

TEST_CASE("scaling one stored vector by a power of two preserves hits exactly") {
    // Two stub-built indexes: identical except one vector scaled by 4x.
    std::vector<std::string> names = {"scale_me", "other_a", "other_b"};
    auto base_vectors = hashed_vectors({"x0", "x1", "x2"}, 16);
    auto scaled_vectors = base_vectors;
    for (auto& x : scaled_vectors[0]) x *= 4.0f;

    auto build_with = [&](const std::vector<std::vector<float>>& table) {
        StubEmbedServer stub([&](const auto& inputs) {
            std::vector<std::vector<float>> out;
            for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(table[i]);
            return out;
        });
        ToolRegistry registry(0);
        registry.add_tools({make_tool("other_a", "a"), make_tool("other_b", "b"),
                            make_tool("scale_me", "s")});
        return ToolIndex::build(registry, remote_config(stub.endpoint()));
    };

    const ToolIndex index_a = build_with(base_vectors);
    const ToolIndex index_b = build_with(scaled_vectors);

    const EmbeddingVector q = EmbeddingVector::of(hashed_vectors({"query"}, 16)[0]);
    const auto hits_a = index_a.search_embedded(q, 3, "q").hits;
    const auto hits_b = index_b.search_embedded(q, 3, "q").hits;
    REQUIRE(hits_a.size() == hits_b.size());
    for (std::size_t i = 0; i < hits_a.size(); ++i) {
        CHECK(hits_a[i].name == hits_b[i].name);
        CHECK(hits_a[i].score == hits_b[i].score);  // power-of-two scale is exact
    }
}

TEST_CASE("identical queries give identical results including tie order") {
    // Force ties: two tools with identical canonical-relevant content.
    ToolRegistry registry(0);
    registry.add_tools({make_tool("twin_b", "identical description"),
                        make_tool("twin_a", "identical description"),
                        make_tool("loner", "something else entirely")});
    const ToolIndex index = ToolIndex::build(registry, fallback_config());

    const auto first = index.search({"identical description", 3});
    const auto second = index.search({"identical description", 3});
    REQUIRE(first.hits.size() == 3);
    CHECK(first.hits[0].name == second.hits[0].name);
    CHECK(first.hits[1].name == second.hits[1].name);
    // Twins differ in name only; near-equal scores must break ties by name.
    if (first.hits[0].score == first.hits[1].score)
        CHECK(first.hits[0].name < first.hits[1].name);
}
