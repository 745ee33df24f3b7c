#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace toolgate {

using json = nlohmann::json;

struct EmbedderConfig {
    enum class Provider { local_fallback, remote };

    Provider provider = Provider::local_fallback;

    // local_fallback: deterministic hashed bag-of-tokens
    int dimension = 256;  // >= 64
    std::uint64_t seed = 0x746f6f6c;

    // remote: OpenAI-style embeddings endpoint
    std::string endpoint;           // e.g. https://api.openai.com
    std::string path = "/v1/embeddings";
    std::string model;              // e.g. text-embedding-3-large
    std::string auth_env;           // environment variable holding the key
    int batch_size = 64;
    int max_retries = 3;
    int timeout_sec = 60;

    // Identity of the embedding space; an index built with one fingerprint
    // rejects queries embedded with another.
    json fingerprint() const;

    json to_json() const;
    static EmbedderConfig from_json(const json& j);
};

// A vector in the index's embedding space with its cached Euclidean norm.
struct EmbeddingVector {
    std::vector<float> values;
    double norm = 0.0;

    static EmbeddingVector of(std::vector<float> values);
};

double euclidean_norm(const std::vector<float>& values);

// dot(a,b) / (|a||b|), clamped to [-1,1]. Throws on dimension mismatch or a
// zero-norm operand.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
    virtual int dimension() const = 0;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg);

}  // namespace toolgate
