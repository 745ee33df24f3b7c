#include "toolgate/embedder.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <thread>

#include <httplib.h>

#include "toolgate/errors.hpp"
#include "toolgate/url.hpp"

namespace toolgate {

json EmbedderConfig::fingerprint() const {
    if (provider == Provider::local_fallback)
        return {{"provider", "local_fallback"}, {"dimension", dimension}, {"seed", seed}};
    return {{"provider", "remote"}, {"endpoint", endpoint}, {"path", path}, {"model", model}};
}

json EmbedderConfig::to_json() const {
    if (provider == Provider::local_fallback)
        return {{"provider", "local_fallback"}, {"dimension", dimension}, {"seed", seed}};
    return {{"provider", "remote"},   {"endpoint", endpoint},
            {"path", path},           {"model", model},
            {"auth_env", auth_env},   {"batch_size", batch_size},
            {"max_retries", max_retries}, {"timeout_sec", timeout_sec}};
}

EmbedderConfig EmbedderConfig::from_json(const json& j) {
    EmbedderConfig cfg;
    const std::string provider = j.value("provider", "local_fallback");
    if (provider == "local_fallback") {
        cfg.provider = Provider::local_fallback;
        cfg.dimension = j.value("dimension", cfg.dimension);
        cfg.seed = j.value("seed", cfg.seed);
        if (cfg.dimension < 64)
            throw Error(Error::Kind::config,
                        "local_fallback dimension must be >= 64, got " +
                            std::to_string(cfg.dimension));
    } else if (provider == "remote") {
        cfg.provider = Provider::remote;
        cfg.endpoint = j.value("endpoint", "");
        cfg.path = j.value("path", cfg.path);
        cfg.model = j.value("model", "");
        cfg.auth_env = j.value("auth_env", "");
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.max_retries = j.value("max_retries", cfg.max_retries);
        cfg.timeout_sec = j.value("timeout_sec", cfg.timeout_sec);
        if (cfg.endpoint.empty())
            throw Error(Error::Kind::config, "remote embedder requires an endpoint");
        if (cfg.model.empty())
            throw Error(Error::Kind::config, "remote embedder requires a model identifier");
    } else {
        throw Error(Error::Kind::config, "unknown embedder provider: " + provider);
    }
    return cfg;
}

double euclidean_norm(const std::vector<float>& values) {
    double sum = 0.0;
    for (float v : values) sum += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(sum);
}

EmbeddingVector EmbeddingVector::of(std::vector<float> values) {
    EmbeddingVector vec;
    vec.norm = euclidean_norm(values);
    vec.values = std::move(values);
    return vec;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.values.size() != b.values.size())
        throw Error(Error::Kind::validation,
                    "dimension mismatch: " + std::to_string(a.values.size()) + " vs " +
                        std::to_string(b.values.size()));
    if (a.norm == 0.0 || b.norm == 0.0)
        throw Error(Error::Kind::validation, "cosine similarity of a zero-norm vector");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        dot += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
    return std::clamp(dot / (a.norm * b.norm), -1.0, 1.0);
}

namespace {

// Deterministic hashed bag-of-tokens: tokens = maximal [a-z0-9]+ runs of
// the lower-cased text, bucket and sign from a seeded FNV-1a hash, term
// weight 1 + ln(tf), then L2 normalization.
class FallbackEmbedder final : public Embedder {
public:
    explicit FallbackEmbedder(const EmbedderConfig& cfg)
        : dim_(cfg.dimension), seed_(cfg.seed) {}

    int dimension() const override { return dim_; }

    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<float>> out;
        out.reserve(texts.size());
        for (const auto& text : texts) out.push_back(embed_one(text));
        return out;
    }

private:
    std::vector<float> embed_one(const std::string& text) const {
        std::map<std::string, std::size_t> counts;
        std::string token;
        for (char raw : text) {
            const unsigned char c = static_cast<unsigned char>(raw);
            if (std::isalnum(c)) {
                token.push_back(static_cast<char>(std::tolower(c)));
            } else if (!token.empty()) {
                ++counts[token];
                token.clear();
            }
        }
        if (!token.empty()) ++counts[token];

        std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
        for (const auto& [tok, tf] : counts) {
            const std::uint64_t h = seeded_hash(tok);
            const std::size_t bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim_));
            const double sign = (h >> 63) ? -1.0 : 1.0;
            acc[bucket] += sign * (1.0 + std::log(static_cast<double>(tf)));
        }
        double norm_sq = 0.0;
        for (double v : acc) norm_sq += v * v;
        std::vector<float> out(acc.size(), 0.0f);
        if (norm_sq > 0.0) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (std::size_t i = 0; i < acc.size(); ++i)
                out[i] = static_cast<float>(acc[i] * inv);
        }
        return out;
    }

    std::uint64_t seeded_hash(const std::string& token) const {
        std::uint64_t h = 0xcbf29ce484222325ULL ^ seed_;
        for (unsigned char c : token) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    int dim_;
    std::uint64_t seed_;
};

class RemoteEmbedder final : public Embedder {
public:
    explicit RemoteEmbedder(EmbedderConfig cfg) : cfg_(std::move(cfg)) {
        if (!cfg_.auth_env.empty()) {
            const char* key = std::getenv(cfg_.auth_env.c_str());
            if (!key || !*key)
                throw Error(Error::Kind::config,
                            "environment variable '" + cfg_.auth_env +
                                "' for embedder auth is not set");
            api_key_ = key;
        }
    }

    int dimension() const override { return dim_; }

    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<float>> out;
        out.reserve(texts.size());
        const std::size_t batch = std::max(1, cfg_.batch_size);
        for (std::size_t start = 0; start < texts.size(); start += batch) {
            const std::size_t end = std::min(texts.size(), start + batch);
            std::vector<std::string> chunk(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                           texts.begin() + static_cast<std::ptrdiff_t>(end));
            embed_batch(chunk, out);
        }
        return out;
    }

private:
    static bool retryable_status(int status) {
        return status == 429 || status == 500 || status == 502 || status == 503 ||
               status == 504;
    }

    void embed_batch(const std::vector<std::string>& chunk,
                     std::vector<std::vector<float>>& out) {
        const SplitUrl url = split_url(cfg_.endpoint);
        const json body = {{"model", cfg_.model}, {"input", chunk}};
        const std::string payload = body.dump();
        std::string target = cfg_.path.empty() ? url.path : cfg_.path;
        if (url.path != "/" && !cfg_.path.empty()) target = url.path + cfg_.path;

        int attempts = 0;
        for (;;) {
            ++attempts;
            httplib::Client client(url.origin);
            client.set_connection_timeout(cfg_.timeout_sec, 0);
            client.set_read_timeout(cfg_.timeout_sec, 0);
            httplib::Headers headers;
            if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
            auto res = client.Post(target, headers, payload, "application/json");

            if (!res || retryable_status(res ? res->status : 0)) {
                if (attempts <= cfg_.max_retries) {
                    std::this_thread::sleep_for(
                        std::chrono::milliseconds(100L << std::min(attempts - 1, 4)));
                    continue;
                }
                if (!res)
                    throw Error(Error::Kind::transport,
                                "embedding endpoint unreachable: " + cfg_.endpoint);
                throw Error(Error::Kind::provider,
                            "embedding provider failed with status " +
                                std::to_string(res->status) + " after " +
                                std::to_string(attempts) + " attempts: " + res->body);
            }
            if (res->status == 401 || res->status == 403)
                throw Error(Error::Kind::config,
                            "embedding provider rejected credentials (status " +
                                std::to_string(res->status) + "): " + res->body);
            if (res->status < 200 || res->status >= 300)
                throw Error(Error::Kind::provider,
                            "embedding provider error (status " + std::to_string(res->status) +
                                "): " + res->body);
            parse_response(res->body, chunk.size(), out);
            return;
        }
    }

    void parse_response(const std::string& body, std::size_t expected,
                        std::vector<std::vector<float>>& out) {
        json parsed;
        try {
            parsed = json::parse(body);
        } catch (const json::parse_error& e) {
            throw Error(Error::Kind::provider,
                        std::string("embedding response is not valid JSON: ") + e.what());
        }
        const auto data = parsed.find("data");
        if (data == parsed.end() || !data->is_array() || data->size() != expected)
            throw Error(Error::Kind::provider,
                        "embedding response has unexpected shape (wanted " +
                            std::to_string(expected) + " vectors)");
        std::vector<std::vector<float>> batch(expected);
        for (const auto& item : *data) {
            const std::size_t index = item.value("index", batch.size());
            if (index >= expected)
                throw Error(Error::Kind::provider, "embedding response index out of range");
            batch[index] = item.at("embedding").get<std::vector<float>>();
        }
        for (auto& vec : batch) {
            if (dim_ == 0) dim_ = static_cast<int>(vec.size());
            if (static_cast<int>(vec.size()) != dim_ || vec.empty())
                throw Error(Error::Kind::integrity,
                            "embedding dimension drift: expected " + std::to_string(dim_) +
                                ", got " + std::to_string(vec.size()));
            out.push_back(std::move(vec));
        }
    }

    EmbedderConfig cfg_;
    std::string api_key_;
    int dim_ = 0;
};

}  // namespace

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg) {
    if (cfg.provider == EmbedderConfig::Provider::local_fallback) {
        if (cfg.dimension < 64)
            throw Error(Error::Kind::config, "local_fallback dimension must be >= 64");
        return std::make_unique<FallbackEmbedder>(cfg);
    }
    return std::make_unique<RemoteEmbedder>(cfg);
}

}  // namespace toolgate
