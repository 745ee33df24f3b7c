#include "toolgate/index.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <mutex>

#include "toolgate/errors.hpp"

namespace toolgate {

namespace {

const char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve(((len + 2) / 3) * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        unsigned int chunk = static_cast<unsigned int>(data[i]) << 16;
        if (i + 1 < len) chunk |= static_cast<unsigned int>(data[i + 1]) << 8;
        if (i + 2 < len) chunk |= static_cast<unsigned int>(data[i + 2]);
        out.push_back(kB64Alphabet[(chunk >> 18) & 0x3f]);
        out.push_back(kB64Alphabet[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < len ? kB64Alphabet[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < len ? kB64Alphabet[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    static int lookup[256];
    static std::once_flag once;
    std::call_once(once, [] {
        std::fill(std::begin(lookup), std::end(lookup), -1);
        for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kB64Alphabet[i])] = i;
    });
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    unsigned int chunk = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = lookup[static_cast<unsigned char>(c)];
        if (v < 0) throw Error(Error::Kind::integrity, "invalid base64 payload in index file");
        chunk = (chunk << 6) | static_cast<unsigned int>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((chunk >> bits) & 0xff));
        }
    }
    return out;
}

std::string encode_vector(const float* values, int dim) {
    // little-endian float32; all supported targets are little-endian
    return base64_encode(reinterpret_cast<const unsigned char*>(values),
                         static_cast<std::size_t>(dim) * sizeof(float));
}

std::vector<float> decode_vector(const std::string& b64, int dim) {
    const auto bytes = base64_decode(b64);
    if (bytes.size() != static_cast<std::size_t>(dim) * sizeof(float))
        throw Error(Error::Kind::integrity,
                    "index vector payload has wrong length (truncated file?)");
    std::vector<float> out(static_cast<std::size_t>(dim));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

// Inner product with eight independent accumulators; keeps the scan well
// under the latency budget while staying within 1e-12 of a naive double
// accumulation.
double dot_f32(const float* a, const float* b, int dim) {
    double acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
    double acc4 = 0, acc5 = 0, acc6 = 0, acc7 = 0;
    int i = 0;
    for (; i + 8 <= dim; i += 8) {
        acc0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        acc1 += static_cast<double>(a[i + 1]) * static_cast<double>(b[i + 1]);
        acc2 += static_cast<double>(a[i + 2]) * static_cast<double>(b[i + 2]);
        acc3 += static_cast<double>(a[i + 3]) * static_cast<double>(b[i + 3]);
        acc4 += static_cast<double>(a[i + 4]) * static_cast<double>(b[i + 4]);
        acc5 += static_cast<double>(a[i + 5]) * static_cast<double>(b[i + 5]);
        acc6 += static_cast<double>(a[i + 6]) * static_cast<double>(b[i + 6]);
        acc7 += static_cast<double>(a[i + 7]) * static_cast<double>(b[i + 7]);
    }
    double tail = 0;
    for (; i < dim; ++i) tail += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return ((acc0 + acc1) + (acc2 + acc3)) + ((acc4 + acc5) + (acc6 + acc7)) + tail;
}

constexpr int kIndexFormatVersion = 1;

}  // namespace

std::string canonical_tool_text(const ToolSpec& spec) {
    // nlohmann::json objects iterate in sorted key order, so dump() is the
    // canonical serialization.
    const json doc = {{"name", spec.name},
                      {"description", spec.description},
                      {"arguments", spec.arguments}};
    return doc.dump();
}

ToolIndex ToolIndex::build(const ToolRegistry& registry, const EmbedderConfig& cfg) {
    if (registry.empty())
        throw Error(Error::Kind::validation, "cannot build an index over an empty registry");

    ToolIndex index;
    index.cfg_ = cfg;
    index.created_at_ = registry.created_at();

    std::vector<std::string> texts;
    texts.reserve(registry.size());
    for (const auto& [name, spec] : registry) {
        index.names_.push_back(name);
        texts.push_back(canonical_tool_text(spec));
    }

    auto embedder = make_embedder(cfg);
    const auto vectors = embedder->embed(texts);
    if (vectors.size() != texts.size())
        throw Error(Error::Kind::integrity, "embedder returned a partial batch; aborting build");

    index.dim_ = static_cast<int>(vectors.front().size());
    index.matrix_.reserve(vectors.size() * static_cast<std::size_t>(index.dim_));
    index.norms_.reserve(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        const auto& vec = vectors[i];
        if (static_cast<int>(vec.size()) != index.dim_)
            throw Error(Error::Kind::integrity,
                        "embedding dimension drift at tool '" + index.names_[i] + "'");
        const double norm = euclidean_norm(vec);
        if (norm == 0.0)
            throw Error(Error::Kind::validation,
                        "tool '" + index.names_[i] + "' embedded to a zero vector");
        index.norms_.push_back(norm);
        index.matrix_.insert(index.matrix_.end(), vec.begin(), vec.end());
    }
    return index;
}

void ToolIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Error::Kind::io, "cannot write index file: " + path.string());
    const json header = {{"format_version", kIndexFormatVersion},
                         {"embedder", cfg_.to_json()},
                         {"fingerprint", cfg_.fingerprint()},
                         {"dimension", dim_},
                         {"count", names_.size()},
                         {"created_at", created_at_}};
    out << header.dump() << "\n";
    for (std::size_t i = 0; i < names_.size(); ++i) {
        const json row = {
            {"name", names_[i]},
            {"vector", encode_vector(matrix_.data() + i * static_cast<std::size_t>(dim_), dim_)}};
        out << row.dump() << "\n";
    }
    out.flush();
    if (!out) throw Error(Error::Kind::io, "short write to index file: " + path.string());
}

ToolIndex ToolIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Error::Kind::io, "cannot read index file: " + path.string());

    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw Error(Error::Kind::integrity, "index file is empty: " + path.string());
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error(Error::Kind::integrity,
                    "index header is not valid JSON: " + std::string(e.what()));
    }
    const int version = header.value("format_version", -1);
    if (version != kIndexFormatVersion)
        throw Error(Error::Kind::version,
                    "index format_version " + std::to_string(version) +
                        " is not supported (expected " + std::to_string(kIndexFormatVersion) +
                        ")");

    ToolIndex index;
    index.cfg_ = EmbedderConfig::from_json(header.at("embedder"));
    index.dim_ = header.at("dimension").get<int>();
    index.created_at_ = header.value("created_at", std::int64_t{0});
    const std::size_t expected = header.at("count").get<std::size_t>();

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(Error::Kind::integrity,
                        "index line " + std::to_string(line_no) +
                            " is corrupt (truncated file?): " + e.what());
        }
        index.names_.push_back(row.at("name").get<std::string>());
        const auto vec = decode_vector(row.at("vector").get<std::string>(), index.dim_);
        const double norm = euclidean_norm(vec);
        if (norm == 0.0)
            throw Error(Error::Kind::integrity,
                        "index holds a zero vector for tool '" + index.names_.back() + "'");
        index.norms_.push_back(norm);
        index.matrix_.insert(index.matrix_.end(), vec.begin(), vec.end());
    }
    if (index.names_.size() != expected)
        throw Error(Error::Kind::integrity,
                    "index holds " + std::to_string(index.names_.size()) +
                        " vectors but header says " + std::to_string(expected) +
                        " (truncated file?)");
    return index;
}

void ToolIndex::ensure_compatible(const EmbedderConfig& cfg) const {
    if (cfg.fingerprint() != cfg_.fingerprint())
        throw Error(Error::Kind::config,
                    "embedder fingerprint mismatch: index built with " +
                        cfg_.fingerprint().dump() + ", queries configured with " +
                        cfg.fingerprint().dump());
}

EmbeddingVector ToolIndex::vector_at(std::size_t i) const {
    const float* row = matrix_.data() + i * static_cast<std::size_t>(dim_);
    EmbeddingVector vec;
    vec.values.assign(row, row + dim_);
    vec.norm = norms_[i];
    return vec;
}

RetrievalResult ToolIndex::search(const RetrievalQuery& query) const {
    if (query.text.empty())
        throw Error(Error::Kind::validation, "query text must be non-empty");
    if (query.k < 1) throw Error(Error::Kind::validation, "top_k must be >= 1");

    if (!query_embedder_) query_embedder_ = make_embedder(cfg_);
    const auto vectors = query_embedder_->embed({query.text});
    EmbeddingVector qvec = EmbeddingVector::of(vectors.front());
    if (qvec.norm == 0.0)
        throw Error(Error::Kind::validation,
                    "query embedded to a zero vector: '" + query.text + "'");
    return search_embedded(qvec, query.k, query.text);
}

RetrievalResult ToolIndex::search_embedded(const EmbeddingVector& query_vec, int k,
                                           const std::string& echo) const {
    if (static_cast<int>(query_vec.values.size()) != dim_)
        throw Error(Error::Kind::validation,
                    "query dimension " + std::to_string(query_vec.values.size()) +
                        " does not match index dimension " + std::to_string(dim_));
    if (query_vec.norm == 0.0)
        throw Error(Error::Kind::validation, "query vector has zero norm");

    const std::size_t n = names_.size();
    std::vector<std::pair<double, std::size_t>> scored(n);
    const float* q = query_vec.values.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double dot = dot_f32(q, matrix_.data() + i * static_cast<std::size_t>(dim_), dim_);
        const double score =
            std::clamp(dot / (query_vec.norm * norms_[i]), -1.0, 1.0);
        scored[i] = {score, i};
    }

    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), n);
    const auto better = [this](const std::pair<double, std::size_t>& a,
                               const std::pair<double, std::size_t>& b) {
        if (a.first != b.first) return a.first > b.first;
        return names_[a.second] < names_[b.second];
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), better);

    RetrievalResult result;
    result.query_echo = echo;
    result.hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        result.hits.push_back({names_[scored[i].second], scored[i].first});
    return result;
}

}  // namespace toolgate
