#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "toolgate/embedder.hpp"
#include "toolgate/registry.hpp"

namespace toolgate {

struct RetrievalQuery {
    std::string text;
    int k = 10;
};

struct RetrievalHit {
    std::string name;
    double score;  // cosine similarity in [-1,1]

    bool operator==(const RetrievalHit&) const = default;
};

struct RetrievalResult {
    std::vector<RetrievalHit> hits;  // score descending, ties by ascending name
    std::string query_echo;
};

// The exact string that gets embedded for a tool: name, description, and
// argument schema serialized with sorted keys and no insignificant
// whitespace.
std::string canonical_tool_text(const ToolSpec& spec);

// Exact top-k cosine index over all registered tools. Immutable after
// build; searches are read-only and safe to run concurrently.
class ToolIndex {
public:
    static ToolIndex build(const ToolRegistry& registry, const EmbedderConfig& cfg);

    void save(const std::filesystem::path& path) const;
    static ToolIndex load(const std::filesystem::path& path);

    // Throws when `cfg` does not match the fingerprint the index was built
    // with.
    void ensure_compatible(const EmbedderConfig& cfg) const;

    RetrievalResult search(const RetrievalQuery& query) const;

    // Scores a pre-embedded query against every stored vector; exposed so
    // callers can embed once and search many indexes.
    RetrievalResult search_embedded(const EmbeddingVector& query_vec, int k,
                                    const std::string& echo) const;

    std::size_t size() const { return names_.size(); }
    int dimension() const { return dim_; }
    const EmbedderConfig& embedder_config() const { return cfg_; }
    const std::vector<std::string>& names() const { return names_; }
    EmbeddingVector vector_at(std::size_t i) const;

private:
    ToolIndex() = default;

    int dim_ = 0;
    std::int64_t created_at_ = 0;
    EmbedderConfig cfg_;
    std::vector<std::string> names_;   // sorted, parallel to rows of matrix_
    std::vector<float> matrix_;        // row-major, names_.size() x dim_
    std::vector<double> norms_;
    mutable std::shared_ptr<Embedder> query_embedder_;  // lazy
};

}  // namespace toolgate
