#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "toolgate/index.hpp"

namespace toolgate::testing {

// Brute-force reference for ToolIndex::search: score every stored vector
// with cosine_similarity, sort by (score desc, name asc), take k. Kept
// deliberately naive and separate from the index's scan path.
inline std::vector<RetrievalHit> brute_force_topk(const ToolIndex& index,
                                                  const EmbeddingVector& query, int k) {
    struct Scored {
        std::string name;
        double score;
    };
    std::vector<Scored> scored;
    scored.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i)
        scored.push_back({index.names()[i], cosine_similarity(query, index.vector_at(i))});
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.name < b.name;
    });
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    std::vector<RetrievalHit> hits;
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) hits.push_back({scored[i].name, scored[i].score});
    return hits;
}

inline EmbeddingVector embed_query(const ToolIndex& index, const std::string& text) {
    auto embedder = make_embedder(index.embedder_config());
    return EmbeddingVector::of(embedder->embed({text}).front());
}

}  // namespace toolgate::testing
