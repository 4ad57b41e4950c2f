#pragma once

#include <string>
#include <vector>

#include "muse/tensor.hpp"

namespace muse {

/// Row-aligned ids and vectors, as produced by `encode` and consumed by
/// `index`/`search`.
struct EmbeddingTable {
    std::vector<std::string> ids;
    Tensor<float> vectors;  // [ids.size(), dim]
};

/// One `id<TAB>v1,v2,...` line per row. Values use the shortest decimal that
/// reads back to the same float, so write -> read -> write is byte-stable.
std::string embeddings_to_text(const EmbeddingTable& table);
EmbeddingTable embeddings_from_text(const std::string& text, const std::string& source = "<embeddings>");
void save_embeddings(const std::string& path, const EmbeddingTable& table);
EmbeddingTable load_embeddings(const std::string& path);

}  // namespace muse
