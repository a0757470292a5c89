#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dexp/corpus.hpp"
#include "dexp/gateway.hpp"
#include "dexp/sparse.hpp"  // ScoredHit

namespace dexp {

enum class Similarity { inner_product, cosine };

Similarity similarity_from_string(std::string_view name);
std::string_view to_string(Similarity sim);

double similarity_of(const EmbeddingVector& a, const EmbeddingVector& b, Similarity sim);

/// One embedding per document, corpus order.
struct TextIndex {
    std::vector<std::string> doc_ids;
    std::vector<EmbeddingVector> vectors;
    Similarity similarity = Similarity::inner_product;

    int dimension() const { return vectors.empty() ? 0 : static_cast<int>(vectors[0].dimension()); }
};

/// One embedding per generated query, each linked back to its source doc.
struct QueryIndex {
    std::vector<std::string> doc_ids;     // source-document table
    std::vector<EmbeddingVector> vectors; // global query index j
    std::vector<uint32_t> source;         // source[j] -> index into doc_ids
    Similarity similarity = Similarity::inner_product;

    int dimension() const { return vectors.empty() ? 0 : static_cast<int>(vectors[0].dimension()); }
};

struct FusionParams {
    double alpha = 0.5;
    int n_t = 300;
    int n_q = 1000;
    Similarity similarity = Similarity::inner_product;
};

struct FusedHit {
    std::string doc_id;
    double s_t = 0.0;
    double s_q = 0.0;
    double s = 0.0;  // (1 - alpha) * s_t + alpha * s_q
};

TextIndex build_text_index(const std::vector<std::pair<std::string, std::string>>& docs,
                           EmbeddingBackend& backend);

/// Global query ordering: document order, then per-document query order.
QueryIndex build_query_index(const std::vector<ExpandedDocument>& expansions,
                             EmbeddingBackend& backend);

/// Dual-index retrieval: D_t = top-n_t docs from the text index, H_q = top-n_q
/// query entries; per candidate, s_t = sim if in D_t else 0, s_q = max-pooled
/// over its retrieved queries else 0, fused with alpha. Candidates are exactly
/// D_t union the source docs of H_q. Ties everywhere by doc_id ascending.
std::vector<FusedHit> search_fused(const EmbeddingVector& query, const TextIndex& text_index,
                                   const QueryIndex& query_index, const FusionParams& params,
                                   int k);

/// Plain exhaustive top-k over a text index (no-expansion or append modes).
std::vector<ScoredHit> search_text(const EmbeddingVector& query, const TextIndex& index, int k);

/// Append-strategy baseline: the index holds embeddings of expand_text output.
std::vector<ScoredHit> search_append(const EmbeddingVector& query, const TextIndex& append_index,
                                     int k);

void save_text_index(const TextIndex& index, const std::filesystem::path& path);
TextIndex load_text_index(const std::filesystem::path& path);
void save_query_index(const QueryIndex& index, const std::filesystem::path& path);
QueryIndex load_query_index(const std::filesystem::path& path);

}  // namespace dexp
