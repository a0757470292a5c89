#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dexp/corpus.hpp"

namespace dexp {

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct ScoredHit {
    std::string doc_id;
    double score = 0.0;
};

/// Lowercase, split on non-alphanumerics, drop stop-words, Porter-stem when
/// `stem` is on.
std::vector<std::string> tokenize(std::string_view text, bool stem = true);

/// Indexable body plus generated queries, newline-separated. Queries may be
/// empty (no-expansion mode). doc_id mismatch is an error.
std::string expand_text(const Document& doc, const ExpandedDocument& expansion,
                        bool include_title = true);

struct Posting {
    uint32_t doc = 0;  // ordinal into doc_ids
    uint32_t tf = 0;
};

struct InvertedIndex {
    std::unordered_map<std::string, std::vector<Posting>> postings;
    std::vector<uint32_t> doc_lengths;
    double avg_doc_length = 0.0;
    std::vector<std::string> doc_ids;
    Bm25Params params;
    bool stemmed = true;

    size_t doc_count() const { return doc_ids.size(); }
};

InvertedIndex build_index(const std::vector<std::pair<std::string, std::string>>& texts,
                          Bm25Params params = {}, bool stem = true);

/// BM25 with idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)). Distinct query
/// terms each contribute once. Descending score, ties by doc_id ascending.
std::vector<ScoredHit> bm25_search(const InvertedIndex& index, const std::string& query, int k);

/// Versioned binary snapshot (little-endian, terms sorted for reproducible
/// bytes).
void save_index(const InvertedIndex& index, const std::filesystem::path& path);
InvertedIndex load_index(const std::filesystem::path& path);

}  // namespace dexp
