#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dexp/gateway.hpp"
#include "dexp/topics.hpp"

namespace dexp {

struct KeywordCandidate {
    std::string phrase;   // 1-3 word n-gram, lowercased
    double score = 0.0;   // cosine similarity to the document embedding
};

struct KeywordSets {
    std::string doc_id;
    std::vector<std::string> topic_level;       // K^topic_d
    std::vector<KeywordCandidate> doc_level;    // K^doc_d, in MMR selection order
    std::vector<std::string> selected;          // K-hat_d, <= target phrases

    /// Unified candidate pool: doc-level phrases (MMR order) followed by
    /// topic-level phrases, deduplicated keeping first occurrence.
    std::vector<std::string> pool() const;
};

/// Candidate 1-3 word n-grams over the tokenized body. Windows may not start
/// or end on a stop-word and never contain numeric-only tokens. Lowercased,
/// deduplicated in first-occurrence order.
std::vector<std::string> candidate_ngrams(const std::string& body);

/// Greedy MMR selection: first pick maximizes relevance; each next pick
/// maximizes lambda*rel(c) - (1-lambda)*max_{s in selected} sim(c, s).
/// Ties break toward the lexicographically smaller tiebreak key. Returns
/// selected indices in selection order.
std::vector<size_t> mmr_select(const std::vector<double>& relevance,
                               const std::function<double(size_t, size_t)>& similarity,
                               double lambda, size_t top_n,
                               const std::vector<std::string>& tiebreak);

/// n-gram extraction + cosine scoring against the document embedding + MMR.
std::vector<KeywordCandidate> extract_doc_keywords(const std::string& body,
                                                   const EmbeddingVector& doc_embedding,
                                                   EmbeddingBackend& backend, int top_n = 20,
                                                   double lambda = 0.7);

/// Concatenation of each assigned topic's c-TF-IDF terms (ascending topic
/// id), deduplicated keeping first occurrence.
std::vector<std::string> topic_keywords_for_doc(const DocumentTopics& doc_topics,
                                                const TopicModel& model);

std::string build_keyword_prompt(const std::string& body, const std::vector<std::string>& pool,
                                 int target);

/// Asks the chat backend to pick `target` keywords from the pool. Off-pool
/// phrases are dropped; short lists are padded from the pool (doc-level score
/// descending, then topic-level order). Chat failure falls back to the
/// padding order alone.
std::vector<std::string> select_keywords_llm(const std::string& body, const KeywordSets& sets,
                                             ChatBackend& chat, int target = 10);

void save_keyword_sets(const std::vector<KeywordSets>& sets, const std::filesystem::path& path);
std::vector<KeywordSets> load_keyword_sets(const std::filesystem::path& path);

}  // namespace dexp
