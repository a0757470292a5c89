#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dexp/gateway.hpp"

namespace dexp {

/// Sentinel for sentences whose nearest centroid is beyond the outlier
/// threshold. Real topic ids are 1-based.
inline constexpr int kOutlierTopic = 0;

struct SentenceRef {
    std::string doc_id;
    int index = 0;

    friend bool operator<(const SentenceRef& a, const SentenceRef& b) {
        return std::tie(a.doc_id, a.index) < std::tie(b.doc_id, b.index);
    }
    friend bool operator==(const SentenceRef& a, const SentenceRef& b) {
        return a.doc_id == b.doc_id && a.index == b.index;
    }
};

struct EmbeddedSentence {
    SentenceRef ref;
    std::string text;
    EmbeddingVector embedding;
};

struct TopicModel {
    int dimension = 0;
    std::vector<EmbeddingVector> centroids;  // topic j lives at centroids[j-1]
    std::vector<double> outlier_thresholds;  // per topic, mean + 2 sigma of member distances
    std::vector<std::vector<std::pair<std::string, double>>> keywords;
    std::vector<std::vector<std::string>> representative_sentences;
    std::vector<std::string> names;

    int topic_count() const { return static_cast<int>(centroids.size()); }
};

struct TopicFitConfig {
    int min_cluster_size = 5;
    uint64_t seed = 42;
    int max_k = 20;
    bool normalize = true;      // L2-normalize embeddings before clustering
    int restarts = 4;
    int max_iterations = 100;
    int silhouette_sample = 2000;
};

struct FittedTopics {
    TopicModel model;
    std::vector<int> assignments;  // per input sentence: 1..C or kOutlierTopic
};

/// Clusters sentence embeddings with k-means (k-means++ seeding, restarts),
/// selecting k in [2, min(max_k, N/min_cluster_size)] by mean silhouette.
/// Centroids are plain member means; members beyond mean + 2 sigma of their
/// cluster's distance distribution are marked outliers in `assignments`.
/// Deterministic given the seed. Identical inputs collapse to a single topic.
FittedTopics fit_topics(const std::vector<EmbeddedSentence>& sentences,
                        const TopicFitConfig& config);

/// Nearest centroid by L2 distance (ties toward the lowest topic id), or
/// kOutlierTopic when the winning distance exceeds that topic's threshold.
int assign_topic(const EmbeddingVector& z, const TopicModel& model);

struct DocumentTopics {
    std::string doc_id;
    std::set<int> topic_ids;  // non-outlier topics only; may be empty
};

DocumentTopics document_topics(const std::string& doc_id,
                               const std::vector<EmbeddingVector>& sentence_embeddings,
                               const TopicModel& model);

struct CtfidfTable {
    std::vector<std::string> vocabulary;       // sorted
    std::vector<std::vector<double>> weights;  // weights[topic-1][vocab index]

    double weight_of(int topic, std::string_view term) const;
};

/// Class-based TF-IDF: each topic's sentences form one pseudo-document;
/// weight(t, j) = tf(t, j) * ln(1 + A / f(t)) with A the mean pseudo-document
/// length and f(t) the term's total count. Populates model.keywords with the
/// top `keywords_per_topic` terms per topic (ties broken lexicographically).
CtfidfTable compute_ctfidf(TopicModel& model,
                           const std::vector<std::vector<std::string>>& topic_sentences,
                           int keywords_per_topic = 10);

/// Sentence texts grouped per topic (index j-1), outliers dropped.
std::vector<std::vector<std::string>> group_sentences_by_topic(
    const std::vector<EmbeddedSentence>& sentences, const std::vector<int>& assignments,
    int topic_count);

/// The <= L member sentences closest to the topic centroid, ascending by
/// distance, ties by (doc_id, sentence index).
std::vector<std::string> representative_sentences(const TopicModel& model, int topic,
                                                  const std::vector<EmbeddedSentence>& sentences,
                                                  const std::vector<int>& assignments, int L = 3);

std::string build_topic_name_prompt(const std::vector<std::string>& sample_sentences,
                                    const std::vector<std::string>& keywords);

/// Asks the chat backend for a concise topic label; the reply must start with
/// "topic: ". After `max_retries` malformed replies, falls back to the top-3
/// c-TF-IDF terms joined by "_".
std::string refine_topic_name(const TopicModel& model, int topic, ChatBackend& chat,
                              int max_retries = 2);

void save_topic_model(const TopicModel& model, const std::filesystem::path& path);
TopicModel load_topic_model(const std::filesystem::path& path);

}  // namespace dexp
