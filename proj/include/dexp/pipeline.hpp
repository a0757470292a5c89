#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dexp/config.hpp"
#include "dexp/evalx.hpp"
#include "dexp/qgen.hpp"

namespace dexp::pipeline {

// Stage artifact names under the configured output directory.
inline constexpr const char* kIngestedCorpus = "corpus.ingested.jsonl";
inline constexpr const char* kTopicModel = "topics.json";
inline constexpr const char* kDocTopics = "doc_topics.jsonl";
inline constexpr const char* kKeywordSets = "keywords.jsonl";
inline constexpr const char* kExpandedCorpus = "expanded.jsonl";
inline constexpr const char* kGenerationRecords = "generation_records.jsonl";
inline constexpr const char* kSparseIndex = "sparse.idx";
inline constexpr const char* kDenseTextIndex = "dense_text.idx";
inline constexpr const char* kDenseQueryIndex = "dense_query.idx";
inline constexpr const char* kDenseAppendIndex = "dense_append.idx";

/// Validates the BEIR inputs and writes the normalized corpus (documents with
/// an empty indexable body are skipped with a warning).
void ingest(const PipelineConfig& cfg);

/// Sentence segmentation + embedding + clustering + c-TF-IDF keywords +
/// representative sentences + LLM topic names. Writes the topic model and
/// per-document topic sets.
void fit_topics_stage(const PipelineConfig& cfg);

void extract_keywords_stage(const PipelineConfig& cfg);

/// Topic-coverage query generation; writes the expanded corpus plus one
/// generation record per document.
void generate_stage(const PipelineConfig& cfg);

void index_sparse_stage(const PipelineConfig& cfg, bool no_expansion = false);

void index_dense_stage(const PipelineConfig& cfg);

enum class SearchMode { bm25, fused, text, append };
SearchMode search_mode_from_string(std::string_view name);
std::string_view to_string(SearchMode mode);

/// Runs retrieval for every query at cfg.search_depth and writes a TREC run.
/// Returns the run path (default: run.<mode>.trec under the output dir).
std::filesystem::path search_stage(const PipelineConfig& cfg, SearchMode mode,
                                   std::filesystem::path out = {});

MetricReport evaluate_stage(const std::filesystem::path& run_path,
                            const std::filesystem::path& qrels_path,
                            const std::filesystem::path& out_json);

struct SweepRow {
    double x = 0.0;  // alpha or query count
    double ndcg_at_10 = 0.0;
    double recall_at_100 = 0.0;
};

std::vector<SweepRow> sweep_alpha(const PipelineConfig& cfg, const std::vector<double>& alphas,
                                  const std::filesystem::path& out_csv);

std::vector<SweepRow> sweep_query_count(const PipelineConfig& cfg, std::vector<int> counts,
                                        const std::filesystem::path& out_csv);

/// Regenerates the expanded corpus under a prompt ablation mode. `full`
/// writes the standard expanded corpus artifact; F and F+K write suffixed
/// variants next to it. Returns the artifact path.
std::filesystem::path ablate_stage(const PipelineConfig& cfg, PromptMode mode);

struct TopicRecallReport {
    std::map<std::string, double> per_doc;
    double mean = 0.0;
    int counted = 0;
    int undefined = 0;  // documents with an empty gold topic set
};

TopicRecallReport topic_recall_stage(const PipelineConfig& cfg,
                                     const std::filesystem::path& out_json);

struct CorrelationReport {
    double pearson_ndcg = 0.0;
    double pearson_recall = 0.0;
    bool ndcg_defined = false;    // false when a side has zero variance
    bool recall_defined = false;
    int points = 0;
};

/// Pearson correlation between per-query retrieval gains (expanded minus
/// baseline) and the mean topic recall of the documents retrieved in the
/// expanded run's top-10.
CorrelationReport correlate_stage(const PipelineConfig& cfg,
                                  const std::filesystem::path& baseline_run,
                                  const std::filesystem::path& expanded_run,
                                  const std::filesystem::path& topic_recall_json,
                                  const std::filesystem::path& out_json);

}  // namespace dexp::pipeline
