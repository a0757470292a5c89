#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dexp/corpus.hpp"
#include "dexp/gateway.hpp"
#include "dexp/topics.hpp"

namespace dexp {

struct RunEntry {
    std::string doc_id;
    double score = 0.0;
};

/// Ranked retrieval output per query. Within a query, doc ids are unique and
/// scores non-increasing; depth at most 1000.
struct RunFile {
    std::map<std::string, std::vector<RunEntry>> rankings;
    std::string tag = "dexp";
};

/// nDCG with gains 2^rel - 1 and log2(i + 1) discounts; 0 when IDCG is 0.
double ndcg_at_k(const std::vector<std::string>& ranked,
                 const std::map<std::string, int>& judgments, int k = 10);

/// |relevant in top-k| / |relevant|, relevance meaning grade > 0.
double recall_at_k(const std::vector<std::string>& ranked,
                   const std::map<std::string, int>& judgments, int k = 100);

double average_precision(const std::vector<std::string>& ranked,
                         const std::map<std::string, int>& judgments);

struct MetricReport {
    double map = 0.0;
    double ndcg_at_10 = 0.0;
    double recall_at_100 = 0.0;
    std::map<std::string, double> per_query_ap;
    std::map<std::string, double> per_query_ndcg;
    std::map<std::string, double> per_query_recall;
    int evaluated = 0;  // queries with >= 1 relevant judged doc
    int skipped = 0;    // judged queries without relevant docs
};

/// Aggregates over every qrels query holding at least one relevant document;
/// queries absent from the run contribute zeros.
MetricReport evaluate_run(const RunFile& run, const Qrels& qrels, int ndcg_k = 10,
                          int recall_k = 100);

std::string metric_report_json(const MetricReport& report);

/// Fraction of a document's gold topics covered by the topics its generated
/// queries are assigned to (outliers excluded). Requires a non-empty gold set.
double topic_recall(const std::set<int>& gold_topics, const std::vector<std::string>& queries,
                    const TopicModel& model, EmbeddingBackend& backend);

/// Sample Pearson correlation coefficient. Requires >= 2 points and nonzero
/// variance on both sides.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// Six-column TREC format: "qid Q0 docid rank score tag", scores at 6
/// significant digits.
void write_run(const RunFile& run, const std::filesystem::path& path);
RunFile read_run(const std::filesystem::path& path);

}  // namespace dexp
