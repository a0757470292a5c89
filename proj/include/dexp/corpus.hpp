#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dexp {

struct Document {
    std::string doc_id;
    std::string title;
    std::string text;

    /// Body used for indexing and embedding: "title text" when the title is
    /// non-empty and include_title is on, otherwise just the text.
    std::string indexable_body(bool include_title = true) const;
};

struct QueryRecord {
    std::string query_id;
    std::string text;
};

/// Relevance judgments: query_id -> (doc_id -> grade >= 0).
struct Qrels {
    std::map<std::string, std::map<std::string, int>> judgments;
};

struct ExpandedDocument {
    std::string doc_id;
    std::vector<std::string> queries;
};

/// One sentence as a [begin, end) character span into the segmented string.
struct Sentence {
    std::string text;
    size_t begin = 0;
    size_t end = 0;
};

struct SentenceSet {
    std::string doc_id;
    std::vector<Sentence> sentences;
};

/// Loads a newline-delimited JSON corpus with `_id`, `title`, `text` fields.
/// Throws on unreadable files, malformed lines (message carries the line
/// number) and duplicate ids.
std::vector<Document> load_corpus(const std::filesystem::path& path);

/// Loads newline-delimited JSON queries with `_id` and `text` fields.
std::vector<QueryRecord> load_queries(const std::filesystem::path& path);

/// Loads tab-separated qrels (one header row; query-id, corpus-id, score).
/// Grades must parse as integers >= 0; duplicate pairs are an error.
Qrels load_qrels(const std::filesystem::path& path);

/// Rule-based deterministic sentence segmentation: splits on '.', '!' or '?'
/// followed by whitespace and an uppercase/digit sentence start, protecting a
/// fixed abbreviation list and decimal numbers. A text without terminators is
/// one sentence. Spans cover every non-whitespace character in order.
std::vector<Sentence> segment_text(const std::string& text);

SentenceSet segment_sentences(const Document& doc);

std::vector<ExpandedDocument> read_expanded_corpus(const std::filesystem::path& path);

/// Writes one JSON line per document: {"_id": ..., "queries": [...]}.
/// Every document must carry at least one non-empty query.
void write_expanded_corpus(const std::vector<ExpandedDocument>& docs,
                           const std::filesystem::path& path);

}  // namespace dexp
