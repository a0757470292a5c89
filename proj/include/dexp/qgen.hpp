#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dexp/gateway.hpp"

namespace dexp {

struct FewshotExample {
    std::string article;
    std::string topics;    // comma-separated topic names, one line
    std::string keywords;  // comma-separated keyword list, one line
    std::vector<std::string> queries;
};

/// Exemplar file: blocks of "Article:" / "Topics:" / "Keywords:" / "Queries:"
/// sections separated by a line containing only "---". Query lines may be
/// bulleted or bare.
std::vector<FewshotExample> load_fewshot_examples(const std::filesystem::path& path);

/// Prompt variants for the ablation study: `fewshot` carries only
/// article/query exemplars, `fewshot_keywords` adds the keyword slot, `full`
/// adds topic coverage on top.
enum class PromptMode { fewshot, fewshot_keywords, full };

PromptMode prompt_mode_from_string(std::string_view name);
std::string_view to_string(PromptMode mode);

struct GenerationConfig {
    int queries_per_doc = 30;  // M
    int batch_size = 3;        // b
    double temperature = 0.8;
    int max_parse_retries = 2;
    int max_tokens = 512;
    PromptMode mode = PromptMode::full;
    std::vector<FewshotExample> fewshot;
};

/// Few-shot prompt with exemplars followed by the task slots. An empty topic
/// list fills the Topics slot with "general content of the passage".
std::string build_generation_prompt(const std::string& body,
                                    const std::vector<std::string>& topic_names,
                                    const std::vector<std::string>& keywords,
                                    const GenerationConfig& config);

/// Extracts query lines: bullet/numbered items, or bare lines ending in '?'.
/// Returns up to `expected` entries; empty result signals a parse failure.
std::vector<std::string> parse_queries(const std::string& completion, int expected);

struct GenerationRecord {
    std::string doc_id;
    std::vector<std::string> queries;
    std::vector<std::string> topics_used;
    std::vector<std::string> keywords_used;
    int batches_issued = 0;
    bool shortfall = false;  // fewer than M queries at the batch cap
};

/// Chat transport failure mid-generation; carries what was accumulated.
class GenerationError : public std::runtime_error {
public:
    GenerationError(const std::string& message, GenerationRecord partial)
        : std::runtime_error(message), partial_(std::move(partial)) {}

    const GenerationRecord& partial() const { return partial_; }

private:
    GenerationRecord partial_;
};

/// Issues identical batched prompts until M case-insensitively distinct
/// queries accumulate or the 4*ceil(M/b) call cap is hit (shortfall warning).
GenerationRecord generate_queries(const std::string& doc_id, const std::string& body,
                                  const std::vector<std::string>& topic_names,
                                  const std::vector<std::string>& keywords,
                                  const GenerationConfig& config, ChatBackend& chat);

}  // namespace dexp
