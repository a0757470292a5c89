#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dexp/dense.hpp"
#include "dexp/gateway.hpp"
#include "dexp/qgen.hpp"
#include "dexp/sparse.hpp"
#include "dexp/topics.hpp"

namespace dexp {

/// One experiment manifest: every pipeline knob in a single JSON file.
struct PipelineConfig {
    std::filesystem::path corpus_path;
    std::filesystem::path queries_path;
    std::filesystem::path qrels_path;
    std::filesystem::path fewshot_path;
    std::filesystem::path output_dir = "out";
    bool include_title = true;

    BackendConfig embedding;
    BackendConfig chat;

    TopicFitConfig topics;
    int keywords_per_topic = 10;       // c-TF-IDF terms per topic (M)
    int representatives_per_topic = 3; // sentences fed to name refinement (L)
    int refine_retries = 2;

    int keyword_top_n = 20;
    double keyword_lambda = 0.7;
    int keyword_target = 10;

    GenerationConfig generation;  // fewshot examples loaded at generate time

    Bm25Params bm25;
    bool stem = true;

    FusionParams fusion;

    int search_depth = 1000;
    std::string run_tag = "dexp";
    int workers = 4;

    std::filesystem::path artifact(const std::string& name) const { return output_dir / name; }
};

/// Parses the JSON config file, applies `--set key.path=value` overrides and
/// the DEXP_{EMBED,CHAT}_{ENDPOINT,MODEL} environment variables, validates
/// ranges. Throws std::runtime_error with a config-prefixed message.
PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    const std::vector<std::string>& overrides = {});

}  // namespace dexp
