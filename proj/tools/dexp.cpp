#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "dexp/pipeline.hpp"
#include "dexp/util.hpp"

namespace {

using dexp::PipelineConfig;
namespace pipeline = dexp::pipeline;

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> values;
    size_t start = 0;
    while (start <= csv.size()) {
        size_t comma = csv.find(',', start);
        std::string piece = comma == std::string::npos ? csv.substr(start)
                                                       : csv.substr(start, comma - start);
        piece = dexp::util::trim(piece);
        if (!piece.empty()) values.push_back(std::stod(piece));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return values;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> values;
    for (double v : parse_double_list(csv)) values.push_back(static_cast<int>(v));
    return values;
}

std::string filtered_metrics_json(const dexp::MetricReport& report,
                                  const std::vector<std::string>& metrics) {
    nlohmann::json all = nlohmann::json::parse(dexp::metric_report_json(report));
    nlohmann::json out;
    for (const auto& m : metrics) {
        if (!all.contains(m)) throw std::invalid_argument("unknown metric: " + m);
        out[m] = all.at(m);
    }
    out["evaluated"] = all.at("evaluated");
    out["skipped"] = all.at("skipped");
    return out.dump(2) + "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"topic-guided document expansion and retrieval pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "pipeline config JSON file")->required();
    app.add_option("--set", overrides, "config override, key.path=value (repeatable)");

    auto* cmd_ingest =
        app.add_subcommand("ingest", "validate inputs and write the normalized corpus");
    auto* cmd_fit = app.add_subcommand("fit-topics", "fit the sentence-level topic model");
    auto* cmd_keywords =
        app.add_subcommand("extract-keywords", "extract and select per-document keywords");
    auto* cmd_generate = app.add_subcommand("generate", "generate queries per document");

    auto* cmd_index_sparse = app.add_subcommand("index-sparse", "build the BM25 inverted index");
    bool no_expansion = false;
    cmd_index_sparse->add_flag("--no-expansion", no_expansion,
                               "index raw bodies without generated queries");

    auto* cmd_index_dense =
        app.add_subcommand("index-dense", "build dense text, query and append indices");

    auto* cmd_search = app.add_subcommand("search", "run retrieval and write a TREC run file");
    std::string search_mode = "bm25";
    std::string search_out;
    double search_alpha = std::nan("");
    int search_depth = 0;
    cmd_search->add_option("--mode", search_mode, "bm25 | fused | text | append")->required();
    cmd_search->add_option("--out", search_out, "run file path");
    cmd_search->add_option("--alpha", search_alpha, "fusion weight override");
    cmd_search->add_option("--depth", search_depth, "result depth override");

    auto* cmd_evaluate = app.add_subcommand("evaluate", "score a run against qrels");
    std::string eval_run, eval_qrels, eval_out;
    std::string eval_metrics = "map,ndcg@10,recall@100";
    cmd_evaluate->add_option("--run", eval_run, "TREC run file")->required();
    cmd_evaluate->add_option("--qrels", eval_qrels, "qrels file (default: config data.qrels)");
    cmd_evaluate->add_option("--out", eval_out, "metric report JSON path");
    cmd_evaluate->add_option("--metrics", eval_metrics, "comma-separated metric list");

    auto* cmd_sweep_alpha =
        app.add_subcommand("sweep-alpha", "fusion-weight sweep (CSV of alpha vs metrics)");
    std::string alpha_values = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
    std::string alpha_out;
    cmd_sweep_alpha->add_option("--values", alpha_values, "comma-separated alpha grid");
    cmd_sweep_alpha->add_option("--out", alpha_out, "CSV path");

    auto* cmd_sweep_count = app.add_subcommand(
        "sweep-query-count", "query-count sweep (CSV of M vs metrics, rebuilt sparse index)");
    std::string count_values;
    std::string count_out;
    cmd_sweep_count->add_option("--counts", count_values, "comma-separated query counts")
        ->required();
    cmd_sweep_count->add_option("--out", count_out, "CSV path");

    auto* cmd_ablate =
        app.add_subcommand("ablate", "regenerate the expanded corpus under a prompt ablation");
    std::string ablate_mode;
    cmd_ablate->add_option("--mode", ablate_mode, "F | F+K | full")->required();

    auto* cmd_topic_recall =
        app.add_subcommand("topic-recall", "per-document topic recall of generated queries");
    std::string recall_out;
    cmd_topic_recall->add_option("--out", recall_out, "report JSON path");

    auto* cmd_correlate = app.add_subcommand(
        "correlate", "correlate topic recall with per-query retrieval gains");
    std::string corr_baseline, corr_expanded, corr_recall, corr_out;
    cmd_correlate->add_option("--baseline-run", corr_baseline, "baseline TREC run")->required();
    cmd_correlate->add_option("--expanded-run", corr_expanded, "expanded TREC run")->required();
    cmd_correlate->add_option("--topic-recall", corr_recall,
                              "topic recall report (default: output_dir/topic_recall.json)");
    cmd_correlate->add_option("--out", corr_out, "correlation JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    PipelineConfig cfg;
    try {
        cfg = dexp::load_pipeline_config(config_path, overrides);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*cmd_ingest) {
            pipeline::ingest(cfg);
        } else if (*cmd_fit) {
            pipeline::fit_topics_stage(cfg);
        } else if (*cmd_keywords) {
            pipeline::extract_keywords_stage(cfg);
        } else if (*cmd_generate) {
            pipeline::generate_stage(cfg);
        } else if (*cmd_index_sparse) {
            pipeline::index_sparse_stage(cfg, no_expansion);
        } else if (*cmd_index_dense) {
            pipeline::index_dense_stage(cfg);
        } else if (*cmd_search) {
            if (!std::isnan(search_alpha)) cfg.fusion.alpha = search_alpha;
            if (search_depth > 0) cfg.search_depth = search_depth;
            pipeline::search_stage(cfg, pipeline::search_mode_from_string(search_mode),
                                   search_out.empty() ? std::filesystem::path{}
                                                      : std::filesystem::path(search_out));
        } else if (*cmd_evaluate) {
            std::filesystem::path qrels =
                eval_qrels.empty() ? cfg.qrels_path : std::filesystem::path(eval_qrels);
            if (qrels.empty())
                throw std::runtime_error("evaluate: no qrels given (flag or config data.qrels)");
            std::filesystem::path out =
                eval_out.empty() ? cfg.artifact("metrics.json") : std::filesystem::path(eval_out);
            auto report = pipeline::evaluate_stage(eval_run, qrels, "");
            std::vector<std::string> wanted;
            {
                size_t start = 0;
                while (start <= eval_metrics.size()) {
                    size_t comma = eval_metrics.find(',', start);
                    std::string m = dexp::util::trim(
                        comma == std::string::npos
                            ? eval_metrics.substr(start)
                            : eval_metrics.substr(start, comma - start));
                    if (!m.empty()) wanted.push_back(m);
                    if (comma == std::string::npos) break;
                    start = comma + 1;
                }
            }
            std::string doc = filtered_metrics_json(report, wanted);
            dexp::util::write_file_atomic(out, doc);
            std::cout << doc;
        } else if (*cmd_sweep_alpha) {
            auto out = alpha_out.empty() ? cfg.artifact("sweep_alpha.csv")
                                         : std::filesystem::path(alpha_out);
            pipeline::sweep_alpha(cfg, parse_double_list(alpha_values), out);
        } else if (*cmd_sweep_count) {
            auto out = count_out.empty() ? cfg.artifact("sweep_query_count.csv")
                                         : std::filesystem::path(count_out);
            pipeline::sweep_query_count(cfg, parse_int_list(count_values), out);
        } else if (*cmd_ablate) {
            pipeline::ablate_stage(cfg, dexp::prompt_mode_from_string(ablate_mode));
        } else if (*cmd_topic_recall) {
            auto out = recall_out.empty() ? cfg.artifact("topic_recall.json")
                                          : std::filesystem::path(recall_out);
            pipeline::topic_recall_stage(cfg, out);
        } else if (*cmd_correlate) {
            auto recall_path = corr_recall.empty() ? cfg.artifact("topic_recall.json")
                                                   : std::filesystem::path(corr_recall);
            auto out = corr_out.empty() ? cfg.artifact("correlation.json")
                                        : std::filesystem::path(corr_out);
            pipeline::correlate_stage(cfg, corr_baseline, corr_expanded, recall_path, out);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
