#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "dexp/keywords.hpp"
#include "dexp/pipeline.hpp"
#include "dexp/util.hpp"
#include "test_helpers.hpp"

using namespace dexp;
namespace pl = dexp::pipeline;

namespace {

const char* kSourceDir = DEXP_SOURCE_DIR;
const char* kBinaryDir = DEXP_BINARY_DIR;

PipelineConfig mini_config(const std::filesystem::path& out_dir,
                           std::vector<std::string> extra = {}) {
    std::vector<std::string> overrides = {
        "data.corpus=" + (std::filesystem::path(kSourceDir) / "data/mini/corpus.jsonl").string(),
        "data.queries=" +
            (std::filesystem::path(kSourceDir) / "data/mini/queries.jsonl").string(),
        "data.qrels=" +
            (std::filesystem::path(kSourceDir) / "data/mini/qrels/test.tsv").string(),
        "data.fewshot=" + (std::filesystem::path(kSourceDir) / "data/mini/fewshot.txt").string(),
        "output_dir=" + out_dir.string(),
    };
    for (auto& o : extra) overrides.push_back(std::move(o));
    return load_pipeline_config(std::filesystem::path(kSourceDir) / "configs/mini.json",
                                overrides);
}

}  // namespace

TEST_CASE("config loads, applies overrides, and validates") {
    testutil::TempDir tmp;
    auto cfg = mini_config(tmp.path, {"fusion.alpha=0.25", "bm25.k1=1.2", "search.depth=500"});
    CHECK(cfg.fusion.alpha == 0.25);
    CHECK(cfg.bm25.k1 == 1.2);
    CHECK(cfg.search_depth == 500);
    CHECK(cfg.generation.queries_per_doc == 30);
    CHECK(cfg.embedding.kind == BackendConfig::Kind::stub);

    CHECK_THROWS_WITH_AS(mini_config(tmp.path, {"fusion.alpha=1.5"}),
                         doctest::Contains("alpha"), std::runtime_error);
    CHECK_THROWS_WITH_AS(mini_config(tmp.path, {"bm25.b=2"}), doctest::Contains("bm25.b"),
                         std::runtime_error);
    CHECK_THROWS_AS(load_pipeline_config("/nonexistent/config.json"), std::runtime_error);
}

TEST_CASE("environment variables override endpoint and model") {
    testutil::TempDir tmp;
    setenv("DEXP_EMBED_MODEL", "env-model", 1);
    auto cfg = mini_config(tmp.path);
    unsetenv("DEXP_EMBED_MODEL");
    CHECK(cfg.embedding.model_name == "env-model");
}

TEST_CASE("full hermetic pipeline over the bundled mini corpus") {
    testutil::TempDir tmp;
    auto cfg = mini_config(tmp.path);

    pl::ingest(cfg);
    CHECK(std::filesystem::exists(cfg.artifact(pl::kIngestedCorpus)));

    pl::fit_topics_stage(cfg);
    CHECK(std::filesystem::exists(cfg.artifact(pl::kTopicModel)));
    CHECK(std::filesystem::exists(cfg.artifact(pl::kDocTopics)));
    auto model = load_topic_model(cfg.artifact(pl::kTopicModel));
    CHECK(model.topic_count() >= 1);
    for (const auto& name : model.names) CHECK(!name.empty());

    pl::extract_keywords_stage(cfg);
    auto keyword_sets = load_keyword_sets(cfg.artifact(pl::kKeywordSets));
    CHECK(keyword_sets.size() == 50);
    for (const auto& s : keyword_sets) {
        CHECK(s.selected.size() <= 10);
        auto pool = s.pool();
        for (const auto& sel : s.selected)
            CHECK(std::find(pool.begin(), pool.end(), sel) != pool.end());
    }

    pl::generate_stage(cfg);
    auto expanded = read_expanded_corpus(cfg.artifact(pl::kExpandedCorpus));
    REQUIRE(expanded.size() == 50);
    for (const auto& e : expanded) CHECK(e.queries.size() == 30);

    pl::index_sparse_stage(cfg);
    pl::index_dense_stage(cfg);
    CHECK(std::filesystem::exists(cfg.artifact(pl::kSparseIndex)));
    CHECK(std::filesystem::exists(cfg.artifact(pl::kDenseTextIndex)));
    CHECK(std::filesystem::exists(cfg.artifact(pl::kDenseQueryIndex)));
    CHECK(std::filesystem::exists(cfg.artifact(pl::kDenseAppendIndex)));

    auto bm25_run = pl::search_stage(cfg, pl::SearchMode::bm25);
    auto fused_run = pl::search_stage(cfg, pl::SearchMode::fused);
    auto text_run = pl::search_stage(cfg, pl::SearchMode::text);
    auto append_run = pl::search_stage(cfg, pl::SearchMode::append);
    for (const auto& p : {bm25_run, fused_run, text_run, append_run})
        CHECK(std::filesystem::exists(p));

    auto report = pl::evaluate_stage(bm25_run, cfg.qrels_path, cfg.artifact("metrics.json"));
    CHECK(report.evaluated == 20);
    CHECK(report.map > 0.0);  // lexical overlap in the mini corpus is strong
    CHECK(std::filesystem::exists(cfg.artifact("metrics.json")));

    SUBCASE("sweep-alpha: the alpha=0 row equals text-only metrics exactly") {
        auto rows = pl::sweep_alpha(cfg, {0.0, 0.5, 1.0}, cfg.artifact("sweep_alpha.csv"));
        REQUIRE(rows.size() == 3);
        auto text_report =
            pl::evaluate_stage(text_run, cfg.qrels_path, cfg.artifact("metrics_text.json"));
        CHECK(rows[0].ndcg_at_10 == text_report.ndcg_at_10);
        CHECK(rows[0].recall_at_100 == text_report.recall_at_100);
        auto csv = testutil::read_file(cfg.artifact("sweep_alpha.csv"));
        CHECK(csv.rfind("alpha,ndcg@10,recall@100\n", 0) == 0);
    }

    SUBCASE("sweep-query-count: the M=0 row equals the no-expansion baseline") {
        auto rows =
            pl::sweep_query_count(cfg, {5, 0}, cfg.artifact("sweep_query_count.csv"));
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].x == 0.0);  // rows ascend in M
        pl::index_sparse_stage(cfg, /*no_expansion=*/true);
        auto baseline_run = pl::search_stage(cfg, pl::SearchMode::bm25,
                                             cfg.artifact("run.noexp.trec"));
        auto baseline = pl::evaluate_stage(baseline_run, cfg.qrels_path,
                                           cfg.artifact("metrics_noexp.json"));
        CHECK(rows[0].ndcg_at_10 == baseline.ndcg_at_10);
        CHECK(rows[0].recall_at_100 == baseline.recall_at_100);
        // Restore the expanded index for later subcases.
        pl::index_sparse_stage(cfg);
    }

    SUBCASE("ablation variants control prompt slots end to end") {
        auto f_path = pl::ablate_stage(cfg, PromptMode::fewshot);
        auto fk_path = pl::ablate_stage(cfg, PromptMode::fewshot_keywords);
        CHECK(std::filesystem::exists(f_path));
        CHECK(std::filesystem::exists(fk_path));
        auto f_docs = read_expanded_corpus(f_path);
        CHECK(f_docs.size() == 50);
        for (const auto& e : f_docs) CHECK(e.queries.size() == 30);
    }

    SUBCASE("topic recall and correlation reports") {
        auto recall_report = pl::topic_recall_stage(cfg, cfg.artifact("topic_recall.json"));
        CHECK(recall_report.counted + recall_report.undefined == 50);
        for (const auto& [doc, r] : recall_report.per_doc) {
            CHECK(r >= 0.0);
            CHECK(r <= 1.0);
        }
        pl::index_sparse_stage(cfg, /*no_expansion=*/true);
        auto baseline_run =
            pl::search_stage(cfg, pl::SearchMode::bm25, cfg.artifact("run.noexp.trec"));
        pl::index_sparse_stage(cfg);
        auto corr = pl::correlate_stage(cfg, baseline_run, bm25_run,
                                        cfg.artifact("topic_recall.json"),
                                        cfg.artifact("correlation.json"));
        CHECK(corr.points > 0);
        CHECK(std::filesystem::exists(cfg.artifact("correlation.json")));
    }
}

TEST_CASE("stage reruns only need upstream artifacts") {
    testutil::TempDir tmp;
    auto cfg = mini_config(tmp.path);
    CHECK_THROWS_WITH_AS(pl::fit_topics_stage(cfg), doctest::Contains("ingest"),
                         std::runtime_error);
    pl::ingest(cfg);
    CHECK_THROWS_WITH_AS(pl::generate_stage(cfg), doctest::Contains("fit-topics"),
                         std::runtime_error);
}

TEST_CASE("deleting downstream artifacts and rerunning reproduces them byte-for-byte") {
    testutil::TempDir tmp;
    auto cfg = mini_config(tmp.path);
    pl::ingest(cfg);
    pl::fit_topics_stage(cfg);
    pl::extract_keywords_stage(cfg);
    pl::generate_stage(cfg);
    pl::index_sparse_stage(cfg);
    auto run = pl::search_stage(cfg, pl::SearchMode::bm25);

    auto expanded_before = testutil::read_file(cfg.artifact(pl::kExpandedCorpus));
    auto sparse_before = testutil::read_file(cfg.artifact(pl::kSparseIndex));
    auto run_before = testutil::read_file(run);

    std::filesystem::remove(cfg.artifact(pl::kExpandedCorpus));
    std::filesystem::remove(cfg.artifact(pl::kSparseIndex));
    std::filesystem::remove(run);
    pl::generate_stage(cfg);
    pl::index_sparse_stage(cfg);
    pl::search_stage(cfg, pl::SearchMode::bm25);

    CHECK(testutil::read_file(cfg.artifact(pl::kExpandedCorpus)) == expanded_before);
    CHECK(testutil::read_file(cfg.artifact(pl::kSparseIndex)) == sparse_before);
    CHECK(testutil::read_file(run) == run_before);
}

TEST_CASE("cli binary runs stages and reports usage errors") {
    testutil::TempDir tmp;
    std::string binary = (std::filesystem::path(kBinaryDir) / "tools/dexp").string();
    REQUIRE(std::filesystem::exists(binary));
    std::string base = binary + " --config " +
                       (std::filesystem::path(kSourceDir) / "configs/mini.json").string() +
                       " --set output_dir=" + tmp.path.string() + " --set data.corpus=" +
                       (std::filesystem::path(kSourceDir) / "data/mini/corpus.jsonl").string() +
                       " --set data.queries=" +
                       (std::filesystem::path(kSourceDir) / "data/mini/queries.jsonl").string() +
                       " --set data.qrels=" +
                       (std::filesystem::path(kSourceDir) / "data/mini/qrels/test.tsv").string() +
                       " --set data.fewshot=" +
                       (std::filesystem::path(kSourceDir) / "data/mini/fewshot.txt").string();

    int rc = std::system((base + " ingest > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(rc) == 0);
    CHECK(std::filesystem::exists(tmp.path / pl::kIngestedCorpus));

    // Missing upstream artifact -> runtime failure (exit 2).
    rc = std::system((base + " generate > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(rc) == 2);

    // Bad config value -> usage/config error (exit 1).
    rc = std::system((base + " --set fusion.alpha=7 ingest > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(rc) == 1);

    // Unknown subcommand -> CLI usage error (exit 1).
    rc = std::system((base + " frobnicate > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(rc) == 1);

    // evaluate consumes an explicit run file and emits a JSON report.
    testutil::write_file(tmp.path / "tiny.trec", "q01 Q0 d004 1 1.0 t\nq01 Q0 d001 2 0.5 t\n");
    rc = std::system((base + " evaluate --run " + (tmp.path / "tiny.trec").string() + " --out " +
                      (tmp.path / "tiny_metrics.json").string() + " > /dev/null 2>&1")
                         .c_str());
    CHECK(WEXITSTATUS(rc) == 0);
    auto metrics = testutil::read_file(tmp.path / "tiny_metrics.json");
    CHECK(metrics.find("\"ndcg@10\"") != std::string::npos);
    CHECK(metrics.find("\"recall@100\"") != std::string::npos);

    // Unknown metric name -> usage error.
    rc = std::system((base + " evaluate --run " + (tmp.path / "tiny.trec").string() +
                      " --metrics bogus > /dev/null 2>&1")
                         .c_str());
    CHECK(WEXITSTATUS(rc) == 1);
}
