#include "dexp/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <set>
#include <unordered_map>

#include "dexp/keywords.hpp"
#include "dexp/util.hpp"

namespace dexp::pipeline {

using nlohmann::json;

namespace {

std::vector<Document> load_ingested(const PipelineConfig& cfg) {
    auto path = cfg.artifact(kIngestedCorpus);
    if (!std::filesystem::exists(path))
        throw std::runtime_error("missing artifact " + path.string() + " (run `ingest` first)");
    return load_corpus(path);
}

struct DocTopicsRecord {
    std::string doc_id;
    std::vector<int> topics;
};

std::vector<DocTopicsRecord> load_doc_topics(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error("missing artifact " + path.string() +
                                 " (run `fit-topics` first)");
    std::vector<DocTopicsRecord> records;
    for (const auto& line : util::split_lines(util::read_file(path))) {
        if (util::trim(line).empty()) continue;
        json j = json::parse(line);
        DocTopicsRecord r;
        r.doc_id = j.at("doc_id").get<std::string>();
        r.topics = j.at("topics").get<std::vector<int>>();
        records.push_back(std::move(r));
    }
    return records;
}

TopicModel load_model_artifact(const PipelineConfig& cfg) {
    auto path = cfg.artifact(kTopicModel);
    if (!std::filesystem::exists(path))
        throw std::runtime_error("missing artifact " + path.string() +
                                 " (run `fit-topics` first)");
    return load_topic_model(path);
}

std::vector<ExpandedDocument> load_expanded_artifact(const PipelineConfig& cfg) {
    auto path = cfg.artifact(kExpandedCorpus);
    if (!std::filesystem::exists(path))
        throw std::runtime_error("missing artifact " + path.string() + " (run `generate` first)");
    return read_expanded_corpus(path);
}

std::string csv_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

RunFile rank_to_run(const std::vector<QueryRecord>& queries,
                    const std::vector<std::vector<ScoredHit>>& hits, const std::string& tag) {
    RunFile run;
    run.tag = tag;
    for (size_t i = 0; i < queries.size(); ++i) {
        auto& ranking = run.rankings[queries[i].query_id];
        ranking.reserve(hits[i].size());
        for (const auto& h : hits[i]) ranking.push_back(RunEntry{h.doc_id, h.score});
    }
    return run;
}

std::vector<std::vector<ScoredHit>> fused_search_all(const std::vector<EmbeddingVector>& embedded,
                                                     const TextIndex& text_index,
                                                     const QueryIndex& query_index,
                                                     const FusionParams& params, int depth,
                                                     int workers) {
    std::vector<std::vector<ScoredHit>> hits(embedded.size());
    util::parallel_for(embedded.size(), workers, [&](size_t i) {
        auto fused = search_fused(embedded[i], text_index, query_index, params, depth);
        hits[i].reserve(fused.size());
        for (const auto& h : fused) hits[i].push_back(ScoredHit{h.doc_id, h.s});
    });
    return hits;
}

}  // namespace

void ingest(const PipelineConfig& cfg) {
    if (cfg.corpus_path.empty()) throw std::runtime_error("config: data.corpus is required");
    auto docs = load_corpus(cfg.corpus_path);
    std::vector<Document> kept;
    size_t skipped = 0;
    for (auto& d : docs) {
        if (util::trim(d.indexable_body(cfg.include_title)).empty()) {
            std::cerr << "warning: ingest: skipping document \"" << d.doc_id
                      << "\" with empty body\n";
            ++skipped;
            continue;
        }
        kept.push_back(std::move(d));
    }
    std::string out;
    for (const auto& d : kept) {
        json j;
        j["_id"] = d.doc_id;
        j["title"] = d.title;
        j["text"] = d.text;
        out += j.dump();
        out += '\n';
    }
    util::write_file_atomic(cfg.artifact(kIngestedCorpus), out);
    size_t query_count = 0;
    size_t judged = 0;
    if (!cfg.queries_path.empty()) query_count = load_queries(cfg.queries_path).size();
    if (!cfg.qrels_path.empty()) judged = load_qrels(cfg.qrels_path).judgments.size();
    std::cerr << "ingest: " << kept.size() << " documents (" << skipped << " skipped), "
              << query_count << " queries, " << judged << " judged queries -> "
              << cfg.artifact(kIngestedCorpus).string() << "\n";
}

void fit_topics_stage(const PipelineConfig& cfg) {
    auto docs = load_ingested(cfg);
    auto embedder = make_embedding_backend(cfg.embedding);
    auto chat = make_chat_backend(cfg.chat);

    std::vector<EmbeddedSentence> sentences;
    std::vector<std::string> texts;
    for (const auto& doc : docs) {
        const std::string& source = util::trim(doc.text).empty() ? doc.title : doc.text;
        auto parts = segment_text(source);
        for (size_t i = 0; i < parts.size(); ++i) {
            EmbeddedSentence s;
            s.ref = SentenceRef{doc.doc_id, static_cast<int>(i)};
            s.text = parts[i].text;
            sentences.push_back(std::move(s));
            texts.push_back(parts[i].text);
        }
    }
    auto embeddings = embedder->embed_batch(texts);
    for (size_t i = 0; i < sentences.size(); ++i)
        sentences[i].embedding = std::move(embeddings[i]);

    auto fitted = fit_topics(sentences, cfg.topics);
    auto& model = fitted.model;
    auto groups = group_sentences_by_topic(sentences, fitted.assignments, model.topic_count());
    compute_ctfidf(model, groups, cfg.keywords_per_topic);
    for (int j = 1; j <= model.topic_count(); ++j)
        model.representative_sentences[static_cast<size_t>(j - 1)] = representative_sentences(
            model, j, sentences, fitted.assignments, cfg.representatives_per_topic);
    for (int j = 1; j <= model.topic_count(); ++j)
        model.names[static_cast<size_t>(j - 1)] =
            refine_topic_name(model, j, *chat, cfg.refine_retries);
    save_topic_model(model, cfg.artifact(kTopicModel));

    // Per-document topic sets from the fit assignments.
    std::map<std::string, std::set<int>> by_doc;
    for (const auto& doc : docs) by_doc[doc.doc_id];  // keep empty sets for all-outlier docs
    for (size_t i = 0; i < sentences.size(); ++i)
        if (fitted.assignments[i] != kOutlierTopic)
            by_doc[sentences[i].ref.doc_id].insert(fitted.assignments[i]);
    std::string out;
    for (const auto& doc : docs) {
        json j;
        j["doc_id"] = doc.doc_id;
        j["topics"] = by_doc[doc.doc_id];
        out += j.dump();
        out += '\n';
    }
    util::write_file_atomic(cfg.artifact(kDocTopics), out);
    std::cerr << "fit-topics: " << sentences.size() << " sentences -> " << model.topic_count()
              << " topics -> " << cfg.artifact(kTopicModel).string() << "\n";
}

void extract_keywords_stage(const PipelineConfig& cfg) {
    auto docs = load_ingested(cfg);
    auto model = load_model_artifact(cfg);
    auto doc_topics = load_doc_topics(cfg.artifact(kDocTopics));
    std::unordered_map<std::string, const DocTopicsRecord*> topics_by_doc;
    for (const auto& r : doc_topics) topics_by_doc[r.doc_id] = &r;

    auto embedder = make_embedding_backend(cfg.embedding);
    auto chat = make_chat_backend(cfg.chat);

    std::vector<KeywordSets> sets(docs.size());
    util::parallel_for(docs.size(), cfg.workers, [&](size_t i) {
        const auto& doc = docs[i];
        std::string body = doc.indexable_body(cfg.include_title);
        KeywordSets s;
        s.doc_id = doc.doc_id;
        EmbeddingVector doc_embedding = embedder->embed(body);
        s.doc_level = extract_doc_keywords(body, doc_embedding, *embedder, cfg.keyword_top_n,
                                           cfg.keyword_lambda);
        DocumentTopics dt;
        dt.doc_id = doc.doc_id;
        if (auto it = topics_by_doc.find(doc.doc_id); it != topics_by_doc.end())
            dt.topic_ids.insert(it->second->topics.begin(), it->second->topics.end());
        s.topic_level = topic_keywords_for_doc(dt, model);
        s.selected = select_keywords_llm(body, s, *chat, cfg.keyword_target);
        sets[i] = std::move(s);
    });
    save_keyword_sets(sets, cfg.artifact(kKeywordSets));
    std::cerr << "extract-keywords: " << sets.size() << " documents -> "
              << cfg.artifact(kKeywordSets).string() << "\n";
}

namespace {

std::filesystem::path expanded_artifact_for(const PipelineConfig& cfg, PromptMode mode) {
    switch (mode) {
        case PromptMode::fewshot: return cfg.artifact("expanded.F.jsonl");
        case PromptMode::fewshot_keywords: return cfg.artifact("expanded.FK.jsonl");
        case PromptMode::full: return cfg.artifact(kExpandedCorpus);
    }
    return cfg.artifact(kExpandedCorpus);
}

void generate_with_mode(const PipelineConfig& cfg, PromptMode mode,
                        const std::filesystem::path& out_path) {
    auto docs = load_ingested(cfg);
    auto model = load_model_artifact(cfg);
    auto doc_topics = load_doc_topics(cfg.artifact(kDocTopics));
    auto keyword_path = cfg.artifact(kKeywordSets);
    if (!std::filesystem::exists(keyword_path))
        throw std::runtime_error("missing artifact " + keyword_path.string() +
                                 " (run `extract-keywords` first)");
    auto keyword_sets = load_keyword_sets(keyword_path);
    if (cfg.fewshot_path.empty())
        throw std::runtime_error("config: data.fewshot is required for generation");

    std::unordered_map<std::string, const DocTopicsRecord*> topics_by_doc;
    for (const auto& r : doc_topics) topics_by_doc[r.doc_id] = &r;
    std::unordered_map<std::string, const KeywordSets*> keywords_by_doc;
    for (const auto& s : keyword_sets) keywords_by_doc[s.doc_id] = &s;

    GenerationConfig gen = cfg.generation;
    gen.mode = mode;
    gen.fewshot = load_fewshot_examples(cfg.fewshot_path);

    auto chat = make_chat_backend(cfg.chat);

    std::vector<ExpandedDocument> expanded(docs.size());
    std::vector<GenerationRecord> records(docs.size());
    util::parallel_for(docs.size(), cfg.workers, [&](size_t i) {
        const auto& doc = docs[i];
        std::vector<std::string> topic_names;
        if (auto it = topics_by_doc.find(doc.doc_id); it != topics_by_doc.end())
            for (int t : it->second->topics)
                topic_names.push_back(model.names.at(static_cast<size_t>(t - 1)));
        std::vector<std::string> selected;
        if (auto it = keywords_by_doc.find(doc.doc_id); it != keywords_by_doc.end())
            selected = it->second->selected;
        auto record = generate_queries(doc.doc_id, doc.indexable_body(cfg.include_title),
                                       topic_names, selected, gen, *chat);
        expanded[i] = ExpandedDocument{doc.doc_id, record.queries};
        records[i] = std::move(record);
    });

    write_expanded_corpus(expanded, out_path);
    std::string log;
    for (const auto& r : records) {
        json j;
        j["doc_id"] = r.doc_id;
        j["batches_issued"] = r.batches_issued;
        j["query_count"] = r.queries.size();
        j["shortfall"] = r.shortfall;
        j["topics_used"] = r.topics_used;
        j["keywords_used"] = r.keywords_used;
        log += j.dump();
        log += '\n';
    }
    util::write_file_atomic(cfg.artifact(kGenerationRecords), log);
    std::cerr << "generate[" << to_string(mode) << "]: " << expanded.size() << " documents x "
              << cfg.generation.queries_per_doc << " queries -> " << out_path.string() << "\n";
}

}  // namespace

void generate_stage(const PipelineConfig& cfg) {
    generate_with_mode(cfg, cfg.generation.mode,
                       expanded_artifact_for(cfg, cfg.generation.mode));
}

std::filesystem::path ablate_stage(const PipelineConfig& cfg, PromptMode mode) {
    auto out = expanded_artifact_for(cfg, mode);
    generate_with_mode(cfg, mode, out);
    return out;
}

void index_sparse_stage(const PipelineConfig& cfg, bool no_expansion) {
    auto docs = load_ingested(cfg);
    std::vector<std::pair<std::string, std::string>> texts;
    texts.reserve(docs.size());
    if (no_expansion) {
        for (const auto& doc : docs)
            texts.emplace_back(doc.doc_id, doc.indexable_body(cfg.include_title));
    } else {
        auto expanded = load_expanded_artifact(cfg);
        std::unordered_map<std::string, const ExpandedDocument*> by_doc;
        for (const auto& e : expanded) by_doc[e.doc_id] = &e;
        for (const auto& doc : docs) {
            auto it = by_doc.find(doc.doc_id);
            if (it == by_doc.end())
                throw std::runtime_error("index-sparse: no expansion for document \"" +
                                         doc.doc_id + "\"");
            texts.emplace_back(doc.doc_id,
                               expand_text(doc, *it->second, cfg.include_title));
        }
    }
    auto index = build_index(texts, cfg.bm25, cfg.stem);
    save_index(index, cfg.artifact(kSparseIndex));
    std::cerr << "index-sparse: " << index.doc_count() << " documents, " << index.postings.size()
              << " terms -> " << cfg.artifact(kSparseIndex).string() << "\n";
}

void index_dense_stage(const PipelineConfig& cfg) {
    auto docs = load_ingested(cfg);
    auto expanded = load_expanded_artifact(cfg);
    auto embedder = make_embedding_backend(cfg.embedding);

    std::vector<std::pair<std::string, std::string>> bodies;
    bodies.reserve(docs.size());
    for (const auto& doc : docs)
        bodies.emplace_back(doc.doc_id, doc.indexable_body(cfg.include_title));
    auto text_index = build_text_index(bodies, *embedder);
    text_index.similarity = cfg.fusion.similarity;
    save_text_index(text_index, cfg.artifact(kDenseTextIndex));

    auto query_index = build_query_index(expanded, *embedder);
    query_index.similarity = cfg.fusion.similarity;
    save_query_index(query_index, cfg.artifact(kDenseQueryIndex));

    std::unordered_map<std::string, const ExpandedDocument*> by_doc;
    for (const auto& e : expanded) by_doc[e.doc_id] = &e;
    std::vector<std::pair<std::string, std::string>> appended;
    appended.reserve(docs.size());
    for (const auto& doc : docs) {
        auto it = by_doc.find(doc.doc_id);
        if (it == by_doc.end())
            throw std::runtime_error("index-dense: no expansion for document \"" + doc.doc_id +
                                     "\"");
        appended.emplace_back(doc.doc_id, expand_text(doc, *it->second, cfg.include_title));
    }
    auto append_index = build_text_index(appended, *embedder);
    append_index.similarity = cfg.fusion.similarity;
    save_text_index(append_index, cfg.artifact(kDenseAppendIndex));

    std::cerr << "index-dense: " << text_index.vectors.size() << " documents, "
              << query_index.vectors.size() << " query vectors -> "
              << cfg.artifact(kDenseTextIndex).string() << "\n";
}

SearchMode search_mode_from_string(std::string_view name) {
    if (name == "bm25") return SearchMode::bm25;
    if (name == "fused") return SearchMode::fused;
    if (name == "text") return SearchMode::text;
    if (name == "append") return SearchMode::append;
    throw std::invalid_argument("unknown search mode: " + std::string(name));
}

std::string_view to_string(SearchMode mode) {
    switch (mode) {
        case SearchMode::bm25: return "bm25";
        case SearchMode::fused: return "fused";
        case SearchMode::text: return "text";
        case SearchMode::append: return "append";
    }
    return "?";
}

std::filesystem::path search_stage(const PipelineConfig& cfg, SearchMode mode,
                                   std::filesystem::path out) {
    if (cfg.queries_path.empty()) throw std::runtime_error("config: data.queries is required");
    auto queries = load_queries(cfg.queries_path);
    if (out.empty())
        out = cfg.artifact("run." + std::string(to_string(mode)) + ".trec");

    std::vector<std::vector<ScoredHit>> hits(queries.size());
    if (mode == SearchMode::bm25) {
        auto index_path = cfg.artifact(kSparseIndex);
        if (!std::filesystem::exists(index_path))
            throw std::runtime_error("missing artifact " + index_path.string() +
                                     " (run `index-sparse` first)");
        auto index = load_index(index_path);
        util::parallel_for(queries.size(), cfg.workers, [&](size_t i) {
            hits[i] = bm25_search(index, queries[i].text, cfg.search_depth);
        });
    } else {
        auto embedder = make_embedding_backend(cfg.embedding);
        std::vector<std::string> texts;
        texts.reserve(queries.size());
        for (const auto& q : queries) texts.push_back(q.text);
        auto embedded = embedder->embed_batch(texts);
        if (mode == SearchMode::fused) {
            auto text_index = load_text_index(cfg.artifact(kDenseTextIndex));
            auto query_index = load_query_index(cfg.artifact(kDenseQueryIndex));
            hits = fused_search_all(embedded, text_index, query_index, cfg.fusion,
                                    cfg.search_depth, cfg.workers);
        } else {
            auto index = load_text_index(cfg.artifact(
                mode == SearchMode::append ? kDenseAppendIndex : kDenseTextIndex));
            util::parallel_for(queries.size(), cfg.workers, [&](size_t i) {
                hits[i] = search_text(embedded[i], index, cfg.search_depth);
            });
        }
    }
    auto run = rank_to_run(queries, hits, cfg.run_tag);
    write_run(run, out);
    std::cerr << "search[" << to_string(mode) << "]: " << queries.size() << " queries at depth "
              << cfg.search_depth << " -> " << out.string() << "\n";
    return out;
}

MetricReport evaluate_stage(const std::filesystem::path& run_path,
                            const std::filesystem::path& qrels_path,
                            const std::filesystem::path& out_json) {
    auto run = read_run(run_path);
    auto qrels = load_qrels(qrels_path);
    auto report = evaluate_run(run, qrels);
    if (!out_json.empty()) util::write_file_atomic(out_json, metric_report_json(report));
    std::cerr << "evaluate: map=" << report.map << " ndcg@10=" << report.ndcg_at_10
              << " recall@100=" << report.recall_at_100 << " over " << report.evaluated
              << " queries (" << report.skipped << " skipped)\n";
    return report;
}

std::vector<SweepRow> sweep_alpha(const PipelineConfig& cfg, const std::vector<double>& alphas,
                                  const std::filesystem::path& out_csv) {
    if (cfg.queries_path.empty() || cfg.qrels_path.empty())
        throw std::runtime_error("config: data.queries and data.qrels are required");
    auto queries = load_queries(cfg.queries_path);
    auto qrels = load_qrels(cfg.qrels_path);
    auto text_index = load_text_index(cfg.artifact(kDenseTextIndex));
    auto query_index = load_query_index(cfg.artifact(kDenseQueryIndex));
    auto embedder = make_embedding_backend(cfg.embedding);
    std::vector<std::string> texts;
    for (const auto& q : queries) texts.push_back(q.text);
    auto embedded = embedder->embed_batch(texts);

    std::vector<SweepRow> rows;
    for (double alpha : alphas) {
        FusionParams params = cfg.fusion;
        params.alpha = alpha;
        auto hits =
            fused_search_all(embedded, text_index, query_index, params, cfg.search_depth,
                             cfg.workers);
        auto report = evaluate_run(rank_to_run(queries, hits, cfg.run_tag), qrels);
        rows.push_back(SweepRow{alpha, report.ndcg_at_10, report.recall_at_100});
    }
    std::string csv = "alpha,ndcg@10,recall@100\n";
    for (const auto& r : rows)
        csv += csv_number(r.x) + "," + csv_number(r.ndcg_at_10) + "," +
               csv_number(r.recall_at_100) + "\n";
    if (!out_csv.empty()) util::write_file_atomic(out_csv, csv);
    std::cerr << "sweep-alpha: " << rows.size() << " settings -> " << out_csv.string() << "\n";
    return rows;
}

std::vector<SweepRow> sweep_query_count(const PipelineConfig& cfg, std::vector<int> counts,
                                        const std::filesystem::path& out_csv) {
    if (cfg.queries_path.empty() || cfg.qrels_path.empty())
        throw std::runtime_error("config: data.queries and data.qrels are required");
    auto docs = load_ingested(cfg);
    auto expanded = load_expanded_artifact(cfg);
    auto queries = load_queries(cfg.queries_path);
    auto qrels = load_qrels(cfg.qrels_path);
    std::unordered_map<std::string, const ExpandedDocument*> by_doc;
    for (const auto& e : expanded) by_doc[e.doc_id] = &e;

    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());

    std::vector<SweepRow> rows;
    for (int m : counts) {
        if (m < 0) throw std::invalid_argument("sweep-query-count: counts must be >= 0");
        std::vector<std::pair<std::string, std::string>> texts;
        texts.reserve(docs.size());
        for (const auto& doc : docs) {
            ExpandedDocument truncated;
            truncated.doc_id = doc.doc_id;
            if (auto it = by_doc.find(doc.doc_id); it != by_doc.end()) {
                const auto& qs = it->second->queries;
                truncated.queries.assign(
                    qs.begin(), qs.begin() + std::min<size_t>(qs.size(), static_cast<size_t>(m)));
            }
            texts.emplace_back(doc.doc_id, expand_text(doc, truncated, cfg.include_title));
        }
        auto index = build_index(texts, cfg.bm25, cfg.stem);
        std::vector<std::vector<ScoredHit>> hits(queries.size());
        util::parallel_for(queries.size(), cfg.workers, [&](size_t i) {
            hits[i] = bm25_search(index, queries[i].text, cfg.search_depth);
        });
        auto report = evaluate_run(rank_to_run(queries, hits, cfg.run_tag), qrels);
        rows.push_back(
            SweepRow{static_cast<double>(m), report.ndcg_at_10, report.recall_at_100});
    }
    std::string csv = "queries_per_doc,ndcg@10,recall@100\n";
    for (const auto& r : rows)
        csv += csv_number(r.x) + "," + csv_number(r.ndcg_at_10) + "," +
               csv_number(r.recall_at_100) + "\n";
    if (!out_csv.empty()) util::write_file_atomic(out_csv, csv);
    std::cerr << "sweep-query-count: " << rows.size() << " settings -> " << out_csv.string()
              << "\n";
    return rows;
}

TopicRecallReport topic_recall_stage(const PipelineConfig& cfg,
                                     const std::filesystem::path& out_json) {
    auto model = load_model_artifact(cfg);
    auto doc_topics = load_doc_topics(cfg.artifact(kDocTopics));
    auto expanded = load_expanded_artifact(cfg);
    std::unordered_map<std::string, const ExpandedDocument*> by_doc;
    for (const auto& e : expanded) by_doc[e.doc_id] = &e;
    auto embedder = make_embedding_backend(cfg.embedding);

    TopicRecallReport report;
    for (const auto& record : doc_topics) {
        if (record.topics.empty()) {
            ++report.undefined;
            continue;
        }
        auto it = by_doc.find(record.doc_id);
        if (it == by_doc.end() || it->second->queries.empty()) {
            ++report.undefined;
            continue;
        }
        std::set<int> gold(record.topics.begin(), record.topics.end());
        double recall = topic_recall(gold, it->second->queries, model, *embedder);
        report.per_doc[record.doc_id] = recall;
        report.mean += recall;
        ++report.counted;
    }
    if (report.counted > 0) report.mean /= report.counted;

    json j;
    j["per_doc"] = report.per_doc;
    j["mean"] = report.mean;
    j["counted"] = report.counted;
    j["undefined"] = report.undefined;
    if (!out_json.empty()) util::write_file_atomic(out_json, j.dump(2) + "\n");
    std::cerr << "topic-recall: mean=" << report.mean << " over " << report.counted
              << " documents (" << report.undefined << " undefined)\n";
    return report;
}

CorrelationReport correlate_stage(const PipelineConfig& cfg,
                                  const std::filesystem::path& baseline_run,
                                  const std::filesystem::path& expanded_run,
                                  const std::filesystem::path& topic_recall_json,
                                  const std::filesystem::path& out_json) {
    if (cfg.qrels_path.empty()) throw std::runtime_error("config: data.qrels is required");
    auto qrels = load_qrels(cfg.qrels_path);
    auto base = read_run(baseline_run);
    auto expanded = read_run(expanded_run);
    json recall_doc = json::parse(util::read_file(topic_recall_json));
    std::unordered_map<std::string, double> per_doc;
    for (const auto& [doc_id, value] : recall_doc.at("per_doc").items())
        per_doc[doc_id] = value.get<double>();

    std::vector<double> xs, gain_ndcg, gain_recall;
    for (const auto& [qid, judgments] : qrels.judgments) {
        bool has_relevant = false;
        for (const auto& [doc, grade] : judgments)
            if (grade > 0) has_relevant = true;
        if (!has_relevant) continue;
        auto eit = expanded.rankings.find(qid);
        auto bit = base.rankings.find(qid);
        if (eit == expanded.rankings.end() || bit == base.rankings.end()) continue;

        // Mean topic recall of the source documents in the expanded top-10.
        double sum = 0.0;
        int n = 0;
        for (size_t i = 0; i < eit->second.size() && i < 10; ++i) {
            auto dit = per_doc.find(eit->second[i].doc_id);
            if (dit != per_doc.end()) {
                sum += dit->second;
                ++n;
            }
        }
        if (n == 0) continue;

        std::vector<std::string> expanded_ranked, base_ranked;
        for (const auto& e : eit->second) expanded_ranked.push_back(e.doc_id);
        for (const auto& e : bit->second) base_ranked.push_back(e.doc_id);
        xs.push_back(sum / n);
        gain_ndcg.push_back(ndcg_at_k(expanded_ranked, judgments, 10) -
                            ndcg_at_k(base_ranked, judgments, 10));
        gain_recall.push_back(recall_at_k(expanded_ranked, judgments, 100) -
                              recall_at_k(base_ranked, judgments, 100));
    }

    CorrelationReport report;
    report.points = static_cast<int>(xs.size());
    try {
        report.pearson_ndcg = pearson(xs, gain_ndcg);
        report.ndcg_defined = true;
    } catch (const std::exception& e) {
        std::cerr << "warning: correlate (ndcg gain): " << e.what() << "\n";
    }
    try {
        report.pearson_recall = pearson(xs, gain_recall);
        report.recall_defined = true;
    } catch (const std::exception& e) {
        std::cerr << "warning: correlate (recall gain): " << e.what() << "\n";
    }
    json j;
    j["points"] = report.points;
    if (report.ndcg_defined) j["pearson_ndcg@10_gain"] = report.pearson_ndcg;
    if (report.recall_defined) j["pearson_recall@100_gain"] = report.pearson_recall;
    if (!out_json.empty()) util::write_file_atomic(out_json, j.dump(2) + "\n");
    std::cerr << "correlate: " << report.points << " queries, ndcg gain "
              << (report.ndcg_defined ? "defined" : "undefined") << ", recall gain "
              << (report.recall_defined ? "defined" : "undefined") << "\n";
    return report;
}

}  // namespace dexp::pipeline
