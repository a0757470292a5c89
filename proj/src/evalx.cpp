#include "dexp/evalx.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "dexp/util.hpp"

namespace dexp {

using nlohmann::json;

double ndcg_at_k(const std::vector<std::string>& ranked,
                 const std::map<std::string, int>& judgments, int k) {
    double dcg = 0.0;
    for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(k); ++i) {
        auto it = judgments.find(ranked[i]);
        int rel = it == judgments.end() ? 0 : it->second;
        if (rel > 0)
            dcg += (std::pow(2.0, rel) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    std::vector<int> grades;
    grades.reserve(judgments.size());
    for (const auto& [doc, grade] : judgments)
        if (grade > 0) grades.push_back(grade);
    std::sort(grades.begin(), grades.end(), std::greater<>());
    double idcg = 0.0;
    for (size_t i = 0; i < grades.size() && i < static_cast<size_t>(k); ++i)
        idcg += (std::pow(2.0, grades[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

double recall_at_k(const std::vector<std::string>& ranked,
                   const std::map<std::string, int>& judgments, int k) {
    size_t relevant = 0;
    for (const auto& [doc, grade] : judgments)
        if (grade > 0) ++relevant;
    if (relevant == 0) return 0.0;
    size_t found = 0;
    for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(k); ++i) {
        auto it = judgments.find(ranked[i]);
        if (it != judgments.end() && it->second > 0) ++found;
    }
    return static_cast<double>(found) / static_cast<double>(relevant);
}

double average_precision(const std::vector<std::string>& ranked,
                         const std::map<std::string, int>& judgments) {
    size_t relevant = 0;
    for (const auto& [doc, grade] : judgments)
        if (grade > 0) ++relevant;
    if (relevant == 0) return 0.0;
    double sum = 0.0;
    size_t hits = 0;
    for (size_t i = 0; i < ranked.size(); ++i) {
        auto it = judgments.find(ranked[i]);
        if (it != judgments.end() && it->second > 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(relevant);
}

MetricReport evaluate_run(const RunFile& run, const Qrels& qrels, int ndcg_k, int recall_k) {
    MetricReport report;
    for (const auto& [qid, judgments] : qrels.judgments) {
        bool has_relevant = false;
        for (const auto& [doc, grade] : judgments)
            if (grade > 0) {
                has_relevant = true;
                break;
            }
        if (!has_relevant) {
            ++report.skipped;
            continue;
        }
        std::vector<std::string> ranked;
        auto it = run.rankings.find(qid);
        if (it != run.rankings.end()) {
            ranked.reserve(it->second.size());
            for (const auto& e : it->second) ranked.push_back(e.doc_id);
        }
        double ap = average_precision(ranked, judgments);
        double ndcg = ndcg_at_k(ranked, judgments, ndcg_k);
        double recall = recall_at_k(ranked, judgments, recall_k);
        report.per_query_ap[qid] = ap;
        report.per_query_ndcg[qid] = ndcg;
        report.per_query_recall[qid] = recall;
        report.map += ap;
        report.ndcg_at_10 += ndcg;
        report.recall_at_100 += recall;
        ++report.evaluated;
    }
    if (report.evaluated > 0) {
        report.map /= report.evaluated;
        report.ndcg_at_10 /= report.evaluated;
        report.recall_at_100 /= report.evaluated;
    }
    return report;
}

std::string metric_report_json(const MetricReport& report) {
    json j;
    j["map"] = {{"mean", report.map}, {"per_query", report.per_query_ap}};
    j["ndcg@10"] = {{"mean", report.ndcg_at_10}, {"per_query", report.per_query_ndcg}};
    j["recall@100"] = {{"mean", report.recall_at_100}, {"per_query", report.per_query_recall}};
    j["evaluated"] = report.evaluated;
    j["skipped"] = report.skipped;
    return j.dump(2) + "\n";
}

double topic_recall(const std::set<int>& gold_topics, const std::vector<std::string>& queries,
                    const TopicModel& model, EmbeddingBackend& backend) {
    if (gold_topics.empty())
        throw std::invalid_argument("topic_recall: undefined for an empty gold topic set");
    if (queries.empty()) throw std::invalid_argument("topic_recall: queries must be non-empty");
    auto embeddings = backend.embed_batch(queries);
    std::set<int> assigned;
    for (const auto& z : embeddings) {
        int t = assign_topic(z, model);
        if (t != kOutlierTopic) assigned.insert(t);
    }
    size_t covered = 0;
    for (int t : gold_topics)
        if (assigned.count(t)) ++covered;
    return static_cast<double>(covered) / static_cast<double>(gold_topics.size());
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("pearson: need two same-length series of >= 2 points");
    double n = static_cast<double>(xs.size());
    double mean_x = 0.0, mean_y = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mean_x += xs[i];
        mean_y += ys[i];
    }
    mean_x /= n;
    mean_y /= n;
    double cov = 0.0, var_x = 0.0, var_y = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        double dx = xs[i] - mean_x;
        double dy = ys[i] - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if (var_x == 0.0 || var_y == 0.0)
        throw std::runtime_error("pearson: undefined correlation (zero variance)");
    return cov / std::sqrt(var_x * var_y);
}

namespace {

std::string format_score(double score) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", score);
    return buf;
}

}  // namespace

void write_run(const RunFile& run, const std::filesystem::path& path) {
    std::string out;
    for (const auto& [qid, entries] : run.rankings) {
        std::unordered_set<std::string> seen;
        double prev = 0.0;
        for (size_t i = 0; i < entries.size(); ++i) {
            if (!seen.insert(entries[i].doc_id).second)
                throw std::runtime_error("write_run: duplicate doc \"" + entries[i].doc_id +
                                         "\" for query \"" + qid + "\"");
            if (i > 0 && entries[i].score > prev)
                throw std::runtime_error("write_run: scores increase at rank " +
                                         std::to_string(i + 1) + " for query \"" + qid + "\"");
            prev = entries[i].score;
            out += qid;
            out += " Q0 ";
            out += entries[i].doc_id;
            out += ' ';
            out += std::to_string(i + 1);
            out += ' ';
            out += format_score(entries[i].score);
            out += ' ';
            out += run.tag;
            out += '\n';
        }
    }
    util::write_file_atomic(path, out);
}

RunFile read_run(const std::filesystem::path& path) {
    RunFile run;
    std::map<std::string, double> last_score;
    std::map<std::string, std::unordered_set<std::string>> seen;
    size_t line_no = 0;
    for (const auto& line : util::split_lines(util::read_file(path))) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        std::istringstream iss(line);
        std::string qid, q0, doc_id, rank_str, score_str, tag;
        if (!(iss >> qid >> q0 >> doc_id >> rank_str >> score_str >> tag))
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": expected 6 columns");
        double score = 0.0;
        try {
            score = std::stod(score_str);
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": bad score \"" + score_str + "\"");
        }
        auto& ranking = run.rankings[qid];
        if (!ranking.empty() && score > last_score[qid])
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": non-increasing score order violated for query \"" + qid +
                                     "\"");
        if (!seen[qid].insert(doc_id).second)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": duplicate doc \"" + doc_id + "\" for query \"" + qid +
                                     "\"");
        if (ranking.size() >= 1000)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": run depth exceeds 1000 for query \"" + qid + "\"");
        last_score[qid] = score;
        ranking.push_back(RunEntry{doc_id, score});
        run.tag = tag;
    }
    return run;
}

}  // namespace dexp
