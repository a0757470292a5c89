#include "dexp/topics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <stdexcept>

#include "dexp/stopwords.hpp"
#include "dexp/util.hpp"

namespace dexp {

using nlohmann::json;

namespace {

std::vector<EmbeddingVector> prepare_points(const std::vector<EmbeddedSentence>& sentences,
                                            bool normalize) {
    std::vector<EmbeddingVector> points;
    points.reserve(sentences.size());
    for (const auto& s : sentences) {
        points.push_back(s.embedding);
        if (normalize) l2_normalize(points.back());
    }
    return points;
}

double squared_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
        acc += d * d;
    }
    return acc;
}

EmbeddingVector mean_of(const std::vector<EmbeddingVector>& points,
                        const std::vector<size_t>& members) {
    EmbeddingVector mean;
    mean.values.assign(points.front().values.size(), 0.0f);
    std::vector<double> acc(points.front().values.size(), 0.0);
    for (size_t idx : members)
        for (size_t d = 0; d < acc.size(); ++d)
            acc[d] += static_cast<double>(points[idx].values[d]);
    for (size_t d = 0; d < acc.size(); ++d)
        mean.values[d] = static_cast<float>(acc[d] / static_cast<double>(members.size()));
    return mean;
}

struct KmeansResult {
    std::vector<EmbeddingVector> centroids;
    std::vector<int> labels;  // 0-based cluster per point
    double inertia = 0.0;
};

KmeansResult kmeans_once(const std::vector<EmbeddingVector>& points, int k, util::SplitMix64& rng,
                         int max_iterations) {
    size_t n = points.size();
    std::vector<EmbeddingVector> centroids;
    centroids.reserve(static_cast<size_t>(k));

    // k-means++ seeding
    centroids.push_back(points[rng.next_below(n)]);
    std::vector<double> min_sq(n, 0.0);
    for (size_t i = 0; i < n; ++i) min_sq[i] = squared_distance(points[i], centroids[0]);
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (double d : min_sq) total += d;
        size_t pick = 0;
        if (total <= 0.0) {
            pick = rng.next_below(n);
        } else {
            double r = rng.next_double() * total;
            double cum = 0.0;
            pick = n - 1;
            for (size_t i = 0; i < n; ++i) {
                cum += min_sq[i];
                if (r < cum) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(points[pick]);
        for (size_t i = 0; i < n; ++i)
            min_sq[i] = std::min(min_sq[i], squared_distance(points[i], centroids.back()));
    }

    std::vector<int> labels(n, -1);
    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_sq = squared_distance(points[i], centroids[0]);
            for (int c = 1; c < k; ++c) {
                double sq = squared_distance(points[i], centroids[static_cast<size_t>(c)]);
                if (sq < best_sq) {
                    best_sq = sq;
                    best = c;
                }
            }
            if (labels[i] != best) {
                labels[i] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        std::vector<std::vector<size_t>> members(static_cast<size_t>(k));
        for (size_t i = 0; i < n; ++i) members[static_cast<size_t>(labels[i])].push_back(i);
        for (int c = 0; c < k; ++c) {
            auto& m = members[static_cast<size_t>(c)];
            if (m.empty()) {
                // Re-seed an empty cluster on the point farthest from its centroid.
                size_t far = 0;
                double far_sq = -1.0;
                for (size_t i = 0; i < n; ++i) {
                    double sq =
                        squared_distance(points[i], centroids[static_cast<size_t>(labels[i])]);
                    if (sq > far_sq) {
                        far_sq = sq;
                        far = i;
                    }
                }
                centroids[static_cast<size_t>(c)] = points[far];
            } else {
                centroids[static_cast<size_t>(c)] = mean_of(points, m);
            }
        }
    }

    // Contract: every surviving centroid is the mean of its final members.
    // Clusters left empty (possible at the iteration cap) are dropped.
    std::vector<std::vector<size_t>> members(static_cast<size_t>(k));
    for (size_t i = 0; i < n; ++i) members[static_cast<size_t>(labels[i])].push_back(i);
    KmeansResult result;
    std::vector<int> remap(static_cast<size_t>(k), -1);
    for (int c = 0; c < k; ++c) {
        if (members[static_cast<size_t>(c)].empty()) continue;
        remap[static_cast<size_t>(c)] = static_cast<int>(result.centroids.size());
        result.centroids.push_back(mean_of(points, members[static_cast<size_t>(c)]));
    }
    result.labels.resize(n);
    for (size_t i = 0; i < n; ++i)
        result.labels[i] = remap[static_cast<size_t>(labels[i])];
    result.inertia = 0.0;
    for (size_t i = 0; i < n; ++i)
        result.inertia +=
            squared_distance(points[i], result.centroids[static_cast<size_t>(result.labels[i])]);
    return result;
}

std::vector<size_t> silhouette_sample_indices(size_t n, int sample) {
    std::vector<size_t> indices;
    if (sample <= 0 || n <= static_cast<size_t>(sample)) {
        indices.resize(n);
        for (size_t i = 0; i < n; ++i) indices[i] = i;
        return indices;
    }
    indices.reserve(static_cast<size_t>(sample));
    for (int i = 0; i < sample; ++i)
        indices.push_back(static_cast<size_t>(i) * n / static_cast<size_t>(sample));
    return indices;
}

double mean_silhouette(const std::vector<EmbeddingVector>& points, const std::vector<int>& labels,
                       int k, int sample) {
    size_t n = points.size();
    std::vector<size_t> cluster_size(static_cast<size_t>(k), 0);
    for (int l : labels) ++cluster_size[static_cast<size_t>(l)];

    auto indices = silhouette_sample_indices(n, sample);
    double total = 0.0;
    for (size_t i : indices) {
        int own = labels[i];
        if (cluster_size[static_cast<size_t>(own)] <= 1) continue;  // s(i) = 0
        std::vector<double> dist_sum(static_cast<size_t>(k), 0.0);
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dist_sum[static_cast<size_t>(labels[j])] +=
                std::sqrt(squared_distance(points[i], points[j]));
        }
        double a = dist_sum[static_cast<size_t>(own)] /
                   static_cast<double>(cluster_size[static_cast<size_t>(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == own || cluster_size[static_cast<size_t>(c)] == 0) continue;
            b = std::min(b, dist_sum[static_cast<size_t>(c)] /
                                static_cast<double>(cluster_size[static_cast<size_t>(c)]));
        }
        double m = std::max(a, b);
        if (m > 0.0 && std::isfinite(b)) total += (b - a) / m;
    }
    return indices.empty() ? 0.0 : total / static_cast<double>(indices.size());
}

std::vector<std::string> ctfidf_tokens(const std::string& sentence) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && !is_stopword(current)) tokens.push_back(current);
        current.clear();
    };
    for (char ch : sentence) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        else
            flush();
    }
    flush();
    return tokens;
}

}  // namespace

FittedTopics fit_topics(const std::vector<EmbeddedSentence>& sentences,
                        const TopicFitConfig& config) {
    size_t n = sentences.size();
    if (n < 2 * static_cast<size_t>(config.min_cluster_size))
        throw std::runtime_error("fit_topics: too few sentences (" + std::to_string(n) +
                                 " < " + std::to_string(2 * config.min_cluster_size) + ")");
    size_t dim = sentences.front().embedding.dimension();
    for (const auto& s : sentences)
        if (s.embedding.dimension() != dim)
            throw std::runtime_error("fit_topics: embeddings have mixed dimensions");

    auto points = prepare_points(sentences, config.normalize);

    bool all_identical = true;
    for (size_t i = 1; i < n && all_identical; ++i)
        if (squared_distance(points[i], points[0]) > 1e-24) all_identical = false;

    KmeansResult best;
    if (all_identical) {
        std::cerr << "warning: fit_topics: all embeddings identical, degenerating to 1 topic\n";
        best.centroids = {points[0]};
        best.labels.assign(n, 0);
    } else {
        int k_max = std::min(config.max_k,
                             static_cast<int>(n) / std::max(1, config.min_cluster_size));
        k_max = std::max(k_max, 2);
        double best_silhouette = -2.0;
        int best_k = -1;
        for (int k = 2; k <= k_max && static_cast<size_t>(k) <= n; ++k) {
            KmeansResult k_best;
            double k_inertia = std::numeric_limits<double>::infinity();
            for (int r = 0; r < std::max(1, config.restarts); ++r) {
                util::SplitMix64 rng(config.seed ^ (0x9e3779b9ULL * static_cast<uint64_t>(k)) ^
                                     (0x7f4a7c15ULL * static_cast<uint64_t>(r + 1)));
                auto run = kmeans_once(points, k, rng, config.max_iterations);
                if (run.inertia < k_inertia) {
                    k_inertia = run.inertia;
                    k_best = std::move(run);
                }
            }
            double sil = mean_silhouette(points, k_best.labels, k, config.silhouette_sample);
            if (sil > best_silhouette + 1e-12) {
                best_silhouette = sil;
                best_k = k;
                best = std::move(k_best);
            }
        }
        if (best_k < 0)
            throw std::runtime_error("fit_topics: clustering failed to produce any result");
    }

    int c = static_cast<int>(best.centroids.size());
    FittedTopics fitted;
    fitted.model.dimension = static_cast<int>(dim);
    fitted.model.centroids = best.centroids;
    fitted.model.outlier_thresholds.assign(static_cast<size_t>(c), 0.0);
    fitted.model.keywords.resize(static_cast<size_t>(c));
    fitted.model.representative_sentences.resize(static_cast<size_t>(c));
    fitted.model.names.resize(static_cast<size_t>(c));

    // Per-cluster outlier threshold: mean + 2 sigma of member distances.
    std::vector<std::vector<double>> dists(static_cast<size_t>(c));
    for (size_t i = 0; i < n; ++i) {
        int l = best.labels[i];
        dists[static_cast<size_t>(l)].push_back(
            std::sqrt(squared_distance(points[i], best.centroids[static_cast<size_t>(l)])));
    }
    for (int j = 0; j < c; ++j) {
        const auto& ds = dists[static_cast<size_t>(j)];
        double mean = 0.0;
        for (double d : ds) mean += d;
        mean = ds.empty() ? 0.0 : mean / static_cast<double>(ds.size());
        double var = 0.0;
        for (double d : ds) var += (d - mean) * (d - mean);
        var = ds.empty() ? 0.0 : var / static_cast<double>(ds.size());
        fitted.model.outlier_thresholds[static_cast<size_t>(j)] =
            std::max(mean + 2.0 * std::sqrt(var), 1e-9);
    }

    fitted.assignments.resize(n);
    for (size_t i = 0; i < n; ++i) {
        int l = best.labels[i];
        double d = std::sqrt(squared_distance(points[i], best.centroids[static_cast<size_t>(l)]));
        fitted.assignments[i] =
            d <= fitted.model.outlier_thresholds[static_cast<size_t>(l)] ? l + 1 : kOutlierTopic;
    }
    return fitted;
}

int assign_topic(const EmbeddingVector& z, const TopicModel& model) {
    if (model.topic_count() < 1) throw std::runtime_error("assign_topic: empty topic model");
    if (static_cast<int>(z.dimension()) != model.dimension)
        throw std::invalid_argument("assign_topic: dimension mismatch: expected " +
                                    std::to_string(model.dimension) + ", got " +
                                    std::to_string(z.dimension()));
    int best = 0;
    double best_d = l2_distance(z, model.centroids[0]);
    for (int j = 1; j < model.topic_count(); ++j) {
        double d = l2_distance(z, model.centroids[static_cast<size_t>(j)]);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    if (best_d > model.outlier_thresholds[static_cast<size_t>(best)]) return kOutlierTopic;
    return best + 1;
}

DocumentTopics document_topics(const std::string& doc_id,
                               const std::vector<EmbeddingVector>& sentence_embeddings,
                               const TopicModel& model) {
    DocumentTopics dt;
    dt.doc_id = doc_id;
    for (const auto& z : sentence_embeddings) {
        int t = assign_topic(z, model);
        if (t != kOutlierTopic) dt.topic_ids.insert(t);
    }
    return dt;
}

double CtfidfTable::weight_of(int topic, std::string_view term) const {
    auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), term);
    if (it == vocabulary.end() || *it != term) return 0.0;
    size_t idx = static_cast<size_t>(it - vocabulary.begin());
    return weights[static_cast<size_t>(topic - 1)][idx];
}

CtfidfTable compute_ctfidf(TopicModel& model,
                           const std::vector<std::vector<std::string>>& topic_sentences,
                           int keywords_per_topic) {
    int c = model.topic_count();
    if (static_cast<int>(topic_sentences.size()) != c)
        throw std::invalid_argument("compute_ctfidf: one sentence group per topic required");

    // Term counts per pseudo-document.
    std::vector<std::map<std::string, double>> tf(static_cast<size_t>(c));
    std::vector<double> lengths(static_cast<size_t>(c), 0.0);
    std::map<std::string, double> totals;
    for (int j = 0; j < c; ++j) {
        if (topic_sentences[static_cast<size_t>(j)].empty())
            throw std::runtime_error("compute_ctfidf: topic " + std::to_string(j + 1) +
                                     " has no sentences");
        for (const auto& sentence : topic_sentences[static_cast<size_t>(j)]) {
            for (auto& tok : ctfidf_tokens(sentence)) {
                tf[static_cast<size_t>(j)][tok] += 1.0;
                totals[tok] += 1.0;
                lengths[static_cast<size_t>(j)] += 1.0;
            }
        }
    }
    if (totals.empty())
        throw std::runtime_error("compute_ctfidf: empty vocabulary after stop-word filtering");

    double mean_length = 0.0;
    for (double l : lengths) mean_length += l;
    mean_length /= static_cast<double>(c);

    CtfidfTable table;
    table.vocabulary.reserve(totals.size());
    for (const auto& [term, _] : totals) table.vocabulary.push_back(term);
    table.weights.assign(static_cast<size_t>(c),
                         std::vector<double>(table.vocabulary.size(), 0.0));
    for (int j = 0; j < c; ++j) {
        for (size_t v = 0; v < table.vocabulary.size(); ++v) {
            auto it = tf[static_cast<size_t>(j)].find(table.vocabulary[v]);
            if (it == tf[static_cast<size_t>(j)].end()) continue;
            double idf = std::log(1.0 + mean_length / totals[table.vocabulary[v]]);
            table.weights[static_cast<size_t>(j)][v] = it->second * idf;
        }
    }

    // Top-M keywords per topic, weight descending, ties lexicographic.
    for (int j = 0; j < c; ++j) {
        std::vector<size_t> order;
        for (size_t v = 0; v < table.vocabulary.size(); ++v)
            if (table.weights[static_cast<size_t>(j)][v] > 0.0) order.push_back(v);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            double wa = table.weights[static_cast<size_t>(j)][a];
            double wb = table.weights[static_cast<size_t>(j)][b];
            if (wa != wb) return wa > wb;
            return table.vocabulary[a] < table.vocabulary[b];
        });
        auto& kw = model.keywords[static_cast<size_t>(j)];
        kw.clear();
        for (size_t i = 0; i < order.size() && i < static_cast<size_t>(keywords_per_topic); ++i)
            kw.emplace_back(table.vocabulary[order[i]],
                            table.weights[static_cast<size_t>(j)][order[i]]);
    }
    return table;
}

std::vector<std::vector<std::string>> group_sentences_by_topic(
    const std::vector<EmbeddedSentence>& sentences, const std::vector<int>& assignments,
    int topic_count) {
    std::vector<std::vector<std::string>> groups(static_cast<size_t>(topic_count));
    for (size_t i = 0; i < sentences.size(); ++i) {
        int t = assignments[i];
        if (t != kOutlierTopic) groups[static_cast<size_t>(t - 1)].push_back(sentences[i].text);
    }
    return groups;
}

std::vector<std::string> representative_sentences(const TopicModel& model, int topic,
                                                  const std::vector<EmbeddedSentence>& sentences,
                                                  const std::vector<int>& assignments, int L) {
    if (topic < 1 || topic > model.topic_count())
        throw std::invalid_argument("representative_sentences: unknown topic id " +
                                    std::to_string(topic));
    struct Member {
        double distance;
        SentenceRef ref;
        const std::string* text;
    };
    std::vector<Member> members;
    const auto& centroid = model.centroids[static_cast<size_t>(topic - 1)];
    for (size_t i = 0; i < sentences.size(); ++i) {
        if (assignments[i] != topic) continue;
        const EmbeddingVector& z = sentences[i].embedding;
        if (static_cast<int>(z.dimension()) != model.dimension)
            throw std::invalid_argument("representative_sentences: dimension mismatch");
        members.push_back(Member{l2_distance(z, centroid), sentences[i].ref, &sentences[i].text});
    }
    std::sort(members.begin(), members.end(), [](const Member& a, const Member& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.ref < b.ref;
    });
    std::vector<std::string> out;
    for (size_t i = 0; i < members.size() && i < static_cast<size_t>(L); ++i)
        out.push_back(*members[i].text);
    return out;
}

std::string build_topic_name_prompt(const std::vector<std::string>& sample_sentences,
                                    const std::vector<std::string>& keywords) {
    std::string prompt =
        "You will extract a short topic label from given documents and keywords.\n"
        "Here are four examples of topics you created before:\n\n"
        "Example 1\n\n"
        "Sample texts from this topic:\n"
        "- But if you believe the price will go down, the only way to buy low and sell high is "
        "to sell first and buy later.\n"
        "- With your comment, you have stated that your scenario is that you believe that the "
        "stock will go up long term, but you also believe that the stock is at a short-term peak "
        "and will drop in the near future.\n"
        "- You believe that the stock is a long-term buy, but for some reason you are guessing "
        "that the stock will drop in the short-term.\n\n"
        "Keywords: stock, the stock price, stock price, stock is, the price, buy, sell, value, "
        "share\n\n"
        "Topic: Short-Term Stock Trading\n\n"
        "Example 2\n\n"
        "Sample texts from this topic:\n"
        "- Lenders look at your debt-to-income ratio before approving a mortgage.\n"
        "- Paying down revolving balances quickly improves your credit utilization.\n"
        "- A secured card can rebuild a damaged credit history within a year or two.\n\n"
        "Keywords: credit, mortgage, lender, debt, score, card, loan, utilization, history\n\n"
        "Topic: Credit Scores and Mortgage Approval\n\n"
        "Example 3\n\n"
        "Sample texts from this topic:\n"
        "- Diets rich in leafy greens are associated with lower blood pressure.\n"
        "- Reducing processed sugar intake improved the participants' fasting glucose.\n"
        "- Fiber from whole grains supports a healthy gut microbiome.\n\n"
        "Keywords: diet, blood pressure, sugar, fiber, glucose, greens, intake, nutrition\n\n"
        "Topic: Dietary Effects on Metabolic Health\n\n"
        "Example 4\n\n"
        "Sample texts from this topic:\n"
        "- The probe's gravity assist around Jupiter shortened the cruise by three years.\n"
        "- Solar panels degrade quickly beyond the asteroid belt, so the mission uses RTGs.\n"
        "- Mission control uplinked the new trajectory during the morning pass.\n\n"
        "Keywords: probe, mission, trajectory, gravity, spacecraft, orbit, solar, launch\n\n"
        "Topic: Deep-Space Mission Operations\n\n"
        "Your Task\n\n"
        "Sample texts from this topic:\n";
    for (const auto& s : sample_sentences) {
        prompt += "- ";
        prompt += s;
        prompt += '\n';
    }
    prompt += "\nKeywords: ";
    prompt += util::join(keywords, ", ");
    prompt +=
        "\n\n**Crucial Output Instruction:**\n"
        "You MUST generate a single line as your response.\n"
        "This line MUST start EXACTLY with `topic: ` (including the space after the colon).\n"
        "Following `topic: `, provide ONLY the concise topic label.\n"
        "Do NOT add any other text, explanations, numbering, markdown, or any content before or "
        "after this single line.\n\n"
        "Topic:";
    return prompt;
}

std::string refine_topic_name(const TopicModel& model, int topic, ChatBackend& chat,
                              int max_retries) {
    if (topic < 1 || topic > model.topic_count())
        throw std::invalid_argument("refine_topic_name: unknown topic id " + std::to_string(topic));
    const auto& kw = model.keywords[static_cast<size_t>(topic - 1)];
    std::vector<std::string> kw_terms;
    for (const auto& [term, weight] : kw) {
        (void)weight;
        kw_terms.push_back(term);
    }
    ChatRequest request;
    request.prompt =
        build_topic_name_prompt(model.representative_sentences[static_cast<size_t>(topic - 1)],
                                kw_terms);
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        std::string completion = chat.chat(request);
        std::string_view body = util::ltrim(completion);
        if (body.size() > 6 && util::iequals(body.substr(0, 6), "topic:")) {
            std::string name = util::trim(body.substr(6));
            size_t newline = name.find('\n');
            if (newline != std::string::npos) name = util::trim(name.substr(0, newline));
            if (!name.empty()) return name;
        }
    }
    std::vector<std::string> top3;
    for (size_t i = 0; i < kw_terms.size() && i < 3; ++i) top3.push_back(kw_terms[i]);
    std::string fallback = util::join(top3, "_");
    std::cerr << "warning: topic " << topic
              << ": completion lacked `topic: ` prefix, falling back to \"" << fallback << "\"\n";
    return fallback;
}

void save_topic_model(const TopicModel& model, const std::filesystem::path& path) {
    json j;
    j["dimension"] = model.dimension;
    json centroids = json::array();
    for (const auto& c : model.centroids) centroids.push_back(c.values);
    j["centroids"] = std::move(centroids);
    j["outlier_thresholds"] = model.outlier_thresholds;
    json keywords = json::array();
    for (const auto& topic_kw : model.keywords) {
        json list = json::array();
        for (const auto& [term, weight] : topic_kw) list.push_back(json::array({term, weight}));
        keywords.push_back(std::move(list));
    }
    j["keywords"] = std::move(keywords);
    j["representative_sentences"] = model.representative_sentences;
    j["names"] = model.names;
    util::write_file_atomic(path, j.dump(2) + "\n");
}

TopicModel load_topic_model(const std::filesystem::path& path) {
    json j = json::parse(util::read_file(path));
    TopicModel model;
    model.dimension = j.at("dimension").get<int>();
    for (const auto& c : j.at("centroids")) {
        EmbeddingVector v;
        v.values = c.get<std::vector<float>>();
        model.centroids.push_back(std::move(v));
    }
    model.outlier_thresholds = j.at("outlier_thresholds").get<std::vector<double>>();
    for (const auto& list : j.at("keywords")) {
        std::vector<std::pair<std::string, double>> kw;
        for (const auto& pair : list)
            kw.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<double>());
        model.keywords.push_back(std::move(kw));
    }
    model.representative_sentences =
        j.at("representative_sentences").get<std::vector<std::vector<std::string>>>();
    model.names = j.at("names").get<std::vector<std::string>>();
    return model;
}

}  // namespace dexp
