#include "dexp/keywords.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <iostream>
#include <limits>
#include <unordered_set>

#include "dexp/stopwords.hpp"
#include "dexp/util.hpp"

namespace dexp {

using nlohmann::json;

namespace {

struct Token {
    std::string text;
    bool stop = false;
    bool numeric = false;
};

std::vector<Token> word_tokens(const std::string& body) {
    std::vector<Token> tokens;
    std::string current;
    auto flush = [&] {
        if (current.empty()) return;
        Token t;
        t.text = current;
        t.stop = is_stopword(current);
        t.numeric = std::all_of(current.begin(), current.end(), [](char c) {
            return std::isdigit(static_cast<unsigned char>(c));
        });
        tokens.push_back(std::move(t));
        current.clear();
    };
    for (char ch : body) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        else
            flush();
    }
    flush();
    return tokens;
}

std::string strip_list_marker(std::string_view line) {
    std::string_view s = util::ltrim(line);
    if (!s.empty() && (s[0] == '-' || s[0] == '*')) {
        s = util::ltrim(s.substr(1));
    } else {
        size_t i = 0;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) s = util::ltrim(s.substr(i + 1));
    }
    std::string out = util::trim(s);
    if (out.size() >= 2 && ((out.front() == '"' && out.back() == '"') ||
                            (out.front() == '\'' && out.back() == '\'')))
        out = util::trim(std::string_view(out).substr(1, out.size() - 2));
    return out;
}

}  // namespace

std::vector<std::string> KeywordSets::pool() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& c : doc_level)
        if (seen.insert(util::to_lower(c.phrase)).second) out.push_back(c.phrase);
    for (const auto& p : topic_level)
        if (seen.insert(util::to_lower(p)).second) out.push_back(p);
    return out;
}

std::vector<std::string> candidate_ngrams(const std::string& body) {
    auto tokens = word_tokens(body);
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (size_t start = 0; start < tokens.size(); ++start) {
        if (tokens[start].stop || tokens[start].numeric) continue;
        std::string phrase;
        for (size_t len = 1; len <= 3 && start + len <= tokens.size(); ++len) {
            const Token& last = tokens[start + len - 1];
            if (last.numeric) break;  // numeric tokens never join a window
            if (!phrase.empty()) phrase += ' ';
            phrase += last.text;
            if (last.stop) continue;  // windows may not end on a stop-word
            if (seen.insert(phrase).second) out.push_back(phrase);
        }
    }
    return out;
}

std::vector<size_t> mmr_select(const std::vector<double>& relevance,
                               const std::function<double(size_t, size_t)>& similarity,
                               double lambda, size_t top_n,
                               const std::vector<std::string>& tiebreak) {
    size_t n = relevance.size();
    std::vector<size_t> selected;
    if (n == 0 || top_n == 0) return selected;
    std::vector<bool> taken(n, false);
    // Running max of sim(i, selected); similarities may be negative, so the
    // floor must be -inf. Every unselected candidate is updated with the
    // newest pick before scoring, keeping the value finite when read.
    std::vector<double> max_sim(n, -std::numeric_limits<double>::infinity());

    auto better = [&](size_t a, size_t b, double score_a, double score_b) {
        if (score_a != score_b) return score_a > score_b;
        return tiebreak[a] < tiebreak[b];
    };

    // First pick: pure relevance.
    size_t first = 0;
    bool have = false;
    for (size_t i = 0; i < n; ++i) {
        if (!have || better(i, first, relevance[i], relevance[first])) {
            first = i;
            have = true;
        }
    }
    selected.push_back(first);
    taken[first] = true;

    while (selected.size() < std::min(top_n, n)) {
        size_t last = selected.back();
        for (size_t i = 0; i < n; ++i)
            if (!taken[i]) max_sim[i] = std::max(max_sim[i], similarity(i, last));
        size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        bool found = false;
        for (size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            double score = lambda * relevance[i] - (1.0 - lambda) * max_sim[i];
            if (!found || better(i, best, score, best_score)) {
                best = i;
                best_score = score;
                found = true;
            }
        }
        if (!found) break;
        selected.push_back(best);
        taken[best] = true;
    }
    return selected;
}

std::vector<KeywordCandidate> extract_doc_keywords(const std::string& body,
                                                   const EmbeddingVector& doc_embedding,
                                                   EmbeddingBackend& backend, int top_n,
                                                   double lambda) {
    auto phrases = candidate_ngrams(body);
    if (phrases.empty()) {
        std::cerr << "warning: extract_doc_keywords: no keyword candidates after filtering\n";
        return {};
    }
    auto embeddings = backend.embed_batch(phrases);
    std::vector<double> relevance(phrases.size());
    for (size_t i = 0; i < phrases.size(); ++i)
        relevance[i] = cosine_similarity(embeddings[i], doc_embedding);
    auto order = mmr_select(
        relevance,
        [&](size_t a, size_t b) { return cosine_similarity(embeddings[a], embeddings[b]); },
        lambda, static_cast<size_t>(std::max(0, top_n)), phrases);
    std::vector<KeywordCandidate> out;
    out.reserve(order.size());
    for (size_t idx : order) out.push_back(KeywordCandidate{phrases[idx], relevance[idx]});
    return out;
}

std::vector<std::string> topic_keywords_for_doc(const DocumentTopics& doc_topics,
                                                const TopicModel& model) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (int topic : doc_topics.topic_ids) {
        if (topic < 1 || topic > model.topic_count())
            throw std::invalid_argument("topic_keywords_for_doc: unknown topic id " +
                                        std::to_string(topic));
        for (const auto& [term, weight] : model.keywords[static_cast<size_t>(topic - 1)]) {
            (void)weight;
            if (seen.insert(term).second) out.push_back(term);
        }
    }
    return out;
}

std::string build_keyword_prompt(const std::string& body, const std::vector<std::string>& pool,
                                 int target) {
    std::string prompt =
        "You will receive a document along with a set of candidate keywords. Your task is to "
        "select the keywords that best align with the core theme of the document. Exclude "
        "keywords that are too broad or less relevant. You may list up to " +
        std::to_string(target) +
        " keywords, using only the keywords in the candidate keyword set:\n\n"
        "Document:\n" +
        body +
        "\n\n"
        "Candidate keyword set:\n" +
        util::join(pool, ", ") +
        "\n\n"
        "Final Keywords:";
    return prompt;
}

std::vector<std::string> select_keywords_llm(const std::string& body, const KeywordSets& sets,
                                             ChatBackend& chat, int target) {
    auto pool = sets.pool();
    if (pool.empty()) return {};

    // Padding order: doc-level phrases by score descending, then topic-level.
    std::vector<std::string> padding;
    {
        std::vector<size_t> order(sets.doc_level.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return sets.doc_level[a].score > sets.doc_level[b].score;
        });
        std::unordered_set<std::string> seen;
        for (size_t i : order)
            if (seen.insert(util::to_lower(sets.doc_level[i].phrase)).second)
                padding.push_back(sets.doc_level[i].phrase);
        for (const auto& p : sets.topic_level)
            if (seen.insert(util::to_lower(p)).second) padding.push_back(p);
    }

    std::vector<std::string> selected;
    std::unordered_set<std::string> chosen;
    auto add = [&](const std::string& phrase) {
        if (static_cast<int>(selected.size()) >= target) return;
        if (chosen.insert(util::to_lower(phrase)).second) selected.push_back(phrase);
    };

    try {
        ChatRequest request;
        request.prompt = build_keyword_prompt(body, pool, target);
        std::string completion = chat.chat(request);
        // Completion items are comma- or newline-separated, possibly bulleted.
        std::vector<std::string> items;
        std::string normalized = completion;
        std::replace(normalized.begin(), normalized.end(), '\n', ',');
        size_t start = 0;
        while (start <= normalized.size()) {
            size_t comma = normalized.find(',', start);
            std::string piece = comma == std::string::npos
                                    ? normalized.substr(start)
                                    : normalized.substr(start, comma - start);
            std::string item = strip_list_marker(piece);
            if (!item.empty()) items.push_back(std::move(item));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        for (const auto& item : items) {
            for (const auto& candidate : pool) {
                if (util::iequals(item, candidate)) {
                    add(candidate);
                    break;
                }
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "warning: keyword selection chat failed for \"" << sets.doc_id
                  << "\": " << e.what() << "; falling back to pool order\n";
    }

    for (const auto& phrase : padding) add(phrase);
    return selected;
}

void save_keyword_sets(const std::vector<KeywordSets>& sets, const std::filesystem::path& path) {
    std::string out;
    for (const auto& s : sets) {
        json j;
        j["doc_id"] = s.doc_id;
        j["topic_level"] = s.topic_level;
        json doc_level = json::array();
        for (const auto& c : s.doc_level)
            doc_level.push_back(json{{"phrase", c.phrase}, {"score", c.score}});
        j["doc_level"] = std::move(doc_level);
        j["selected"] = s.selected;
        out += j.dump();
        out += '\n';
    }
    util::write_file_atomic(path, out);
}

std::vector<KeywordSets> load_keyword_sets(const std::filesystem::path& path) {
    std::vector<KeywordSets> sets;
    for (const auto& line : util::split_lines(util::read_file(path))) {
        if (util::trim(line).empty()) continue;
        json j = json::parse(line);
        KeywordSets s;
        s.doc_id = j.at("doc_id").get<std::string>();
        s.topic_level = j.at("topic_level").get<std::vector<std::string>>();
        for (const auto& c : j.at("doc_level"))
            s.doc_level.push_back(
                KeywordCandidate{c.at("phrase").get<std::string>(), c.at("score").get<double>()});
        s.selected = j.at("selected").get<std::vector<std::string>>();
        sets.push_back(std::move(s));
    }
    return sets;
}

}  // namespace dexp
