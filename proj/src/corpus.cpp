#include "dexp/corpus.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "dexp/util.hpp"

namespace dexp {

using nlohmann::json;

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

const std::unordered_set<std::string>& protected_abbreviations() {
    static const std::unordered_set<std::string> kAbbrev = {
        "e.g.", "i.e.", "etc.", "dr.", "fig.", "mr.", "mrs.", "ms.", "prof.",
        "vs.", "cf.", "st.", "no.", "inc.", "ltd.", "al.", "approx.", "dept.",
        "est.", "jr.", "sr.", "u.s.", "u.k.",
    };
    return kAbbrev;
}

// Token ending at the terminator position (inclusive), scanned back over
// alphanumerics and dots: "e.g." at its final dot, "cat." after a word.
std::string token_ending_at(const std::string& text, size_t pos) {
    size_t start = pos;
    while (start > 0) {
        char c = text[start - 1];
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '.')
            --start;
        else
            break;
    }
    return util::to_lower(std::string_view(text).substr(start, pos - start + 1));
}

bool splits_here(const std::string& text, size_t pos) {
    char c = text[pos];
    if (c == '.') {
        // No split inside decimal numbers ("3.5").
        if (pos > 0 && pos + 1 < text.size() && is_digit(text[pos - 1]) && is_digit(text[pos + 1]))
            return false;
        std::string token = token_ending_at(text, pos);
        if (protected_abbreviations().count(token)) return false;
        // Single-letter tokens are initials / acronym fragments ("J. Smith").
        if (token.size() == 2 && token[1] == '.') return false;
    }
    // Terminator must be followed by whitespace, then an uppercase or digit.
    size_t next = pos + 1;
    if (next >= text.size() || !is_space(text[next])) return false;
    while (next < text.size() && is_space(text[next])) ++next;
    if (next >= text.size()) return true;  // trailing terminator ends the text
    return is_upper(text[next]) || is_digit(text[next]);
}

json parse_line(const std::string& line, const std::filesystem::path& path, size_t line_no) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": malformed JSON line: " + e.what());
    }
}

}  // namespace

std::string Document::indexable_body(bool include_title) const {
    if (include_title && !title.empty()) {
        if (text.empty()) return title;
        return title + " " + text;
    }
    return text;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path.string());
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        json j = parse_line(line, path, line_no);
        if (!j.contains("_id"))
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": missing `_id` field");
        Document d;
        d.doc_id = j.at("_id").get<std::string>();
        d.title = j.value("title", std::string{});
        d.text = j.value("text", std::string{});
        if (d.doc_id.empty())
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": empty `_id`");
        if (!seen.insert(d.doc_id).second)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": duplicate document id \"" + d.doc_id + "\"");
        docs.push_back(std::move(d));
    }
    return docs;
}

std::vector<QueryRecord> load_queries(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open queries file: " + path.string());
    std::vector<QueryRecord> queries;
    std::unordered_set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        json j = parse_line(line, path, line_no);
        QueryRecord q;
        q.query_id = j.at("_id").get<std::string>();
        q.text = j.value("text", std::string{});
        if (q.text.empty())
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": empty query text for \"" + q.query_id + "\"");
        if (!seen.insert(q.query_id).second)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": duplicate query id \"" + q.query_id + "\"");
        queries.push_back(std::move(q));
    }
    return queries;
}

Qrels load_qrels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open qrels file: " + path.string());
    Qrels qrels;
    std::string line;
    size_t line_no = 0;
    bool header_skipped = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        if (!header_skipped) {
            header_skipped = true;
            continue;
        }
        std::vector<std::string> cols;
        size_t start = 0;
        for (;;) {
            size_t tab = line.find('\t', start);
            if (tab == std::string::npos) {
                cols.push_back(line.substr(start));
                break;
            }
            cols.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        if (cols.size() < 3)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": expected 3 tab-separated columns, got " +
                                     std::to_string(cols.size()));
        const std::string& qid = cols[0];
        const std::string& did = cols[1];
        std::string grade_str = util::trim(cols[2]);
        int grade = 0;
        size_t consumed = 0;
        try {
            grade = std::stoi(grade_str, &consumed);
        } catch (const std::exception&) {
            consumed = std::string::npos;
        }
        if (consumed != grade_str.size() || grade_str.empty())
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": non-integer relevance grade \"" + cols[2] + "\"");
        if (grade < 0)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": negative relevance grade for (" + qid + ", " + did + ")");
        auto [it, inserted] = qrels.judgments[qid].emplace(did, grade);
        (void)it;
        if (!inserted)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": duplicate judgment for (" + qid + ", " + did + ")");
    }
    return qrels;
}

std::vector<Sentence> segment_text(const std::string& text) {
    std::vector<Sentence> sentences;
    size_t n = text.size();
    size_t start = 0;
    auto emit = [&](size_t from, size_t to) {  // [from, to), trimmed to non-whitespace
        while (from < to && is_space(text[from])) ++from;
        while (to > from && is_space(text[to - 1])) --to;
        if (from >= to) return;
        sentences.push_back(Sentence{text.substr(from, to - from), from, to});
    };
    for (size_t i = 0; i < n; ++i) {
        char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && splits_here(text, i)) {
            emit(start, i + 1);
            start = i + 1;
        }
    }
    emit(start, n);
    return sentences;
}

SentenceSet segment_sentences(const Document& doc) {
    SentenceSet set;
    set.doc_id = doc.doc_id;
    set.sentences = segment_text(doc.text);
    return set;
}

std::vector<ExpandedDocument> read_expanded_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open expanded corpus: " + path.string());
    std::vector<ExpandedDocument> docs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        json j = parse_line(line, path, line_no);
        ExpandedDocument d;
        d.doc_id = j.at("_id").get<std::string>();
        d.queries = j.at("queries").get<std::vector<std::string>>();
        if (d.queries.empty())
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": document \"" + d.doc_id + "\" has no queries");
        docs.push_back(std::move(d));
    }
    return docs;
}

void write_expanded_corpus(const std::vector<ExpandedDocument>& docs,
                           const std::filesystem::path& path) {
    std::string out;
    for (const auto& d : docs) {
        if (d.queries.empty())
            throw std::runtime_error("expanded document \"" + d.doc_id +
                                     "\" has an empty query list (generation incomplete)");
        for (const auto& q : d.queries) {
            if (util::trim(q).empty())
                throw std::runtime_error("expanded document \"" + d.doc_id +
                                         "\" contains an empty query");
        }
        json j;
        j["_id"] = d.doc_id;
        j["queries"] = d.queries;
        out += j.dump();
        out += '\n';
    }
    util::write_file_atomic(path, out);
}

}  // namespace dexp
