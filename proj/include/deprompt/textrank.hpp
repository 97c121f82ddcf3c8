#pragma once

// TextRank keyword extraction: a word co-occurrence graph over content tokens
// plus weighted graph ranking, yielding the top-K semantic keyword vector.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "deprompt/core.hpp"
#include "deprompt/utf8.hpp"

namespace deprompt {

struct TextRankParams {
    size_t window = 4;      // co-occurrence distance: pairs with 0 < j - i < window
    double damping = 0.85;
    double epsilon = 1e-6;
    size_t max_iter = 100;
};

struct SemanticKeyword {
    std::string term;
    double score = 0.0;
};

/// Top-K keyword vector; scores non-increasing, terms distinct.
struct SemanticVector {
    std::vector<SemanticKeyword> keywords;

    bool contains(std::string_view term) const {
        for (const auto& k : keywords)
            if (k.term == term) return true;
        return false;
    }
};

/// Undirected weighted co-occurrence graph. Node order is first occurrence
/// in the token stream, which also serves as the ranking tie-break.
class CooccurrenceGraph {
public:
    size_t add_node(const std::string& term) {
        auto it = index_.find(term);
        if (it != index_.end()) return it->second;
        size_t id = nodes_.size();
        index_.emplace(term, id);
        nodes_.push_back(term);
        adjacency_.emplace_back();
        return id;
    }

    void add_cooccurrence(size_t u, size_t v) {
        if (u == v) return; // no self-edges
        bump(u, v);
        bump(v, u);
    }

    size_t node_count() const { return nodes_.size(); }
    const std::string& term(size_t id) const { return nodes_[id]; }
    const std::vector<std::string>& terms() const { return nodes_; }

    double weight(size_t u, size_t v) const {
        for (const auto& [n, w] : adjacency_[u])
            if (n == v) return w;
        return 0.0;
    }

    const std::vector<std::pair<size_t, double>>& neighbors(size_t u) const {
        return adjacency_[u];
    }

    size_t edge_count() const {
        size_t twice = 0;
        for (const auto& adj : adjacency_) twice += adj.size();
        return twice / 2;
    }

private:
    void bump(size_t from, size_t to) {
        for (auto& [n, w] : adjacency_[from]) {
            if (n == to) {
                w += 1.0;
                return;
            }
        }
        adjacency_[from].emplace_back(to, 1.0);
    }

    std::vector<std::string> nodes_;
    std::unordered_map<std::string, size_t> index_;
    std::vector<std::vector<std::pair<size_t, double>>> adjacency_;
};

using Stoplist = std::set<std::string>;

/// Common English function words; the default candidate filter when no
/// stoplist file is configured.
inline const Stoplist& default_stoplist() {
    static const Stoplist words = {
        "a",     "about", "after",  "again",  "all",   "also",  "am",    "an",
        "and",   "any",   "are",    "as",     "at",    "be",    "been",  "before",
        "being", "but",   "by",     "can",    "could", "did",   "do",    "does",
        "doing", "down",  "during", "each",   "even",  "every", "few",   "for",
        "from",  "get",   "had",    "has",    "have",  "having", "he",   "her",
        "here",  "hers",  "him",    "his",    "how",   "i",     "if",    "in",
        "into",  "is",    "it",     "its",    "just",  "keep",  "keeps", "last",
        "let",   "many",  "may",    "me",     "might", "more",  "most",  "much",
        "my",    "no",    "nor",    "not",    "now",   "of",    "off",   "on",
        "once",  "only",  "or",     "other",  "our",   "out",   "over",  "own",
        "per",   "please", "s",     "same",   "she",   "should", "since", "so",
        "some",  "still", "such",   "than",   "that",  "the",   "their", "them",
        "then",  "there", "these",  "they",   "this",  "those", "through", "to",
        "too",   "under", "until",  "up",     "us",    "very",  "was",   "we",
        "well",  "were",  "what",   "when",   "where", "which", "while", "who",
        "whom",  "why",   "will",   "with",   "would", "you",   "your",  "yours"};
    return words;
}

/// Stoplist file: UTF-8, one term per line, '#' starts a comment line.
inline Stoplist parse_stoplist(std::string_view bytes) {
    Stoplist out;
    std::string line;
    std::istringstream in{std::string(bytes)};
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t begin = line.find_first_not_of(" \t");
        if (begin == std::string::npos || line[begin] == '#') continue;
        size_t last = line.find_last_not_of(" \t");
        out.insert(utf8::ascii_lower_copy(line.substr(begin, last - begin + 1)));
    }
    return out;
}

/// Content tokens feeding the graph: lowercased word tokens minus stoplist
/// terms and pure-digit/punctuation tokens. Digits stay visible to the
/// recognition module, which tokenizes on its own.
inline std::vector<std::string> content_tokens(std::string_view text, const Stoplist& stoplist) {
    std::vector<std::string> out;
    for (auto& tok : utf8::word_token_texts(text)) {
        if (tok.empty() || utf8::is_pure_digits(tok)) continue;
        if (stoplist.count(tok)) continue;
        out.push_back(std::move(tok));
    }
    return out;
}

inline CooccurrenceGraph build_graph(std::string_view text, size_t window,
                                     const Stoplist& stoplist) {
    if (window < 2) throw ConfigError("textrank window must be >= 2");
    CooccurrenceGraph g;
    std::vector<std::string> tokens = content_tokens(text, stoplist);
    std::vector<size_t> ids(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) ids[i] = g.add_node(tokens[i]);
    for (size_t i = 0; i < tokens.size(); ++i)
        for (size_t j = i + 1; j < tokens.size() && j - i < window; ++j)
            g.add_cooccurrence(ids[i], ids[j]);
    return g;
}

struct RankResult {
    std::map<std::string, double> scores;
    bool converged = true;
    size_t iterations = 0;
};

/// Weighted TextRank fixed point:
///   S(v) = (1-d) + d * sum over neighbors u of w(u,v)/outsum(u) * S(u)
/// Stops when the largest per-node change drops below epsilon; if max_iter is
/// hit first the scores are still returned with converged=false.
inline RankResult rank_nodes(const CooccurrenceGraph& g, double damping = 0.85,
                             double epsilon = 1e-6, size_t max_iter = 100) {
    const size_t n = g.node_count();
    RankResult result;
    if (n == 0) return result;

    std::vector<double> outsum(n, 0.0);
    for (size_t u = 0; u < n; ++u)
        for (const auto& [v, w] : g.neighbors(u)) outsum[u] += w;

    std::vector<double> score(n, 1.0), next(n, 0.0);
    bool converged = false;
    size_t iters = 0;
    while (iters < max_iter && !converged) {
        double max_delta = 0.0;
        for (size_t v = 0; v < n; ++v) {
            double s = 0.0;
            for (const auto& [u, w] : g.neighbors(v)) s += w / outsum[u] * score[u];
            next[v] = (1.0 - damping) + damping * s;
            max_delta = std::max(max_delta, std::fabs(next[v] - score[v]));
        }
        score.swap(next);
        ++iters;
        converged = max_delta < epsilon;
    }
    result.converged = converged;
    result.iterations = iters;
    for (size_t v = 0; v < n; ++v) result.scores[g.term(v)] = score[v];
    return result;
}

/// Top-k keywords by TextRank score. Ties break on earlier first occurrence
/// in the text, then lexicographic order, so the output is reproducible.
inline SemanticVector extract_keywords(const Prompt& prompt, size_t k,
                                       const TextRankParams& params = {},
                                       const Stoplist& stoplist = {}) {
    SemanticVector out;
    if (k == 0) return out;
    CooccurrenceGraph g = build_graph(prompt.text, params.window, stoplist);
    if (g.node_count() == 0) return out;
    RankResult ranked = rank_nodes(g, params.damping, params.epsilon, params.max_iter);

    struct Row {
        std::string term;
        double score;
        size_t first_occurrence;
    };
    std::vector<Row> rows;
    rows.reserve(g.node_count());
    for (size_t v = 0; v < g.node_count(); ++v)
        rows.push_back({g.term(v), ranked.scores.at(g.term(v)), v});
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.first_occurrence != b.first_occurrence)
            return a.first_occurrence < b.first_occurrence;
        return a.term < b.term;
    });
    size_t take = std::min(k, rows.size());
    for (size_t i = 0; i < take; ++i)
        out.keywords.push_back({rows[i].term, rows[i].score});
    return out;
}

} // namespace deprompt
