#pragma once

// Scene classification and privacy-entity extraction. The deterministic rule
// engine (regex patterns + gazetteers + weighted scene lexicons) is the
// offline default; a remote recognizer drives a fine-tuned model through the
// gateway and re-anchors its answers locally. Also renders the instruction
// records used to fine-tune such a model.

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deprompt/core.hpp"
#include "deprompt/gateway.hpp"
#include "deprompt/utf8.hpp"

namespace deprompt {

struct CategoryPattern {
    PiiCategory category;
    std::string pattern; // source text, kept for serialization
    std::regex compiled;
};

struct SceneLexicon {
    // term (ASCII-folded) -> weight; multi-word phrases allowed
    std::map<std::string, double> terms;
};

struct RuleSet {
    std::vector<CategoryPattern> patterns;
    std::map<PiiCategory, std::vector<std::string>> gazetteers;
    std::map<Scene, SceneLexicon> scenes;
};

namespace detail {

inline std::regex compile_pattern(const std::string& src, const std::string& where) {
    try {
        return std::regex(src, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
        throw ConfigError("bad regex in " + where + ": \"" + src + "\" (" + e.what() + ")");
    }
}

struct Candidate {
    size_t start = 0;
    size_t end = 0;
    PiiCategory category = PiiCategory::PERSON;
    int source_rank = 0; // higher wins on equal-length overlap
    int priority = 1;    // 0 for scene-prioritized categories
    int tag = -1;        // caller-defined backreference, not part of ordering
};

/// Greedy longest-match-wins overlap resolution, deterministic.
inline std::vector<Candidate> resolve_overlaps(std::vector<Candidate> cands) {
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        size_t la = a.end - a.start, lb = b.end - b.start;
        if (la != lb) return la > lb;
        if (a.source_rank != b.source_rank) return a.source_rank > b.source_rank;
        if (a.priority != b.priority) return a.priority < b.priority;
        if (a.start != b.start) return a.start < b.start;
        return static_cast<int>(a.category) < static_cast<int>(b.category);
    });
    std::vector<Candidate> accepted;
    for (const Candidate& c : cands) {
        bool overlaps = false;
        for (const Candidate& a : accepted) {
            if (c.start < a.end && a.start < c.end) {
                overlaps = true;
                break;
            }
        }
        if (!overlaps) accepted.push_back(c);
    }
    std::sort(accepted.begin(), accepted.end(),
              [](const Candidate& a, const Candidate& b) { return a.start < b.start; });
    return accepted;
}

/// All occurrences of a term with word boundaries on both sides,
/// case-insensitive (ASCII fold), in code-point offsets.
inline void find_term_spans(const std::u32string& folded, std::string_view term,
                            PiiCategory category, int priority,
                            std::vector<Candidate>& out) {
    std::u32string needle = utf8::decode(term);
    for (char32_t& c : needle) c = utf8::ascii_lower(c);
    if (needle.empty()) return;
    size_t pos = 0;
    while ((pos = folded.find(needle, pos)) != std::u32string::npos) {
        bool left_ok = pos == 0 || !utf8::is_word_char(folded[pos - 1]);
        size_t end = pos + needle.size();
        bool right_ok = end == folded.size() || !utf8::is_word_char(folded[end]);
        if (left_ok && right_ok)
            out.push_back({pos, end, category, 0, priority});
        ++pos;
    }
}

inline bool is_priority_category(PiiCategory c, std::optional<Scene> scene) {
    if (c == PiiCategory::PERSON || c == PiiCategory::CODE || c == PiiCategory::CONTACT)
        return true;
    if (!scene) return false;
    if (*scene == Scene::Medical)
        return c == PiiCategory::HEALTH || c == PiiCategory::MEDICAL;
    if (*scene == Scene::Financial)
        return c == PiiCategory::PAYMENT || c == PiiCategory::ASSET;
    return false;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Scene classification

struct SceneResult {
    Scene scene = Scene::Daily;
    double confidence = 1.0 / 3.0;
};

/// Argmax of weighted lexicon hits; confidence is the winning share of the
/// total score. No hits at all falls back to Daily at 1/3.
inline SceneResult classify_scene(const Prompt& prompt, const RuleSet& rules) {
    std::u32string folded = utf8::decode(prompt.text);
    for (char32_t& c : folded) c = utf8::ascii_lower(c);

    double total = 0.0;
    std::map<Scene, double> score;
    for (const auto& [scene, lexicon] : rules.scenes) {
        double s = 0.0;
        for (const auto& [term, weight] : lexicon.terms) {
            std::vector<detail::Candidate> hits;
            detail::find_term_spans(folded, term, PiiCategory::PERSON, 0, hits);
            s += weight * static_cast<double>(hits.size());
        }
        score[scene] = s;
        total += s;
    }
    if (total <= 0.0) return SceneResult{};

    Scene best = Scene::Medical;
    double best_score = -1.0;
    for (Scene s : kAllScenes) {
        auto it = score.find(s);
        double v = it == score.end() ? 0.0 : it->second;
        if (v > best_score) {
            best = s;
            best_score = v;
        }
    }
    return SceneResult{best, best_score / total};
}

// ---------------------------------------------------------------------------
// Rule-based entity extraction

/// All maximal non-overlapping pattern and gazetteer matches, longest match
/// winning on overlap; classes assigned by the policy. The optional scene
/// biases equal-length overlap ties toward that scene's categories.
inline PrivacyVector recognize_rules(const Prompt& prompt, const RuleSet& rules,
                                     const ClassificationPolicy& policy,
                                     std::optional<Scene> scene = std::nullopt) {
    PrivacyVector out;
    if (prompt.text.empty()) return out;

    std::vector<size_t> bytes = utf8::byte_index(prompt.text);
    std::u32string folded = utf8::decode(prompt.text);
    for (char32_t& c : folded) c = utf8::ascii_lower(c);

    auto byte_to_cp = [&bytes](size_t b) -> std::optional<size_t> {
        auto it = std::lower_bound(bytes.begin(), bytes.end(), b);
        if (it == bytes.end() || *it != b) return std::nullopt;
        return static_cast<size_t>(it - bytes.begin());
    };

    std::vector<detail::Candidate> cands;
    for (const CategoryPattern& cp : rules.patterns) {
        int prio = detail::is_priority_category(cp.category, scene) ? 0 : 1;
        auto begin = std::sregex_iterator(prompt.text.begin(), prompt.text.end(), cp.compiled);
        for (auto it = begin; it != std::sregex_iterator(); ++it) {
            if (it->length(0) == 0) continue;
            auto s = byte_to_cp(static_cast<size_t>(it->position(0)));
            auto e = byte_to_cp(static_cast<size_t>(it->position(0) + it->length(0)));
            if (s && e) cands.push_back({*s, *e, cp.category, 0, prio});
        }
    }
    for (const auto& [category, terms] : rules.gazetteers) {
        int prio = detail::is_priority_category(category, scene) ? 0 : 1;
        for (const std::string& term : terms)
            detail::find_term_spans(folded, term, category, prio, cands);
    }

    for (const detail::Candidate& c : detail::resolve_overlaps(std::move(cands))) {
        PiiEntity e;
        e.start = c.start;
        e.end = c.end;
        e.surface = utf8::slice(prompt.text, c.start, c.end);
        e.category = c.category;
        e.cls = classify_identifier(c.category, policy);
        out.entities.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Merging two recognition results

/// Union of spans; overlaps resolved by longer span first, second argument
/// winning exact-length ties. Result keeps the non-overlap invariant.
inline PrivacyVector merge(const PrivacyVector& r1, const PrivacyVector& r2) {
    std::vector<detail::Candidate> cands;
    std::vector<const PiiEntity*> sources;
    auto add = [&](const PrivacyVector& pv, int rank) {
        for (const PiiEntity& e : pv.entities) {
            cands.push_back({e.start, e.end, e.category, rank, 0,
                             static_cast<int>(sources.size())});
            sources.push_back(&e);
        }
    };
    add(r1, 0);
    add(r2, 1);

    PrivacyVector out;
    for (const detail::Candidate& c : detail::resolve_overlaps(std::move(cands)))
        out.entities.push_back(*sources[static_cast<size_t>(c.tag)]);
    std::sort(out.entities.begin(), out.entities.end(),
              [](const PiiEntity& a, const PiiEntity& b) { return a.start < b.start; });
    return out;
}

// ---------------------------------------------------------------------------
// Remote recognizer

struct RecognitionResult {
    SceneResult scene;
    PrivacyVector privacy;
    enum class Source { Rules, Remote, Merged } source = Source::Rules;
    std::vector<std::string> warnings;
};

inline std::string entity_extraction_instruction() {
    return "Extract every privacy entity from the input prompt. Respond with a JSON "
           "array of objects with keys \"surface\" and \"category\", where category is "
           "one of PERSON, CODE, CONTACT, HEALTH, MEDICAL, PAYMENT, ASSET.";
}

/// Asks the model for {surface, category} items and re-anchors each surface at
/// its leftmost exact occurrence. Items that fail to parse or anchor are
/// dropped with a warning; a reply with no JSON array at all is an error.
inline RecognitionResult recognize_remote(const Prompt& prompt, const std::string& instruction,
                                          ModelGateway& gw,
                                          const ClassificationPolicy& policy = {}) {
    ChatRequest req;
    req.messages.push_back({ChatRole::User, instruction + "\n\nInput:\n" + prompt.text});
    std::string reply = gw.chat_complete(req);

    size_t lb = reply.find('[');
    size_t rb = reply.rfind(']');
    if (lb == std::string::npos || rb == std::string::npos || rb < lb)
        throw ResponseFormatError("model reply contains no JSON array: " + reply);
    json arr;
    try {
        arr = json::parse(reply.substr(lb, rb - lb + 1));
    } catch (const json::exception& e) {
        throw ResponseFormatError(std::string("model reply is not valid JSON: ") + e.what());
    }
    if (!arr.is_array()) throw ResponseFormatError("model reply is not a JSON array");

    RecognitionResult result;
    result.source = RecognitionResult::Source::Remote;

    std::u32string cps = utf8::decode(prompt.text);
    std::vector<detail::Candidate> cands;
    for (size_t i = 0; i < arr.size(); ++i) {
        const json& item = arr[i];
        if (!item.is_object() || !item.contains("surface") || !item.contains("category") ||
            !item["surface"].is_string() || !item["category"].is_string()) {
            result.warnings.push_back("item " + std::to_string(i) + " dropped: not a {surface, category} object");
            continue;
        }
        auto cat = category_from_string(item["category"].get<std::string>());
        if (!cat) {
            result.warnings.push_back("item " + std::to_string(i) + " dropped: unknown category \"" +
                                      item["category"].get<std::string>() + "\"");
            continue;
        }
        std::u32string needle = utf8::decode(item["surface"].get<std::string>());
        if (needle.empty()) {
            result.warnings.push_back("item " + std::to_string(i) + " dropped: empty surface");
            continue;
        }
        size_t pos = cps.find(needle);
        if (pos == std::u32string::npos) {
            result.warnings.push_back("item " + std::to_string(i) + " dropped: surface \"" +
                                      item["surface"].get<std::string>() +
                                      "\" not found in prompt text");
            continue;
        }
        cands.push_back({pos, pos + needle.size(), *cat, 0, 0});
    }

    for (const detail::Candidate& c : detail::resolve_overlaps(std::move(cands))) {
        PiiEntity e;
        e.start = c.start;
        e.end = c.end;
        e.surface = utf8::slice(prompt.text, c.start, c.end);
        e.category = c.category;
        e.cls = classify_identifier(c.category, policy);
        result.privacy.entities.push_back(std::move(e));
    }
    return result;
}

/// Scene classification followed by rule extraction with scene-biased ties.
inline RecognitionResult recognize(const Prompt& prompt, const RuleSet& rules,
                                   const ClassificationPolicy& policy = {}) {
    RecognitionResult result;
    result.scene = classify_scene(prompt, rules);
    result.privacy = recognize_rules(prompt, rules, policy, result.scene.scene);
    result.source = RecognitionResult::Source::Rules;
    return result;
}

// ---------------------------------------------------------------------------
// Fine-tuning record rendering

enum class FinetuneTask { SceneRecognition, EntityExtraction, SurrogateGeneration };

struct FinetuneRecord {
    std::string instruction;
    std::string input;
    std::string output;
};

inline FinetuneRecord render_finetune_record(const Prompt& prompt, const PrivacyVector& gold,
                                             FinetuneTask task) {
    FinetuneRecord rec;
    rec.input = prompt.text;
    switch (task) {
        case FinetuneTask::SceneRecognition: {
            rec.instruction = "Classify the scene of the input prompt. Respond with exactly "
                              "one of: medical, daily, financial.";
            rec.output = to_string(prompt.scene.value_or(Scene::Daily));
            break;
        }
        case FinetuneTask::EntityExtraction: {
            rec.instruction = "Extract every privacy entity from the input prompt. Respond "
                              "with a JSON array of objects with keys \"start\", \"end\", "
                              "\"category\", \"class\", \"surface\", where offsets are "
                              "code-point indices and surface matches the input exactly.";
            json arr = json::array();
            for (const PiiEntity& e : gold.entities) arr.push_back(entity_to_json(e));
            rec.output = arr.dump();
            break;
        }
        case FinetuneTask::SurrogateGeneration: {
            std::string values;
            for (const PiiEntity& e : gold.entities) {
                if (!values.empty()) values += "; ";
                values += "\"" + e.surface + "\" (category " + to_string(e.category) + ")";
            }
            rec.instruction = "For each listed value, generate a replacement of the same "
                              "category with a similar shape, different from the original. "
                              "Respond with a JSON array of objects with keys \"surface\" "
                              "and \"category\", in the listed order. Values: " + values;
            json arr = json::array();
            for (const PiiEntity& e : gold.entities) arr.push_back(entity_to_json(e));
            rec.output = arr.dump();
            break;
        }
    }
    return rec;
}

inline json finetune_record_to_json(const FinetuneRecord& rec) {
    return json{{"instruction", rec.instruction}, {"input", rec.input}, {"output", rec.output}};
}

/// Parses the entity-array serialization used in FinetuneRecord outputs (the
/// dataset annotation schema) back into a PrivacyVector.
inline PrivacyVector parse_entity_array(const std::string& payload) {
    json arr;
    try {
        arr = json::parse(payload);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid entity array: ") + e.what());
    }
    if (!arr.is_array()) throw ParseError("entity payload is not an array");
    PrivacyVector pv;
    for (const auto& item : arr) pv.entities.push_back(detail::parse_entity(item, -1));
    return pv;
}

// ---------------------------------------------------------------------------
// RuleSet file I/O

/// Rules file: JSON with sections `patterns` (category -> regex list),
/// `gazetteers` (category -> term-file paths, one term per line, '#' comments),
/// `scenes` (scene -> {term: weight}).
inline RuleSet parse_rules(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("rules file is not valid JSON: ") + e.what());
    }
    RuleSet rules;
    if (j.contains("patterns")) {
        for (auto it = j["patterns"].begin(); it != j["patterns"].end(); ++it) {
            auto cat = category_from_string(it.key());
            if (!cat) throw ConfigError("patterns: unknown category \"" + it.key() + "\"");
            for (const auto& p : it.value()) {
                std::string src = p.get<std::string>();
                rules.patterns.push_back(
                    {*cat, src, detail::compile_pattern(src, "patterns." + it.key())});
            }
        }
    }
    if (j.contains("gazetteers")) {
        for (auto it = j["gazetteers"].begin(); it != j["gazetteers"].end(); ++it) {
            auto cat = category_from_string(it.key());
            if (!cat) throw ConfigError("gazetteers: unknown category \"" + it.key() + "\"");
            for (const auto& p : it.value()) {
                std::string path = p.get<std::string>();
                if (!path.empty() && path[0] != '/' && !base_dir.empty())
                    path = base_dir + "/" + path;
                std::ifstream in(path);
                if (!in) throw ConfigError("gazetteers." + it.key() + ": cannot open " + path);
                std::stringstream ss;
                ss << in.rdbuf();
                std::string line;
                std::istringstream ls(ss.str());
                while (std::getline(ls, line)) {
                    if (!line.empty() && line.back() == '\r') line.pop_back();
                    size_t b = line.find_first_not_of(" \t");
                    if (b == std::string::npos || line[b] == '#') continue;
                    size_t e = line.find_last_not_of(" \t");
                    rules.gazetteers[*cat].push_back(line.substr(b, e - b + 1));
                }
            }
        }
    }
    if (j.contains("scenes")) {
        for (auto it = j["scenes"].begin(); it != j["scenes"].end(); ++it) {
            auto scene = scene_from_string(it.key());
            if (!scene) throw ConfigError("scenes: unknown scene \"" + it.key() + "\"");
            SceneLexicon lex;
            for (auto t = it.value().begin(); t != it.value().end(); ++t)
                lex.terms[utf8::ascii_lower_copy(t.key())] = t.value().get<double>();
            rules.scenes[*scene] = std::move(lex);
        }
    }
    return rules;
}

inline RuleSet load_rules(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open rules file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string dir;
    size_t slash = path.find_last_of('/');
    if (slash != std::string::npos) dir = path.substr(0, slash);
    return parse_rules(ss.str(), dir);
}

// ---------------------------------------------------------------------------
// Built-in default rules, co-designed with the bundled fixture corpus.

inline RuleSet default_rules() {
    RuleSet rules;
    auto add_pattern = [&rules](PiiCategory cat, const std::string& src) {
        rules.patterns.push_back({cat, src, detail::compile_pattern(src, "default")});
    };

    add_pattern(PiiCategory::CODE, R"(\b\d{18}\b)");
    add_pattern(PiiCategory::CODE, R"(\b[A-Z]{1,2}\d{8}\b)");
    add_pattern(PiiCategory::CODE, R"(\bEMP-\d{4,6}\b)");
    add_pattern(PiiCategory::CONTACT, R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})");
    add_pattern(PiiCategory::CONTACT, R"(\+\d{1,3}-\d{3}-\d{4}\b)");
    add_pattern(PiiCategory::PAYMENT, R"(\$\d{1,3}(,\d{3})*(\.\d{2})?)");
    add_pattern(PiiCategory::PAYMENT, R"(\b\d{4}[ -]\d{4}[ -]\d{4}[ -]\d{4}\b)");
    add_pattern(PiiCategory::PAYMENT, R"(\b(claim|invoice) #\d{3,8}\b)");
    add_pattern(PiiCategory::ASSET, R"(\b(account|acct) \d{4,12}\b)");
    add_pattern(PiiCategory::ASSET, R"(\bF-\d{4}\b)");
    add_pattern(PiiCategory::ASSET, R"(\bbranch \d{3,6}\b)");

    rules.gazetteers[PiiCategory::PERSON] = {
        "Jack",  "Alice", "Bob",    "Carol", "David",  "Emma",  "Frank", "Grace",
        "Henry", "Irene", "Laura",  "Mark",  "Nina",   "Oscar", "Peter", "Rosa",
        "Tina",  "Victor", "Wendy", "José",  "Diego",  "Elena", "Hugo",  "Sam",
        "Lily",  "Omar",  "Priya",  "Chen",  "Yuki",   "Zoë"};
    rules.gazetteers[PiiCategory::HEALTH] = {
        "diabetes",     "hypertension", "asthma",          "migraine",
        "insomnia",     "anemia",       "arthritis",       "chest pain",
        "dyspnea",      "back pain",    "chronic fatigue", "pollen allergy",
        "high cholesterol"};
    rules.gazetteers[PiiCategory::MEDICAL] = {
        "metformin",  "insulin therapy", "chemotherapy", "appendectomy",
        "physiotherapy", "dialysis",     "antibiotics",  "vaccination",
        "radiotherapy", "knee surgery",  "MRI scan",     "blood transfusion"};

    SceneLexicon medical;
    for (const auto& [t, w] : std::initializer_list<std::pair<const char*, double>>{
             {"patient", 2.0},   {"doctor", 1.5},     {"symptom", 1.5},
             {"symptoms", 1.5},  {"diagnosis", 1.5},  {"diagnosed", 1.5},
             {"hospital", 1.5},  {"clinic", 1.5},     {"treatment", 1.5},
             {"medication", 1.5}, {"prescription", 1.5}, {"therapy", 1.0},
             {"chest pain", 2.0}, {"dyspnea", 2.0},   {"allergy", 1.0},
             {"illness", 1.0},   {"dose", 1.0},       {"surgeon", 1.5},
             {"health", 1.0},    {"pain", 1.0},       {"prescribed", 1.5}})
        medical.terms[t] = w;
    SceneLexicon financial;
    for (const auto& [t, w] : std::initializer_list<std::pair<const char*, double>>{
             {"transfer", 2.0},  {"account", 1.5},   {"usd", 2.0},
             {"payment", 1.5},   {"invoice", 1.5},   {"loan", 1.5},
             {"deposit", 1.5},   {"bank", 1.5},      {"balance", 1.5},
             {"fund", 1.5},      {"investment", 1.5}, {"insurance", 1.0},
             {"transaction", 1.5}, {"card", 1.0},    {"claim", 1.0},
             {"branch", 1.0},    {"interest", 1.0},  {"securities", 1.5},
             {"fee", 1.0},       {"fees", 1.0}})
        financial.terms[t] = w;
    SceneLexicon daily;
    for (const auto& [t, w] : std::initializer_list<std::pair<const char*, double>>{
             {"recipe", 2.0},    {"travel", 1.5},  {"weather", 1.5},
             {"party", 1.5},     {"birthday", 1.5}, {"trip", 1.5},
             {"weekend", 1.5},   {"movie", 1.5},   {"restaurant", 1.5},
             {"friend", 1.5},    {"friends", 1.5}, {"gift", 1.5},
             {"plan", 1.0},      {"schedule", 1.0}, {"dinner", 1.5},
             {"hobby", 1.5},     {"book", 1.0},    {"music", 1.0}})
        daily.terms[t] = w;

    rules.scenes[Scene::Medical] = std::move(medical);
    rules.scenes[Scene::Financial] = std::move(financial);
    rules.scenes[Scene::Daily] = std::move(daily);
    return rules;
}

} // namespace deprompt
