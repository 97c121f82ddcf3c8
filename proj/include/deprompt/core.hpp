#pragma once

// Core data model: prompts, PII entity spans, the seven-category privacy
// taxonomy, identifier classes, and line-delimited dataset I/O.

#include <array>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deprompt/errors.hpp"
#include "deprompt/utf8.hpp"

namespace deprompt {

using json = nlohmann::json;

enum class Scene { Medical, Daily, Financial };

enum class PiiCategory { PERSON, CODE, CONTACT, HEALTH, MEDICAL, PAYMENT, ASSET };

enum class IdentifierClass { Direct, Quasi, Confidential };

inline constexpr std::array<PiiCategory, 7> kAllCategories = {
    PiiCategory::PERSON,  PiiCategory::CODE,    PiiCategory::CONTACT,
    PiiCategory::HEALTH,  PiiCategory::MEDICAL, PiiCategory::PAYMENT,
    PiiCategory::ASSET};

inline constexpr std::array<Scene, 3> kAllScenes = {Scene::Medical, Scene::Daily,
                                                    Scene::Financial};

inline std::string to_string(Scene s) {
    switch (s) {
        case Scene::Medical: return "medical";
        case Scene::Daily: return "daily";
        case Scene::Financial: return "financial";
    }
    return "daily";
}

inline std::string to_string(PiiCategory c) {
    switch (c) {
        case PiiCategory::PERSON: return "PERSON";
        case PiiCategory::CODE: return "CODE";
        case PiiCategory::CONTACT: return "CONTACT";
        case PiiCategory::HEALTH: return "HEALTH";
        case PiiCategory::MEDICAL: return "MEDICAL";
        case PiiCategory::PAYMENT: return "PAYMENT";
        case PiiCategory::ASSET: return "ASSET";
    }
    return "PERSON";
}

inline std::string to_string(IdentifierClass c) {
    switch (c) {
        case IdentifierClass::Direct: return "Direct";
        case IdentifierClass::Quasi: return "Quasi";
        case IdentifierClass::Confidential: return "Confidential";
    }
    return "Confidential";
}

inline std::optional<Scene> scene_from_string(std::string_view s) {
    std::string t = utf8::ascii_lower_copy(s);
    if (t == "medical") return Scene::Medical;
    if (t == "daily") return Scene::Daily;
    if (t == "financial") return Scene::Financial;
    return std::nullopt;
}

inline std::optional<PiiCategory> category_from_string(std::string_view s) {
    std::string t = utf8::ascii_lower_copy(s);
    for (PiiCategory c : kAllCategories)
        if (t == utf8::ascii_lower_copy(to_string(c))) return c;
    return std::nullopt;
}

inline std::optional<IdentifierClass> class_from_string(std::string_view s) {
    std::string t = utf8::ascii_lower_copy(s);
    if (t == "direct") return IdentifierClass::Direct;
    if (t == "quasi") return IdentifierClass::Quasi;
    if (t == "confidential") return IdentifierClass::Confidential;
    return std::nullopt;
}

struct Prompt {
    std::string id;
    std::string text;
    std::optional<Scene> scene;
};

/// A recognized PII span. Offsets are code-point indices into the prompt text;
/// start inclusive, end exclusive; surface must equal the text slice.
struct PiiEntity {
    size_t start = 0;
    size_t end = 0;
    std::string surface;
    PiiCategory category = PiiCategory::PERSON;
    IdentifierClass cls = IdentifierClass::Quasi;

    bool operator==(const PiiEntity&) const = default;
};

struct PrivacyVector {
    std::vector<PiiEntity> entities;

    bool empty() const { return entities.empty(); }
    size_t size() const { return entities.size(); }
    bool operator==(const PrivacyVector&) const = default;
};

/// Total map from category to identifier class.
class ClassificationPolicy {
public:
    ClassificationPolicy() {
        // Default mapping mirrors the usual anonymization reading: code and
        // contact values identify a person on their own; names only in
        // combination; domain facts are confidential.
        set(PiiCategory::CODE, IdentifierClass::Direct);
        set(PiiCategory::CONTACT, IdentifierClass::Direct);
        set(PiiCategory::PERSON, IdentifierClass::Quasi);
        set(PiiCategory::HEALTH, IdentifierClass::Confidential);
        set(PiiCategory::MEDICAL, IdentifierClass::Confidential);
        set(PiiCategory::PAYMENT, IdentifierClass::Confidential);
        set(PiiCategory::ASSET, IdentifierClass::Confidential);
    }

    void set(PiiCategory c, IdentifierClass cls) { map_[static_cast<size_t>(c)] = cls; }
    IdentifierClass get(PiiCategory c) const { return map_[static_cast<size_t>(c)]; }

private:
    std::array<IdentifierClass, 7> map_{};
};

inline IdentifierClass classify_identifier(PiiCategory category,
                                           const ClassificationPolicy& policy) {
    return policy.get(category);
}

// ---------------------------------------------------------------------------
// Span validation

enum class ViolationKind { SpanOutOfBounds, SurfaceMismatch, OverlapViolation, OrderViolation };

inline std::string to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::SpanOutOfBounds: return "SpanOutOfBounds";
        case ViolationKind::SurfaceMismatch: return "SurfaceMismatch";
        case ViolationKind::OverlapViolation: return "OverlapViolation";
        case ViolationKind::OrderViolation: return "OrderViolation";
    }
    return "SpanOutOfBounds";
}

struct Violation {
    ViolationKind kind;
    size_t entity_index;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    std::string to_message() const {
        std::ostringstream os;
        for (size_t i = 0; i < violations.size(); ++i) {
            if (i) os << "; ";
            os << to_string(violations[i].kind) << " at entity "
               << violations[i].entity_index << " (" << violations[i].detail << ")";
        }
        return os.str();
    }
};

inline ValidationReport validate_spans(const Prompt& prompt, const PrivacyVector& pv) {
    ValidationReport report;
    const size_t len = utf8::length(prompt.text);
    for (size_t i = 0; i < pv.entities.size(); ++i) {
        const PiiEntity& e = pv.entities[i];
        if (e.start >= e.end || e.end > len) {
            report.violations.push_back({ViolationKind::SpanOutOfBounds, i,
                                         "[" + std::to_string(e.start) + "," +
                                             std::to_string(e.end) + ") vs length " +
                                             std::to_string(len)});
            continue;
        }
        std::string slice = utf8::slice(prompt.text, e.start, e.end);
        if (slice != e.surface)
            report.violations.push_back({ViolationKind::SurfaceMismatch, i,
                                         "surface \"" + e.surface + "\" != slice \"" +
                                             slice + "\""});
        if (i > 0) {
            const PiiEntity& prev = pv.entities[i - 1];
            if (e.start < prev.start)
                report.violations.push_back(
                    {ViolationKind::OrderViolation, i, "entities not sorted by start"});
            else if (e.start < prev.end)
                report.violations.push_back(
                    {ViolationKind::OverlapViolation, i,
                     "overlaps previous span ending at " + std::to_string(prev.end)});
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Dataset

struct PromptDataset {
    std::vector<Prompt> prompts;
    // gold annotations keyed by prompt id; presence is optional per prompt
    std::map<std::string, PrivacyVector> annotations;

    const PrivacyVector* gold(const std::string& id) const {
        auto it = annotations.find(id);
        return it == annotations.end() ? nullptr : &it->second;
    }
};

namespace detail {

inline const std::array<std::string, 5> kEntityKeys = {"start", "end", "category",
                                                       "class", "surface"};
inline const std::array<std::string, 4> kRecordKeys = {"id", "text", "scene", "entities"};

inline PiiEntity parse_entity(const json& j, long line) {
    if (!j.is_object()) throw ParseError("entity is not an object", line);
    for (const auto& key : {"start", "end", "category", "surface"})
        if (!j.contains(key))
            throw ParseError(std::string("entity missing key \"") + key + "\"", line);
    PiiEntity e;
    if (!j["start"].is_number_integer() || !j["end"].is_number_integer())
        throw ParseError("entity offsets must be integers", line);
    long long start = j["start"].get<long long>();
    long long end = j["end"].get<long long>();
    if (start < 0 || end < 0) throw ParseError("entity offsets must be non-negative", line);
    e.start = static_cast<size_t>(start);
    e.end = static_cast<size_t>(end);
    auto cat = category_from_string(j["category"].get<std::string>());
    if (!cat) throw ParseError("unknown category \"" + j["category"].get<std::string>() + "\"", line);
    e.category = *cat;
    if (j.contains("class")) {
        auto cls = class_from_string(j["class"].get<std::string>());
        if (!cls) throw ParseError("unknown class \"" + j["class"].get<std::string>() + "\"", line);
        e.cls = *cls;
    } else {
        e.cls = classify_identifier(e.category, ClassificationPolicy{});
    }
    e.surface = j["surface"].get<std::string>();
    return e;
}

} // namespace detail

/// Parses one line-delimited dataset. Each line is a JSON object with keys
/// id, text, optional scene, optional entities. Errors carry line numbers.
/// strict rejects unknown keys; otherwise they are ignored.
inline PromptDataset load_dataset(std::string_view bytes, bool strict = false) {
    PromptDataset ds;
    std::set<std::string> seen_ids;
    std::istringstream in{std::string(bytes)};
    std::string linebuf;
    long line = 0;
    while (std::getline(in, linebuf)) {
        ++line;
        if (!linebuf.empty() && linebuf.back() == '\r') linebuf.pop_back();
        if (linebuf.empty()) continue;
        json j;
        try {
            j = json::parse(linebuf);
        } catch (const json::exception& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line);
        }
        if (!j.is_object()) throw ParseError("record is not an object", line);
        if (strict) {
            for (auto it = j.begin(); it != j.end(); ++it) {
                bool known = false;
                for (const auto& k : detail::kRecordKeys)
                    if (it.key() == k) known = true;
                if (!known) throw ParseError("unknown key \"" + it.key() + "\"", line);
            }
        }
        if (!j.contains("id") || !j["id"].is_string())
            throw ParseError("record missing string \"id\"", line);
        if (!j.contains("text") || !j["text"].is_string())
            throw ParseError("record missing string \"text\"", line);

        Prompt p;
        p.id = j["id"].get<std::string>();
        p.text = j["text"].get<std::string>();
        if (!utf8::is_valid(p.text)) throw ParseError("text is not valid UTF-8", line);
        if (!seen_ids.insert(p.id).second) throw DuplicateIdError(p.id);
        if (j.contains("scene") && !j["scene"].is_null()) {
            auto sc = scene_from_string(j["scene"].get<std::string>());
            if (!sc) throw ParseError("unknown scene \"" + j["scene"].get<std::string>() + "\"", line);
            p.scene = sc;
        }
        if (j.contains("entities") && !j["entities"].is_null()) {
            if (!j["entities"].is_array()) throw ParseError("\"entities\" must be an array", line);
            if (strict) {
                for (const auto& ej : j["entities"]) {
                    if (!ej.is_object()) continue;
                    for (auto it = ej.begin(); it != ej.end(); ++it) {
                        bool known = false;
                        for (const auto& k : detail::kEntityKeys)
                            if (it.key() == k) known = true;
                        if (!known)
                            throw ParseError("unknown entity key \"" + it.key() + "\"", line);
                    }
                }
            }
            PrivacyVector pv;
            for (const auto& ej : j["entities"]) pv.entities.push_back(detail::parse_entity(ej, line));
            ValidationReport report = validate_spans(p, pv);
            if (!report.ok()) throw SpanError("line " + std::to_string(line) + ": " + report.to_message());
            ds.annotations[p.id] = std::move(pv);
        }
        ds.prompts.push_back(std::move(p));
    }
    return ds;
}

inline json entity_to_json(const PiiEntity& e) {
    return json{{"start", e.start},
                {"end", e.end},
                {"category", to_string(e.category)},
                {"class", to_string(e.cls)},
                {"surface", e.surface}};
}

inline json record_to_json(const Prompt& p, const PrivacyVector* gold) {
    json j{{"id", p.id}, {"text", p.text}};
    if (p.scene) j["scene"] = to_string(*p.scene);
    if (gold) {
        json arr = json::array();
        for (const PiiEntity& e : gold->entities) arr.push_back(entity_to_json(e));
        j["entities"] = arr;
    }
    return j;
}

inline std::string serialize_dataset(const PromptDataset& ds) {
    std::string out;
    for (const Prompt& p : ds.prompts) {
        out += record_to_json(p, ds.gold(p.id)).dump();
        out += '\n';
    }
    return out;
}

inline bool operator==(const Prompt& a, const Prompt& b) {
    return a.id == b.id && a.text == b.text && a.scene == b.scene;
}

inline bool operator==(const PromptDataset& a, const PromptDataset& b) {
    return a.prompts == b.prompts && a.annotations == b.annotations;
}

} // namespace deprompt
