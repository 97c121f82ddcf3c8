#pragma once

// Adversarial generative desensitization and the four traditional baseline
// anonymizers. The generative path partitions entities by semanticity:
// non-semantic entities are scrubbed everywhere; semantic identifiers are
// replaced by one shared surrogate across all variants; semantic confidential
// attributes get fresh perturbed surrogates in N-1 decoy variants while the
// last pre-shuffle variant carries the perturbed originals.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deprompt/core.hpp"
#include "deprompt/gateway.hpp"
#include "deprompt/rng.hpp"
#include "deprompt/textrank.hpp"
#include "deprompt/utf8.hpp"

namespace deprompt {

// ---------------------------------------------------------------------------
// Policies

enum class ScrubMode { Delete, Mask };

struct ScrubPolicy {
    ScrubMode mode = ScrubMode::Delete;
    char32_t mask_char = U'*';
};

struct PerturbationPolicy {
    // zero-width space, zero-width non-joiner, soft hyphen: invisible to a
    // reader and to most string-match NER, harmless to LLM comprehension
    std::vector<char32_t> alphabet = {0x200B, 0x200C, 0x00AD};
    double rate = 0.3; // insertions per character, in (0, 1]

    void validate() const {
        if (alphabet.empty()) throw ConfigError("perturbation.alphabet must not be empty");
        if (rate <= 0.0 || rate > 1.0)
            throw ConfigError("perturbation.rate must be in (0, 1]");
    }
};

enum class BaselineMethod { Deletion, Tokenization, Masking, Generalization };

inline std::string to_string(BaselineMethod m) {
    switch (m) {
        case BaselineMethod::Deletion: return "deletion";
        case BaselineMethod::Tokenization: return "tokenization";
        case BaselineMethod::Masking: return "masking";
        case BaselineMethod::Generalization: return "generalization";
    }
    return "deletion";
}

// ---------------------------------------------------------------------------
// Semanticity test

/// True iff the entity shares at least one normalized token with any keyword
/// of S. Multi-word entities match on any token ("chest pain" vs "pain").
inline bool is_semantic(const PiiEntity& entity, const SemanticVector& s) {
    if (s.keywords.empty()) return false;
    std::vector<std::string> surface_tokens = utf8::word_token_texts(entity.surface);
    for (const SemanticKeyword& kw : s.keywords) {
        for (const std::string& kt : utf8::word_token_texts(kw.term))
            for (const std::string& st : surface_tokens)
                if (kt == st) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Scrub

namespace detail {

/// Removes [start, end) from a code-point buffer and tidies the seam:
/// doubled interior whitespace collapses to one, boundary whitespace is
/// trimmed.
inline void erase_span_collapsing(std::u32string& cps, size_t start, size_t end) {
    cps.erase(start, end - start);
    if (start == 0) {
        while (!cps.empty() && utf8::is_space(cps[0])) cps.erase(cps.begin());
    } else if (start >= cps.size()) {
        while (!cps.empty() && utf8::is_space(cps.back())) cps.pop_back();
    } else if (utf8::is_space(cps[start - 1]) && utf8::is_space(cps[start])) {
        cps.erase(start, 1);
    }
}

} // namespace detail

/// Applies the scrub policy to one entity span. Delete removes the span and
/// collapses the whitespace seam; Mask overwrites every character.
inline std::string scrub(const std::string& text, const PiiEntity& entity,
                         const ScrubPolicy& policy) {
    std::u32string cps = utf8::decode(text);
    if (entity.start >= entity.end || entity.end > cps.size())
        throw SpanMismatchError("span [" + std::to_string(entity.start) + "," +
                                std::to_string(entity.end) + ") out of bounds");
    if (utf8::encode(cps.substr(entity.start, entity.end - entity.start)) != entity.surface)
        throw SpanMismatchError("surface \"" + entity.surface +
                                "\" is no longer at its recorded offsets");
    if (policy.mode == ScrubMode::Delete) {
        detail::erase_span_collapsing(cps, entity.start, entity.end);
    } else {
        for (size_t i = entity.start; i < entity.end; ++i) cps[i] = policy.mask_char;
    }
    return utf8::encode(cps);
}

// ---------------------------------------------------------------------------
// Adversarial perturbation

/// Insertion-only transformation: seeds decide which between-character
/// positions receive which alphabet characters. Removing every alphabet
/// character from the output recovers the input exactly.
inline std::string perturb_adversarial(const std::string& text,
                                       const PerturbationPolicy& policy, uint64_t seed) {
    policy.validate();
    std::u32string cps = utf8::decode(text);
    if (cps.size() < 2) return text; // no strictly-interior position exists

    size_t count = static_cast<size_t>(policy.rate * static_cast<double>(cps.size()));
    count = std::max<size_t>(1, std::min(count, cps.size() - 1));

    Rng rng(derive_seed(seed, "perturb"));
    std::vector<size_t> slots = rng.sample_indices(cps.size() - 1, count);
    std::vector<std::pair<size_t, char32_t>> inserts;
    inserts.reserve(slots.size());
    for (size_t slot : slots)
        inserts.emplace_back(slot + 1,
                             policy.alphabet[rng.bounded(policy.alphabet.size())]);
    std::sort(inserts.begin(), inserts.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [pos, ch] : inserts) cps.insert(cps.begin() + static_cast<long>(pos), ch);
    return utf8::encode(cps);
}

/// Removes every alphabet character; idempotent.
inline std::string strip_perturbation(const std::string& text,
                                      const PerturbationPolicy& policy) {
    std::u32string cps = utf8::decode(text);
    std::u32string out;
    out.reserve(cps.size());
    for (char32_t c : cps) {
        bool in_alphabet = false;
        for (char32_t a : policy.alphabet)
            if (a == c) {
                in_alphabet = true;
                break;
            }
        if (!in_alphabet) out.push_back(c);
    }
    return utf8::encode(out);
}

// ---------------------------------------------------------------------------
// Surrogate generation

/// Same-category, shape-aware replacement via the gateway. A reply equal to
/// the original (or empty) is retried once, then the deterministic local
/// generator takes over, so the postcondition (result != original) always
/// holds. Gateway transport errors propagate.
inline std::string generate_surrogate(const PiiEntity& entity, ModelGateway& gw,
                                      uint64_t seed) {
    ChatRequest req;
    req.temperature = 0.0;
    req.messages.push_back(
        {ChatRole::User, stub::surrogate_instruction(entity.surface, entity.category)});
    for (int attempt = 0; attempt < 2; ++attempt) {
        req.seed = derive_seed(seed, static_cast<uint64_t>(attempt));
        std::string value = gw.chat_complete(req);
        // trim whitespace and surrounding quotes
        size_t b = value.find_first_not_of(" \t\r\n\"'");
        size_t e = value.find_last_not_of(" \t\r\n\"'");
        value = b == std::string::npos ? std::string() : value.substr(b, e - b + 1);
        if (!value.empty() &&
            utf8::ascii_lower_copy(value) != utf8::ascii_lower_copy(entity.surface))
            return value;
    }
    return stub::surrogate_value(entity.surface, entity.category,
                                 derive_seed(seed, "fallback"));
}

// ---------------------------------------------------------------------------
// Bundle

enum class ReplacementAction { ScrubDelete, ScrubMask, Surrogate, PerturbSurrogate, PerturbOriginal };

inline std::string to_string(ReplacementAction a) {
    switch (a) {
        case ReplacementAction::ScrubDelete: return "scrub-delete";
        case ReplacementAction::ScrubMask: return "scrub-mask";
        case ReplacementAction::Surrogate: return "surrogate";
        case ReplacementAction::PerturbSurrogate: return "perturb-surrogate";
        case ReplacementAction::PerturbOriginal: return "perturb-original";
    }
    return "surrogate";
}

struct Replacement {
    size_t start = 0;
    size_t end = 0;
    std::string surface;
    PiiCategory category = PiiCategory::PERSON;
    IdentifierClass cls = IdentifierClass::Quasi;
    ReplacementAction action = ReplacementAction::Surrogate;
    std::string replacement;
};

/// Output of the generative desensitizer. true_index locates the variant
/// carrying the (perturbed) original confidential attributes; it is for local
/// use only and must never enter an upload payload.
struct DesensitizedBundle {
    std::vector<std::string> variants;
    size_t true_index = 0;
    std::vector<std::vector<Replacement>> provenance; // aligned with variants
    uint64_t seed = 0;
    std::vector<std::string> warnings;
};

struct DesensitizePolicies {
    ScrubPolicy scrub;
    PerturbationPolicy perturbation;
};

namespace detail {

struct Edit {
    size_t start;
    size_t end;
    bool erase; // true: delete with seam collapse; false: splice replacement
    std::u32string replacement;
};

inline std::u32string apply_edits(std::u32string cps, std::vector<Edit> edits) {
    std::sort(edits.begin(), edits.end(),
              [](const Edit& a, const Edit& b) { return a.start > b.start; });
    for (const Edit& e : edits) {
        if (e.erase) {
            erase_span_collapsing(cps, e.start, e.end);
        } else {
            cps.erase(e.start, e.end - e.start);
            cps.insert(e.start, e.replacement);
        }
    }
    return cps;
}

/// Surrogate that avoids re-introducing any other entity surface of the same
/// prompt (and the original itself) as a substring. Deterministic: seeds are
/// bumped per attempt.
inline std::string collision_free_surrogate(const PiiEntity& entity, ModelGateway& gw,
                                            uint64_t seed,
                                            const std::vector<std::string>& forbidden) {
    for (uint64_t attempt = 0; attempt < 32; ++attempt) {
        std::string cand = generate_surrogate(entity, gw, derive_seed(seed, attempt));
        bool clean = true;
        for (const std::string& f : forbidden)
            if (utf8::contains_ci(cand, f)) {
                clean = false;
                break;
            }
        if (clean) return cand;
    }
    throw DataError("could not generate a collision-free surrogate for \"" +
                    entity.surface + "\"");
}

} // namespace detail

/// Algorithm: scrub non-semantic entities in every variant; generate one
/// shared surrogate per semantic identifier value; build N-1 decoy variants
/// with fresh perturbed surrogate confidential attributes and one variant
/// with the perturbed originals; shuffle with a seeded permutation.
inline DesensitizedBundle desensitize(const Prompt& prompt, const SemanticVector& s,
                                      const PrivacyVector& l, size_t n, uint64_t seed,
                                      ModelGateway& gw,
                                      const DesensitizePolicies& policies = {}) {
    if (n < 1) throw ConfigError("desensitize: n must be >= 1");
    policies.perturbation.validate();
    {
        ValidationReport report = validate_spans(prompt, l);
        if (!report.ok())
            throw SpanError("privacy vector invalid for prompt " + prompt.id + ": " +
                            report.to_message());
    }

    DesensitizedBundle bundle;
    bundle.seed = seed;
    const uint64_t master = derive_seed(seed, prompt.id);

    if (l.empty())
        bundle.warnings.push_back("empty privacy vector: prompt copied unmodified");

    // semantic partition
    std::vector<char> scrubbed(l.size(), 0);
    std::vector<char> is_identifier(l.size(), 0);
    for (size_t i = 0; i < l.size(); ++i) {
        const PiiEntity& e = l.entities[i];
        if (!is_semantic(e, s))
            scrubbed[i] = 1;
        else if (e.cls == IdentifierClass::Direct || e.cls == IdentifierClass::Quasi)
            is_identifier[i] = 1;
    }

    std::vector<std::string> forbidden;
    for (const PiiEntity& e : l.entities) forbidden.push_back(e.surface);

    // one surrogate per distinct identifier value, shared by every variant
    std::map<std::string, std::string> identifier_surrogate;
    for (size_t i = 0; i < l.size(); ++i) {
        if (!is_identifier[i]) continue;
        const PiiEntity& e = l.entities[i];
        if (identifier_surrogate.count(e.surface)) continue;
        identifier_surrogate[e.surface] = detail::collision_free_surrogate(
            e, gw, derive_seed(master, "identifier|" + e.surface), forbidden);
    }

    const std::u32string original = utf8::decode(prompt.text);
    std::vector<std::string> variants(n);
    std::vector<std::vector<Replacement>> provenance(n);

    for (size_t v = 0; v < n; ++v) {
        const bool carries_originals = (v + 1 == n);
        std::map<std::string, std::string> attr_surrogate; // per-variant memo
        std::vector<detail::Edit> edits;
        for (size_t i = 0; i < l.size(); ++i) {
            const PiiEntity& e = l.entities[i];
            Replacement rep;
            rep.start = e.start;
            rep.end = e.end;
            rep.surface = e.surface;
            rep.category = e.category;
            rep.cls = e.cls;

            if (scrubbed[i]) {
                if (policies.scrub.mode == ScrubMode::Delete) {
                    rep.action = ReplacementAction::ScrubDelete;
                    edits.push_back({e.start, e.end, true, {}});
                } else {
                    rep.action = ReplacementAction::ScrubMask;
                    std::u32string mask(e.end - e.start, policies.scrub.mask_char);
                    rep.replacement = utf8::encode(mask);
                    edits.push_back({e.start, e.end, false, std::move(mask)});
                }
            } else if (is_identifier[i]) {
                rep.action = ReplacementAction::Surrogate;
                rep.replacement = identifier_surrogate.at(e.surface);
                edits.push_back({e.start, e.end, false, utf8::decode(rep.replacement)});
            } else {
                // semantic confidential attribute
                std::string base;
                if (carries_originals) {
                    rep.action = ReplacementAction::PerturbOriginal;
                    base = e.surface;
                } else {
                    rep.action = ReplacementAction::PerturbSurrogate;
                    auto it = attr_surrogate.find(e.surface);
                    if (it == attr_surrogate.end()) {
                        std::string sur = detail::collision_free_surrogate(
                            e, gw,
                            derive_seed(master, "attr|" + std::to_string(v) + "|" + e.surface),
                            forbidden);
                        it = attr_surrogate.emplace(e.surface, std::move(sur)).first;
                    }
                    base = it->second;
                }
                rep.replacement = perturb_adversarial(
                    base, policies.perturbation,
                    derive_seed(master, "perturb|" + std::to_string(v) + "|" + std::to_string(i)));
                edits.push_back({e.start, e.end, false, utf8::decode(rep.replacement)});
            }
            provenance[v].push_back(std::move(rep));
        }
        variants[v] = utf8::encode(detail::apply_edits(original, std::move(edits)));
    }

    // seeded shuffle; remember where the original-attribute variant landed
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(master, "shuffle"));
    shuffle_rng.shuffle(order);
    bundle.variants.resize(n);
    bundle.provenance.resize(n);
    for (size_t i = 0; i < n; ++i) {
        bundle.variants[i] = std::move(variants[order[i]]);
        bundle.provenance[i] = std::move(provenance[order[i]]);
        if (order[i] == n - 1) bundle.true_index = i;
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Generalization table and traditional baselines

/// category -> ordered (surface pattern, hypernym) pairs; "*" is the
/// category-wide default. Lookup falls back to the bracketed category name.
struct GeneralizationTable {
    std::map<PiiCategory, std::vector<std::pair<std::string, std::string>>> entries;

    std::string lookup(PiiCategory category, std::string_view surface) const {
        auto it = entries.find(category);
        if (it != entries.end()) {
            std::string folded = utf8::ascii_lower_copy(surface);
            for (const auto& [pattern, hypernym] : it->second)
                if (pattern != "*" && utf8::ascii_lower_copy(pattern) == folded)
                    return hypernym;
            for (const auto& [pattern, hypernym] : it->second)
                if (pattern == "*") return hypernym;
        }
        return "[" + to_string(category) + "]";
    }
};

inline GeneralizationTable default_generalization_table() {
    GeneralizationTable t;
    t.entries[PiiCategory::PERSON] = {{"*", "a person"}};
    t.entries[PiiCategory::CODE] = {{"*", "an identification number"}};
    t.entries[PiiCategory::CONTACT] = {{"*", "a contact address"}};
    t.entries[PiiCategory::HEALTH] = {{"diabetes", "a chronic illness"},
                                      {"hypertension", "a chronic illness"},
                                      {"chest pain", "a symptom"},
                                      {"dyspnea", "a symptom"},
                                      {"*", "a health condition"}};
    t.entries[PiiCategory::MEDICAL] = {{"metformin", "a medication"},
                                       {"antibiotics", "a medication"},
                                       {"insulin therapy", "a treatment"},
                                       {"*", "a medical procedure"}};
    t.entries[PiiCategory::PAYMENT] = {{"*", "a payment detail"}};
    t.entries[PiiCategory::ASSET] = {{"*", "a financial asset"}};
    return t;
}

/// Generalization table file: JSON, category -> {surface pattern: hypernym}.
inline GeneralizationTable parse_generalization_table(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("generalization table is not valid JSON: ") + e.what());
    }
    GeneralizationTable t;
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto cat = category_from_string(it.key());
        if (!cat) throw ConfigError("generalization: unknown category \"" + it.key() + "\"");
        std::vector<std::pair<std::string, std::string>> pairs;
        for (auto p = it.value().begin(); p != it.value().end(); ++p)
            pairs.emplace_back(p.key(), p.value().get<std::string>());
        t.entries[*cat] = std::move(pairs);
    }
    return t;
}

/// One traditional anonymizer pass over all spans of l.
inline std::string apply_baseline(const Prompt& prompt, const PrivacyVector& l,
                                  BaselineMethod method,
                                  const GeneralizationTable& table = default_generalization_table()) {
    {
        ValidationReport report = validate_spans(prompt, l);
        if (!report.ok())
            throw SpanError("privacy vector invalid for prompt " + prompt.id + ": " +
                            report.to_message());
    }
    std::map<PiiCategory, int> counters;
    std::vector<detail::Edit> edits;
    for (const PiiEntity& e : l.entities) {
        switch (method) {
            case BaselineMethod::Deletion:
                edits.push_back({e.start, e.end, true, {}});
                break;
            case BaselineMethod::Tokenization: {
                int idx = ++counters[e.category];
                std::string ph = "[" + to_string(e.category) + "_" + std::to_string(idx) + "]";
                edits.push_back({e.start, e.end, false, utf8::decode(ph)});
                break;
            }
            case BaselineMethod::Masking: {
                std::u32string mask(e.end - e.start, U'*');
                edits.push_back({e.start, e.end, false, std::move(mask)});
                break;
            }
            case BaselineMethod::Generalization: {
                std::string hypernym = table.lookup(e.category, e.surface);
                edits.push_back({e.start, e.end, false, utf8::decode(hypernym)});
                break;
            }
        }
    }
    return utf8::encode(detail::apply_edits(utf8::decode(prompt.text), std::move(edits)));
}

// ---------------------------------------------------------------------------
// Bundle serialization and verification

inline json replacement_to_json(const Replacement& r) {
    return json{{"start", r.start},
                {"end", r.end},
                {"surface", r.surface},
                {"category", to_string(r.category)},
                {"class", to_string(r.cls)},
                {"action", to_string(r.action)},
                {"replacement", r.replacement}};
}

/// Full local bundle, including true_index — never part of an upload payload.
inline json bundle_to_json(const DesensitizedBundle& b) {
    json prov = json::array();
    for (const auto& vp : b.provenance) {
        json arr = json::array();
        for (const Replacement& r : vp) arr.push_back(replacement_to_json(r));
        prov.push_back(arr);
    }
    json j{{"variants", b.variants},
           {"true_index", b.true_index},
           {"seed", b.seed},
           {"provenance", prov}};
    if (!b.warnings.empty()) j["warnings"] = b.warnings;
    return j;
}

/// Structural invariants of a bundle against its inputs. Empty result means
/// the bundle is sound.
inline std::vector<std::string> verify_bundle(const Prompt& prompt, const SemanticVector& s,
                                              const PrivacyVector& l,
                                              const DesensitizedBundle& bundle,
                                              const PerturbationPolicy& perturbation = {}) {
    std::vector<std::string> violations;
    auto fail = [&violations](const std::string& msg) { violations.push_back(msg); };

    if (bundle.variants.empty()) {
        fail("bundle has no variants");
        return violations;
    }
    if (bundle.true_index >= bundle.variants.size())
        fail("true_index out of range");
    if (bundle.provenance.size() != bundle.variants.size())
        fail("provenance not aligned with variants");

    if (l.empty()) {
        for (const std::string& v : bundle.variants)
            if (v != prompt.text) fail("empty privacy vector but variant differs from prompt");
        return violations;
    }

    std::vector<std::string> stripped;
    for (const std::string& v : bundle.variants)
        stripped.push_back(strip_perturbation(v, perturbation));

    // originals of identifiers must be gone from every variant
    for (const PiiEntity& e : l.entities) {
        if (e.cls != IdentifierClass::Direct && e.cls != IdentifierClass::Quasi) continue;
        for (size_t v = 0; v < stripped.size(); ++v)
            if (utf8::contains_ci(stripped[v], e.surface))
                fail("variant " + std::to_string(v) + " still contains " +
                     to_string(e.cls) + " identifier \"" + e.surface + "\"");
    }

    // uncertainty: the original confidential values live in exactly one variant
    std::set<std::string> semantic_attrs;
    for (const PiiEntity& e : l.entities)
        if (e.cls == IdentifierClass::Confidential && is_semantic(e, s))
            semantic_attrs.insert(e.surface);

    std::u32string folded_text = utf8::decode(prompt.text);
    for (char32_t& c : folded_text) c = utf8::ascii_lower(c);
    auto occurs_outside_spans = [&](const std::string& term) {
        std::u32string needle = utf8::decode(term);
        for (char32_t& c : needle) c = utf8::ascii_lower(c);
        size_t pos = 0;
        while ((pos = folded_text.find(needle, pos)) != std::u32string::npos) {
            bool inside = false;
            for (const PiiEntity& e : l.entities)
                if (pos < e.end && e.start < pos + needle.size()) {
                    inside = true;
                    break;
                }
            if (!inside) return true;
            ++pos;
        }
        return false;
    };

    for (const std::string& attr : semantic_attrs) {
        if (occurs_outside_spans(attr)) continue; // text-level uniqueness unreliable
        size_t holders = 0;
        size_t holder_index = 0;
        for (size_t v = 0; v < stripped.size(); ++v) {
            if (utf8::contains_ci(stripped[v], attr)) {
                ++holders;
                holder_index = v;
            }
        }
        if (holders != 1)
            fail("confidential value \"" + attr + "\" appears in " +
                 std::to_string(holders) + " variants, expected exactly 1");
        else if (holder_index != bundle.true_index)
            fail("confidential value \"" + attr + "\" lives in variant " +
                 std::to_string(holder_index) + " but true_index is " +
                 std::to_string(bundle.true_index));
    }

    // provenance-level uncertainty check
    for (size_t v = 0; v < bundle.provenance.size() && v < bundle.variants.size(); ++v) {
        for (const Replacement& r : bundle.provenance[v]) {
            if (r.action == ReplacementAction::PerturbOriginal) {
                if (v != bundle.true_index)
                    fail("perturbed original found in decoy variant " + std::to_string(v));
                if (strip_perturbation(r.replacement, perturbation) != r.surface)
                    fail("true variant attribute does not strip back to the original");
            }
            if (r.action == ReplacementAction::PerturbSurrogate &&
                utf8::ascii_lower_copy(strip_perturbation(r.replacement, perturbation)) ==
                    utf8::ascii_lower_copy(r.surface))
                fail("decoy variant " + std::to_string(v) + " carries the original value \"" +
                     r.surface + "\"");
        }
    }

    // semanticity: keywords with at least one occurrence outside all spans
    // must survive verbatim in every variant
    for (const SemanticKeyword& kw : s.keywords) {
        if (!occurs_outside_spans(kw.term)) continue;
        for (size_t v = 0; v < bundle.variants.size(); ++v)
            if (!utf8::contains_ci(bundle.variants[v], kw.term))
                fail("keyword \"" + kw.term + "\" missing from variant " + std::to_string(v));
    }

    return violations;
}

} // namespace deprompt
