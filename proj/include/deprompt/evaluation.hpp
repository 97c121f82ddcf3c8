#pragma once

// Privacy attacks and utility metrics. The extraction attack measures how
// much annotated PII an extractor still recovers from desensitized text; the
// linkage attack measures how often an inference algorithm re-links a leaked
// confidential attribute to its direct identifier. Utility is semantic
// retention (SL), inference-response similarity (IL) and response perplexity
// (RL), plus a method-by-method comparison report.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deprompt/core.hpp"
#include "deprompt/desensitize.hpp"
#include "deprompt/gateway.hpp"
#include "deprompt/recognition.hpp"
#include "deprompt/rng.hpp"
#include "deprompt/textrank.hpp"

namespace deprompt {

// ---------------------------------------------------------------------------
// Plug-in contracts. The trailing source Prompt lets test oracles peek at
// gold annotations; production implementations ignore it.

using Desensitizer = std::function<std::vector<std::string>(const Prompt&)>;
using Extractor = std::function<PrivacyVector(const std::string& text, const Prompt& source)>;
using Inferencer = std::function<std::string(
    const std::string& text, const std::string& attribute,
    const std::vector<std::string>& candidates, const Prompt& source)>;

inline Extractor make_rule_extractor(const RuleSet& rules,
                                     const ClassificationPolicy& policy = {}) {
    return [&rules, policy](const std::string& text, const Prompt&) {
        Prompt synthetic{"", text, std::nullopt};
        return recognize_rules(synthetic, rules, policy);
    };
}

inline Extractor make_remote_extractor(ModelGateway& gw,
                                       const ClassificationPolicy& policy = {}) {
    return [&gw, policy](const std::string& text, const Prompt&) {
        Prompt synthetic{"", text, std::nullopt};
        return recognize_remote(synthetic, entity_extraction_instruction(), gw, policy).privacy;
    };
}

/// Gold-lookup oracle: reports each gold entity of the source prompt whose
/// surface still occurs (case-insensitively) in the desensitized text.
inline Extractor make_oracle_extractor(const PromptDataset& ds) {
    return [&ds](const std::string& text, const Prompt& source) {
        PrivacyVector out;
        const PrivacyVector* gold = ds.gold(source.id);
        if (!gold) return out;
        for (const PiiEntity& e : gold->entities)
            if (utf8::contains_ci(text, e.surface)) out.entities.push_back(e);
        return out;
    };
}

/// Picks uniformly among the candidates; the stream is derived from the call
/// contents so results are reproducible without shared state.
inline Inferencer make_uniform_inferencer(uint64_t seed) {
    return [seed](const std::string& text, const std::string& attribute,
                  const std::vector<std::string>& candidates, const Prompt&) {
        uint64_t h = derive_seed(seed, fnv1a64(text));
        h = derive_seed(h, fnv1a64(attribute));
        for (const std::string& c : candidates) h = derive_seed(h, fnv1a64(c));
        Rng rng(h);
        return candidates.at(static_cast<size_t>(rng.bounded(candidates.size())));
    };
}

/// Perfect-knowledge oracle: returns the source prompt's first direct
/// identifier whenever it is among the candidates.
inline Inferencer make_oracle_inferencer(const PromptDataset& ds) {
    return [&ds](const std::string&, const std::string&,
                 const std::vector<std::string>& candidates, const Prompt& source) {
        const PrivacyVector* gold = ds.gold(source.id);
        if (gold) {
            for (const PiiEntity& e : gold->entities) {
                if (e.cls != IdentifierClass::Direct) continue;
                for (const std::string& c : candidates)
                    if (c == e.surface) return c;
                break;
            }
        }
        return candidates.at(0);
    };
}

/// Embedding-similarity chooser: argmax over candidates of
/// cosine(embed(candidate + " " + attribute), embed(text)), ties broken by
/// candidate order.
inline Inferencer make_embedding_inferencer(ModelGateway& gw) {
    return [&gw](const std::string& text, const std::string& attribute,
                 const std::vector<std::string>& candidates, const Prompt&) {
        EmbeddingVector target = gw.embed(text);
        double best = -2.0;
        size_t best_idx = 0;
        for (size_t i = 0; i < candidates.size(); ++i) {
            EmbeddingVector cand = gw.embed(candidates[i] + " " + attribute);
            double score = -2.0;
            if (!cand.zero() && !target.zero()) {
                double dot = 0.0;
                for (size_t d = 0; d < cand.dim() && d < target.dim(); ++d)
                    dot += cand.values[d] * target.values[d];
                score = dot / (cand.norm() * target.norm());
            }
            if (score > best) {
                best = score;
                best_idx = i;
            }
        }
        return candidates.at(best_idx);
    };
}

// ---------------------------------------------------------------------------
// Attacks

struct AttackTrial {
    size_t trial = 0;
    std::string prompt_id;
    double value = 0.0;
};

struct AttackResult {
    double epsilon = 0.0;
    std::vector<AttackTrial> trials;
};

namespace detail {

/// Entity identity for intersection: perturbation-stripped surface
/// (ASCII-folded) plus category.
inline std::set<std::pair<std::string, std::string>> entity_keys(
    const PrivacyVector& pv, const PerturbationPolicy& perturbation) {
    std::set<std::pair<std::string, std::string>> keys;
    for (const PiiEntity& e : pv.entities)
        keys.insert({utf8::ascii_lower_copy(strip_perturbation(e.surface, perturbation)),
                     to_string(e.category)});
    return keys;
}

inline std::vector<const Prompt*> annotated_prompts(const PromptDataset& ds) {
    if (ds.annotations.empty())
        throw EmptyAnnotationsError("dataset carries no gold annotations");
    std::vector<const Prompt*> out;
    for (const Prompt& p : ds.prompts) {
        const PrivacyVector* gold = ds.gold(p.id);
        if (gold && !gold->empty()) out.push_back(&p);
    }
    if (out.empty())
        throw DegenerateDatasetError("no prompt has a non-empty gold annotation");
    return out;
}

} // namespace detail

/// PII extraction attack: T rounds of sample → desensitize → extract →
/// score |E ∩ L| / |E| on (stripped surface, category) keys. For bundle
/// producing desensitizers L is the union over all variants (the adversary
/// sees the whole upload).
inline AttackResult pii_extraction_attack(const PromptDataset& ds,
                                          const Desensitizer& desens,
                                          const Extractor& extractor, size_t t,
                                          uint64_t seed,
                                          const PerturbationPolicy& perturbation = {}) {
    if (t < 1) throw ConfigError("extraction attack: t must be >= 1");
    std::vector<const Prompt*> eligible = detail::annotated_prompts(ds);

    AttackResult result;
    double sum = 0.0;
    for (size_t i = 0; i < t; ++i) {
        Rng rng(derive_seed(seed, "extraction|" + std::to_string(i)));
        const Prompt& p = *eligible[static_cast<size_t>(rng.bounded(eligible.size()))];
        auto gold_keys = detail::entity_keys(*ds.gold(p.id), perturbation);

        std::set<std::pair<std::string, std::string>> extracted;
        for (const std::string& variant : desens(p)) {
            auto keys = detail::entity_keys(extractor(variant, p), perturbation);
            extracted.insert(keys.begin(), keys.end());
        }
        size_t hit = 0;
        for (const auto& k : gold_keys)
            if (extracted.count(k)) ++hit;
        double value = static_cast<double>(hit) / static_cast<double>(gold_keys.size());
        sum += value;
        result.trials.push_back({i, p.id, value});
    }
    result.epsilon = sum / static_cast<double>(t);
    return result;
}

/// Identifier linkage attack: the adversary knows a leaked confidential
/// attribute and a candidate list of direct identifiers (|D| per trial), and
/// must pick the right one from the desensitized upload.
inline AttackResult identifier_linkage_attack(const PromptDataset& ds,
                                              const Desensitizer& desens,
                                              const Inferencer& inferencer, size_t t,
                                              uint64_t seed, size_t d_size = 5) {
    if (t < 1) throw ConfigError("linkage attack: t must be >= 1");
    std::vector<const Prompt*> annotated = detail::annotated_prompts(ds);

    // the global pool of direct identifiers, in first-appearance order
    std::vector<std::string> pool;
    std::set<std::string> seen;
    for (const Prompt* p : annotated)
        for (const PiiEntity& e : ds.gold(p->id)->entities)
            if (e.cls == IdentifierClass::Direct && seen.insert(e.surface).second)
                pool.push_back(e.surface);
    if (pool.size() < d_size)
        throw InsufficientIdentifiersError(
            "dataset has " + std::to_string(pool.size()) +
            " distinct direct identifiers, need " + std::to_string(d_size));

    // trials draw only prompts carrying both a direct identifier and a
    // confidential attribute
    std::vector<const Prompt*> eligible;
    for (const Prompt* p : annotated) {
        bool has_d = false, has_a = false;
        for (const PiiEntity& e : ds.gold(p->id)->entities) {
            if (e.cls == IdentifierClass::Direct) has_d = true;
            if (e.cls == IdentifierClass::Confidential) has_a = true;
        }
        if (has_d && has_a) eligible.push_back(p);
    }
    if (eligible.empty())
        throw DegenerateDatasetError(
            "no prompt carries both a direct identifier and a confidential attribute");

    AttackResult result;
    double sum = 0.0;
    for (size_t i = 0; i < t; ++i) {
        Rng rng(derive_seed(seed, "linkage|" + std::to_string(i)));
        const Prompt& p = *eligible[static_cast<size_t>(rng.bounded(eligible.size()))];
        std::string d, a;
        for (const PiiEntity& e : ds.gold(p.id)->entities) {
            if (d.empty() && e.cls == IdentifierClass::Direct) d = e.surface;
            if (a.empty() && e.cls == IdentifierClass::Confidential) a = e.surface;
        }

        std::vector<std::string> candidates{d};
        std::vector<std::string> others;
        for (const std::string& x : pool)
            if (x != d) others.push_back(x);
        for (size_t idx : rng.sample_indices(others.size(), d_size - 1))
            candidates.push_back(others[idx]);
        rng.shuffle(candidates);

        std::string upload;
        for (const std::string& variant : desens(p)) {
            if (!upload.empty()) upload += '\n';
            upload += variant;
        }
        std::string chosen = inferencer(upload, a, candidates, p);
        double value = chosen == d ? 1.0 : 0.0;
        sum += value;
        result.trials.push_back({i, p.id, value});
    }
    result.epsilon = sum / static_cast<double>(t);
    return result;
}

// ---------------------------------------------------------------------------
// Utility metrics

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) throw DimensionMismatchError(a.dim(), b.dim());
    if (a.zero() || b.zero()) throw ZeroVectorError();
    double dot = 0.0;
    for (size_t i = 0; i < a.dim(); ++i) dot += a.values[i] * b.values[i];
    return dot / (a.norm() * b.norm());
}

/// SL: cosine similarity of the two texts' embeddings, clamped to [0, 1].
/// For a bundle, call with the true variant.
inline double semantic_retention(const std::string& original, const std::string& desensitized,
                                 ModelGateway& gw) {
    if (original.empty() || desensitized.empty())
        throw EmptyTextError();
    double c = cosine_similarity(gw.embed(original), gw.embed(desensitized));
    return std::clamp(c, 0.0, 1.0);
}

/// IL: cosine similarity of the model responses before and after
/// desensitization, clamped to [0, 1].
inline double inference_similarity(const std::string& resp_original,
                                   const std::string& resp_desensitized, ModelGateway& gw) {
    if (resp_original.empty() || resp_desensitized.empty()) throw EmptyTextError();
    double c = cosine_similarity(gw.embed(resp_original), gw.embed(resp_desensitized));
    return std::clamp(c, 0.0, 1.0);
}

/// PPL = 2^(-(1/N) * sum log2 P(w_i)).
inline double perplexity(const std::string& text, ModelGateway& gw) {
    TokenLogprobs lp = gw.token_logprobs(text);
    if (lp.tokens.empty()) throw EmptyTextError();
    double sum = 0.0;
    for (const TokenLogprob& t : lp.tokens) sum += t.logprob;
    return std::exp2(-sum / static_cast<double>(lp.tokens.size()));
}

// ---------------------------------------------------------------------------
// Recognition scoring (harness for recognizer quality)

struct RecognitionScore {
    size_t true_positives = 0;
    size_t false_positives = 0;
    size_t false_negatives = 0;

    double precision() const {
        size_t denom = true_positives + false_positives;
        return denom == 0 ? 0.0 : static_cast<double>(true_positives) / denom;
    }
    double recall() const {
        size_t denom = true_positives + false_negatives;
        return denom == 0 ? 0.0 : static_cast<double>(true_positives) / denom;
    }
    double micro_f1() const {
        double p = precision(), r = recall();
        return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    }
    /// Span-exact accuracy over gold entities (identical to recall here, kept
    /// under the name the comparisons are reported with).
    double span_accuracy() const { return recall(); }
};

/// Span-exact micro scores: a prediction counts only if (start, end,
/// category) all match a gold entity.
inline RecognitionScore score_recognition(const PrivacyVector& gold,
                                          const PrivacyVector& predicted) {
    RecognitionScore s;
    std::set<std::tuple<size_t, size_t, int>> gold_keys, pred_keys;
    for (const PiiEntity& e : gold.entities)
        gold_keys.insert({e.start, e.end, static_cast<int>(e.category)});
    for (const PiiEntity& e : predicted.entities)
        pred_keys.insert({e.start, e.end, static_cast<int>(e.category)});
    for (const auto& k : pred_keys)
        if (gold_keys.count(k))
            ++s.true_positives;
        else
            ++s.false_positives;
    for (const auto& k : gold_keys)
        if (!pred_keys.count(k)) ++s.false_negatives;
    return s;
}

inline RecognitionScore score_recognition(const PromptDataset& ds, const RuleSet& rules,
                                          const ClassificationPolicy& policy = {}) {
    RecognitionScore total;
    for (const Prompt& p : ds.prompts) {
        const PrivacyVector* gold = ds.gold(p.id);
        if (!gold) continue;
        RecognitionScore s = score_recognition(*gold, recognize_rules(p, rules, policy));
        total.true_positives += s.true_positives;
        total.false_positives += s.false_positives;
        total.false_negatives += s.false_negatives;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Method comparison

enum class MethodKind { Deletion, Tokenization, Masking, Generalization, DePrompt };

inline std::string to_string(MethodKind m) {
    switch (m) {
        case MethodKind::Deletion: return "deletion";
        case MethodKind::Tokenization: return "tokenization";
        case MethodKind::Masking: return "masking";
        case MethodKind::Generalization: return "generalization";
        case MethodKind::DePrompt: return "deprompt";
    }
    return "deprompt";
}

inline std::optional<MethodKind> method_from_string(std::string_view s) {
    std::string t = utf8::ascii_lower_copy(s);
    if (t == "deletion") return MethodKind::Deletion;
    if (t == "tokenization") return MethodKind::Tokenization;
    if (t == "masking") return MethodKind::Masking;
    if (t == "generalization") return MethodKind::Generalization;
    if (t == "deprompt" || t == "ours") return MethodKind::DePrompt;
    return std::nullopt;
}

struct CompareParams {
    size_t t = 100;
    uint64_t seed = 1;
    size_t d_size = 5;
    size_t k = 3;
    size_t n = 5;
    TextRankParams textrank;
    Stoplist stoplist;
    DesensitizePolicies policies;
    ClassificationPolicy classification;
    GeneralizationTable generalization = default_generalization_table();
};

struct MethodRow {
    std::string method;
    double epsilon_e = 0.0;
    double epsilon_i = 0.0;
    double sl = 0.0;
    double il = 0.0;
    double rl = 0.0;
    double rl_before = 0.0;
    bool ok = true;
    std::string error;
};

struct MetricsReport {
    std::vector<MethodRow> rows;
    size_t t = 0;
    uint64_t seed = 0;
    size_t d_size = 5;
    std::string dataset_id;
};

namespace detail {

/// Desensitized representation of a prompt under one method: the full upload
/// (all variants) and the text representing it in the utility metrics.
struct MethodOutput {
    std::vector<std::string> upload;
    std::string representative;
};

inline PrivacyVector entities_for(const Prompt& p, const PromptDataset& ds,
                                  const RuleSet& rules, const ClassificationPolicy& policy) {
    const PrivacyVector* gold = ds.gold(p.id);
    if (gold) return *gold;
    return recognize_rules(p, rules, policy);
}

inline MethodOutput run_method(MethodKind method, const Prompt& p, const PromptDataset& ds,
                               const CompareParams& params, ModelGateway& gw,
                               const RuleSet& rules) {
    PrivacyVector pv = entities_for(p, ds, rules, params.classification);
    if (method == MethodKind::DePrompt) {
        SemanticVector s = extract_keywords(p, params.k, params.textrank, params.stoplist);
        DesensitizedBundle bundle =
            desensitize(p, s, pv, params.n, params.seed, gw, params.policies);
        return {bundle.variants, bundle.variants[bundle.true_index]};
    }
    BaselineMethod bm;
    switch (method) {
        case MethodKind::Deletion: bm = BaselineMethod::Deletion; break;
        case MethodKind::Tokenization: bm = BaselineMethod::Tokenization; break;
        case MethodKind::Masking: bm = BaselineMethod::Masking; break;
        default: bm = BaselineMethod::Generalization; break;
    }
    std::string text = apply_baseline(p, pv, bm, params.generalization);
    return {{text}, text};
}

inline double safe_similarity(const std::string& a, const std::string& b, ModelGateway& gw) {
    if (a.empty() || b.empty()) return 0.0;
    EmbeddingVector ea = gw.embed(a), eb = gw.embed(b);
    if (ea.zero() || eb.zero()) return 0.0;
    return std::clamp(cosine_similarity(ea, eb), 0.0, 1.0);
}

} // namespace detail

/// One row per method, all five metrics under a shared seed, trial count,
/// extractor and inferencer. A failing method is marked in its row; the rest
/// of the report still comes out.
inline MetricsReport compare_methods(const PromptDataset& ds,
                                     const std::vector<MethodKind>& methods,
                                     const CompareParams& params, ModelGateway& gw,
                                     const RuleSet& rules) {
    MetricsReport report;
    report.t = params.t;
    report.seed = params.seed;
    report.d_size = params.d_size;
    report.dataset_id = [&ds] {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(serialize_dataset(ds))));
        return std::string(buf);
    }();

    Extractor extractor = make_rule_extractor(rules, params.classification);
    Inferencer inferencer = make_embedding_inferencer(gw);

    std::vector<const Prompt*> evaluated = detail::annotated_prompts(ds);

    // responses to the originals are method-independent
    ChatRequest base;
    base.temperature = 0.0;
    base.seed = params.seed;
    std::map<std::string, std::string> original_response;
    double rl_before_sum = 0.0;
    for (const Prompt* p : evaluated) {
        ChatRequest req = base;
        req.messages.push_back({ChatRole::User, p->text});
        std::string resp = gw.chat_complete(req);
        rl_before_sum += perplexity(resp, gw);
        original_response[p->id] = std::move(resp);
    }
    double rl_before = rl_before_sum / static_cast<double>(evaluated.size());

    for (MethodKind method : methods) {
        MethodRow row;
        row.method = to_string(method);
        row.rl_before = rl_before;
        try {
            Desensitizer desens = [&](const Prompt& p) {
                return detail::run_method(method, p, ds, params, gw, rules).upload;
            };
            row.epsilon_e = pii_extraction_attack(ds, desens, extractor, params.t,
                                                  params.seed,
                                                  params.policies.perturbation)
                                .epsilon;
            row.epsilon_i = identifier_linkage_attack(ds, desens, inferencer, params.t,
                                                      params.seed, params.d_size)
                                .epsilon;

            double sl = 0.0, il = 0.0, rl = 0.0;
            for (const Prompt* p : evaluated) {
                detail::MethodOutput out =
                    detail::run_method(method, *p, ds, params, gw, rules);
                sl += detail::safe_similarity(p->text, out.representative, gw);
                ChatRequest req = base;
                req.messages.push_back({ChatRole::User, out.representative});
                std::string resp = gw.chat_complete(req);
                il += detail::safe_similarity(original_response[p->id], resp, gw);
                rl += perplexity(resp, gw);
            }
            double count = static_cast<double>(evaluated.size());
            row.sl = sl / count;
            row.il = il / count;
            row.rl = rl / count;
        } catch (const Error& e) {
            row.ok = false;
            row.error = e.what();
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

inline json report_to_json(const MetricsReport& report) {
    json rows = json::array();
    for (const MethodRow& r : report.rows) {
        json row{{"method", r.method}, {"epsilon_e", r.epsilon_e},
                 {"epsilon_i", r.epsilon_i}, {"sl", r.sl},
                 {"il", r.il},             {"rl", r.rl},
                 {"t", report.t},          {"seed", report.seed},
                 {"d_size", report.d_size}};
        if (!r.ok) row["error"] = r.error;
        rows.push_back(std::move(row));
    }
    return json{{"rows", rows},
                {"metadata",
                 {{"dataset_id", report.dataset_id},
                  {"rl_before", report.rows.empty() ? 0.0 : report.rows.front().rl_before},
                  {"t", report.t},
                  {"seed", report.seed},
                  {"d_size", report.d_size}}}};
}

/// Aligned plain-text table, one method per row.
inline std::string report_to_table(const MetricsReport& report) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %9s %9s %9s %9s %9s\n", "method", "eps_e",
                  "eps_i", "SL", "IL", "RL");
    out += line;
    out += std::string(66, '-') + "\n";
    for (const MethodRow& r : report.rows) {
        if (r.ok)
            std::snprintf(line, sizeof line, "%-16s %9.4f %9.4f %9.4f %9.4f %9.2f\n",
                          r.method.c_str(), r.epsilon_e, r.epsilon_i, r.sl, r.il, r.rl);
        else
            std::snprintf(line, sizeof line, "%-16s failed: %s\n", r.method.c_str(),
                          r.error.c_str());
        out += line;
    }
    std::snprintf(line, sizeof line, "T=%zu seed=%llu |D|=%zu dataset=%s\n", report.t,
                  static_cast<unsigned long long>(report.seed), report.d_size,
                  report.dataset_id.c_str());
    out += line;
    return out;
}

} // namespace deprompt
