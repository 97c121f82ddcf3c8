#pragma once

// End-to-end orchestration: configuration file handling, the CLI subcommands
// (recognize / desensitize / attack / evaluate / compare / render-finetune),
// bounded per-prompt parallelism, and manifest emission. Every output is
// seed-deterministic: two stub-backend runs with the same arguments produce
// byte-identical files.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "deprompt/core.hpp"
#include "deprompt/desensitize.hpp"
#include "deprompt/evaluation.hpp"
#include "deprompt/gateway.hpp"
#include "deprompt/recognition.hpp"
#include "deprompt/textrank.hpp"

namespace deprompt {

inline constexpr const char* kVersion = "0.1.0";

enum class ExitStatus : int { Success = 0, Usage = 1, Data = 2, Gateway = 3 };

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
    struct Paths {
        std::string rules;
        std::string stoplist;
        std::string generalization;
        std::string stub_corpus;
    } paths;

    size_t k = 3;
    size_t n = 5;
    size_t t = 100;
    uint64_t seed = 1;
    size_t jobs = 1;
    bool strict = false;

    GatewayConfig gateway;
    DesensitizePolicies policies;
    ClassificationPolicy classification;

    /// Canonical view of every effective parameter; its hash goes into the
    /// manifest and changes iff any parameter changes.
    json effective() const {
        json alphabet = json::array();
        for (char32_t c : policies.perturbation.alphabet)
            alphabet.push_back(static_cast<uint32_t>(c));
        json cls;
        for (PiiCategory c : kAllCategories)
            cls[to_string(c)] = to_string(classification.get(c));
        return json{
            {"paths",
             {{"rules", paths.rules},
              {"stoplist", paths.stoplist},
              {"generalization", paths.generalization},
              {"stub_corpus", paths.stub_corpus}}},
            {"k", k},
            {"n", n},
            {"t", t},
            {"seed", seed},
            {"jobs", jobs},
            {"strict", strict},
            {"gateway",
             {{"endpoint", gateway.endpoint},
              {"auth_env", gateway.auth_env},
              {"timeout_ms", gateway.timeout_ms},
              {"max_in_flight", gateway.max_in_flight},
              {"max_retries", gateway.max_retries},
              {"backend", gateway.backend == GatewayBackend::Stub ? "stub" : "remote"},
              {"model", gateway.model}}},
            {"scrub",
             {{"mode", policies.scrub.mode == ScrubMode::Delete ? "delete" : "mask"},
              {"mask_char", static_cast<uint32_t>(policies.scrub.mask_char)}}},
            {"perturbation", {{"alphabet", alphabet}, {"rate", policies.perturbation.rate}}},
            {"classification", cls}};
    }

    std::string config_hash() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(effective().dump())));
        return std::string(buf);
    }

    void validate() const {
        if (k < 1) throw ConfigError("k must be >= 1");
        if (n < 1) throw ConfigError("n must be >= 1");
        if (t < 1) throw ConfigError("t must be >= 1");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
        gateway.validate();
        policies.perturbation.validate();
        auto check_path = [](const std::string& p, const char* key) {
            if (!p.empty() && !std::filesystem::exists(p))
                throw ConfigError(std::string("paths.") + key + ": file not found: " + p);
        };
        check_path(paths.rules, "rules");
        check_path(paths.stoplist, "stoplist");
        check_path(paths.generalization, "generalization");
        check_path(paths.stub_corpus, "stub_corpus");
    }
};

namespace detail {

inline std::string read_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(std::string("cannot open ") + what + ": " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename T>
void read_number(const json& j, const char* key, T& out, const std::string& prefix) {
    if (!j.contains(key)) return;
    if (!j[key].is_number())
        throw ConfigError(prefix + key + " must be a number");
    if constexpr (std::is_unsigned_v<T>) {
        if (j[key].is_number_integer() && j[key].template get<long long>() < 0)
            throw ConfigError(prefix + key + " must be non-negative");
    }
    out = j[key].template get<T>();
}

} // namespace detail

/// Loads a JSON config file. An empty file (or "{}") yields all defaults,
/// including k=3 and n=5. Errors name the offending key path.
inline PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::string trimmed = text;
    size_t b = trimmed.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return cfg; // empty file: defaults
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");

    static const std::set<std::string> known{"paths", "k", "n", "t", "seed", "jobs",
                                             "strict", "gateway", "scrub", "perturbation",
                                             "classification"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("unknown config key \"" + it.key() + "\"");

    if (j.contains("paths")) {
        const json& p = j["paths"];
        auto get = [&p](const char* key, std::string& out) {
            if (!p.contains(key)) return;
            if (!p[key].is_string())
                throw ConfigError(std::string("paths.") + key + " must be a string");
            out = p[key].get<std::string>();
        };
        get("rules", cfg.paths.rules);
        get("stoplist", cfg.paths.stoplist);
        get("generalization", cfg.paths.generalization);
        get("stub_corpus", cfg.paths.stub_corpus);
    }
    detail::read_number(j, "k", cfg.k, "");
    detail::read_number(j, "n", cfg.n, "");
    detail::read_number(j, "t", cfg.t, "");
    detail::read_number(j, "seed", cfg.seed, "");
    detail::read_number(j, "jobs", cfg.jobs, "");
    if (j.contains("strict")) cfg.strict = j["strict"].get<bool>();

    if (j.contains("gateway")) {
        const json& g = j["gateway"];
        if (g.contains("endpoint")) cfg.gateway.endpoint = g["endpoint"].get<std::string>();
        if (g.contains("auth_env")) cfg.gateway.auth_env = g["auth_env"].get<std::string>();
        detail::read_number(g, "timeout_ms", cfg.gateway.timeout_ms, "gateway.");
        detail::read_number(g, "max_in_flight", cfg.gateway.max_in_flight, "gateway.");
        detail::read_number(g, "max_retries", cfg.gateway.max_retries, "gateway.");
        if (g.contains("model")) cfg.gateway.model = g["model"].get<std::string>();
        if (g.contains("backend")) {
            std::string backend = utf8::ascii_lower_copy(g["backend"].get<std::string>());
            if (backend == "stub")
                cfg.gateway.backend = GatewayBackend::Stub;
            else if (backend == "remote")
                cfg.gateway.backend = GatewayBackend::Remote;
            else
                throw ConfigError("gateway.backend must be \"stub\" or \"remote\"");
        }
    }
    if (j.contains("scrub")) {
        const json& s = j["scrub"];
        if (s.contains("mode")) {
            std::string mode = utf8::ascii_lower_copy(s["mode"].get<std::string>());
            if (mode == "delete")
                cfg.policies.scrub.mode = ScrubMode::Delete;
            else if (mode == "mask")
                cfg.policies.scrub.mode = ScrubMode::Mask;
            else
                throw ConfigError("scrub.mode must be \"delete\" or \"mask\"");
        }
        if (s.contains("mask_char")) {
            std::u32string cps = utf8::decode(s["mask_char"].get<std::string>());
            if (cps.size() != 1) throw ConfigError("scrub.mask_char must be one character");
            cfg.policies.scrub.mask_char = cps[0];
        }
    }
    if (j.contains("perturbation")) {
        const json& p = j["perturbation"];
        if (p.contains("alphabet")) {
            std::vector<char32_t> alphabet;
            for (const auto& a : p["alphabet"]) {
                std::u32string cps = utf8::decode(a.get<std::string>());
                if (cps.size() != 1)
                    throw ConfigError("perturbation.alphabet entries must be single characters");
                alphabet.push_back(cps[0]);
            }
            cfg.policies.perturbation.alphabet = std::move(alphabet);
        }
        if (p.contains("rate")) cfg.policies.perturbation.rate = p["rate"].get<double>();
    }
    if (j.contains("classification")) {
        const json& c = j["classification"];
        for (auto it = c.begin(); it != c.end(); ++it) {
            auto cat = category_from_string(it.key());
            if (!cat) throw ConfigError("classification: unknown category \"" + it.key() + "\"");
            auto cls = class_from_string(it.value().get<std::string>());
            if (!cls)
                throw ConfigError("classification." + it.key() + ": unknown class \"" +
                                  it.value().get<std::string>() + "\"");
            cfg.classification.set(*cat, *cls);
        }
    }
    cfg.validate();
    return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
    return parse_config(detail::read_file(path, "config file"));
}

/// Fully loaded companion objects: configured files when paths are set,
/// compiled-in defaults otherwise.
struct PipelineResources {
    RuleSet rules;
    Stoplist stoplist;
    GeneralizationTable generalization;
    std::string stub_corpus; // empty: built-in corpus
};

inline PipelineResources resolve_resources(const PipelineConfig& cfg) {
    PipelineResources res;
    res.rules = cfg.paths.rules.empty() ? default_rules() : load_rules(cfg.paths.rules);
    res.stoplist = cfg.paths.stoplist.empty()
                       ? default_stoplist()
                       : parse_stoplist(detail::read_file(cfg.paths.stoplist, "stoplist"));
    res.generalization =
        cfg.paths.generalization.empty()
            ? default_generalization_table()
            : parse_generalization_table(
                  detail::read_file(cfg.paths.generalization, "generalization table"));
    if (!cfg.paths.stub_corpus.empty())
        res.stub_corpus = detail::read_file(cfg.paths.stub_corpus, "stub corpus");
    return res;
}

// ---------------------------------------------------------------------------
// Bounded per-prompt parallelism with order-preserving output

namespace detail {

inline void parallel_for(size_t count, size_t jobs, const std::function<void(size_t)>& work) {
    if (jobs <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<size_t> cursor{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&] {
        for (;;) {
            size_t i = cursor.fetch_add(1);
            if (i >= count) return;
            try {
                work(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    size_t n_threads = std::min(jobs, count);
    pool.reserve(n_threads);
    for (size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace detail

// ---------------------------------------------------------------------------
// CLI

/// Test seams: transport construction is observable/replaceable and output
/// streams can be captured. The CLI binary passes the real HTTP transport.
struct RunHooks {
    std::function<std::shared_ptr<HttpTransport>(const GatewayConfig&)> transport_factory;
    std::ostream* out = &std::cout;
    std::ostream* err = &std::cerr;
};

namespace detail {

class OutputSink {
public:
    explicit OutputSink(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    void write(const std::string& name, const std::string& content) {
        std::filesystem::path p = dir_ / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error("cannot write " + p.string());
        out << content;
        written_.push_back(name);
    }

    const std::vector<std::string>& written() const { return written_; }

    /// Failure cleanup: partial outputs are removed.
    void discard_all() {
        for (const std::string& name : written_) {
            std::error_code ec;
            std::filesystem::remove(dir_ / name, ec);
        }
        written_.clear();
    }

private:
    std::filesystem::path dir_;
    std::vector<std::string> written_;
};

struct EvaluateRow {
    double sl = 0.0;
    double il = 0.0;
    double rl = 0.0;
    double rl_before = 0.0;
    size_t count = 0;
};

inline EvaluateRow evaluate_method(const PromptDataset& ds, MethodKind method,
                                   const CompareParams& params, ModelGateway& gw,
                                   const RuleSet& rules) {
    std::vector<const Prompt*> evaluated = detail::annotated_prompts(ds);
    EvaluateRow row;
    ChatRequest base;
    base.temperature = 0.0;
    base.seed = params.seed;
    for (const Prompt* p : evaluated) {
        ChatRequest req = base;
        req.messages.push_back({ChatRole::User, p->text});
        std::string orig_resp = gw.chat_complete(req);
        row.rl_before += perplexity(orig_resp, gw);

        MethodOutput out = run_method(method, *p, ds, params, gw, rules);
        row.sl += safe_similarity(p->text, out.representative, gw);
        ChatRequest dreq = base;
        dreq.messages.push_back({ChatRole::User, out.representative});
        std::string resp = gw.chat_complete(dreq);
        row.il += safe_similarity(orig_resp, resp, gw);
        row.rl += perplexity(resp, gw);
    }
    row.count = evaluated.size();
    double c = static_cast<double>(row.count);
    row.sl /= c;
    row.il /= c;
    row.rl /= c;
    row.rl_before /= c;
    return row;
}

} // namespace detail

/// CLI entry point. Subcommands mirror the pipeline stages; all randomness
/// comes from the config/--seed, outputs land in --out with a manifest.
inline ExitStatus run(const std::vector<std::string>& args, const RunHooks& hooks = {}) {
    CLI::App app{"deprompt: PII desensitization for LLM prompts, with attack and "
                 "utility evaluation"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand

    std::string config_path, backend_str, out_dir = "deprompt-out";
    std::optional<uint64_t> seed_override;
    std::optional<size_t> jobs_override;
    bool strict = false;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--backend", backend_str, "gateway backend: stub or remote")
        ->check(CLI::IsMember({"stub", "remote"}));
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--jobs", jobs_override, "parallel per-prompt workers");
    app.add_flag("--strict", strict, "reject unknown keys in dataset records");

    std::string dataset_path, method_str = "deprompt", kind_str, task_str;
    bool local_bundle = false;

    CLI::App* cmd_recognize = app.add_subcommand("recognize", "scene + privacy entities per prompt");
    cmd_recognize->add_option("dataset", dataset_path, "line-delimited dataset")->required();

    CLI::App* cmd_desensitize = app.add_subcommand("desensitize", "desensitize every prompt");
    cmd_desensitize->add_option("dataset", dataset_path)->required();
    cmd_desensitize->add_option("--method", method_str, "deprompt or a baseline")
        ->check(CLI::IsMember({"deprompt", "deletion", "tokenization", "masking", "generalization"}));
    cmd_desensitize->add_flag("--local-bundle", local_bundle,
                              "also write full bundles (true_index, provenance)");

    CLI::App* cmd_attack = app.add_subcommand("attack", "run a privacy attack");
    cmd_attack->add_option("dataset", dataset_path)->required();
    cmd_attack->add_option("--kind", kind_str, "extraction or linkage")
        ->required()
        ->check(CLI::IsMember({"extraction", "linkage"}));
    cmd_attack->add_option("--method", method_str, "desensitizer under attack")
        ->check(CLI::IsMember({"deprompt", "deletion", "tokenization", "masking", "generalization"}));

    CLI::App* cmd_evaluate = app.add_subcommand("evaluate", "SL/IL/RL for one method");
    cmd_evaluate->add_option("dataset", dataset_path)->required();
    cmd_evaluate->add_option("--method", method_str)
        ->check(CLI::IsMember({"deprompt", "deletion", "tokenization", "masking", "generalization"}));

    CLI::App* cmd_compare = app.add_subcommand("compare", "full method comparison report");
    cmd_compare->add_option("dataset", dataset_path)->required();

    CLI::App* cmd_render = app.add_subcommand("render-finetune", "emit fine-tuning records");
    cmd_render->add_option("dataset", dataset_path)->required();
    cmd_render->add_option("--task", task_str, "scene, entities, or surrogate")
        ->required()
        ->check(CLI::IsMember({"scene", "entities", "surrogate"}));

    std::vector<const char*> argv;
    argv.push_back("deprompt");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        *hooks.out << app.help();
        return ExitStatus::Success;
    } catch (const CLI::ParseError& e) {
        *hooks.err << e.what() << "\n" << app.help();
        return ExitStatus::Usage;
    }

    detail::OutputSink sink{std::filesystem::path(out_dir)};
    try {
        PipelineConfig cfg =
            config_path.empty() ? PipelineConfig{} : load_config(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (jobs_override) cfg.jobs = *jobs_override;
        if (strict) cfg.strict = true;
        if (!backend_str.empty())
            cfg.gateway.backend =
                backend_str == "stub" ? GatewayBackend::Stub : GatewayBackend::Remote;
        cfg.validate();

        PipelineResources res = resolve_resources(cfg);
        auto transport_factory = hooks.transport_factory
                                     ? hooks.transport_factory
                                     : [](const GatewayConfig&) -> std::shared_ptr<HttpTransport> {
                                           throw ConfigError(
                                               "remote backend requested but no HTTP transport "
                                               "is wired into this entry point");
                                       };
        std::unique_ptr<ModelGateway> gw =
            make_gateway(cfg.gateway, transport_factory, res.stub_corpus);

        PromptDataset ds =
            load_dataset(detail::read_file(dataset_path, "dataset"), cfg.strict);

        CompareParams params;
        params.t = cfg.t;
        params.seed = cfg.seed;
        params.k = cfg.k;
        params.n = cfg.n;
        params.stoplist = res.stoplist;
        params.policies = cfg.policies;
        params.classification = cfg.classification;
        params.generalization = res.generalization;

        json manifest{{"command", app.get_subcommands().front()->get_name()},
                      {"arguments", args},
                      {"inputs", {{"dataset", dataset_path},
                                  {"config", config_path.empty() ? json() : json(config_path)}}},
                      {"config_hash", cfg.config_hash()},
                      {"seed", cfg.seed},
                      {"versions", {{"deprompt", kVersion}, {"manifest_schema", 1}}}};

        if (app.got_subcommand(cmd_recognize)) {
            std::vector<RecognitionResult> results(ds.prompts.size());
            detail::parallel_for(ds.prompts.size(), cfg.jobs, [&](size_t i) {
                results[i] = recognize(ds.prompts[i], res.rules, cfg.classification);
            });
            std::string out;
            for (size_t i = 0; i < ds.prompts.size(); ++i) {
                json entities = json::array();
                for (const PiiEntity& e : results[i].privacy.entities)
                    entities.push_back(entity_to_json(e));
                out += json{{"id", ds.prompts[i].id},
                            {"scene", to_string(results[i].scene.scene)},
                            {"confidence", results[i].scene.confidence},
                            {"entities", entities}}
                           .dump();
                out += '\n';
            }
            sink.write("recognized.jsonl", out);
            if (!ds.annotations.empty()) {
                RecognitionScore score = score_recognition(ds, res.rules, cfg.classification);
                sink.write("recognition_scores.json",
                           json{{"micro_f1", score.micro_f1()},
                                {"precision", score.precision()},
                                {"recall", score.recall()},
                                {"span_accuracy", score.span_accuracy()},
                                {"true_positives", score.true_positives},
                                {"false_positives", score.false_positives},
                                {"false_negatives", score.false_negatives}}
                               .dump(2) +
                               "\n");
            }
        } else if (app.got_subcommand(cmd_desensitize)) {
            MethodKind method = *method_from_string(method_str);
            if (method == MethodKind::DePrompt) {
                std::vector<DesensitizedBundle> bundles(ds.prompts.size());
                detail::parallel_for(ds.prompts.size(), cfg.jobs, [&](size_t i) {
                    const Prompt& p = ds.prompts[i];
                    PrivacyVector pv =
                        detail::entities_for(p, ds, res.rules, cfg.classification);
                    SemanticVector s =
                        extract_keywords(p, cfg.k, params.textrank, res.stoplist);
                    bundles[i] = desensitize(p, s, pv, cfg.n, cfg.seed, *gw, cfg.policies);
                });
                std::string upload, local;
                for (size_t i = 0; i < ds.prompts.size(); ++i) {
                    // upload payload carries variants only; no true_index
                    upload += json{{"id", ds.prompts[i].id},
                                   {"variants", bundles[i].variants}}
                                  .dump();
                    upload += '\n';
                    if (local_bundle) {
                        json b = bundle_to_json(bundles[i]);
                        b["id"] = ds.prompts[i].id;
                        local += b.dump();
                        local += '\n';
                    }
                }
                sink.write("upload.jsonl", upload);
                if (local_bundle) sink.write("bundles.jsonl", local);
            } else {
                BaselineMethod bm = BaselineMethod::Deletion;
                switch (method) {
                    case MethodKind::Tokenization: bm = BaselineMethod::Tokenization; break;
                    case MethodKind::Masking: bm = BaselineMethod::Masking; break;
                    case MethodKind::Generalization: bm = BaselineMethod::Generalization; break;
                    default: break;
                }
                std::vector<std::string> texts(ds.prompts.size());
                detail::parallel_for(ds.prompts.size(), cfg.jobs, [&](size_t i) {
                    const Prompt& p = ds.prompts[i];
                    texts[i] = apply_baseline(
                        p, detail::entities_for(p, ds, res.rules, cfg.classification), bm,
                        res.generalization);
                });
                std::string out;
                for (size_t i = 0; i < ds.prompts.size(); ++i) {
                    out += json{{"id", ds.prompts[i].id}, {"text", texts[i]}}.dump();
                    out += '\n';
                }
                sink.write("desensitized.jsonl", out);
            }
        } else if (app.got_subcommand(cmd_attack)) {
            MethodKind method = *method_from_string(method_str);
            Desensitizer desens = [&](const Prompt& p) {
                return detail::run_method(method, p, ds, params, *gw, res.rules).upload;
            };
            AttackResult result;
            if (kind_str == "extraction") {
                Extractor extractor = make_rule_extractor(res.rules, cfg.classification);
                result = pii_extraction_attack(ds, desens, extractor, cfg.t, cfg.seed,
                                               cfg.policies.perturbation);
            } else {
                Inferencer inferencer = make_embedding_inferencer(*gw);
                result = identifier_linkage_attack(ds, desens, inferencer, cfg.t, cfg.seed);
            }
            json summary{{"kind", kind_str},
                         {"method", method_str},
                         {"epsilon", result.epsilon},
                         {"t", cfg.t},
                         {"seed", cfg.seed}};
            if (kind_str == "linkage") summary["d_size"] = 5;
            sink.write("attack.json", summary.dump(2) + "\n");
            std::string trials;
            for (const AttackTrial& tr : result.trials) {
                trials += json{{"trial", tr.trial},
                               {"prompt_id", tr.prompt_id},
                               {"value", tr.value}}
                              .dump();
                trials += '\n';
            }
            sink.write("trials.jsonl", trials);
        } else if (app.got_subcommand(cmd_evaluate)) {
            MethodKind method = *method_from_string(method_str);
            detail::EvaluateRow row =
                detail::evaluate_method(ds, method, params, *gw, res.rules);
            sink.write("evaluation.json", json{{"method", method_str},
                                               {"sl", row.sl},
                                               {"il", row.il},
                                               {"rl", row.rl},
                                               {"rl_before", row.rl_before},
                                               {"prompts", row.count},
                                               {"seed", cfg.seed}}
                                              .dump(2) +
                                              "\n");
        } else if (app.got_subcommand(cmd_compare)) {
            std::vector<MethodKind> methods{MethodKind::Deletion, MethodKind::Tokenization,
                                            MethodKind::Masking, MethodKind::Generalization,
                                            MethodKind::DePrompt};
            MetricsReport report = compare_methods(ds, methods, params, *gw, res.rules);
            sink.write("report.json", report_to_json(report).dump(2) + "\n");
            sink.write("report.txt", report_to_table(report));
        } else if (app.got_subcommand(cmd_render)) {
            FinetuneTask task = task_str == "scene" ? FinetuneTask::SceneRecognition
                                : task_str == "entities" ? FinetuneTask::EntityExtraction
                                                         : FinetuneTask::SurrogateGeneration;
            std::string out;
            for (const Prompt& p : ds.prompts) {
                PrivacyVector pv = detail::entities_for(p, ds, res.rules, cfg.classification);
                out += finetune_record_to_json(render_finetune_record(p, pv, task)).dump();
                out += '\n';
            }
            sink.write("finetune.jsonl", out);
        }

        json outputs = json::array();
        for (const std::string& name : sink.written()) outputs.push_back(name);
        manifest["outputs"] = outputs;
        sink.write("manifest.json", manifest.dump(2) + "\n");
        return ExitStatus::Success;
    } catch (const GatewayError& e) {
        sink.discard_all();
        *hooks.err << "gateway error: " << e.what() << "\n";
        return ExitStatus::Gateway;
    } catch (const Error& e) {
        sink.discard_all();
        *hooks.err << "error: " << e.what() << "\n";
        return ExitStatus::Data;
    }
}

inline int run_main(int argc, char** argv, const RunHooks& hooks) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return static_cast<int>(run(args, hooks));
}

} // namespace deprompt
