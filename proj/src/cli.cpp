#include "stepgame/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "stepgame/chain_search.hpp"
#include "stepgame/dataset.hpp"
#include "stepgame/errors.hpp"
#include "stepgame/llm.hpp"
#include "stepgame/parallel.hpp"
#include "stepgame/rng.hpp"
#include "stepgame/solver.hpp"
#include "stepgame/templates.hpp"

namespace stepgame {
namespace {

using nlohmann::ordered_json;

std::string hex_digest(const std::string& text) {
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text)));
    return buffer;
}

// Resolves --out to a file or the process output stream.
class OutputTarget {
  public:
    OutputTarget(const std::string& path, std::ostream& fallback) {
        if (path.empty()) {
            stream_ = &fallback;
            return;
        }
        file_.open(path);
        if (!file_) throw ParseError("cannot open output file \"" + path + "\"");
        stream_ = &file_;
    }
    std::ostream& stream() { return *stream_; }

  private:
    std::ofstream file_;
    std::ostream* stream_ = nullptr;
};

std::vector<Instance> load_instances(const std::string& path, std::istream& in,
                                     std::ostream& err) {
    IngestResult result;
    if (path.empty()) {
        result = read_instances(in, "<stdin>");
    } else {
        result = read_instances_file(path);
    }
    for (const std::string& warning : result.warnings) err << warning << '\n';
    return std::move(result.instances);
}

const TemplateBase& load_templates(const std::string& path,
                                   std::unique_ptr<TemplateBase>& storage) {
    if (path.empty()) return TemplateBase::bundled();
    storage = std::make_unique<TemplateBase>(TemplateBase::load_from_file(path));
    return *storage;
}

struct CommonFlags {
    std::string templates;
    std::string in_path;
    std::string out_path;
};

void add_templates_flag(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--templates", flags.templates,
                    "Template catalog file (default: built-in catalog)");
}

void add_in_flag(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--in", flags.in_path, "Input JSONL file (default: stdin)");
}

void add_out_flag(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--out", flags.out_path, "Output file (default: stdout)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err) {
    CLI::App app{"StepGame spatial-reasoning toolkit: generate, validate, rectify, solve,\n"
                 "trace, search, eval, and score multi-hop spatial reasoning data.\n"
                 "Exit codes: 0 success, 1 domain/data failure, 2 usage error."};
    app.require_subcommand(1);

    CommonFlags common;

    // generate
    auto* generate_cmd = app.add_subcommand("generate", "Generate benchmark instances");
    GenerationSpec spec;
    std::string split_word = "clean";
    generate_cmd->add_option("--k", spec.k, "Number of reasoning hops")
        ->required()
        ->check(CLI::PositiveNumber);
    generate_cmd->add_option("--n", spec.n, "Number of instances")
        ->required()
        ->check(CLI::PositiveNumber);
    generate_cmd->add_option("--seed", spec.seed, "Generation seed");
    generate_cmd->add_option("--split", split_word, "clean or noise")
        ->check(CLI::IsMember({"clean", "noise"}));
    generate_cmd->add_option("--noise-extra", spec.noise_extra,
                             "Distractor sentences per noise instance");
    generate_cmd->add_flag("--reverse", spec.reverse_query,
                           "Query the last chain object against the first");
    generate_cmd->add_option("--alphabet", spec.alphabet, "Object name alphabet");
    add_out_flag(generate_cmd, common);
    add_templates_flag(generate_cmd, common);

    // validate
    auto* validate_cmd = app.add_subcommand("validate", "Report template faults in instances");
    bool strict = false;
    add_in_flag(validate_cmd, common);
    add_templates_flag(validate_cmd, common);
    validate_cmd->add_flag("--strict", strict,
                           "Exit 1 when any instance is faulty or unmatched");

    // rectify
    auto* rectify_cmd = app.add_subcommand("rectify", "Repair or drop faulty instances");
    std::string policy_word;
    std::uint64_t rectify_seed = 0;
    std::string log_path;
    add_in_flag(rectify_cmd, common);
    add_out_flag(rectify_cmd, common);
    add_templates_flag(rectify_cmd, common);
    rectify_cmd->add_option("--policy", policy_word, "regenerate | drop_faulty | repair_label")
        ->required()
        ->check(CLI::IsMember({"regenerate", "drop_faulty", "repair_label"}));
    rectify_cmd->add_option("--seed", rectify_seed, "Seed for replacement rendering");
    rectify_cmd->add_option("--log", log_path, "Rectification log file (default: stderr)");

    // solve
    auto* solve_cmd = app.add_subcommand("solve", "Solve instances exactly");
    bool lenient = false;
    int jobs = 1;
    add_in_flag(solve_cmd, common);
    add_out_flag(solve_cmd, common);
    add_templates_flag(solve_cmd, common);
    solve_cmd->add_flag("--lenient", lenient, "Skip unparseable sentences with a warning");
    solve_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // trace
    auto* trace_cmd = app.add_subcommand("trace", "Emit step-by-step coordinate traces");
    std::string format = "text";
    add_in_flag(trace_cmd, common);
    add_out_flag(trace_cmd, common);
    add_templates_flag(trace_cmd, common);
    trace_cmd->add_option("--format", format, "text or record")
        ->check(CLI::IsMember({"text", "record"}));

    // search
    auto* search_cmd = app.add_subcommand("search", "Find linking chains by beam search");
    SearchConfig search_cfg;
    add_in_flag(search_cmd, common);
    add_out_flag(search_cmd, common);
    add_templates_flag(search_cmd, common);
    search_cmd->add_option("--proposals", search_cfg.j, "Proposals requested per state");
    search_cmd->add_option("--beam", search_cfg.b, "Beam width");
    search_cmd->add_option("--samples", search_cfg.n, "Evaluation samples per state");
    search_cmd->add_option("--max-depth", search_cfg.max_depth, "Maximum chain length");
    search_cmd->add_option("--sigma-sure", search_cfg.sigma_sure, "Score weight for sure");
    search_cmd->add_option("--sigma-likely", search_cfg.sigma_likely, "Score weight for likely");
    search_cmd->add_option("--sigma-impossible", search_cfg.sigma_impossible,
                           "Score weight for impossible");
    search_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Run a language-model evaluation");
    std::string method_word;
    std::string fewshot_word = "fiveshot_13571";
    std::string config_path;
    std::string reason_config_path;
    std::uint64_t eval_seed = 0;
    std::size_t max_requests = 0;
    bool have_max_requests = false;
    add_in_flag(eval_cmd, common);
    add_out_flag(eval_cmd, common);
    add_templates_flag(eval_cmd, common);
    eval_cmd->add_option("--method", method_word, "base | cot | tot")
        ->required()
        ->check(CLI::IsMember({"base", "cot", "tot"}));
    eval_cmd->add_option("--fewshot", fewshot_word,
                         "fiveshot_13571 | tenshot | fiveshot_separate")
        ->check(CLI::IsMember({"fiveshot_13571", "tenshot", "fiveshot_separate"}));
    eval_cmd->add_option("--config", config_path, "Backend config file")->required();
    eval_cmd->add_option("--reason-config", reason_config_path,
                         "Separate backend for answer production (default: --config backend)");
    eval_cmd->add_option("--seed", eval_seed, "Few-shot selection seed");
    eval_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    eval_cmd
        ->add_option("--max-requests", max_requests,
                     "Request budget (required for non-mock backends)")
        ->each([&](const std::string&) { have_max_requests = true; });
    eval_cmd->add_option("--beam", search_cfg.b, "Beam width for tot");
    eval_cmd->add_option("--proposals", search_cfg.j, "Proposals per state for tot");
    eval_cmd->add_option("--samples", search_cfg.n, "Evaluation samples per state for tot");
    eval_cmd->add_option("--max-depth", search_cfg.max_depth, "Maximum chain length for tot");

    // score
    auto* score_cmd = app.add_subcommand("score", "Score a prediction log");
    std::string gold_path;
    add_in_flag(score_cmd, common);
    add_out_flag(score_cmd, common);
    score_cmd->add_option("--format", format, "text or record")
        ->check(CLI::IsMember({"text", "record"}));
    score_cmd->add_option("--gold", gold_path,
                          "Instance JSONL to score against (default: the log's own gold "
                          "field); ids must align");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        std::unique_ptr<TemplateBase> storage;
        const TemplateBase& base = load_templates(common.templates, storage);

        if (*generate_cmd) {
            if (split_word == "noise") spec.split = Split::Noise;
            OutputTarget target(common.out_path, out);
            for (const GeneratedInstance& gen : generate(spec, base)) {
                target.stream() << instance_to_json_line(gen.instance) << '\n';
            }
            return 0;
        }

        if (*validate_cmd) {
            const std::vector<Instance> instances = load_instances(common.in_path, in, err);
            const ValidationReport report = validate(instances, base);
            out << report_to_json(report) << '\n';
            if (strict && (report.faulty > 0 || report.unmatched_sentences > 0)) return 1;
            return 0;
        }

        if (*rectify_cmd) {
            const std::vector<Instance> instances = load_instances(common.in_path, in, err);
            const RectifyResult result =
                rectify(instances, base, *parse_policy(policy_word), rectify_seed);
            OutputTarget target(common.out_path, out);
            write_instances(target.stream(), result.instances);
            if (log_path.empty()) {
                for (const RectifyLogEntry& entry : result.log) {
                    err << rectify_log_line(entry) << '\n';
                }
            } else {
                std::ofstream log(log_path);
                if (!log) throw ParseError("cannot open log file \"" + log_path + "\"");
                for (const RectifyLogEntry& entry : result.log) {
                    log << rectify_log_line(entry) << '\n';
                }
            }
            return 0;
        }

        if (*solve_cmd) {
            const std::vector<Instance> instances = load_instances(common.in_path, in, err);
            std::vector<std::string> lines(instances.size());
            std::vector<char> failed(instances.size(), 0);
            parallel_for(instances.size(), jobs, [&](std::size_t i) {
                const Instance& inst = instances[i];
                ordered_json j;
                j["id"] = inst.id;
                j["k"] = inst.k;
                j["method"] = "solve";
                try {
                    const RelationGraph graph = build_graph(inst.story, base, !lenient);
                    const Query q = base.parse_question(inst.question);
                    const SolveResult solved = solve(graph, q);
                    if (solved.answered) {
                        const Trace trace = trace_from_path(inst.story, q, solved.path);
                        j["prediction"] = relation_name(solved.answer);
                        j["gold"] = relation_name(inst.label);
                        j["raw_completion_digest"] = hex_digest(trace.text);
                    } else {
                        j["prediction"] = nullptr;
                        j["gold"] = relation_name(inst.label);
                        j["raw_completion_digest"] = hex_digest("");
                        j["error"] = "unanswerable: no path from " + q.from_object + " to " +
                                     q.to_object;
                        failed[i] = 1;
                    }
                } catch (const Error& e) {
                    j["prediction"] = nullptr;
                    j["gold"] = relation_name(inst.label);
                    j["raw_completion_digest"] = hex_digest("");
                    j["error"] = e.what();
                    failed[i] = 1;
                }
                lines[i] = j.dump();
            });
            OutputTarget target(common.out_path, out);
            for (const std::string& line : lines) target.stream() << line << '\n';
            return std::any_of(failed.begin(), failed.end(), [](char f) { return f != 0; })
                       ? 1
                       : 0;
        }

        if (*trace_cmd) {
            const std::vector<Instance> instances = load_instances(common.in_path, in, err);
            OutputTarget target(common.out_path, out);
            bool any_failed = false;
            bool first = true;
            for (const Instance& inst : instances) {
                try {
                    const RelationGraph graph = build_graph(inst.story, base, /*strict=*/true);
                    const Query q = base.parse_question(inst.question);
                    const Trace trace = cot_trace(inst.story, graph, q);
                    if (format == "record") {
                        target.stream() << trace_to_json(trace) << '\n';
                    } else {
                        if (!first) target.stream() << '\n';
                        target.stream() << trace.text << '\n';
                        first = false;
                    }
                } catch (const Error& e) {
                    err << inst.id << ": " << e.what() << '\n';
                    any_failed = true;
                }
            }
            return any_failed ? 1 : 0;
        }

        if (*search_cmd) {
            const std::vector<Instance> instances = load_instances(common.in_path, in, err);
            std::vector<std::string> lines(instances.size());
            std::vector<char> failed(instances.size(), 0);
            parallel_for(instances.size(), jobs, [&](std::size_t i) {
                const Instance& inst = instances[i];
                ordered_json j;
                j["id"] = inst.id;
                j["gold"] = relation_name(inst.label);
                try {
                    const RelationGraph graph = build_graph(inst.story, base, /*strict=*/true);
                    const Query q = base.parse_question(inst.question);
                    DeterministicProposer proposer;
                    DeterministicEvaluator evaluator;
                    const SearchOutcome outcome =
                        search(init_state(graph, q), proposer, evaluator, search_cfg);
                    j["success"] = outcome.success;
                    j["iterations"] = outcome.iterations;
                    if (outcome.success) {
                        const ChainAnswer answer =
                            answer_via_chain(inst.story, base, q, outcome.final_state);
                        j["chain"] = link(outcome.final_state);
                        j["answer"] = relation_name(answer.answer);
                        j["correct"] = answer.answer == inst.label;
                    } else {
                        j["failure_reason"] = outcome.failure_reason;
                        failed[i] = 1;
                    }
                } catch (const Error& e) {
                    j["success"] = false;
                    j["error"] = e.what();
                    failed[i] = 1;
                }
                lines[i] = j.dump();
            });
            OutputTarget target(common.out_path, out);
            for (const std::string& line : lines) target.stream() << line << '\n';
            return std::any_of(failed.begin(), failed.end(), [](char f) { return f != 0; })
                       ? 1
                       : 0;
        }

        if (*eval_cmd) {
            const std::vector<Instance> instances = load_instances(common.in_path, in, err);
            const BackendConfig config = load_backend_config(config_path);
            const std::unique_ptr<Completer> completer = make_completer(config);
            std::unique_ptr<Completer> reason_completer;
            if (!reason_config_path.empty()) {
                reason_completer = make_completer(load_backend_config(reason_config_path));
            }
            EvalOptions options;
            options.method = *parse_method(method_word);
            options.fewshot = *parse_fewshot_policy(fewshot_word);
            options.seed = eval_seed;
            options.jobs = jobs;
            if (have_max_requests) options.max_requests = max_requests;
            options.search = search_cfg;
            options.temperature_base = config.temperature_base;
            options.temperature_tot = config.temperature_tot;
            const EvalResult result =
                run_eval(instances, base, *completer,
                         reason_completer ? *reason_completer : *completer, options);
            OutputTarget target(common.out_path, out);
            for (const Prediction& prediction : result.predictions) {
                target.stream() << prediction_to_json_line(prediction) << '\n';
            }
            err << format_score_table(result.table);
            err << "requests used: " << result.requests_used << '\n';
            return 0;
        }

        if (*score_cmd) {
            std::vector<Prediction> predictions;
            if (common.in_path.empty()) {
                predictions = read_predictions(in, "<stdin>");
            } else {
                std::ifstream file(common.in_path);
                if (!file) throw ParseError("cannot open \"" + common.in_path + "\"");
                predictions = read_predictions(file, common.in_path);
            }
            if (!gold_path.empty()) {
                const IngestResult gold = read_instances_file(gold_path);
                std::map<std::string, Relation> labels;
                for (const Instance& inst : gold.instances) labels[inst.id] = inst.label;
                std::vector<std::string> mismatches;
                std::map<std::string, bool> seen;
                for (Prediction& p : predictions) {
                    auto it = labels.find(p.id);
                    if (it == labels.end()) {
                        mismatches.push_back("prediction id \"" + p.id +
                                             "\" not in gold instances");
                    } else {
                        p.gold = it->second;
                        seen[p.id] = true;
                    }
                }
                for (const Instance& inst : gold.instances) {
                    if (!seen.count(inst.id)) {
                        mismatches.push_back("gold id \"" + inst.id + "\" has no prediction");
                    }
                }
                if (!mismatches.empty()) {
                    for (const std::string& m : mismatches) err << m << '\n';
                    throw DomainError(std::to_string(mismatches.size()) + " id mismatch(es)");
                }
            }
            const ScoreTable table = score_predictions(predictions);
            OutputTarget target(common.out_path, out);
            if (format == "record") {
                target.stream() << score_table_to_json(table) << '\n';
            } else {
                target.stream() << format_score_table(table);
            }
            return 0;
        }

        err << "no command selected\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "unexpected error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace stepgame
