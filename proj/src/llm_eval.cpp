#include <cstdio>
#include <istream>
#include <mutex>
#include <sstream>

#include "json.hpp"
#include "stepgame/errors.hpp"
#include "stepgame/llm.hpp"
#include "stepgame/parallel.hpp"

namespace stepgame {
namespace {

using nlohmann::ordered_json;

std::string hex_digest(const std::string& text) {
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text)));
    return buffer;
}

std::string one_decimal(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.1f", value);
    return buffer;
}

// Percent with 1 decimal, rounded half up, computed exactly from the counts.
double percent1(std::size_t correct, std::size_t total) {
    if (total == 0) return 0.0;
    const std::size_t scaled = (2000 * correct + total) / (2 * total);
    return static_cast<double>(scaled) / 10.0;
}

class LlmProposer : public Proposer {
  public:
    LlmProposer(Completer& completer, double temperature, std::string* transcript)
        : completer_(completer), temperature_(temperature), transcript_(transcript) {}

    std::vector<Proposal> propose(const SearchState& state, int j) override {
        (void)j;  // the prompt asks for all expansions; throttling happens via validation
        const std::string prompt = build_state_prompt(PromptKind::TotGenerate,
                                                      render_state(state));
        const std::string completion = completer_.complete({prompt, temperature_});
        if (transcript_) *transcript_ += completion;
        return parse_proposals(completion, state);
    }

  private:
    Completer& completer_;
    double temperature_;
    std::string* transcript_;
};

class LlmEvaluator : public Evaluator {
  public:
    LlmEvaluator(Completer& completer, double temperature, std::string* transcript)
        : completer_(completer), temperature_(temperature), transcript_(transcript) {}

    Verdict evaluate(const SearchState& state) override {
        const std::string prompt = build_state_prompt(PromptKind::TotEvaluate,
                                                      render_state(state));
        const std::string completion = completer_.complete({prompt, temperature_});
        if (transcript_) *transcript_ += completion;
        return parse_verdict(completion).verdict;  // unparseable defaults to impossible
    }

  private:
    Completer& completer_;
    double temperature_;
    std::string* transcript_;
};

// One request counter shared by every backend participating in a run.
struct SharedBudget {
    std::mutex mutex;
    std::size_t used = 0;
    std::optional<std::size_t> budget;
};

class GatedCompleter : public Completer {
  public:
    GatedCompleter(Completer& inner, SharedBudget& budget) : inner_(inner), budget_(budget) {}

    std::string complete(const CompletionRequest& request) override {
        {
            std::lock_guard<std::mutex> lock(budget_.mutex);
            if (budget_.budget && budget_.used >= *budget_.budget) {
                throw BackendError("request budget exhausted (" +
                                   std::to_string(*budget_.budget) + ")");
            }
            ++budget_.used;
        }
        return inner_.complete(request);
    }
    bool is_mock() const override { return inner_.is_mock(); }

  private:
    Completer& inner_;
    SharedBudget& budget_;
};

Prediction eval_one(const Instance& inst, const TemplateBase& base, Completer& chain_completer,
                    Completer& reason_completer, const EvalOptions& options,
                    const std::vector<Instance>& fewshot) {
    Prediction pred;
    pred.id = inst.id;
    pred.k = inst.k;
    pred.method = method_name(options.method);
    pred.gold = inst.label;

    std::string transcript;
    try {
        if (options.method == EvalMethod::Base || options.method == EvalMethod::Cot) {
            const PromptKind kind =
                options.method == EvalMethod::Base ? PromptKind::Base : PromptKind::Cot;
            const std::string prompt = build_prompt(kind, fewshot, inst, base);
            transcript = reason_completer.complete({prompt, options.temperature_base});
            pred.prediction = parse_answer(transcript);
        } else {
            const RelationGraph graph = build_graph(inst.story, base, /*strict=*/true);
            const Query q = base.parse_question(inst.question);
            const SearchState init = init_state(graph, q);

            // Initialization round-trips through the model for transcript fidelity, but
            // the canonical state built from the story drives the search; a disagreeing
            // completion is recorded, not trusted.
            const std::string init_completion = chain_completer.complete(
                {build_prompt(PromptKind::TotInit, {}, inst, base), options.temperature_tot});
            transcript += init_completion;

            LlmProposer proposer(chain_completer, options.temperature_tot, &transcript);
            LlmEvaluator evaluator(chain_completer, options.temperature_tot, &transcript);
            const SearchOutcome outcome = search(init, proposer, evaluator, options.search);
            if (!outcome.success) {
                pred.error = "chain search failed: " + outcome.failure_reason;
                pred.digest = hex_digest(transcript);
                return pred;
            }

            SearchState final_state = outcome.final_state;
            const std::string link_completion = chain_completer.complete(
                {build_prompt(PromptKind::TotLink, {}, inst, base), options.temperature_tot});
            transcript += link_completion;
            const std::size_t marker = link_completion.rfind("Answer:");
            if (marker != std::string::npos) {
                auto parsed = parse_state_text(
                    "chain: " + link_completion.substr(marker + 7), init);
                if (parsed && parsed->at_target()) final_state = *parsed;
            }

            const std::string reason_prompt =
                build_reason_prompt(fewshot, inst, link(final_state), base);
            const std::string reason_completion =
                reason_completer.complete({reason_prompt, options.temperature_base});
            transcript += reason_completion;
            pred.prediction = parse_answer(reason_completion);
        }
    } catch (const Error& e) {
        pred.error = e.what();
        pred.prediction = std::nullopt;
    }
    pred.digest = hex_digest(transcript);
    return pred;
}

}  // namespace

std::optional<EvalMethod> parse_method(const std::string& name) {
    if (name == "base") return EvalMethod::Base;
    if (name == "cot") return EvalMethod::Cot;
    if (name == "tot") return EvalMethod::Tot;
    return std::nullopt;
}

std::string method_name(EvalMethod m) {
    switch (m) {
        case EvalMethod::Base: return "base";
        case EvalMethod::Cot: return "cot";
        case EvalMethod::Tot: return "tot";
    }
    return "base";
}

std::string prediction_to_json_line(const Prediction& p) {
    ordered_json j;
    j["id"] = p.id;
    j["k"] = p.k;
    j["method"] = p.method;
    if (p.prediction) {
        j["prediction"] = relation_name(*p.prediction);
    } else {
        j["prediction"] = nullptr;
    }
    j["gold"] = relation_name(p.gold);
    j["raw_completion_digest"] = p.digest;
    if (!p.error.empty()) j["error"] = p.error;
    return j.dump();
}

std::vector<Prediction> read_predictions(std::istream& in, const std::string& origin) {
    std::vector<Prediction> out;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = origin + ":" + std::to_string(line_number);
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError(where + ": invalid JSON: " + e.what());
        }
        Prediction p;
        p.id = j.value("id", "line-" + std::to_string(line_number));
        if (!j.contains("k") || !j["k"].is_number_integer()) {
            throw ParseError(where + ": missing integer \"k\"");
        }
        p.k = j["k"].get<int>();
        p.method = j.value("method", std::string("unknown"));
        if (j.contains("prediction") && j["prediction"].is_string()) {
            const std::string word = j["prediction"].get<std::string>();
            p.prediction = parse_relation_name(word);
            if (!p.prediction) {
                throw ParseError(where + ": unknown prediction \"" + word + "\"");
            }
        }
        if (!j.contains("gold") || !j["gold"].is_string()) {
            throw ParseError(where + ": missing \"gold\" label");
        }
        const std::string gold = j["gold"].get<std::string>();
        if (auto parsed = parse_relation_name(gold)) {
            p.gold = *parsed;
        } else {
            throw ParseError(where + ": unknown gold label \"" + gold + "\"");
        }
        p.digest = j.value("raw_completion_digest", std::string());
        p.error = j.value("error", std::string());
        out.push_back(std::move(p));
    }
    return out;
}

double ScoreCell::accuracy() const { return percent1(correct, total); }

ScoreTable score_predictions(const std::vector<Prediction>& predictions) {
    ScoreTable table;
    for (const Prediction& p : predictions) {
        const bool correct = p.prediction && *p.prediction == p.gold;
        ScoreCell& cell = table.per_k[p.k];
        ++cell.total;
        ++table.overall.total;
        if (correct) {
            ++cell.correct;
            ++table.overall.correct;
        } else {
            ++table.wrong_by_relation[p.gold];
        }
        if (!p.prediction) ++table.unparseable;
    }
    return table;
}

std::string format_score_table(const ScoreTable& t) {
    std::string head = "k       ";
    std::string row = "accuracy";
    for (const auto& [k, cell] : t.per_k) {
        char cell_head[16];
        std::snprintf(cell_head, sizeof(cell_head), "%7d", k);
        head += cell_head;
        char cell_text[16];
        std::snprintf(cell_text, sizeof(cell_text), "%7s", one_decimal(cell.accuracy()).c_str());
        row += cell_text;
    }
    std::string out = head + "\n" + row + "\n";
    out += "overall " + one_decimal(t.overall.accuracy()) + " (" +
           std::to_string(t.overall.correct) + "/" + std::to_string(t.overall.total) +
           "), unparseable " + std::to_string(t.unparseable) + "\n";
    if (!t.wrong_by_relation.empty()) {
        out += "wrong by gold relation:";
        for (const auto& [relation, count] : t.wrong_by_relation) {
            out += " " + relation_name(relation) + "=" + std::to_string(count);
        }
        out += "\n";
    }
    return out;
}

std::string score_table_to_json(const ScoreTable& t) {
    ordered_json j;
    j["per_k"] = ordered_json::object();
    for (const auto& [k, cell] : t.per_k) {
        j["per_k"][std::to_string(k)] = {{"correct", cell.correct},
                                         {"total", cell.total},
                                         {"accuracy", cell.accuracy()}};
    }
    j["overall"] = {{"correct", t.overall.correct},
                    {"total", t.overall.total},
                    {"accuracy", t.overall.accuracy()}};
    j["unparseable"] = t.unparseable;
    j["wrong_by_relation"] = ordered_json::object();
    for (const auto& [relation, count] : t.wrong_by_relation) {
        j["wrong_by_relation"][relation_name(relation)] = count;
    }
    return j.dump();
}

EvalResult run_eval(const std::vector<Instance>& instances, const TemplateBase& base,
                    Completer& completer, const EvalOptions& options) {
    return run_eval(instances, base, completer, completer, options);
}

EvalResult run_eval(const std::vector<Instance>& instances, const TemplateBase& base,
                    Completer& chain_completer, Completer& reason_completer,
                    const EvalOptions& options) {
    if ((!chain_completer.is_mock() || !reason_completer.is_mock()) && !options.max_requests) {
        throw DomainError("a non-mock backend requires an explicit request budget");
    }
    SharedBudget shared;
    shared.budget = options.max_requests;
    GatedCompleter gated_chain(chain_completer, shared);
    GatedCompleter gated_reason(reason_completer, shared);

    // Few-shot examples come from a freshly generated clean pool, five per k, so every
    // policy can be served for every queried k.
    std::vector<Instance> pool;
    for (int k = 1; k <= 10; ++k) {
        GenerationSpec spec;
        spec.k = k;
        spec.n = 5;
        spec.seed = derive_seed(options.seed, 1000 + static_cast<std::uint64_t>(k));
        spec.split = Split::Clean;
        for (GeneratedInstance& gen : generate(spec, base)) {
            pool.push_back(std::move(gen.instance));
        }
    }

    EvalResult result;
    result.predictions.resize(instances.size());
    parallel_for(instances.size(), options.jobs, [&](std::size_t i) {
        const Instance& inst = instances[i];
        std::vector<Instance> fewshot;
        try {
            fewshot = resolve_fewshot(options.fewshot, pool, inst.k, options.seed);
        } catch (const Error& e) {
            Prediction p;
            p.id = inst.id;
            p.k = inst.k;
            p.method = method_name(options.method);
            p.gold = inst.label;
            p.error = e.what();
            p.digest = hex_digest("");
            result.predictions[i] = std::move(p);
            return;
        }
        result.predictions[i] =
            eval_one(inst, base, gated_chain, gated_reason, options, fewshot);
    });
    result.table = score_predictions(result.predictions);
    result.requests_used = shared.used;
    return result;
}

}  // namespace stepgame
