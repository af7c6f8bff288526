#include <algorithm>

#include "stepgame/errors.hpp"
#include "stepgame/llm.hpp"
#include "stepgame/rng.hpp"

// Prompt construction. The preambles and the fixed worked examples are functional
// data for the reasoning programs; several contain idiosyncratic spellings and
// spacing ("spacial", "objets", "sure/ likely") that downstream parsers and golden
// files depend on, so they must not be "fixed".

namespace stepgame {
namespace {

const char* const kShortPreamble =
    "Given a story about spatial relations among objects, answer the relation between two "
    "queried objects. Possible relations are: overlap, above, below, left, right, upper-left, "
    "upper-right, lower-left, and lower-right. If a sentence in the story is describing "
    "clock-wise information, then 12 denotes above, 1 and 2 denote upper-right, 3 denotes "
    "right, 4 and 5 denote lower-right, 6 denotes below, 7 and 8 denote lower-left, 9 denote "
    "left, 10 and 11 denote upper-left. If the sentence is describing cardinal directions, "
    "then north denotes above, east denotes right, south denotes below, and west denotes "
    "left.";

const char* const kOffsetAddendum =
    " In all the spatial relations, assume that all agents occupy a position on a grid point "
    "of equally spaced points in the vertical and horizontal directions and that agents "
    "occupy the nearest grid point consistent with the spatial relation. The offsets of 9 "
    "spacial relations: offset(overlap) = (0,0); offset(above) = (0,1); offset(below) = "
    "(0,-1); offset(left) = (-1,0); offset(right) = (1,0); offset(upper-left) = (-1,1); "
    "offset(upper-right) = (1,1); offset(lower-left) = (-1,-1); offset(lower-right) = "
    "(1,-1).";

const char* const kInitPreamble =
    "Provided with a sequence of statements that define the spatial relationships among "
    "various objects, your task is to detail the subsequent actions. This includes "
    "initiating the chain of connections, identifying the target object, and enumerating "
    "all links between objects from the statements.";

const char* const kGeneratePreamble =
    "Use relations listed in unused relations to enumerate all potential expansions of the "
    "chain by considering unused relations that exhibit a direct link to the last object "
    "within the chain.";

const char* const kEvaluatePreamble =
    "Evaluate whether the chain can reach the target (sure/ likely/impossible). If the chain "
    "has already reached the target, it's 'sure'. If the unused relations include the "
    "current object, it's 'likely'. If there are no unused relations that include the "
    "current object, it's 'impossible'.";

const char* const kLinkPreamble =
    "Given an input about spatial relations among objects, build the linking chain between "
    "the two queried objets.";

const char* const kGenerateExampleInput =
    "chain: G ->, target: Q, unused: 1. C-R, 2. L-Q, 3. C-J, 4. J-E, 5. T-A, 6. G-N, "
    "7. G-A, 8. L-Y, 9. R-Q, 10. Y-T.";

const char* const kGenerateExampleOutput =
    "The last object within the chain is G, and the unused relations 6. G-N and 7. G-A "
    "include G.\n"
    "chain: G -> N (use 6) ->, target: Q, unused: 1. C-R, 2. L-Q, 3. C-J, 4. J-E, 5. T-A, "
    "7. G-A, 8. L-Y, 9. R-Q, 10. Y-T.\n"
    "chain: G -> A (use 7) ->, target: Q, unused: 1. C-R, 2. L-Q, 3. C-J, 4. J-E, 5. T-A, "
    "6. G-N, 8. L-Y, 9. R-Q, 10. Y-T.";

const char* const kEvaluateExamples =
    "chain: F ->, target: X, unused: 1. Y-F, 2. X-Y, 3. I-Q, 4. A-Q, 5. N-W, 6. N-A, "
    "7. F-O, 8. O-W.\n"
    "The current object is F, there are unused relations that include F (1. Y-F, 7. F-O).\n"
    "likely\n"
    "\n"
    "chain: L -> Q (use 2) ->, target: Q, unused: 1. C-R, 3. C-J, 4. J-E, 7. G-A, 8. L-Y, "
    "9. R-Q.\n"
    "The chain already reaches the target object Q.\n"
    "sure\n"
    "\n"
    "chain: G -> N (use 6) ->, target: Q, unused: 1. C-R, 2. L-Q, 3. C-J, 4. J-E, 5. T-A, "
    "8. L-Y, 9. R-Q, 10. Y-T.\n"
    "The current object is N, and there are no unused relations that include N.\n"
    "impossible";

const char* const kLinkExample =
    "Input:\n"
    "1. H is above S with a small gap between them. 2. S is positioned below I. 3. P is on "
    "the top side to I. What is the relation of the agent S to the agent P?\n"
    "Steps:\n"
    "chain: S ->, target: P, unused: 1. H-S, 2. S-I, 3. P-I.\n"
    "chain: S -> I (use 2) ->, target: P, unused: 1. H-S, 3. P-I.\n"
    "chain: I -> P (use 3) ->, target: P, unused: 1. H-S.\n"
    "Answer: S -> I (use 2) -> P (use 3)";

// The worked four-hop example threaded through the instance-level prompt programs.
const Instance& worked_example() {
    static const Instance example = [] {
        Instance inst;
        inst.id = "worked-example";
        inst.story = {
            "Q is to the right of O and is on the same horizontal plane.",
            "Q is slightly off center to the top left and M is slightly off center to the "
            "bottom right.",
            "X and E are next to each other with X on the top and E at the bottom.",
            "O is sitting at the upper right position to E.",
            "W is on the right side and below M.",
        };
        inst.question = "What is the relation of the agent W to the agent E?";
        inst.label = Relation::LowerRight;
        inst.k = 4;
        inst.split = Split::Noise;
        return inst;
    }();
    return example;
}

std::string numbered_story(const std::vector<std::string>& story) {
    std::string out;
    for (std::size_t i = 0; i < story.size(); ++i) {
        out += std::to_string(i + 1) + ". " + story[i] + "\n";
    }
    return out;
}

// The original data encodes the question as one more numbered line after the story.
std::string numbered_query_block(const Instance& inst) {
    return "Story:\n" + numbered_story(inst.story) +
           std::to_string(inst.story.size() + 1) + ". " + inst.question;
}

// "1. <s1> 2. <s2> ... <question>" on a single line.
std::string oneline_input(const Instance& inst) {
    std::string out;
    for (std::size_t i = 0; i < inst.story.size(); ++i) {
        out += std::to_string(i + 1) + ". " + inst.story[i] + " ";
    }
    return out + inst.question;
}

std::string base_example(const Instance& inst) {
    std::string out = "Story:\n";
    for (const std::string& sentence : inst.story) out += sentence + "\n";
    out += inst.question + "\nAnswer: " + relation_name(inst.label);
    return out;
}

struct SolvedExample {
    Query query;
    std::vector<PathStep> path;
    Trace trace;
};

SolvedExample solve_example(const Instance& inst, const TemplateBase& base) {
    const RelationGraph graph = build_graph(inst.story, base, /*strict=*/true);
    const Query q = base.parse_question(inst.question);
    auto path = find_path(graph, q);
    if (!path) {
        throw DomainError("few-shot example \"" + inst.id + "\" is unanswerable");
    }
    SolvedExample solved;
    solved.query = q;
    solved.trace = trace_from_path(inst.story, q, *path);
    solved.path = std::move(*path);
    return solved;
}

std::string cot_example(const Instance& inst, const TemplateBase& base) {
    const SolvedExample solved = solve_example(inst, base);
    return "Story:\n" + numbered_story(inst.story) + inst.question + "\nReasoning:\n" +
           solved.trace.text;
}

std::string chain_text_of(const Query& q, const std::vector<PathStep>& path) {
    std::string out = q.from_object;
    for (const PathStep& step : path) {
        out += " -> " + step.object + " (use " + std::to_string(step.sentence_index) + ")";
    }
    return out;
}

// D.5-style reasoning: same step structure as the solver trace, but introduced by the
// chain-following preamble and "Then come to" instead of "Then search for".
std::string reason_example(const Instance& inst, const TemplateBase& base) {
    const SolvedExample solved = solve_example(inst, base);
    const Query& q = solved.query;
    std::string text = "Let's suppose " + q.from_object +
                       " is at (0,0). We can analyze the relation of " + q.from_object +
                       " to " + q.to_object +
                       " by following the linking chain and considering the relations "
                       "provided in the story step by step.";
    std::string prev = q.from_object;
    for (std::size_t i = 0; i < solved.trace.steps.size(); ++i) {
        const TraceStep& step = solved.trace.steps[i];
        text += "\n" + (i == 0 ? "Start with " + q.from_object : "Then come to " + prev) +
                ". According to " + std::to_string(step.sentence_index) + ", \"" +
                inst.story[step.sentence_index - 1] + "\" " + step.map_text + " " +
                step.calc_text;
        prev = step.object;
    }
    text += "\n" + solved.trace.conclusion;
    return "Story:\n" + numbered_story(inst.story) + inst.question + "\nLinking chain: " +
           chain_text_of(q, solved.path) + "\nReasoning:\n" + text;
}

std::string join_blocks(const std::vector<std::string>& blocks) {
    std::string out;
    for (const std::string& block : blocks) {
        if (!out.empty()) out += "\n\n";
        out += block;
    }
    return out;
}

}  // namespace

std::string prompt_kind_name(PromptKind k) {
    switch (k) {
        case PromptKind::Base: return "base";
        case PromptKind::Cot: return "cot";
        case PromptKind::TotInit: return "tot_init";
        case PromptKind::TotGenerate: return "tot_generate";
        case PromptKind::TotEvaluate: return "tot_evaluate";
        case PromptKind::TotLink: return "tot_link";
        case PromptKind::TotReason: return "tot_reason";
    }
    return "base";
}

std::optional<FewShotPolicyKind> parse_fewshot_policy(const std::string& name) {
    if (name == "fiveshot_13571") return FewShotPolicyKind::Fiveshot13571;
    if (name == "tenshot") return FewShotPolicyKind::Tenshot;
    if (name == "fiveshot_separate") return FewShotPolicyKind::FiveshotSeparate;
    return std::nullopt;
}

std::string fewshot_policy_name(FewShotPolicyKind k) {
    switch (k) {
        case FewShotPolicyKind::Fiveshot13571: return "fiveshot_13571";
        case FewShotPolicyKind::Tenshot: return "tenshot";
        case FewShotPolicyKind::FiveshotSeparate: return "fiveshot_separate";
    }
    return "fiveshot_13571";
}

std::vector<Instance> resolve_fewshot(FewShotPolicyKind policy,
                                      const std::vector<Instance>& pool, int query_k,
                                      std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0xFE57));
    std::vector<Instance> out;
    if (policy == FewShotPolicyKind::FiveshotSeparate) {
        std::vector<std::size_t> matching;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (pool[i].k == query_k) matching.push_back(i);
        }
        if (matching.size() < 5) {
            throw DomainError("few-shot pool has only " + std::to_string(matching.size()) +
                              " instances with k=" + std::to_string(query_k) + ", need 5");
        }
        for (const std::size_t pick : rng.sample_indices(matching.size(), 5)) {
            out.push_back(pool[matching[pick]]);
        }
        return out;
    }

    const std::vector<int> wanted = policy == FewShotPolicyKind::Fiveshot13571
                                        ? std::vector<int>{1, 3, 5, 7, 10}
                                        : std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    for (const int k : wanted) {
        std::vector<std::size_t> matching;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (pool[i].k == k) matching.push_back(i);
        }
        if (matching.empty()) {
            throw DomainError("few-shot pool has no instance with k=" + std::to_string(k));
        }
        out.push_back(pool[matching[rng.below(matching.size())]]);
    }
    return out;
}

std::string build_prompt(PromptKind kind, const std::vector<Instance>& fewshot,
                         const Instance& query, const TemplateBase& base) {
    switch (kind) {
        case PromptKind::Base: {
            if (fewshot.empty()) {
                throw DomainError("base prompt requires at least one few-shot example");
            }
            std::vector<std::string> blocks{kShortPreamble};
            for (const Instance& example : fewshot) blocks.push_back(base_example(example));
            blocks.push_back(numbered_query_block(query));
            return join_blocks(blocks);
        }
        case PromptKind::Cot: {
            if (fewshot.empty()) {
                throw DomainError("cot prompt requires at least one few-shot example");
            }
            std::vector<std::string> blocks{std::string(kShortPreamble) + kOffsetAddendum};
            for (const Instance& example : fewshot) blocks.push_back(cot_example(example, base));
            blocks.push_back(numbered_query_block(query));
            return join_blocks(blocks);
        }
        case PromptKind::TotInit: {
            const Instance& example = worked_example();
            const RelationGraph graph = build_graph(example.story, base, /*strict=*/true);
            const SearchState init = init_state(graph, base.parse_question(example.question));
            return join_blocks({kInitPreamble,
                                "Input: " + oneline_input(example) +
                                    "\nPossible next steps:\n" + render_state(init),
                                "Input: " + oneline_input(query) + "\nPossible next steps:"});
        }
        case PromptKind::TotLink: {
            return join_blocks({kLinkPreamble, kLinkExample,
                                "Input:\n" + oneline_input(query)});
        }
        case PromptKind::TotGenerate:
        case PromptKind::TotEvaluate:
            throw DomainError(prompt_kind_name(kind) +
                              " prompts take a search state, not an instance");
        case PromptKind::TotReason:
            throw DomainError("tot_reason prompts need a linking chain; use the reason builder");
    }
    throw DomainError("unknown prompt kind");
}

std::string build_state_prompt(PromptKind kind, const std::string& state_text) {
    switch (kind) {
        case PromptKind::TotGenerate:
            return join_blocks({kGeneratePreamble,
                                "Input: " + std::string(kGenerateExampleInput) +
                                    "\nPossible next steps:\n" + kGenerateExampleOutput,
                                "Input: " + state_text + "\nPossible next steps:"});
        case PromptKind::TotEvaluate:
            return join_blocks({kEvaluatePreamble, kEvaluateExamples, state_text});
        default:
            throw DomainError(prompt_kind_name(kind) + " prompts do not take a search state");
    }
}

std::string build_reason_prompt(const std::vector<Instance>& fewshot, const Instance& query,
                                const std::string& chain_text, const TemplateBase& base) {
    // This prompt runs its preamble straight into the first example with a single line
    // break; only later blocks get blank-line separators.
    std::vector<std::string> blocks;
    if (fewshot.empty()) {
        blocks.push_back(reason_example(worked_example(), base));
    } else {
        for (const Instance& example : fewshot) blocks.push_back(reason_example(example, base));
    }
    blocks.push_back("Story:\n" + numbered_story(query.story) + query.question +
                     "\nLinking chain: " + chain_text);
    return std::string(kShortPreamble) + kOffsetAddendum + "\n" + join_blocks(blocks);
}

}  // namespace stepgame
