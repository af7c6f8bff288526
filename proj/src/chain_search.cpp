#include "stepgame/chain_search.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "stepgame/errors.hpp"

namespace stepgame {
namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// "M (use 5)" -> {M, 5}; "W" -> {W, nullopt}; malformed -> nullopt.
std::optional<std::pair<std::string, std::optional<std::size_t>>> parse_chain_token(
    const std::string& raw) {
    std::string token = trim(raw);
    if (token.empty()) return std::nullopt;
    const std::size_t open = token.find("(use ");
    if (open == std::string::npos) {
        if (token.find(' ') != std::string::npos) return std::nullopt;
        return std::make_pair(token, std::optional<std::size_t>{});
    }
    const std::size_t close = token.find(')', open);
    if (close == std::string::npos) return std::nullopt;
    const std::string number = trim(token.substr(open + 5, close - open - 5));
    if (number.empty() ||
        !std::all_of(number.begin(), number.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        return std::nullopt;
    }
    const std::string object = trim(token.substr(0, open));
    if (object.empty() || object.find(' ') != std::string::npos) return std::nullopt;
    return std::make_pair(object, std::optional<std::size_t>{std::stoull(number)});
}

}  // namespace

std::vector<std::size_t> SearchState::used_indices() const {
    std::vector<std::size_t> out;
    for (const ChainLink& link : chain) {
        if (link.used_index) out.push_back(*link.used_index);
    }
    return out;
}

SearchState init_state(const RelationGraph& graph, const Query& q) {
    SearchState s;
    s.chain.push_back(ChainLink{q.from_object, std::nullopt});
    s.target = q.to_object;
    for (const Edge& e : graph.edges) {
        s.unused.push_back(UnusedRelation{e.sentence_index, e.head, e.tail});
    }
    std::sort(s.unused.begin(), s.unused.end(),
              [](const UnusedRelation& a, const UnusedRelation& b) { return a.index < b.index; });
    return s;
}

std::string render_state(const SearchState& s) {
    std::string chain = s.chain.front().object;
    for (std::size_t i = 1; i < s.chain.size(); ++i) {
        chain += " -> " + s.chain[i].object + " (use " +
                 std::to_string(*s.chain[i].used_index) + ")";
    }
    std::string unused;
    for (const UnusedRelation& u : s.unused) {
        if (!unused.empty()) unused += ", ";
        unused += std::to_string(u.index) + ". " + u.a + "-" + u.b;
    }
    return "chain: " + chain + " ->, target: " + s.target + ", unused: " + unused + ".";
}

std::string link(const SearchState& s) {
    if (!s.at_target()) {
        throw DomainError("cannot render a linking chain: \"" + s.last_object() +
                          "\" has not reached target \"" + s.target + "\"");
    }
    std::string out = s.chain.front().object;
    for (std::size_t i = 1; i < s.chain.size(); ++i) {
        out += " -> " + s.chain[i].object + " (use " + std::to_string(*s.chain[i].used_index) +
               ")";
    }
    return out;
}

std::optional<SearchState> extend(const SearchState& parent, std::size_t index) {
    const auto it = std::find_if(parent.unused.begin(), parent.unused.end(),
                                 [index](const UnusedRelation& u) { return u.index == index; });
    if (it == parent.unused.end()) return std::nullopt;
    const std::string& last = parent.last_object();
    std::string next;
    if (it->a == last) {
        next = it->b;
    } else if (it->b == last) {
        next = it->a;
    } else {
        return std::nullopt;
    }
    SearchState child = parent;
    child.chain.push_back(ChainLink{next, index});
    child.unused.erase(child.unused.begin() + (it - parent.unused.begin()));
    return child;
}

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Sure: return "sure";
        case Verdict::Likely: return "likely";
        case Verdict::Impossible: return "impossible";
    }
    return "impossible";
}

std::vector<Proposal> DeterministicProposer::propose(const SearchState& state, int j) {
    (void)j;  // exhaustive enumeration is exact here; j throttles stochastic backends only
    std::vector<Proposal> out;
    const std::string& last = state.last_object();
    for (const UnusedRelation& u : state.unused) {
        if (u.a == last) {
            out.push_back(Proposal{u.index, u.b});
        } else if (u.b == last) {
            out.push_back(Proposal{u.index, u.a});
        }
    }
    return out;
}

Verdict DeterministicEvaluator::evaluate(const SearchState& state) {
    if (state.at_target()) return Verdict::Sure;
    const std::string& last = state.last_object();
    for (const UnusedRelation& u : state.unused) {
        if (u.a == last || u.b == last) return Verdict::Likely;
    }
    return Verdict::Impossible;
}

SearchOutcome search(const SearchState& init, Proposer& proposer, Evaluator& evaluator,
                     const SearchConfig& cfg) {
    SearchOutcome outcome;
    if (init.at_target()) {
        outcome.success = true;
        outcome.final_state = init;
        outcome.last_beam.push_back(ScoredState{init, 0.0});
        return outcome;
    }

    std::vector<ScoredState> beam{ScoredState{init, 0.0}};
    for (int depth = 1; depth <= cfg.max_depth; ++depth) {
        std::vector<SearchState> candidates;
        std::set<std::vector<std::size_t>> seen;  // used-index sequences already collected
        for (const ScoredState& parent : beam) {
            for (const Proposal& proposal : proposer.propose(parent.state, cfg.j)) {
                auto child = extend(parent.state, proposal.used_index);
                if (!child || child->last_object() != proposal.next_object) continue;
                if (!seen.insert(child->used_indices()).second) continue;
                candidates.push_back(std::move(*child));
            }
        }
        if (candidates.empty()) {
            outcome.failure_reason = "no candidate extensions";
            outcome.last_beam = beam;
            return outcome;
        }

        std::vector<ScoredState> scored;
        scored.reserve(candidates.size());
        for (SearchState& candidate : candidates) {
            double y = 0.0;
            for (int sample = 0; sample < cfg.n; ++sample) {
                y += cfg.sigma(evaluator.evaluate(candidate));
            }
            scored.push_back(ScoredState{std::move(candidate), y});
        }
        std::sort(scored.begin(), scored.end(), [](const ScoredState& a, const ScoredState& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.state.chain.size() != b.state.chain.size()) {
                return a.state.chain.size() < b.state.chain.size();
            }
            return a.state.used_indices() < b.state.used_indices();
        });
        if (scored.size() > static_cast<std::size_t>(cfg.b)) {
            scored.resize(static_cast<std::size_t>(cfg.b));
        }
        beam = std::move(scored);
        outcome.iterations = depth;

        for (const ScoredState& s : beam) {
            if (s.state.at_target()) {
                outcome.success = true;
                outcome.final_state = s.state;
                outcome.last_beam = beam;
                return outcome;
            }
        }
    }
    outcome.failure_reason = "max depth exceeded";
    outcome.last_beam = beam;
    return outcome;
}

ChainAnswer answer_via_chain(const std::vector<std::string>& story, const TemplateBase& base,
                             const Query& q, const SearchState& final_state) {
    if (final_state.chain.empty() || final_state.chain.front().object != q.from_object) {
        throw DomainError("linking chain does not start at \"" + q.from_object + "\"");
    }
    if (!final_state.at_target() || final_state.target != q.to_object) {
        throw DomainError("linking chain does not reach \"" + q.to_object + "\"");
    }
    std::vector<PathStep> path;
    std::string prev = q.from_object;
    for (std::size_t i = 1; i < final_state.chain.size(); ++i) {
        const ChainLink& link = final_state.chain[i];
        if (!link.used_index) throw DomainError("chain link without a sentence index");
        const std::size_t idx = *link.used_index;
        if (idx < 1 || idx > story.size()) {
            throw DomainError("chain uses sentence " + std::to_string(idx) +
                              " outside the story");
        }
        const RelationTriple triple = base.extract_relation(story[idx - 1]);
        Relation relation;
        if (triple.head == link.object && triple.tail == prev) {
            relation = triple.relation;
        } else if (triple.tail == link.object && triple.head == prev) {
            relation = inverse(triple.relation);
        } else {
            throw DomainError("sentence " + std::to_string(idx) + " does not relate \"" + prev +
                              "\" and \"" + link.object + "\"");
        }
        path.push_back(PathStep{link.object, relation, idx});
        prev = link.object;
    }
    ChainAnswer answer;
    answer.trace = trace_from_path(story, q, path);
    answer.answer = answer.trace.final_answer;
    return answer;
}

std::optional<SearchState> parse_state_text(const std::string& text, const SearchState& parent) {
    const std::size_t chain_pos = text.find("chain:");
    if (chain_pos == std::string::npos) return std::nullopt;
    std::string rest = text.substr(chain_pos + 6);
    const std::size_t newline = rest.find('\n');
    if (newline != std::string::npos) rest = rest.substr(0, newline);

    std::string chain_part = rest;
    const std::size_t target_pos = rest.find(", target:");
    if (target_pos != std::string::npos) {
        chain_part = rest.substr(0, target_pos);
        std::string tail = rest.substr(target_pos + 9);
        const std::size_t comma = tail.find(',');
        if (comma != std::string::npos) tail = tail.substr(0, comma);
        if (trim(tail) != parent.target) return std::nullopt;
    }

    // Split the chain on "->"; a trailing empty segment from "... ->," is expected.
    std::vector<std::pair<std::string, std::optional<std::size_t>>> tokens;
    std::size_t start = 0;
    while (true) {
        const std::size_t arrow = chain_part.find("->", start);
        std::string segment = chain_part.substr(
            start, arrow == std::string::npos ? std::string::npos : arrow - start);
        segment = trim(segment);
        if (!segment.empty() && segment.back() == ',') segment.pop_back();
        if (!segment.empty()) {
            auto token = parse_chain_token(segment);
            if (!token) return std::nullopt;
            tokens.push_back(std::move(*token));
        }
        if (arrow == std::string::npos) break;
        start = arrow + 2;
    }
    if (tokens.size() <= parent.chain.size()) return std::nullopt;

    // The parsed chain must reproduce the parent exactly, then extend it by valid steps.
    for (std::size_t i = 0; i < parent.chain.size(); ++i) {
        if (tokens[i].first != parent.chain[i].object ||
            tokens[i].second != parent.chain[i].used_index) {
            return std::nullopt;
        }
    }
    SearchState state = parent;
    for (std::size_t i = parent.chain.size(); i < tokens.size(); ++i) {
        if (!tokens[i].second) return std::nullopt;
        auto child = extend(state, *tokens[i].second);
        if (!child || child->last_object() != tokens[i].first) return std::nullopt;
        state = std::move(*child);
    }
    return state;
}

}  // namespace stepgame
