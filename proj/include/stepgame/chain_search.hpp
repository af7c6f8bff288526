#pragma once

// Linking-chain search: a beam search over partial object chains. A state is the chain
// built so far, the target object, and the still-unused story relations. Candidate
// extensions come from a pluggable proposer and are scored by a pluggable evaluator
// (sure/likely/impossible verdicts mapped onto sigma weights); both have deterministic
// rule-based implementations and text-driven ones backed by a language model.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "stepgame/relations.hpp"
#include "stepgame/solver.hpp"
#include "stepgame/templates.hpp"

namespace stepgame {

struct ChainLink {
    std::string object;
    std::optional<std::size_t> used_index;  // 1-based sentence index; empty for the origin
    friend bool operator==(const ChainLink&, const ChainLink&) = default;
};

struct UnusedRelation {
    std::size_t index = 0;  // 1-based sentence index
    std::string a, b;       // objects in sentence (head, tail) order
    friend bool operator==(const UnusedRelation&, const UnusedRelation&) = default;
};

struct SearchState {
    std::vector<ChainLink> chain;  // never empty; chain[0] is the query origin
    std::string target;
    std::vector<UnusedRelation> unused;  // ascending by index

    const std::string& last_object() const { return chain.back().object; }
    bool at_target() const { return last_object() == target; }
    std::vector<std::size_t> used_indices() const;
    friend bool operator==(const SearchState&, const SearchState&) = default;
};

// Builds the initial state: chain is just the query origin, every edge unused.
SearchState init_state(const RelationGraph& graph, const Query& q);

// "chain: W ->, target: E, unused: 1. Q-O, 2. Q-M, 3. X-E, 4. O-E, 5. W-M."
std::string render_state(const SearchState& s);

// "W -> M (use 5) -> Q (use 2) -> O (use 1) -> E (use 4)"
std::string link(const SearchState& s);

// Extends `parent` by the unused relation `index` if it exists and touches the chain's
// last object; nullopt otherwise. The next object is the relation's other endpoint.
std::optional<SearchState> extend(const SearchState& parent, std::size_t index);

// A proposed extension: which unused relation to apply, and (for validation against
// hallucinated text) which object the proposal claims to reach.
struct Proposal {
    std::size_t used_index = 0;
    std::string next_object;
};

class Proposer {
  public:
    virtual ~Proposer() = default;
    // Up to j candidate extensions for the state (a deterministic proposer may return all).
    virtual std::vector<Proposal> propose(const SearchState& state, int j) = 0;
};

enum class Verdict : std::uint8_t { Sure, Likely, Impossible };
std::string verdict_name(Verdict v);

class Evaluator {
  public:
    virtual ~Evaluator() = default;
    // One verdict sample for the state; called n times per state.
    virtual Verdict evaluate(const SearchState& state) = 0;
};

// Rule-based backends. Proposer: every unused relation touching the last object, in
// index order (ignores j: on this task enumerating all valid extensions is exact).
// Evaluator: sure iff at target; impossible iff the last object occurs in no unused
// relation; likely otherwise.
class DeterministicProposer : public Proposer {
  public:
    std::vector<Proposal> propose(const SearchState& state, int j) override;
};
class DeterministicEvaluator : public Evaluator {
  public:
    Verdict evaluate(const SearchState& state) override;
};

struct SearchConfig {
    int j = 2;           // proposals requested per state
    int b = 3;           // beam width
    int n = 3;           // verdict samples per state
    int max_depth = 10;  // maximum chain extensions
    double sigma_sure = 20.0;
    double sigma_likely = 1.0;
    double sigma_impossible = 0.001;

    double sigma(Verdict v) const {
        switch (v) {
            case Verdict::Sure: return sigma_sure;
            case Verdict::Likely: return sigma_likely;
            case Verdict::Impossible: return sigma_impossible;
        }
        return sigma_impossible;
    }
};

struct ScoredState {
    SearchState state;
    double score = 0.0;
};

struct SearchOutcome {
    bool success = false;
    SearchState final_state;        // valid when success
    int iterations = 0;             // expansions performed
    std::vector<ScoredState> last_beam;
    std::string failure_reason;     // "no candidate extensions" / "max depth exceeded"
};

// Algorithm: beam <- {init}; while no beam state is at the target, expand every beam
// state through the proposer, validate and dedupe extensions, score each with n
// evaluator samples (y = sum of sigma(verdict)), keep the best b (ties: higher score,
// then shorter chain, then lexicographically smaller used-index sequence). Fails when
// no extensions exist or max_depth is exceeded.
SearchOutcome search(const SearchState& init, Proposer& proposer, Evaluator& evaluator,
                     const SearchConfig& cfg);

// Walks the found chain through the story sentences and renders the coordinate trace.
// DomainError if the chain misuses a sentence or does not reach the target.
struct ChainAnswer {
    Relation answer = Relation::Overlap;
    Trace trace;
};
ChainAnswer answer_via_chain(const std::vector<std::string>& story, const TemplateBase& base,
                             const Query& q, const SearchState& final_state);

// Parses "chain: A -> B (use 2) ->, target: T, ..." back into a state. The unused set
// is recomputed from `parent` (the text's own unused list is not trusted). Returns
// nullopt for malformed text or chains that do not extend the parent by valid steps.
std::optional<SearchState> parse_state_text(const std::string& text, const SearchState& parent);

}  // namespace stepgame
