#pragma once

// Sentence-template catalog: the fixed natural-language surface of the task. Every story
// sentence is produced by filling a template's two object slots, and every sentence is
// understood by matching it back to a template. Templates carry an error status so that
// legacy data rendered through faulty templates can be detected and rectified.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "stepgame/relations.hpp"
#include "stepgame/rng.hpp"

namespace stepgame {

enum class TemplateStatus : std::uint8_t {
    Correct,      // sentence means intended_relation(slot1, slot2)
    Repairable,   // sentence actually means actual_relation(slot1, slot2)
    Irreparable,  // sentence meaning cannot be recovered (missing slot or ambiguous mapping)
};

std::string status_name(TemplateStatus s);

struct Template {
    std::string id;
    Relation intended_relation = Relation::Overlap;   // what the generator meant
    TemplateStatus status = TemplateStatus::Correct;
    std::optional<Relation> actual_relation;          // set iff status == Repairable
    std::string pattern;                              // original text with {o1}/{o2} slots

    // Derived at load time: word tokens of the normalized pattern. Slot tokens are
    // recorded as slot1/slot2 markers; everything else is a literal word.
    struct Token {
        enum Kind : std::uint8_t { Literal, Slot1, Slot2 } kind = Literal;
        std::string word;  // literal text, lowercased for comparison
    };
    std::vector<Token> tokens;
    std::size_t anchor_length = 0;  // total characters of literal words (tie-break key)

    bool is_question = false;

    // The relation a matched sentence should be read as: intended when correct,
    // actual when repairable, nothing when irreparable.
    std::optional<Relation> reading() const {
        if (status == TemplateStatus::Correct) return intended_relation;
        if (status == TemplateStatus::Repairable) return actual_relation;
        return std::nullopt;
    }
};

// A directed spatial fact: head is `relation` of tail. head != tail.
struct RelationTriple {
    std::string head;
    Relation relation = Relation::Overlap;
    std::string tail;
    friend bool operator==(const RelationTriple&, const RelationTriple&) = default;
};

// A question about the relation of from_object to to_object. from != to.
struct Query {
    std::string from_object;
    std::string to_object;
    friend bool operator==(const Query&, const Query&) = default;
};

struct Matched {
    std::string template_id;
    std::string slot1;  // filler of {o1}
    std::string slot2;  // filler of {o2}; empty if the pattern has no {o2}
};
struct NoMatch {};
struct AmbiguousMatch {
    std::vector<std::string> candidate_ids;  // equal anchor length, sorted by id
};
using MatchOutcome = std::variant<Matched, NoMatch, AmbiguousMatch>;

struct CatalogStats {
    std::size_t total = 0;
    std::size_t correct = 0;
    std::size_t repairable = 0;
    std::size_t irreparable = 0;
    std::size_t questions = 0;
};

class TemplateBase {
  public:
    // Parses the line-oriented catalog ("id | relation | status | actual_relation | pattern",
    // '#' comments, UTF-8). Throws ParseError on malformed lines, duplicate ids, missing or
    // inconsistent status/actual_relation, or a correct template whose pattern duplicates
    // another template's pattern. Duplicate patterns among non-correct templates are the
    // known ambiguous-mapping case: they load with a warning and match as ambiguous.
    static TemplateBase load_from_text(const std::string& text, const std::string& origin = "<string>");
    static TemplateBase load_from_file(const std::string& path);

    // The catalog shipped with the toolkit, compiled into the library.
    static const TemplateBase& bundled();

    const std::vector<Template>& sentence_templates() const { return sentence_; }
    const std::vector<Template>& question_templates() const { return question_; }
    const std::vector<std::string>& load_warnings() const { return warnings_; }

    const Template* find(const std::string& id) const;
    // Correct sentence templates for one relation (used by generation and regeneration).
    const std::vector<const Template*>& correct_for(Relation r) const;

    CatalogStats stats() const;

    // Deterministic sentence-to-template matching. Literal words compare case-insensitively,
    // whitespace runs collapse, one terminal '.'/'?'/'!' is ignored, slot fillers are single
    // non-space tokens taken verbatim. Among matching templates the one with the longest
    // literal anchor text wins; an exact anchor tie is reported as AmbiguousMatch.
    MatchOutcome match_sentence(const std::string& sentence) const;
    MatchOutcome match_question(const std::string& question) const;

    // Reads a story sentence as a RelationTriple (head=slot1, tail=slot2). Throws DomainError
    // if the sentence matches no template, matches an irreparable template (directly or via
    // an all-non-correct ambiguity), or binds a degenerate triple (slot1 == slot2).
    RelationTriple extract_relation(const std::string& sentence) const;

    // Reads a question as a Query. Throws DomainError when no question pattern matches.
    Query parse_question(const std::string& question) const;

  private:
    std::vector<Template> sentence_;
    std::vector<Template> question_;
    std::vector<std::string> warnings_;
    std::map<std::string, std::size_t> by_id_;                      // id -> index (questions offset)
    std::map<int, std::vector<const Template*>> correct_by_relation_;

    static MatchOutcome match_against(const std::vector<Template>& pool, const std::string& text);
    void index();
};

// Fills `t`'s slots with the triple's objects. Preconditions: t.status == Correct,
// t.intended_relation == triple.relation, triple.head != triple.tail (DomainError otherwise).
std::string render(const RelationTriple& triple, const Template& t);

// Renders through a uniformly drawn correct template of the triple's relation.
std::string render_any(const RelationTriple& triple, const TemplateBase& base, Rng& rng);

// Renders the canonical question form for a query.
std::string render_question(const Query& q, const TemplateBase& base);

}  // namespace stepgame
