#pragma once

// Core qualitative spatial vocabulary: nine relations on a unit grid, each mapped to an
// integer 2D offset with +x pointing right and +y pointing up. All composition and
// classification is integer arithmetic on those offsets, so it is exact by construction.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stepgame {

enum class Relation : std::uint8_t {
    Overlap = 0,
    Above,
    Below,
    Left,
    Right,
    UpperLeft,
    UpperRight,
    LowerLeft,
    LowerRight,
};

inline constexpr int kRelationCount = 9;

// All nine relations, in enum order (handy for iteration).
inline constexpr Relation kAllRelations[kRelationCount] = {
    Relation::Overlap,   Relation::Above,      Relation::Below,
    Relation::Left,      Relation::Right,      Relation::UpperLeft,
    Relation::UpperRight, Relation::LowerLeft, Relation::LowerRight,
};

// The eight relations that appear in story sentences (everything but overlap).
inline constexpr Relation kStoryRelations[8] = {
    Relation::Above,     Relation::Below,      Relation::Left,      Relation::Right,
    Relation::UpperLeft, Relation::UpperRight, Relation::LowerLeft, Relation::LowerRight,
};

// Unit offset of a single relation.
struct Offset {
    int dx = 0;
    int dy = 0;
    friend bool operator==(const Offset&, const Offset&) = default;
};

// Accumulated displacement along a path. 64-bit so arbitrarily long chains cannot overflow.
struct Delta {
    std::int64_t dx = 0;
    std::int64_t dy = 0;
    friend bool operator==(const Delta&, const Delta&) = default;
};

// offset(r): the unit displacement of the subject relative to the reference object.
Offset offset(Relation r);

// inverse(r): the relation seen from the other object (negated offset).
Relation inverse(Relation r);

// Sum of unit offsets along a hop sequence.
Delta compose_path(std::span<const Relation> path);

// Sign-pattern classification of a displacement back onto the nine relations.
// Total: every (dx, dy) classifies; magnitudes do not matter, only signs.
Relation classify_delta(const Delta& d);

// The answer to "what is the relation of the object at pos_head to the object at pos_tail".
Relation answer_query(const Delta& pos_head, const Delta& pos_tail);

// Canonical lowercase name ("overlap", "above", ..., "upper-left", "lower-right").
const std::string& relation_name(Relation r);

// Strict parse of a canonical name. Returns nullopt for anything else.
std::optional<Relation> parse_relation_name(const std::string& name);

// Lenient normalization for model output and legacy label vocabularies: case-insensitive,
// ignores '-', '_' and spaces, and accepts synonyms such as "top-right" or "down_left".
std::optional<Relation> normalize_relation_word(const std::string& word);

// "(x,y)" rendering used by traces and reasoned answers.
std::string format_point(const Delta& p);

}  // namespace stepgame
