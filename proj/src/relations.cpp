#include "stepgame/relations.hpp"

#include <array>
#include <cctype>
#include <unordered_map>

namespace stepgame {

Offset offset(Relation r) {
    switch (r) {
        case Relation::Overlap:    return {0, 0};
        case Relation::Above:      return {0, 1};
        case Relation::Below:      return {0, -1};
        case Relation::Left:       return {-1, 0};
        case Relation::Right:      return {1, 0};
        case Relation::UpperLeft:  return {-1, 1};
        case Relation::UpperRight: return {1, 1};
        case Relation::LowerLeft:  return {-1, -1};
        case Relation::LowerRight: return {1, -1};
    }
    return {0, 0};  // unreachable
}

Relation inverse(Relation r) {
    const Offset o = offset(r);
    return classify_delta(Delta{-o.dx, -o.dy});
}

Delta compose_path(std::span<const Relation> path) {
    Delta total;
    for (const Relation r : path) {
        const Offset o = offset(r);
        total.dx += o.dx;
        total.dy += o.dy;
    }
    return total;
}

Relation classify_delta(const Delta& d) {
    const int sx = (d.dx > 0) - (d.dx < 0);
    const int sy = (d.dy > 0) - (d.dy < 0);
    if (sx == 0 && sy == 0) return Relation::Overlap;
    if (sx == 0) return sy > 0 ? Relation::Above : Relation::Below;
    if (sy == 0) return sx > 0 ? Relation::Right : Relation::Left;
    if (sx > 0) return sy > 0 ? Relation::UpperRight : Relation::LowerRight;
    return sy > 0 ? Relation::UpperLeft : Relation::LowerLeft;
}

Relation answer_query(const Delta& pos_head, const Delta& pos_tail) {
    return classify_delta(Delta{pos_head.dx - pos_tail.dx, pos_head.dy - pos_tail.dy});
}

const std::string& relation_name(Relation r) {
    static const std::array<std::string, kRelationCount> names = {
        "overlap", "above", "below", "left", "right",
        "upper-left", "upper-right", "lower-left", "lower-right",
    };
    return names[static_cast<std::size_t>(r)];
}

std::optional<Relation> parse_relation_name(const std::string& name) {
    for (const Relation r : kAllRelations) {
        if (relation_name(r) == name) return r;
    }
    return std::nullopt;
}

std::optional<Relation> normalize_relation_word(const std::string& word) {
    std::string key;
    key.reserve(word.size());
    for (const char c : word) {
        if (c == '-' || c == '_' || c == ' ') continue;
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    static const std::unordered_map<std::string, Relation> table = {
        {"overlap", Relation::Overlap},      {"same", Relation::Overlap},
        {"above", Relation::Above},          {"top", Relation::Above},
        {"up", Relation::Above},             {"north", Relation::Above},
        {"over", Relation::Above},
        {"below", Relation::Below},          {"down", Relation::Below},
        {"under", Relation::Below},          {"bottom", Relation::Below},
        {"south", Relation::Below},
        {"left", Relation::Left},            {"west", Relation::Left},
        {"right", Relation::Right},          {"east", Relation::Right},
        {"upperleft", Relation::UpperLeft},  {"topleft", Relation::UpperLeft},
        {"upleft", Relation::UpperLeft},     {"northwest", Relation::UpperLeft},
        {"aboveleft", Relation::UpperLeft},
        {"upperright", Relation::UpperRight}, {"topright", Relation::UpperRight},
        {"upright", Relation::UpperRight},   {"northeast", Relation::UpperRight},
        {"aboveright", Relation::UpperRight},
        {"lowerleft", Relation::LowerLeft},  {"bottomleft", Relation::LowerLeft},
        {"downleft", Relation::LowerLeft},   {"southwest", Relation::LowerLeft},
        {"belowleft", Relation::LowerLeft},
        {"lowerright", Relation::LowerRight}, {"bottomright", Relation::LowerRight},
        {"downright", Relation::LowerRight}, {"southeast", Relation::LowerRight},
        {"belowright", Relation::LowerRight},
    };
    const auto it = table.find(key);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

std::string format_point(const Delta& p) {
    return "(" + std::to_string(p.dx) + "," + std::to_string(p.dy) + ")";
}

}  // namespace stepgame
