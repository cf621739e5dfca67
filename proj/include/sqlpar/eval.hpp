#pragma once

// AST-level exact match and hardness buckets.

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "sqlpar/ast.hpp"

namespace sqlpar {

namespace detail {

// Node types whose repeated children are unordered: SELECT items, WHERE
// conjuncts or disjuncts, FROM tables.
inline bool has_unordered_children(const Grammar& g, int node_type) {
    return node_type == g.clause_root(ClauseKind::Select) || node_type == g.clause_root(ClauseKind::Where) ||
           node_type == g.clause_root(ClauseKind::From);
}

inline std::string match_key(const AstNode& n, const Grammar& g) {
    const auto& t = g.node_type(n.node_type);
    switch (t.kind) {
        case NodeKind::ColumnSlot: return "c" + std::to_string(n.leaf_ref);
        case NodeKind::TableSlot: return "t" + std::to_string(n.leaf_ref);
        case NodeKind::ValueSlot: return "v'" + n.leaf_text + "'";
        case NodeKind::Nonterminal: break;
    }
    std::vector<std::string> fixed, loose;
    const bool unordered = has_unordered_children(g, n.node_type);
    for (const auto& c : n.children) {
        // A child type that repeats under this rule is one of the unordered items.
        const bool repeated =
            unordered && std::count_if(n.children.begin(), n.children.end(),
                                       [&](const AstNode& o) { return o.node_type == c.node_type; }) > 1;
        (repeated ? loose : fixed).push_back(match_key(c, g));
    }
    std::sort(loose.begin(), loose.end());
    std::string key = "(" + std::to_string(n.rule);
    for (const auto& k : fixed) key += " " + k;
    if (!loose.empty()) key += " {";
    for (const auto& k : loose) key += " " + k;
    if (!loose.empty()) key += " }";
    return key + ")";
}

}  // namespace detail

/// Clause-by-clause comparison; SELECT items, WHERE conditions and FROM tables
/// compare as multisets, values by their copied text.
inline bool exact_match(const AstNode& predicted, const AstNode& gold, const Grammar& g) {
    if (predicted.children.size() != gold.children.size()) return false;
    for (std::size_t i = 0; i < gold.children.size(); ++i)
        if (detail::match_key(predicted.children[i], g) != detail::match_key(gold.children[i], g)) return false;
    return true;
}

enum class Hardness { Easy, Medium, Hard, Extra };

inline constexpr std::array<Hardness, 4> kHardnessLevels = {Hardness::Easy, Hardness::Medium, Hardness::Hard,
                                                            Hardness::Extra};

inline std::string_view hardness_name(Hardness h) {
    static constexpr std::array<std::string_view, 4> names = {"easy", "medium", "hard", "extra"};
    return names[static_cast<std::size_t>(h)];
}

struct QueryShape {
    int clauses = 0;     // non-None top-level clauses, SELECT and FROM included
    int components = 0;  // select items, conditions, group/order keys, limit, tables
    bool set_op = false;
};

inline QueryShape query_shape(const AstNode& query, const Grammar& g) {
    QueryShape s;
    for (auto k : kClauseOrder) {
        const auto& c = clause_subtree(query, g, k);
        if (!clause_present(c, g)) continue;
        ++s.clauses;
        if (k == ClauseKind::Ieu) s.set_op = true;
    }
    const int agg = g.type_id("agg"), cond = g.type_id("cond"), vu = g.type_id("val_unit");
    const int tab = g.type_id("tab"), val = g.type_id("val");
    const int group = g.clause_root(ClauseKind::Group), order = g.clause_root(ClauseKind::Order);
    auto visit = [&](auto&& self, const AstNode& n) -> void {
        if (n.node_type == tab) ++s.components;
        for (const auto& c : n.children) {
            // Conditions and select items count once; their inner aggs do not.
            if (c.node_type == cond) {
                ++s.components;
                continue;
            }
            if (c.node_type == agg || (c.node_type == vu && n.node_type == group) ||
                (c.node_type == val && n.node_type == order))
                ++s.components;
            self(self, c);
        }
    };
    visit(visit, query);
    return s;
}

/// easy: at most two clauses and two components; extra: four or more clauses,
/// or a set operation; otherwise medium up to four components, hard beyond.
inline Hardness hardness(const AstNode& query, const Grammar& g) {
    const auto s = query_shape(query, g);
    if (s.set_op || s.clauses >= 4) return Hardness::Extra;
    if (s.clauses <= 2 && s.components <= 2) return Hardness::Easy;
    return s.components <= 4 ? Hardness::Medium : Hardness::Hard;
}

}  // namespace sqlpar
