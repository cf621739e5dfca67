#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sqlpar/text.hpp"

namespace sqlpar {

class GrammarError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The six top-level clause kinds, in the order sequential decoding visits them.
enum class ClauseKind : int { Select = 0, Where, Group, Order, Ieu, From };

inline constexpr std::size_t kClauseCount = 6;
inline constexpr std::array<ClauseKind, kClauseCount> kClauseOrder = {
    ClauseKind::Select, ClauseKind::Where, ClauseKind::Group,
    ClauseKind::Order,  ClauseKind::Ieu,   ClauseKind::From};

inline std::string_view clause_name(ClauseKind k) {
    static constexpr std::array<std::string_view, kClauseCount> names = {
        "SELECT", "WHERE", "GROUP", "ORDER", "IEU", "FROM"};
    return names[static_cast<int>(k)];
}

inline std::optional<ClauseKind> parse_clause_name(std::string_view s) {
    for (auto k : kClauseOrder)
        if (clause_name(k) == s) return k;
    return std::nullopt;
}

inline constexpr int clause_index(ClauseKind k) { return static_cast<int>(k); }

/// Clauses that may expand to `None`.
inline constexpr bool clause_is_optional(ClauseKind k) {
    return k != ClauseKind::Select && k != ClauseKind::From;
}

enum class NodeKind { Nonterminal, ColumnSlot, TableSlot, ValueSlot };

inline bool is_slot(NodeKind k) { return k != NodeKind::Nonterminal; }

struct NodeType {
    std::string name;
    NodeKind kind = NodeKind::Nonterminal;
};

/// One right-hand-side symbol: a node type reference or a keyword.
struct Symbol {
    int node_type = -1;  // -1 for keywords
    std::string keyword;

    bool is_node() const { return node_type >= 0; }
};

struct ProductionRule {
    int id = 0;
    int lhs = 0;
    std::vector<Symbol> rhs;
    bool is_none = false;

    /// Node-type symbols of rhs in order; one child per entry.
    std::vector<int> children;
    /// Field id of each child (a global index over every (rule, child position)).
    std::vector<int> child_fields;
};

class Grammar {
public:
    const std::vector<ProductionRule>& rules() const { return rules_; }
    const std::vector<NodeType>& node_types() const { return types_; }
    const ProductionRule& rule(int id) const { return rules_.at(static_cast<std::size_t>(id)); }
    const NodeType& node_type(int id) const { return types_.at(static_cast<std::size_t>(id)); }

    int root() const { return root_; }
    int clause_root(ClauseKind k) const { return clause_roots_[clause_index(k)]; }
    /// The single rule expanding the query root; applied implicitly before decoding.
    const ProductionRule& root_rule() const { return rule(root_rule_); }
    std::size_t field_count() const { return field_count_; }

    int column_slot() const { return slot_of(NodeKind::ColumnSlot); }
    int table_slot() const { return slot_of(NodeKind::TableSlot); }
    int value_slot() const { return slot_of(NodeKind::ValueSlot); }

    std::optional<int> find_type(std::string_view name) const {
        auto it = by_name_.find(std::string(name));
        if (it == by_name_.end()) return std::nullopt;
        return it->second;
    }

    int type_id(std::string_view name) const {
        auto t = find_type(name);
        if (!t) throw GrammarError("unknown node type '" + std::string(name) + "'");
        return *t;
    }

    /// All rules with lhs = nt, in id order.
    const std::vector<int>& rules_for(int nt) const {
        if (nt < 0 || static_cast<std::size_t>(nt) >= types_.size())
            throw GrammarError("node type not in grammar");
        if (types_[static_cast<std::size_t>(nt)].kind != NodeKind::Nonterminal)
            throw GrammarError("node type '" + types_[static_cast<std::size_t>(nt)].name +
                               "' is a slot and has no rules");
        return by_lhs_[static_cast<std::size_t>(nt)];
    }

    const std::vector<int>& rules_for(std::string_view name) const {
        auto t = find_type(name);
        if (!t) throw GrammarError("node type '" + std::string(name) + "' not in grammar");
        return rules_for(*t);
    }

    /// The clause owning a node type; nullopt for the query root.
    std::optional<ClauseKind> clause_of(int nt) const {
        return clause_of_.at(static_cast<std::size_t>(nt));
    }

    std::optional<int> none_rule(int nt) const {
        for (int r : rules_for(nt))
            if (rules_[static_cast<std::size_t>(r)].is_none) return r;
        return std::nullopt;
    }

    /// Human-readable rule text, e.g. `where_clause -> WHERE cond`.
    std::string rule_label(int id) const {
        const auto& r = rule(id);
        std::string out = types_[static_cast<std::size_t>(r.lhs)].name + " ->";
        if (r.is_none) return out + " None";
        for (const auto& s : r.rhs)
            out += " " + (s.is_node() ? types_[static_cast<std::size_t>(s.node_type)].name : s.keyword);
        return out;
    }

    /// Canonical text form; load_grammar(serialize()) reproduces rule ids and rhs.
    std::string serialize() const {
        std::ostringstream os;
        os << "@root " << types_[static_cast<std::size_t>(root_)].name << "\n";
        for (auto k : kClauseOrder)
            os << "@clause " << clause_name(k) << " "
               << types_[static_cast<std::size_t>(clause_root(k))].name << "\n";
        for (const auto& t : types_) {
            if (t.kind == NodeKind::ColumnSlot) os << "@column " << t.name << "\n";
            if (t.kind == NodeKind::TableSlot) os << "@table " << t.name << "\n";
            if (t.kind == NodeKind::ValueSlot) os << "@value " << t.name << "\n";
        }
        for (const auto& r : rules_) os << rule_label(r.id) << "\n";
        return os.str();
    }

    std::uint64_t fingerprint() const { return fnv1a(serialize()); }

private:
    friend Grammar load_grammar(std::string_view);

    int slot_of(NodeKind k) const {
        for (std::size_t i = 0; i < types_.size(); ++i)
            if (types_[i].kind == k) return static_cast<int>(i);
        return -1;
    }

    std::vector<ProductionRule> rules_;
    std::vector<NodeType> types_;
    std::map<std::string, int> by_name_;
    std::vector<std::vector<int>> by_lhs_;
    std::array<int, kClauseCount> clause_roots_{};
    std::vector<std::optional<ClauseKind>> clause_of_;
    int root_ = -1;
    int root_rule_ = -1;
    std::size_t field_count_ = 0;
};

namespace detail {

inline bool is_node_symbol(std::string_view s) {
    return !s.empty() && std::islower(static_cast<unsigned char>(s[0]));
}

}  // namespace detail

/// Parses and validates a grammar description (see data/sql.grammar).
inline Grammar load_grammar(std::string_view spec_text) {
    Grammar g;
    std::optional<std::string> root_name;
    std::array<std::optional<std::string>, kClauseCount> clause_names;
    std::map<std::string, NodeKind> slot_decls;
    struct RawRule {
        std::string lhs;
        std::vector<std::string> rhs;
        int line;
    };
    std::vector<RawRule> raw;

    std::istringstream in{std::string(spec_text)};
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> GrammarError {
        return GrammarError("line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto body = trim(line);
        if (body.empty()) continue;
        auto words = split_ws(body);
        if (words[0][0] == '@') {
            const auto& d = words[0];
            if (d == "@root") {
                if (words.size() != 2) throw fail("@root takes one node type");
                if (root_name) throw fail("duplicate @root");
                root_name = words[1];
            } else if (d == "@clause") {
                if (words.size() != 3) throw fail("@clause takes a clause kind and a node type");
                auto k = parse_clause_name(words[1]);
                if (!k) throw fail("unknown clause kind '" + words[1] + "'");
                auto& slot = clause_names[static_cast<std::size_t>(clause_index(*k))];
                if (slot) throw fail("duplicate @clause " + words[1]);
                slot = words[2];
            } else if (d == "@column" || d == "@table" || d == "@value") {
                if (words.size() != 2) throw fail(d + " takes one node type");
                auto kind = d == "@column" ? NodeKind::ColumnSlot
                            : d == "@table" ? NodeKind::TableSlot
                                            : NodeKind::ValueSlot;
                if (!slot_decls.emplace(words[1], kind).second)
                    throw fail("duplicate slot declaration '" + words[1] + "'");
            } else {
                throw fail("unknown directive " + d);
            }
            continue;
        }
        if (words.size() < 3 || words[1] != "->") throw fail("expected `LHS -> SYM ...`");
        if (!detail::is_node_symbol(words[0])) throw fail("rule lhs must be a lowercase node type");
        raw.push_back({words[0], {words.begin() + 2, words.end()}, lineno});
    }

    if (!root_name) throw GrammarError("missing root");

    // Node types in order of first appearance: root, clause roots, rules, slots.
    auto intern = [&](const std::string& name, NodeKind kind) {
        auto [it, fresh] = g.by_name_.emplace(name, static_cast<int>(g.types_.size()));
        if (fresh) g.types_.push_back({name, kind});
        return it->second;
    };
    std::map<std::string, bool> has_rules;
    for (const auto& r : raw) has_rules[r.lhs] = true;
    for (const auto& [name, kind] : slot_decls)
        if (has_rules.count(name)) throw GrammarError("slot type '" + name + "' has expansion rules");

    auto kind_of = [&](const std::string& name) {
        auto it = slot_decls.find(name);
        return it == slot_decls.end() ? NodeKind::Nonterminal : it->second;
    };
    g.root_ = intern(*root_name, kind_of(*root_name));
    for (std::size_t k = 0; k < kClauseCount; ++k) {
        if (!clause_names[k])
            throw GrammarError("missing clause root for " +
                               std::string(clause_name(static_cast<ClauseKind>(k))));
        g.clause_roots_[k] = intern(*clause_names[k], kind_of(*clause_names[k]));
    }
    for (const auto& r : raw) {
        intern(r.lhs, NodeKind::Nonterminal);
        for (const auto& s : r.rhs) {
            if (!detail::is_node_symbol(s)) continue;
            if (!has_rules.count(s) && !slot_decls.count(s))
                throw GrammarError("line " + std::to_string(r.line) + ": unknown node type '" + s + "'");
            intern(s, kind_of(s));
        }
    }
    for (const auto& [name, kind] : slot_decls) intern(name, kind);

    g.by_lhs_.assign(g.types_.size(), {});
    std::map<std::pair<int, std::vector<std::string>>, int> seen;
    for (const auto& r : raw) {
        ProductionRule pr;
        pr.id = static_cast<int>(g.rules_.size());
        pr.lhs = g.by_name_.at(r.lhs);
        if (r.rhs.size() == 1 && r.rhs[0] == "None") {
            pr.is_none = true;
        } else {
            for (const auto& s : r.rhs) {
                if (s == "None")
                    throw GrammarError("line " + std::to_string(r.line) + ": None must stand alone");
                Symbol sym;
                if (detail::is_node_symbol(s)) {
                    sym.node_type = g.by_name_.at(s);
                    pr.children.push_back(sym.node_type);
                    pr.child_fields.push_back(static_cast<int>(g.field_count_++));
                } else {
                    sym.keyword = s;
                }
                pr.rhs.push_back(std::move(sym));
            }
        }
        if (!seen.emplace(std::make_pair(pr.lhs, r.rhs), pr.id).second)
            throw GrammarError("line " + std::to_string(r.line) + ": duplicate rule " + r.lhs + " -> " +
                               join(r.rhs, " "));
        g.by_lhs_[static_cast<std::size_t>(pr.lhs)].push_back(pr.id);
        g.rules_.push_back(std::move(pr));
    }

    const auto& root_rules = g.by_lhs_[static_cast<std::size_t>(g.root_)];
    if (g.types_[static_cast<std::size_t>(g.root_)].kind != NodeKind::Nonterminal || root_rules.empty())
        throw GrammarError("root '" + *root_name + "' has no rules");
    if (root_rules.size() != 1) throw GrammarError("root must have exactly one rule");
    g.root_rule_ = root_rules.front();
    const auto& rr = g.rules_[static_cast<std::size_t>(g.root_rule_)];
    for (auto k : kClauseOrder) {
        int cr = g.clause_root(k);
        if (g.types_[static_cast<std::size_t>(cr)].kind != NodeKind::Nonterminal ||
            g.by_lhs_[static_cast<std::size_t>(cr)].empty())
            throw GrammarError("clause root '" + g.types_[static_cast<std::size_t>(cr)].name + "' has no rules");
        if (std::count(rr.children.begin(), rr.children.end(), cr) != 1)
            throw GrammarError("missing clause root " + std::string(clause_name(k)) +
                               " in the root rule");
        if (clause_is_optional(k) && !g.none_rule(cr))
            throw GrammarError("missing None-rule for optional clause " + std::string(clause_name(k)));
    }
    if (rr.children.size() != kClauseCount)
        throw GrammarError("root rule must expand to exactly the six clause roots");
    for (int s : {g.column_slot(), g.table_slot(), g.value_slot()})
        if (s < 0) throw GrammarError("grammar must declare @column, @table and @value slots");

    // Reachability from root.
    std::vector<bool> reached(g.types_.size(), false);
    std::queue<int> frontier;
    frontier.push(g.root_);
    reached[static_cast<std::size_t>(g.root_)] = true;
    while (!frontier.empty()) {
        int t = frontier.front();
        frontier.pop();
        for (int r : g.by_lhs_[static_cast<std::size_t>(t)])
            for (int c : g.rules_[static_cast<std::size_t>(r)].children)
                if (!reached[static_cast<std::size_t>(c)]) {
                    reached[static_cast<std::size_t>(c)] = true;
                    frontier.push(c);
                }
    }
    for (std::size_t i = 0; i < g.types_.size(); ++i)
        if (!reached[i]) throw GrammarError("unreachable node type '" + g.types_[i].name + "'");

    // Clause ownership: clause roots own themselves; every other type belongs
    // to the first clause (in decoding order) reaching it without passing
    // through another clause root.
    g.clause_of_.assign(g.types_.size(), std::nullopt);
    std::vector<bool> is_clause_root(g.types_.size(), false);
    for (auto k : kClauseOrder) {
        is_clause_root[static_cast<std::size_t>(g.clause_root(k))] = true;
        g.clause_of_[static_cast<std::size_t>(g.clause_root(k))] = k;
    }
    for (auto k : kClauseOrder) {
        std::queue<int> q;
        q.push(g.clause_root(k));
        std::vector<bool> seen_t(g.types_.size(), false);
        while (!q.empty()) {
            int t = q.front();
            q.pop();
            for (int r : g.by_lhs_[static_cast<std::size_t>(t)])
                for (int c : g.rules_[static_cast<std::size_t>(r)].children) {
                    auto ci = static_cast<std::size_t>(c);
                    if (seen_t[ci] || is_clause_root[ci] || c == g.root_) continue;
                    seen_t[ci] = true;
                    if (!g.clause_of_[ci]) g.clause_of_[ci] = k;
                    q.push(c);
                }
        }
    }
    return g;
}

inline Grammar load_grammar_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw GrammarError("cannot open grammar file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return load_grammar(ss.str());
}

}  // namespace sqlpar
