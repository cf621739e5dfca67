#pragma once

#include <array>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sqlpar/grammar.hpp"
#include "sqlpar/schema.hpp"

namespace sqlpar {

class AstError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ActionKind { ApplyRule, SelectColumn, SelectTable, SelectValue };

struct Action {
    ActionKind kind = ActionKind::ApplyRule;
    int id = 0;  // rule id, column id, table id, or question token index

    static Action apply_rule(int rule) { return {ActionKind::ApplyRule, rule}; }
    static Action select_column(int c) { return {ActionKind::SelectColumn, c}; }
    static Action select_table(int t) { return {ActionKind::SelectTable, t}; }
    static Action select_value(int tok) { return {ActionKind::SelectValue, tok}; }

    bool operator==(const Action&) const = default;
};

inline std::string action_text(const Action& a, const Grammar& g) {
    switch (a.kind) {
        case ActionKind::ApplyRule: return "ApplyRule(" + g.rule_label(a.id) + ")";
        case ActionKind::SelectColumn: return "SelectColumn(" + std::to_string(a.id) + ")";
        case ActionKind::SelectTable: return "SelectTable(" + std::to_string(a.id) + ")";
        case ActionKind::SelectValue: return "SelectValue(" + std::to_string(a.id) + ")";
    }
    return {};
}

/// The action kind that fills a node of the given kind.
inline ActionKind action_kind_for(NodeKind k) {
    switch (k) {
        case NodeKind::Nonterminal: return ActionKind::ApplyRule;
        case NodeKind::ColumnSlot: return ActionKind::SelectColumn;
        case NodeKind::TableSlot: return ActionKind::SelectTable;
        case NodeKind::ValueSlot: return ActionKind::SelectValue;
    }
    return ActionKind::ApplyRule;
}

struct AstNode {
    int node_type = -1;
    int field = -1;  // role inside the parent's rule; -1 for the query root
    int rule = -1;   // nonterminals only
    std::vector<AstNode> children;
    int leaf_ref = -1;      // column id, table id, or question token index
    std::string leaf_text;  // copied token for value slots
    int born_at = -1;       // action step that expanded or filled this node

    bool operator==(const AstNode&) const = default;
};

/// Equality ignoring timestamps.
inline bool same_structure(const AstNode& a, const AstNode& b) {
    if (a.node_type != b.node_type || a.rule != b.rule || a.leaf_ref != b.leaf_ref ||
        a.leaf_text != b.leaf_text || a.children.size() != b.children.size())
        return false;
    for (std::size_t i = 0; i < a.children.size(); ++i)
        if (!same_structure(a.children[i], b.children[i])) return false;
    return true;
}

inline bool is_complete(const AstNode& n, const Grammar& g) {
    const auto& t = g.node_type(n.node_type);
    if (is_slot(t.kind)) return n.leaf_ref >= 0 || (t.kind == NodeKind::ValueSlot && !n.leaf_text.empty());
    if (n.rule < 0) return false;
    for (const auto& c : n.children)
        if (!is_complete(c, g)) return false;
    return true;
}

/// Re-stamps born_at in depth-first pre-order; the implicit root keeps -1.
inline void stamp_dfs(AstNode& root) {
    int step = 0;
    auto visit = [&](auto&& self, AstNode& n) -> void {
        n.born_at = step++;
        for (auto& c : n.children) self(self, c);
    };
    root.born_at = -1;
    for (auto& c : root.children) visit(visit, c);
}

/// What the decoder sees at a step: the focus node and its father.
struct Focus {
    int node_type = -1;
    NodeKind kind = NodeKind::Nonterminal;
    int field = -1;
    /// Step that expanded the father; -1 when the father is outside this builder
    /// (the implicit query root, or an IEU node owned by another decoder).
    int parent_step = -1;
};

/// Builds an AST by the three-action transition system, depth-first.
class TreeBuilder {
public:
    /// A full query: the root rule is applied implicitly and the frontier holds
    /// the six clause roots, SELECT on top.
    static TreeBuilder for_query(const Grammar& g, std::span<const std::string> question = {},
                                 const SchemaDef* schema = nullptr) {
        TreeBuilder b(g, question, schema);
        b.root_->node_type = g.root();
        b.expand(*b.root_, g.root_rule());
        return b;
    }

    /// A subtree rooted at a single node, e.g. one clause decoded on its own.
    static TreeBuilder for_subtree(const Grammar& g, int node_type, int field,
                                   std::span<const std::string> question = {},
                                   const SchemaDef* schema = nullptr) {
        TreeBuilder b(g, question, schema);
        b.root_->node_type = node_type;
        b.root_->field = field;
        b.frontier_.push_back(b.root_.get());
        b.parent_steps_.push_back(-1);
        return b;
    }

    bool done() const { return frontier_.empty(); }
    int step() const { return step_; }
    std::size_t frontier_size() const { return frontier_.size(); }

    Focus focus() const {
        if (frontier_.empty()) throw AstError("frontier is empty");
        const AstNode* n = frontier_.back();
        return {n->node_type, g_->node_type(n->node_type).kind, n->field, parent_steps_.back()};
    }

    void apply(const Action& a) {
        if (frontier_.empty()) throw AstError("tree already complete");
        AstNode* n = frontier_.back();
        const auto kind = g_->node_type(n->node_type).kind;
        if (a.kind != action_kind_for(kind))
            throw AstError("kind mismatch: " + action_text(a, *g_) + " on node '" +
                           g_->node_type(n->node_type).name + "'");
        frontier_.pop_back();
        parent_steps_.pop_back();
        n->born_at = step_;
        switch (a.kind) {
            case ActionKind::ApplyRule: {
                if (a.id < 0 || static_cast<std::size_t>(a.id) >= g_->rules().size())
                    throw AstError("rule id out of range");
                const auto& r = g_->rule(a.id);
                if (r.lhs != n->node_type)
                    throw AstError("rule lhs mismatch: " + g_->rule_label(a.id) + " on node '" +
                                   g_->node_type(n->node_type).name + "'");
                expand(*n, r);
                break;
            }
            case ActionKind::SelectColumn:
                if (a.id < 0 || (schema_ && a.id >= static_cast<int>(schema_->columns.size())))
                    throw AstError("column id out of range");
                n->leaf_ref = a.id;
                break;
            case ActionKind::SelectTable:
                if (a.id < 0 || (schema_ && a.id >= static_cast<int>(schema_->tables.size())))
                    throw AstError("table id out of range");
                n->leaf_ref = a.id;
                break;
            case ActionKind::SelectValue:
                if (a.id < 0 || a.id >= static_cast<int>(question_.size()))
                    throw AstError("value token index out of range");
                n->leaf_ref = a.id;
                n->leaf_text = question_[static_cast<std::size_t>(a.id)];
                break;
        }
        ++step_;
    }

    /// Removes every pending frontier node (top first) without filling it. The
    /// nodes stay in the tree; graft() later replaces them with finished subtrees.
    std::vector<AstNode*> detach_frontier() {
        std::vector<AstNode*> out(frontier_.rbegin(), frontier_.rend());
        frontier_.clear();
        parent_steps_.clear();
        return out;
    }

    static void graft(AstNode* slot, AstNode subtree) {
        int field = slot->field;
        *slot = std::move(subtree);
        slot->field = field;
    }

    const AstNode& tree() const { return *root_; }
    AstNode take() { return std::move(*root_); }

private:
    TreeBuilder(const Grammar& g, std::span<const std::string> question, const SchemaDef* schema)
        : g_(&g), question_(question), schema_(schema), root_(std::make_unique<AstNode>()) {}

    void expand(AstNode& n, const ProductionRule& r) {
        n.rule = r.id;
        n.children.resize(r.children.size());
        for (std::size_t i = 0; i < r.children.size(); ++i) {
            n.children[i].node_type = r.children[i];
            n.children[i].field = r.child_fields[i];
        }
        for (std::size_t i = r.children.size(); i-- > 0;) {
            frontier_.push_back(&n.children[i]);
            parent_steps_.push_back(n.born_at);
        }
    }

    const Grammar* g_;
    std::span<const std::string> question_;
    const SchemaDef* schema_;
    std::unique_ptr<AstNode> root_;
    std::vector<AstNode*> frontier_;
    std::vector<int> parent_steps_;
    int step_ = 0;
};

/// One step of an oracle trace.
struct TraceStep {
    Action action;
    ClauseKind clause = ClauseKind::Select;
    /// Clause inside an IEU body, or -1 for steps outside a body (including the
    /// IEU rule itself).
    int body_clause = -1;
    int node_type = -1;
    int field = -1;
    int parent_step = -1;
};

struct ActionTrace {
    std::vector<TraceStep> steps;
    /// [begin, end) per clause; spans partition the trace in decoding order.
    std::array<std::pair<int, int>, kClauseCount> clause_spans{};

    std::size_t size() const { return steps.size(); }

    std::vector<Action> actions() const {
        std::vector<Action> out;
        out.reserve(steps.size());
        for (const auto& s : steps) out.push_back(s.action);
        return out;
    }
};

/// Depth-first pre-order action sequence that rebuilds `gold`.
inline ActionTrace oracle_actions(const AstNode& gold, const Grammar& g) {
    if (gold.node_type != g.root() || gold.rule != g.root_rule().id)
        throw AstError("oracle_actions expects a full query tree");
    ActionTrace trace;
    std::optional<ClauseKind> clause;
    int body_clause = -1;
    auto visit = [&](auto&& self, const AstNode& n, int parent_step) -> void {
        const auto& t = g.node_type(n.node_type);
        TraceStep s;
        s.clause = *clause;
        s.body_clause = body_clause;
        s.node_type = n.node_type;
        s.field = n.field;
        s.parent_step = parent_step;
        const int here = static_cast<int>(trace.steps.size());
        if (t.kind == NodeKind::Nonterminal) {
            if (n.rule < 0 || static_cast<std::size_t>(n.rule) >= g.rules().size() ||
                g.rule(n.rule).lhs != n.node_type)
                throw AstError("tree uses a rule not in the grammar at node '" + t.name + "'");
            const auto& r = g.rule(n.rule);
            if (r.children.size() != n.children.size())
                throw AstError("child count does not match rule " + g.rule_label(r.id));
            s.action = Action::apply_rule(n.rule);
            trace.steps.push_back(s);
            const bool ieu_body = *clause == ClauseKind::Ieu && body_clause < 0 && !r.is_none;
            for (std::size_t i = 0; i < n.children.size(); ++i) {
                if (ieu_body) {
                    auto k = g.clause_of(n.children[i].node_type);
                    body_clause = k ? clause_index(*k) : -1;
                }
                self(self, n.children[i], here);
            }
            if (ieu_body) body_clause = -1;
            return;
        }
        if (n.leaf_ref < 0) throw AstError("unfilled slot '" + t.name + "' (unbound value?)");
        s.action = {action_kind_for(t.kind), n.leaf_ref};
        trace.steps.push_back(s);
    };
    for (std::size_t i = 0; i < gold.children.size(); ++i) {
        clause = g.clause_of(gold.children[i].node_type);
        const int begin = static_cast<int>(trace.steps.size());
        visit(visit, gold.children[i], -1);
        trace.clause_spans[static_cast<std::size_t>(clause_index(*clause))] = {
            begin, static_cast<int>(trace.steps.size())};
    }
    return trace;
}

inline AstNode replay(const std::vector<Action>& actions, const Grammar& g,
                      std::span<const std::string> question = {}) {
    auto b = TreeBuilder::for_query(g, question);
    for (const auto& a : actions) b.apply(a);
    if (!b.done()) throw AstError("trace ended before the tree was complete");
    return b.take();
}

/// Per-clause action subsequences; concatenating them in clause order gives
/// back the trace.
inline std::array<std::vector<Action>, kClauseCount> split_by_clause(const ActionTrace& trace) {
    std::array<std::vector<Action>, kClauseCount> out;
    for (const auto& s : trace.steps) out[static_cast<std::size_t>(clause_index(s.clause))].push_back(s.action);
    return out;
}

/// `step<TAB>clause<TAB>action`, one line per action.
inline void dump_trace(std::ostream& os, const ActionTrace& trace, const Grammar& g) {
    for (std::size_t i = 0; i < trace.steps.size(); ++i)
        os << i << '\t' << clause_name(trace.steps[i].clause) << '\t' << action_text(trace.steps[i].action, g)
           << '\n';
}

/// Every column, table, and value leaf under a node, in depth-first order.
struct LeafRefs {
    std::vector<int> columns;
    std::vector<int> tables;
    std::vector<const AstNode*> values;
};

inline void collect_leaves(const AstNode& n, const Grammar& g, LeafRefs& out) {
    switch (g.node_type(n.node_type).kind) {
        case NodeKind::ColumnSlot: out.columns.push_back(n.leaf_ref); return;
        case NodeKind::TableSlot: out.tables.push_back(n.leaf_ref); return;
        case NodeKind::ValueSlot: out.values.push_back(&n); return;
        case NodeKind::Nonterminal: break;
    }
    for (const auto& c : n.children) collect_leaves(c, g, out);
}

/// The top-level clause subtree of a query tree.
inline const AstNode& clause_subtree(const AstNode& query, const Grammar& g, ClauseKind k) {
    for (const auto& c : query.children)
        if (c.node_type == g.clause_root(k)) return c;
    throw AstError("query has no " + std::string(clause_name(k)) + " clause");
}

inline bool clause_present(const AstNode& clause_node, const Grammar& g) {
    return clause_node.rule >= 0 && !g.rule(clause_node.rule).is_none;
}

}  // namespace sqlpar
