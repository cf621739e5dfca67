#pragma once

// Grammar-constrained LSTM decoder.
//
// Each step reads i_t = [e(prev action); e(field); e(type); z; h(parent)] and
// the previous hidden state, runs one LSTM cell, attends over the question
// with the new hidden state, and scores the legal actions for the focus node.
//
// Sequential mode runs the six clauses one after another on a single state.
// Parallel mode starts all six from the same learned initial state and steps
// them together as one batch; an IEU operator spawns its five body clauses as
// further rows, again from the initial state.

#include <algorithm>
#include <array>
#include <future>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqlpar/ast.hpp"
#include "sqlpar/encoder.hpp"
#include "sqlpar/model.hpp"
#include "sqlpar/nn/kernels.hpp"

namespace sqlpar {

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DecodeMode { Sequential, Parallel };

inline std::string_view mode_name(DecodeMode m) { return m == DecodeMode::Parallel ? "parallel" : "sequential"; }

inline std::optional<DecodeMode> parse_mode(std::string_view s) {
    if (s == "parallel") return DecodeMode::Parallel;
    if (s == "sequential") return DecodeMode::Sequential;
    return std::nullopt;
}

struct DecodeOptions {
    int step_budget = 100;  // per clause row
    bool record_logits = false;
    bool record_inputs = false;
    int threads = 0;  // > 1: parallel-mode clauses run on separate threads instead of one batch
};

struct StepRecord {
    ClauseKind clause = ClauseKind::Select;
    int body_clause = -1;  // set on rows spawned for an IEU body
    Action action;
    int node_type = -1;
    int field = -1;
    int iteration = 0;           // batched LSTM step in which this action was taken
    std::vector<double> p_att;   // ApplyRule steps only
    std::vector<Action> candidates;
    std::vector<double> logits;  // aligned with candidates, when recorded
    std::vector<double> input;   // i_t, when recorded
};

struct ClauseDecode {
    ClauseKind clause = ClauseKind::Select;
    std::vector<StepRecord> steps;  // depth-first order; an IEU body follows the IEU step
    AstNode tree;

    std::vector<Action> actions() const {
        std::vector<Action> out;
        for (const auto& s : steps) out.push_back(s.action);
        return out;
    }
};

struct DecodeResult {
    AstNode ast;
    std::array<ClauseDecode, kClauseCount> clauses;
    int total_steps = 0;
    int lstm_iterations = 0;  // batched steps on the critical path

    std::vector<Action> actions() const {
        std::vector<Action> out;
        for (const auto& c : clauses)
            for (const auto& s : c.steps) out.push_back(s.action);
        return out;
    }
};

/// Oracle actions split the way each decoding mode consumes them.
struct ForcedPlan {
    std::array<std::vector<Action>, kClauseCount> full;  // sequential: whole clause incl. IEU body
    std::array<std::vector<Action>, kClauseCount> main;  // parallel: clause without IEU body
    std::array<std::vector<Action>, kClauseCount> body;  // parallel: IEU body clause rows

    static ForcedPlan from_trace(const ActionTrace& t) {
        ForcedPlan p;
        for (const auto& s : t.steps) {
            const auto k = static_cast<std::size_t>(clause_index(s.clause));
            p.full[k].push_back(s.action);
            if (s.body_clause >= 0)
                p.body[static_cast<std::size_t>(s.body_clause)].push_back(s.action);
            else
                p.main[k].push_back(s.action);
        }
        return p;
    }
};

/// Writes i_t for one step. prev_action < 0 selects the learned start embedding.
inline void assemble_input(const Model& m, int prev_action, int field, int node_type, const double* z,
                           const double* parent_h, double* out) {
    const auto E = m.dims.emb, T = m.dims.type_emb, D = m.dims.token_dim(), H = m.dims.hidden;
    const double* a = prev_action < 0 ? m.start_action->value.data.data() : m.action_emb->value.row_ptr(prev_action);
    if (field < 0 || static_cast<std::size_t>(field) >= m.field_emb->value.rows)
        throw DecodeError("focus node has no field embedding");
    if (!parent_h) throw DecodeError("missing parent hidden state");
    std::copy_n(a, E, out);
    std::copy_n(m.field_emb->value.row_ptr(field), E, out + E);
    std::copy_n(m.type_emb->value.row_ptr(node_type), T, out + 2 * E);
    std::copy_n(z, D, out + 2 * E + T);
    std::copy_n(parent_h, H, out + 2 * E + T + D);
}

namespace detail {

struct Row {
    ClauseKind clause = ClauseKind::Select;
    int body_clause = -1;
    TreeBuilder builder;
    std::vector<double> c, h, z;
    int prev_action = -1;
    std::vector<double> root_parent;
    std::vector<std::vector<double>> h_log;  // by local builder step
    std::vector<StepRecord> steps;
    const std::vector<Action>* forced = nullptr;
    std::size_t forced_pos = 0;
    AstNode* slot = nullptr;        // body rows: node to graft into
    std::vector<std::size_t> body;  // IEU row: spawned body rows

    explicit Row(TreeBuilder b) : builder(std::move(b)) {}
    bool done() const { return builder.done(); }
};

}  // namespace detail

class Decoder {
public:
    Decoder(const Model& m, const Grammar& g) : m_(&m), g_(&g) {}

    const Model& model() const { return *m_; }

    /// Initial state (c_init, h_init) and z0 = attention(h_init).
    struct InitState {
        std::vector<double> c, h, z;
    };

    InitState init_state(const EncoderOutput& enc) const {
        InitState s;
        s.c = m_->c_init->value.data;
        s.h = m_->h_init->value.data;
        s.z.assign(m_->dims.token_dim(), 0.0);
        std::vector<double> u(m_->dims.token_dim()), p(enc.tokens.rows);
        nn::attention(s.h.data(), enc.tokens, m_->att_W->value, u.data(), p.data(), s.z.data());
        return s;
    }

    DecodeResult decode(std::span<const std::string> question, const SchemaDef& schema, DecodeMode mode,
                        const DecodeOptions& opt = {}, const ActionTrace* forced = nullptr) const {
        auto enc = encode(*m_, question, schema);
        return decode(enc, question, schema, mode, opt, forced);
    }

    DecodeResult decode(const EncoderOutput& enc, std::span<const std::string> question, const SchemaDef& schema,
                        DecodeMode mode, const DecodeOptions& opt = {}, const ActionTrace* forced = nullptr) const {
        std::optional<ForcedPlan> plan;
        if (forced) plan = ForcedPlan::from_trace(*forced);
        Ctx ctx{enc, question, schema, opt, mode == DecodeMode::Parallel, plan ? &*plan : nullptr};
        const auto init = init_state(enc);
        DecodeResult res;

        if (mode == DecodeMode::Sequential) {
            std::vector<double> c = init.c, h = init.h, z = init.z;
            int prev = -1;
            for (auto k : kClauseOrder) {
                std::vector<detail::Row> rows;
                rows.push_back(make_row(ctx, k, -1, c, h, z, prev, h,
                                        plan ? &plan->full[static_cast<std::size_t>(clause_index(k))] : nullptr));
                int iters = run(ctx, rows);
                res.lstm_iterations += iters;
                auto& r = rows.front();
                c = r.c;
                h = r.h;
                z = r.z;
                prev = r.prev_action;
                finish_clause(rows, 0, res.clauses[static_cast<std::size_t>(clause_index(k))], k);
            }
        } else if (opt.threads > 1) {
            std::vector<std::future<std::pair<ClauseDecode, int>>> futs;
            for (auto k : kClauseOrder)
                futs.push_back(std::async(std::launch::async, [&, k] { return decode_clause_impl(ctx, k, init); }));
            for (std::size_t i = 0; i < kClauseCount; ++i) {
                auto [cd, iters] = futs[i].get();
                res.clauses[i] = std::move(cd);
                res.lstm_iterations = std::max(res.lstm_iterations, iters);
            }
        } else {
            std::vector<detail::Row> rows;
            for (auto k : kClauseOrder)
                rows.push_back(make_row(ctx, k, -1, init.c, init.h, init.z, -1, init.h,
                                        plan ? &plan->main[static_cast<std::size_t>(clause_index(k))] : nullptr));
            res.lstm_iterations = run(ctx, rows);
            for (auto k : kClauseOrder)
                finish_clause(rows, static_cast<std::size_t>(clause_index(k)),
                              res.clauses[static_cast<std::size_t>(clause_index(k))], k);
        }

        res.ast.node_type = g_->root();
        res.ast.rule = g_->root_rule().id;
        for (auto& cd : res.clauses) {
            res.total_steps += static_cast<int>(cd.steps.size());
            res.ast.children.push_back(cd.tree);
        }
        stamp_dfs(res.ast);
        return res;
    }

    /// One clause on its own from the shared initial state, as parallel mode runs it
    /// (an IEU operator spawns its body rows within this call).
    ClauseDecode decode_clause(const EncoderOutput& enc, std::span<const std::string> question,
                               const SchemaDef& schema, ClauseKind k, const DecodeOptions& opt = {},
                               const ActionTrace* forced = nullptr) const {
        std::optional<ForcedPlan> plan;
        if (forced) plan = ForcedPlan::from_trace(*forced);
        Ctx ctx{enc, question, schema, opt, true, plan ? &*plan : nullptr};
        return decode_clause_impl(ctx, k, init_state(enc)).first;
    }

private:
    struct Ctx {
        const EncoderOutput& enc;
        std::span<const std::string> question;
        const SchemaDef& schema;
        const DecodeOptions& opt;
        bool parallel;
        const ForcedPlan* plan;
    };

    std::pair<ClauseDecode, int> decode_clause_impl(const Ctx& ctx, ClauseKind k, const InitState& init) const {
        std::vector<detail::Row> rows;
        rows.push_back(make_row(ctx, k, -1, init.c, init.h, init.z, -1, init.h,
                                ctx.plan ? &ctx.plan->main[static_cast<std::size_t>(clause_index(k))] : nullptr));
        int iters = run(ctx, rows);
        ClauseDecode cd;
        finish_clause(rows, 0, cd, k);
        return {std::move(cd), iters};
    }

    detail::Row make_row(const Ctx& ctx, ClauseKind k, int body_clause, const std::vector<double>& c,
                         const std::vector<double>& h, const std::vector<double>& z, int prev,
                         const std::vector<double>& root_parent, const std::vector<Action>* forced,
                         int node_type = -1, int field = -1) const {
        if (node_type < 0) {
            node_type = g_->clause_root(k);
            field = g_->root_rule().child_fields[static_cast<std::size_t>(clause_index(k))];
        }
        detail::Row r(TreeBuilder::for_subtree(*g_, node_type, field, ctx.question, &ctx.schema));
        r.clause = k;
        r.body_clause = body_clause;
        r.c = c;
        r.h = h;
        r.z = z;
        r.prev_action = prev;
        r.root_parent = root_parent;
        r.forced = forced;
        return r;
    }

    /// Collects a finished top-level row (and its body rows) into a clause result.
    void finish_clause(std::vector<detail::Row>& rows, std::size_t top, ClauseDecode& out, ClauseKind k) const {
        auto& r = rows[top];
        auto check_forced = [&](const detail::Row& row) {
            if (row.forced && row.forced_pos != row.forced->size())
                throw DecodeError("forced actions left over in " + std::string(clause_name(k)) + " clause");
        };
        check_forced(r);
        out.clause = k;
        out.steps = std::move(r.steps);
        for (std::size_t b : r.body) {
            auto& br = rows[b];
            check_forced(br);
            for (auto& s : br.steps) out.steps.push_back(std::move(s));
            TreeBuilder::graft(br.slot, br.builder.take());
        }
        out.tree = r.builder.take();
    }

    /// Steps every unfinished row together until all are done. Returns the number of batched steps.
    int run(const Ctx& ctx, std::vector<detail::Row>& rows) const {
        const auto& m = *m_;
        const auto H = m.dims.hidden, D = m.dims.token_dim(), IN = m.dims.input_dim();
        const std::size_t n_tok = ctx.enc.tokens.rows;
        int iteration = 0;
        std::vector<double> xbuf, gbuf, hz, proj, u;
        std::vector<std::size_t> active;
        while (true) {
            active.clear();
            for (std::size_t i = 0; i < rows.size(); ++i)
                if (!rows[i].done()) active.push_back(i);
            if (active.empty()) break;
            const std::size_t b = active.size();

            // Inputs and the batched LSTM affine map.
            xbuf.assign(b * (IN + H), 0.0);
            gbuf.assign(b * 4 * H, 0.0);
            std::vector<const double*> xs(b);
            std::vector<double*> gs(b);
            std::vector<Focus> focus(b);
            for (std::size_t j = 0; j < b; ++j) {
                auto& r = rows[active[j]];
                if (static_cast<int>(r.steps.size()) >= ctx.opt.step_budget)
                    throw DecodeError("step budget of " + std::to_string(ctx.opt.step_budget) + " exceeded in " +
                                      std::string(clause_name(r.clause)) + " clause");
                focus[j] = r.builder.focus();
                const double* parent = focus[j].parent_step < 0
                                           ? r.root_parent.data()
                                           : r.h_log.at(static_cast<std::size_t>(focus[j].parent_step)).data();
                double* x = xbuf.data() + j * (IN + H);
                assemble_input(m, r.prev_action, focus[j].field, focus[j].node_type, r.z.data(), parent, x);
                std::copy_n(r.h.data(), H, x + IN);
                xs[j] = x;
                gs[j] = gbuf.data() + j * 4 * H;
            }
            nn::affine_rows(xs, m.dec_W->value, m.dec_b->value.data.data(), gs);

            // Cell, attention, and [h; z] per row.
            hz.assign(b * (H + D), 0.0);
            u.assign(b * D, 0.0);
            std::vector<std::vector<double>> p_att(b);
            std::vector<const double*> hs(b);
            std::vector<double*> us(b), ps(b), zs(b);
            for (std::size_t j = 0; j < b; ++j) {
                auto& r = rows[active[j]];
                nn::lstm_cell(gs[j], r.c.data(), H, r.c.data(), r.h.data());
                p_att[j].assign(n_tok, 0.0);
                hs[j] = r.h.data();
                us[j] = u.data() + j * D;
                ps[j] = p_att[j].data();
                zs[j] = r.z.data();
            }
            nn::attention_rows(hs, ctx.enc.tokens, m.att_W->value, us, ps, zs);
            for (std::size_t j = 0; j < b; ++j) {
                const auto& r = rows[active[j]];
                std::copy_n(r.h.data(), H, hz.data() + j * (H + D));
                std::copy_n(r.z.data(), D, hz.data() + j * (H + D) + H);
            }

            // Output heads, batched per focus kind.
            std::vector<std::vector<double>> logits(b);
            std::vector<std::vector<Action>> cands(b);
            score_heads(ctx, focus, hz, logits, cands, proj);

            // Choose, apply, log.
            std::vector<std::size_t> spawn_from;
            for (std::size_t j = 0; j < b; ++j) {
                auto& r = rows[active[j]];
                std::size_t pick = 0;
                if (r.forced) {
                    if (r.forced_pos >= r.forced->size())
                        throw DecodeError("forced actions exhausted in " + std::string(clause_name(r.clause)));
                    const Action want = (*r.forced)[r.forced_pos++];
                    auto it = std::find(cands[j].begin(), cands[j].end(), want);
                    if (it == cands[j].end())
                        throw DecodeError("forced action " + action_text(want, *g_) + " is not legal here");
                    pick = static_cast<std::size_t>(it - cands[j].begin());
                } else {
                    for (std::size_t c = 1; c < cands[j].size(); ++c)
                        if (logits[j][c] > logits[j][pick]) pick = c;
                }
                StepRecord rec;
                rec.clause = r.clause;
                rec.body_clause = r.body_clause;
                rec.action = cands[j][pick];
                rec.node_type = focus[j].node_type;
                rec.field = focus[j].field;
                rec.iteration = iteration;
                if (rec.action.kind == ActionKind::ApplyRule) rec.p_att = std::move(p_att[j]);
                if (ctx.opt.record_logits) {
                    rec.candidates = cands[j];
                    rec.logits = logits[j];
                }
                if (ctx.opt.record_inputs) rec.input.assign(xs[j], xs[j] + IN);
                const bool at_root = r.builder.step() == 0;
                r.h_log.push_back(r.h);
                r.builder.apply(rec.action);
                r.prev_action = m.action_index(rec.action);
                r.steps.push_back(std::move(rec));
                if (ctx.parallel && at_root && r.clause == ClauseKind::Ieu && r.body_clause < 0 &&
                    !g_->rule(r.steps.back().action.id).is_none)
                    spawn_from.push_back(active[j]);
            }
            for (std::size_t idx : spawn_from) spawn_body(ctx, rows, idx);
            ++iteration;
        }
        return iteration;
    }

    /// Replaces the pending body of an IEU row with one fresh row per body clause.
    void spawn_body(const Ctx& ctx, std::vector<detail::Row>& rows, std::size_t idx) const {
        const auto slots = rows[idx].builder.detach_frontier();
        const std::vector<double> parent = rows[idx].h_log.front();
        const std::vector<double> c0 = m_->c_init->value.data, h0 = m_->h_init->value.data;
        std::vector<double> z0(m_->dims.token_dim());
        std::vector<double> u(m_->dims.token_dim()), p(ctx.enc.tokens.rows);
        nn::attention(h0.data(), ctx.enc.tokens, m_->att_W->value, u.data(), p.data(), z0.data());
        for (AstNode* slot : slots) {
            auto bk = g_->clause_of(slot->node_type);
            if (!bk) throw DecodeError("IEU body slot outside every clause");
            const auto bi = static_cast<std::size_t>(clause_index(*bk));
            auto row = make_row(ctx, ClauseKind::Ieu, static_cast<int>(bi), c0, h0, z0, -1, parent,
                                ctx.plan ? &ctx.plan->body[bi] : nullptr, slot->node_type, slot->field);
            row.slot = slot;
            rows[idx].body.push_back(rows.size());
            rows.push_back(std::move(row));
        }
    }

    void score_heads(const Ctx& ctx, const std::vector<Focus>& focus, const std::vector<double>& hz,
                     std::vector<std::vector<double>>& logits, std::vector<std::vector<Action>>& cands,
                     std::vector<double>& proj) const {
        const auto& m = *m_;
        const auto HZ = m.dims.hidden + m.dims.token_dim();
        const std::size_t b = focus.size();
        auto batch = [&](NodeKind kind, const nn::Tensor& W, const double* bias, std::vector<std::size_t>& which) {
            which.clear();
            for (std::size_t j = 0; j < b; ++j)
                if (focus[j].kind == kind) which.push_back(j);
            if (which.empty()) return;
            proj.assign(which.size() * W.rows, 0.0);
            std::vector<const double*> xs;
            std::vector<double*> ys;
            for (std::size_t i = 0; i < which.size(); ++i) {
                xs.push_back(hz.data() + which[i] * HZ);
                ys.push_back(proj.data() + i * W.rows);
            }
            nn::affine_rows(xs, W, bias, ys);
        };
        std::vector<std::size_t> which;

        batch(NodeKind::Nonterminal, m.rule_W->value, m.rule_b->value.data.data(), which);
        for (std::size_t i = 0; i < which.size(); ++i) {
            const std::size_t j = which[i];
            const double* all = proj.data() + i * m.rule_W->value.rows;
            for (int rid : g_->rules_for(focus[j].node_type)) {
                cands[j].push_back(Action::apply_rule(rid));
                logits[j].push_back(all[rid]);
            }
        }
        auto match = [&](NodeKind kind, const nn::Tensor& W, const nn::Tensor& keys, ActionKind ak,
                         const char* what) {
            batch(kind, W, nullptr, which);
            if (!which.empty() && keys.rows == 0) throw DecodeError(std::string("no ") + what + " to select from");
            for (std::size_t i = 0; i < which.size(); ++i) {
                const std::size_t j = which[i];
                const double* q = proj.data() + i * W.rows;
                for (std::size_t c = 0; c < keys.rows; ++c) {
                    cands[j].push_back({ak, static_cast<int>(c)});
                    logits[j].push_back(nn::dot(q, keys.row_ptr(c), keys.cols));
                }
            }
        };
        match(NodeKind::ColumnSlot, m.col_W->value, ctx.enc.columns, ActionKind::SelectColumn, "columns");
        match(NodeKind::TableSlot, m.tab_W->value, ctx.enc.tables, ActionKind::SelectTable, "tables");
        match(NodeKind::ValueSlot, m.val_W->value, ctx.enc.tokens, ActionKind::SelectValue, "question tokens");
    }

    const Model* m_;
    const Grammar* g_;
};

/// Per-ApplyRule attention rows, then the clause prior rows when given.
/// Columns: kind,step,clause,rule,<one per question token>.
inline void write_attention_csv(std::ostream& os, const DecodeResult& r, std::span<const std::string> question,
                                const Grammar& g, const std::array<std::vector<double>, kClauseCount>* prior) {
    os << "kind,step,clause,rule";
    for (const auto& t : question) os << ',' << t;
    os << '\n';
    int step = 0;
    for (const auto& cd : r.clauses)
        for (const auto& s : cd.steps) {
            if (s.action.kind == ActionKind::ApplyRule) {
                os << "att," << step << ',' << clause_name(s.clause) << ',' << g.rule_label(s.action.id);
                for (double p : s.p_att) os << ',' << p;
                os << '\n';
            }
            ++step;
        }
    if (prior)
        for (auto k : kClauseOrder) {
            os << "prior,," << clause_name(k) << ',';
            for (double p : (*prior)[static_cast<std::size_t>(clause_index(k))]) os << ',' << p;
            os << '\n';
        }
}

}  // namespace sqlpar
