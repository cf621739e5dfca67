#pragma once

// Teacher-forced losses and the training loop.
//
// The tape forward replays the oracle trace through the same step function
// the decoder uses. Which state, previous action and parent a step reads
// depends on the mode, so both modes train on the computation they decode with.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqlpar/corpus.hpp"
#include "sqlpar/decoder.hpp"
#include "sqlpar/encoder.hpp"
#include "sqlpar/eval.hpp"
#include "sqlpar/nn/adam.hpp"
#include "sqlpar/nn/tape.hpp"

namespace sqlpar {

class TrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Where one teacher-forced step reads its inputs from. -1 means the learned
/// initial state (for state and parent) or the start embedding (for prev).
struct ScheduledStep {
    int state = -1;   // step whose (c, h, z) feeds this one
    int prev = -1;    // step whose action is the previous action
    int parent = -1;  // step whose hidden state is the parent feeding
};

inline std::vector<ScheduledStep> build_schedule(const ActionTrace& trace, DecodeMode mode) {
    std::vector<ScheduledStep> out(trace.steps.size());
    if (mode == DecodeMode::Sequential) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const int before = static_cast<int>(i) - 1;
            out[i].state = before;
            out[i].prev = before;
            // A clause root's parent is the state the clause starts from.
            out[i].parent = trace.steps[i].parent_step >= 0 ? trace.steps[i].parent_step : before;
        }
        return out;
    }
    // One chain per decoding row: a clause, or one clause of an IEU body.
    std::map<std::pair<int, int>, int> last;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& s = trace.steps[i];
        const std::pair<int, int> row{clause_index(s.clause), s.body_clause};
        auto it = last.find(row);
        const int before = it == last.end() ? -1 : it->second;
        out[i].state = before;
        out[i].prev = before;
        out[i].parent = s.parent_step;
        last[row] = static_cast<int>(i);
    }
    return out;
}

/// Sum over ApplyRule rows of the squared distance between prior and attention.
inline double align_loss(const std::vector<std::vector<double>>& prior, const std::vector<std::vector<double>>& att) {
    if (prior.size() != att.size()) throw std::invalid_argument("align_loss: row count mismatch");
    double s = 0;
    for (std::size_t j = 0; j < prior.size(); ++j) {
        if (prior[j].size() != att[j].size())
            throw std::invalid_argument("align_loss: row " + std::to_string(j) + " length mismatch");
        for (std::size_t i = 0; i < prior[j].size(); ++i) {
            const double d = prior[j][i] - att[j][i];
            s += d * d;
        }
    }
    return s;
}

struct LossOptions {
    bool align = true;
    double align_weight = 1.0;
    bool align_mean = false;  // divide L by the number of ApplyRule steps
};

struct LossBreakdown {
    double action_nll = 0;
    double align_loss = 0;
    double total = 0;
};

struct ForcedForward {
    nn::Var action_nll, align_loss, total;
    std::vector<nn::Var> p_att;  // every step
    std::vector<std::vector<Action>> candidates;
    std::vector<std::vector<double>> logits;  // aligned with candidates

    LossBreakdown breakdown(const nn::Tape& t) const {
        return {t.scalar(action_nll), t.scalar(align_loss), t.scalar(total)};
    }
};

struct StepInputs {
    nn::Var prev_action, field, node_type, z_prev, parent_h, h_prev, c_prev;  // each 1 x width
};

struct StepVars {
    nn::Var c, h, z, p_att;
    nn::Var scores;  // all rule logits, or one score per column / table / token
};

/// One decoder step on the tape: LSTM cell, attention over the question, and
/// the head that scores actions of `kind`.
inline StepVars decoder_step(nn::Tape& t, const Model& m, const StepInputs& in, const EncodedVars& enc,
                             ActionKind kind) {
    const auto H = m.dims.hidden, D = m.dims.token_dim();
    const std::size_t n_tok = t.value(enc.tokens).rows;
    const nn::Var x = t.concat_cols({in.prev_action, in.field, in.node_type, in.z_prev, in.parent_h, in.h_prev});
    const nn::Var ch = t.lstm(t.affine(x, t.param(*m.dec_W), t.param(*m.dec_b)), in.c_prev);
    StepVars s;
    s.c = t.slice_cols(ch, 0, H);
    s.h = t.slice_cols(ch, H, H);
    const nn::Var az = t.attention(s.h, enc.tokens, t.param(*m.att_W));
    s.z = t.slice_cols(az, 0, D);
    s.p_att = t.slice_cols(az, D, n_tok);
    const nn::Var hz = t.concat_cols({s.h, s.z});
    switch (kind) {
        case ActionKind::ApplyRule: s.scores = t.affine(hz, t.param(*m.rule_W), t.param(*m.rule_b)); break;
        case ActionKind::SelectColumn:
            if (!enc.columns.valid()) throw TrainError("no columns to select from");
            s.scores = t.dot_rows(t.affine(hz, t.param(*m.col_W)), enc.columns);
            break;
        case ActionKind::SelectTable: s.scores = t.dot_rows(t.affine(hz, t.param(*m.tab_W)), enc.tables); break;
        case ActionKind::SelectValue: s.scores = t.dot_rows(t.affine(hz, t.param(*m.val_W)), enc.tokens); break;
    }
    return s;
}

/// Positions in `scores` that are legal at a focus node, and the actions they stand for.
inline std::pair<std::vector<int>, std::vector<Action>> legal_positions(const Grammar& g, ActionKind kind,
                                                                        int node_type, std::size_t n_scores) {
    std::pair<std::vector<int>, std::vector<Action>> out;
    if (kind == ActionKind::ApplyRule) {
        for (int r : g.rules_for(node_type)) {
            out.first.push_back(r);
            out.second.push_back(Action::apply_rule(r));
        }
    } else {
        for (std::size_t c = 0; c < n_scores; ++c) {
            out.first.push_back(static_cast<int>(c));
            out.second.push_back({kind, static_cast<int>(c)});
        }
    }
    return out;
}

/// Teacher-forced pass over one example's oracle trace on the tape.
inline ForcedForward forced_forward(nn::Tape& t, const Model& m, const Grammar& g,
                                    std::span<const std::string> question, const SchemaDef& schema,
                                    const ActionTrace& trace, const AlignmentPrior& prior, DecodeMode mode,
                                    const LossOptions& lo = {}) {
    if (trace.steps.empty()) throw TrainError("empty oracle trace");
    const std::size_t n_tok = question.size();
    const auto enc = encode(t, m, question, schema);
    const auto sched = build_schedule(trace, mode);

    const nn::Var h0 = t.param(*m.h_init), c0 = t.param(*m.c_init);
    const nn::Var z0 = t.slice_cols(t.attention(h0, enc.tokens, t.param(*m.att_W)), 0, m.dims.token_dim());
    const nn::Var act = t.param(*m.action_emb), fld = t.param(*m.field_emb), typ = t.param(*m.type_emb);

    ForcedForward out;
    std::vector<nn::Var> cs, hs, zs, nlls, sqs;
    const auto at = [](const std::vector<nn::Var>& v, int k, nn::Var dflt) {
        return k < 0 ? dflt : v[static_cast<std::size_t>(k)];
    };
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const auto& s = trace.steps[i];
        const auto& sc = sched[i];
        StepInputs in;
        in.prev_action = sc.prev < 0 ? t.param(*m.start_action)
                                     : t.rows(act, {m.action_index(trace.steps[static_cast<std::size_t>(sc.prev)].action)});
        in.field = t.rows(fld, {s.field});
        in.node_type = t.rows(typ, {s.node_type});
        in.z_prev = at(zs, sc.state, z0);
        in.parent_h = at(hs, sc.parent, h0);
        in.h_prev = at(hs, sc.state, h0);
        in.c_prev = at(cs, sc.state, c0);
        const auto st = decoder_step(t, m, in, enc, s.action.kind);
        cs.push_back(st.c);
        hs.push_back(st.h);
        zs.push_back(st.z);
        out.p_att.push_back(st.p_att);

        auto [pos, cands] = legal_positions(g, s.action.kind, s.node_type, t.value(st.scores).cols);
        try {
            nlls.push_back(t.masked_nll(st.scores, pos, s.action.id));
        } catch (const nn::ShapeError&) {
            throw TrainError("oracle action " + action_text(s.action, g) + " is outside the candidate set");
        }
        std::vector<double> lg;
        for (int q : pos) lg.push_back(t.value(st.scores).data[static_cast<std::size_t>(q)]);
        out.candidates.push_back(std::move(cands));
        out.logits.push_back(std::move(lg));

        if (s.action.kind == ActionKind::ApplyRule) {
            const auto& row = prior[static_cast<std::size_t>(clause_index(s.clause))];
            if (row.size() != n_tok) throw TrainError("alignment prior length does not match the question");
            sqs.push_back(t.sq_dist(st.p_att, row));
        }
    }

    out.action_nll = t.weighted_sum(nlls, std::vector<double>(nlls.size(), 1.0 / static_cast<double>(nlls.size())));
    if (lo.align && !sqs.empty()) {
        const double w = lo.align_mean ? 1.0 / static_cast<double>(sqs.size()) : 1.0;
        out.align_loss = t.weighted_sum(sqs, std::vector<double>(sqs.size(), w));
    } else {
        out.align_loss = t.constant(nn::Tensor(1, 1, 0.0));
    }
    out.total = t.weighted_sum({out.action_nll, out.align_loss}, {1.0, lo.align ? lo.align_weight : 0.0});
    return out;
}

inline ForcedForward forced_forward(nn::Tape& t, const Model& m, const Grammar& g, const Example& ex,
                                    const SchemaDef& schema, DecodeMode mode, const LossOptions& lo = {}) {
    check_cache(ex, g);
    return forced_forward(t, m, g, ex.question, schema, ex.trace, ex.prior, mode, lo);
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
    DecodeMode mode = DecodeMode::Parallel;
    LossOptions loss;
    int epochs = 200;
    int batch_size = 2;
    nn::AdamConfig adam;
    std::uint64_t seed = 1;
    bool stop_at_full_em = true;
    int step_budget = 100;
};

struct EpochMetrics {
    int epoch = 0;
    double action_nll = 0;
    double align_loss = 0;
    double total = 0;
    double train_em = 0;
};

inline std::string metrics_header() { return "epoch,action_nll,align_loss,total,train_em"; }

inline std::string metrics_line(const EpochMetrics& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.4f", e.epoch, e.action_nll, e.align_loss, e.total, e.train_em);
    return buf;
}

struct TrainReport {
    std::vector<EpochMetrics> history;
    bool reached_full_em = false;
    long optimizer_steps = 0;
};

/// Greedy-decoding exact match over a set of examples.
inline double exact_match_rate(const Model& m, const Grammar& g, const Dataset& d, const std::vector<std::size_t>& which,
                               DecodeMode mode, int step_budget = 100) {
    if (which.empty()) return 0.0;
    Decoder dec(m, g);
    DecodeOptions opt;
    opt.step_budget = step_budget;
    std::size_t hits = 0;
    for (std::size_t i : which) {
        const auto& ex = d.examples[i];
        try {
            auto r = dec.decode(ex.question, d.schema_of(ex), mode, opt);
            hits += exact_match(r.ast, ex.gold, g);
        } catch (const DecodeError&) {
            // A budget overrun is a miss.
        }
    }
    return static_cast<double>(hits) / static_cast<double>(which.size());
}

inline std::vector<std::size_t> all_indices(const Dataset& d) {
    std::vector<std::size_t> v(d.examples.size());
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

/// Shuffled minibatch Adam on the total loss. Each epoch logs the mean loss
/// components over its examples and the greedy train EM afterwards.
inline TrainReport train(Model& m, const Grammar& g, const Dataset& d, const TrainConfig& cfg,
                         std::ostream* log = nullptr,
                         const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
    if (d.examples.empty()) throw TrainError("no training examples");
    if (cfg.batch_size < 1) throw TrainError("batch_size must be at least 1");
    for (const auto& ex : d.examples) check_cache(ex, g);

    nn::Adam opt(m.params, cfg.adam);
    std::mt19937_64 rng(cfg.seed);
    auto order = all_indices(d);
    const auto everything = order;
    TrainReport rep;
    if (log) *log << metrics_header() << '\n';
    m.params.zero_grad();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        EpochMetrics em;
        em.epoch = epoch;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            const double inv = 1.0 / static_cast<double>(e - b);
            for (std::size_t k = b; k < e; ++k) {
                const auto& ex = d.examples[order[k]];
                nn::Tape t;
                auto f = forced_forward(t, m, g, ex, d.schema_of(ex), cfg.mode, cfg.loss);
                const auto lb = f.breakdown(t);
                if (!std::isfinite(lb.total))
                    throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + " on '" +
                                     ex.question_text + "' (nll " + std::to_string(lb.action_nll) + ", align " +
                                     std::to_string(lb.align_loss) + ")");
                em.action_nll += lb.action_nll;
                em.align_loss += lb.align_loss;
                em.total += lb.total;
                t.backward(t.scale(f.total, inv));
            }
            try {
                opt.step();
            } catch (const std::runtime_error& err) {
                throw TrainError("epoch " + std::to_string(epoch) + ": " + err.what());
            }
        }
        const double n = static_cast<double>(order.size());
        em.action_nll /= n;
        em.align_loss /= n;
        em.total /= n;
        em.train_em = exact_match_rate(m, g, d, everything, cfg.mode, cfg.step_budget);
        rep.history.push_back(em);
        if (log) *log << metrics_line(em) << '\n' << std::flush;
        if (on_epoch) on_epoch(em);
        if (cfg.stop_at_full_em && em.train_em == 1.0) {
            rep.reached_full_em = true;
            break;
        }
    }
    rep.reached_full_em = !rep.history.empty() && rep.history.back().train_em == 1.0;
    rep.optimizer_steps = opt.steps();
    return rep;
}

}  // namespace sqlpar
