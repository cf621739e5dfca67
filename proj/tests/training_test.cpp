#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sqlpar/nn/grad_check.hpp"
#include "sqlpar/training.hpp"
#include "test_support.hpp"

using namespace sqlpar;
using namespace sqlpar::testing;

namespace {

Example car_example(const std::string& question, const std::string& sql) {
    Example ex;
    ex.db_id = "car_1";
    ex.question_text = question;
    ex.sql = sql;
    prepare_example(ex, car_schema(), shipped_grammar());
    return ex;
}

Example union_example() {
    return car_example("models with year 1990 union models with year 2000 ordered by horsepower",
                       "select model from cars_data where year = 1990 union select model from cars_data where year "
                       "= 2000 order by horsepower desc");
}

Example join_example() {
    return car_example("maker and model from germany ordered by model id top 100",
                       "select T1.maker , T2.model from car_makers as T1 join model_list as T2 where T1.country = "
                       "'germany' order by T2.model_id asc limit 100");
}

Dataset car_dataset(std::vector<Example> exs) {
    Dataset d;
    d.schemas.emplace("car_1", car_schema());
    d.examples = std::move(exs);
    return d;
}

Dataset generated(int n, std::uint64_t seed) {
    GenConfig c;
    c.n = n;
    c.seed = seed;
    return generate_corpus(c, shipped_grammar());
}

}  // namespace

TEST(Schedule, SequentialIsOneChain) {
    auto ex = union_example();
    auto s = build_schedule(ex.trace, DecodeMode::Sequential);
    ASSERT_EQ(s.size(), ex.trace.size());
    EXPECT_EQ(s[0].state, -1);
    EXPECT_EQ(s[0].parent, -1);
    for (std::size_t i = 1; i < s.size(); ++i) {
        EXPECT_EQ(s[i].state, static_cast<int>(i) - 1);
        EXPECT_EQ(s[i].prev, static_cast<int>(i) - 1);
        EXPECT_LT(s[i].parent, static_cast<int>(i));
    }
}

TEST(Schedule, ParallelClausesAndBodiesStartFresh) {
    auto ex = union_example();
    auto s = build_schedule(ex.trace, DecodeMode::Parallel);
    int fresh = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& st = ex.trace.steps[i];
        EXPECT_LT(s[i].state, static_cast<int>(i));
        EXPECT_LT(s[i].parent, static_cast<int>(i));
        if (s[i].state < 0) {
            ++fresh;
            EXPECT_EQ(s[i].prev, -1);
            // Top-level clause roots read h_init; body roots read the IEU step.
            if (st.body_clause < 0)
                EXPECT_EQ(s[i].parent, -1);
            else
                EXPECT_EQ(ex.trace.steps[static_cast<std::size_t>(s[i].parent)].clause, ClauseKind::Ieu);
        } else {
            const auto& before = ex.trace.steps[static_cast<std::size_t>(s[i].state)];
            EXPECT_EQ(before.clause, st.clause);
            EXPECT_EQ(before.body_clause, st.body_clause);
        }
    }
    EXPECT_EQ(fresh, 6 + 5);
}

TEST(ForcedForward, LogitsEqualInferenceLogitsInBothModes) {
    const auto& g = shipped_grammar();
    Model m(g, ModelDims{}, 21);
    Decoder dec(m, g);
    for (const auto& ex : {union_example(), join_example()}) {
        for (auto mode : {DecodeMode::Sequential, DecodeMode::Parallel}) {
            nn::Tape t;
            auto f = forced_forward(t, m, g, ex, car_schema(), mode);
            auto r = dec.decode(ex.question, car_schema(), mode, {.record_logits = true}, &ex.trace);
            std::size_t i = 0;
            for (const auto& cd : r.clauses)
                for (const auto& s : cd.steps) {
                    ASSERT_LT(i, f.logits.size());
                    EXPECT_EQ(s.candidates, f.candidates[i]) << mode_name(mode) << " step " << i;
                    EXPECT_EQ(s.logits, f.logits[i]) << mode_name(mode) << " step " << i;
                    if (s.action.kind == ActionKind::ApplyRule)
                        EXPECT_EQ(s.p_att, t.value(f.p_att[i]).data) << mode_name(mode) << " step " << i;
                    ++i;
                }
            EXPECT_EQ(i, ex.trace.size());
        }
    }
}

TEST(ForcedForward, ModesDifferAfterTheFirstClause) {
    const auto& g = shipped_grammar();
    Model m(g, ModelDims{}, 22);
    auto ex = join_example();
    nn::Tape a, b;
    auto fa = forced_forward(a, m, g, ex, car_schema(), DecodeMode::Sequential);
    auto fb = forced_forward(b, m, g, ex, car_schema(), DecodeMode::Parallel);
    EXPECT_EQ(fa.logits.front(), fb.logits.front());
    EXPECT_NE(a.scalar(fa.action_nll), b.scalar(fb.action_nll));
}

TEST(AlignLoss, HandCase) {
    EXPECT_NEAR(align_loss({{1.0, 0.0}}, {{0.5, 0.5}}), 0.5, 1e-12);
    EXPECT_EQ(align_loss({{0.25, 0.75}, {1, 0}}, {{0.25, 0.75}, {1, 0}}), 0.0);
    EXPECT_THROW(align_loss({{1.0, 0.0}}, {{1.0}}), std::invalid_argument);
    EXPECT_THROW(align_loss({{1.0}}, {}), std::invalid_argument);
}

TEST(AlignLoss, ZeroWhenAttentionEqualsPrior) {
    const auto& g = shipped_grammar();
    Model m(g, ModelDims{}, 23);
    auto ex = union_example();  // GROUP is None: one ApplyRule step read from the initial state
    nn::Tape t;
    auto f = forced_forward(t, m, g, ex, car_schema(), DecodeMode::Parallel);
    const auto gi = static_cast<std::size_t>(clause_index(ClauseKind::Group));
    const auto [b, e] = ex.trace.clause_spans[gi];
    ASSERT_EQ(e - b, 1);

    // Its attention row becomes the GROUP prior; a trace holding only that step then has L = 0.
    auto prior = ex.prior;
    prior[gi] = t.value(f.p_att[static_cast<std::size_t>(b)]).data;
    ActionTrace one;
    one.steps.push_back(ex.trace.steps[static_cast<std::size_t>(b)]);
    nn::Tape u;
    auto g1 = forced_forward(u, m, g, ex.question, car_schema(), one, prior, DecodeMode::Parallel);
    EXPECT_EQ(u.scalar(g1.align_loss), 0.0);
    EXPECT_GT(u.scalar(forced_forward(u, m, g, ex.question, car_schema(), one, ex.prior, DecodeMode::Parallel)
                           .align_loss),
              0.0);
}

TEST(AlignLoss, MatchesPureFunctionAndSkipsSelectSteps) {
    const auto& g = shipped_grammar();
    Model m(g, ModelDims{}, 24);
    auto ex = join_example();
    nn::Tape t;
    auto f = forced_forward(t, m, g, ex, car_schema(), DecodeMode::Parallel);
    std::vector<std::vector<double>> prior_rows, att_rows;
    for (std::size_t i = 0; i < ex.trace.size(); ++i) {
        const auto& s = ex.trace.steps[i];
        if (s.action.kind != ActionKind::ApplyRule) continue;
        prior_rows.push_back(ex.prior[static_cast<std::size_t>(clause_index(s.clause))]);
        att_rows.push_back(t.value(f.p_att[i]).data);
    }
    EXPECT_NEAR(t.scalar(f.align_loss), align_loss(prior_rows, att_rows), 1e-12);

    t.backward(f.align_loss);
    std::size_t select_steps = 0, rule_steps_with_grad = 0;
    for (std::size_t i = 0; i < ex.trace.size(); ++i) {
        const auto& gp = t.grad(f.p_att[i]);
        double mag = 0;
        for (double v : gp.data) mag += std::abs(v);
        if (ex.trace.steps[i].action.kind == ActionKind::ApplyRule) {
            rule_steps_with_grad += mag > 0;
        } else {
            ++select_steps;
            EXPECT_EQ(mag, 0.0) << "step " << i;
        }
    }
    EXPECT_GT(select_steps, 0u);
    EXPECT_GT(rule_steps_with_grad, 0u);
}

TEST(AlignLoss, AttentionMatrixGradientMatchesFiniteDifferences) {
    const auto& g = shipped_grammar();
    Model m(g, tiny_dims(), 25);
    auto ex = car_example("horsepower of cars data from year 1970", "select horsepower from cars_data where year = 1970");
    auto loss = [&] {
        nn::Tape t;
        auto f = forced_forward(t, m, g, ex, car_schema(), DecodeMode::Parallel);
        return t.scalar(f.align_loss);
    };
    nn::Tape t;
    auto f = forced_forward(t, m, g, ex, car_schema(), DecodeMode::Parallel);
    m.params.zero_grad();
    t.backward(f.align_loss);
    const auto analytic = m.att_W->grad;
    m.params.zero_grad();
    double worst = 0;
    const double eps = 1e-5;
    for (std::size_t j = 0; j < m.att_W->value.size(); ++j) {
        const double orig = m.att_W->value.data[j];
        m.att_W->value.data[j] = orig + eps;
        const double fp = loss();
        m.att_W->value.data[j] = orig - eps;
        const double fm = loss();
        m.att_W->value.data[j] = orig;
        const double cd = (fp - fm) / (2 * eps);
        worst = std::max(worst, std::abs(cd - analytic.data[j]) / (std::abs(cd) + std::abs(analytic.data[j]) + 1e-12));
    }
    EXPECT_LT(worst, 1e-5);
}

// One decoder step with its incoming state registered as parameters, so the
// check covers the cell, attention, every head, the NLL and the alignment term.
TEST(GradCheck, DecoderStepForEveryHead) {
    const auto& g = shipped_grammar();
    auto ex = union_example();
    for (auto kind : {ActionKind::ApplyRule, ActionKind::SelectColumn, ActionKind::SelectTable,
                      ActionKind::SelectValue}) {
        Model m(g, tiny_dims(), 26);
        const auto H = m.dims.hidden, D = m.dims.token_dim();
        auto& z = m.params.add("probe_z", 1, D);
        auto& parent = m.params.add("probe_parent", 1, H);
        auto& h = m.params.add("probe_h", 1, H);
        auto& c = m.params.add("probe_c", 1, H);
        m.params.init_uniform(27, 0.5);
        // Focus and target taken from the first trace step of this kind.
        const TraceStep* step = nullptr;
        for (const auto& s : ex.trace.steps)
            if (s.action.kind == kind && !step) step = &s;
        ASSERT_NE(step, nullptr);
        const auto& prior = ex.prior[static_cast<std::size_t>(clause_index(step->clause))];
        auto rep = nn::grad_check(m.params, [&](nn::Tape& t) {
            auto enc = encode(t, m, ex.question, car_schema());
            StepInputs in{t.rows(t.param(*m.action_emb), {3}), t.rows(t.param(*m.field_emb), {step->field}),
                          t.rows(t.param(*m.type_emb), {step->node_type}), t.param(z), t.param(parent),
                          t.param(h), t.param(c)};
            auto st = decoder_step(t, m, in, enc, kind);
            auto [pos, cands] = legal_positions(g, kind, step->node_type, t.value(st.scores).cols);
            return t.add(t.masked_nll(st.scores, pos, step->action.id), t.sq_dist(st.p_att, prior));
        });
        EXPECT_LT(rep.max_rel_error, 1e-4) << static_cast<int>(kind) << ": " << rep.worst_param << "["
                                           << rep.worst_index << "] analytic " << rep.worst_analytic << " numeric "
                                           << rep.worst_numeric;
        EXPECT_GT(rep.checked, 1000u);
    }
}

TEST(GradCheck, AlignmentLossOverAWholeTrace) {
    const auto& g = shipped_grammar();
    Model m(g, tiny_dims(), 28);
    auto ex = car_example("horsepower of cars data from year 1970", "select horsepower from cars_data where year = 1970");
    for (auto mode : {DecodeMode::Sequential, DecodeMode::Parallel}) {
        auto rep = nn::grad_check(m.params, [&](nn::Tape& t) {
            return forced_forward(t, m, g, ex, car_schema(), mode).align_loss;
        });
        EXPECT_LT(rep.max_rel_error, 1e-4) << mode_name(mode) << ": " << rep.worst_param << "[" << rep.worst_index
                                           << "] analytic " << rep.worst_analytic << " numeric " << rep.worst_numeric;
    }
}

TEST(GradCheck, TotalLossOverAWholeTrace) {
    const auto& g = shipped_grammar();
    Model m(g, tiny_dims(), 26);
    auto ex = union_example();
    for (auto mode : {DecodeMode::Sequential, DecodeMode::Parallel}) {
        auto rep = nn::grad_check(m.params, [&](nn::Tape& t) {
            return forced_forward(t, m, g, ex, car_schema(), mode).total;
        });
        EXPECT_LT(rep.max_rel_error, 1e-4) << mode_name(mode) << ": " << rep.worst_param << "[" << rep.worst_index
                                           << "] analytic " << rep.worst_analytic << " numeric " << rep.worst_numeric;
        EXPECT_GT(rep.checked, 1000u);
    }
}

TEST(Loss, ZeroAlignWeightLeavesNllOnly) {
    const auto& g = shipped_grammar();
    Model m(g, ModelDims{}, 27);
    auto ex = join_example();
    for (LossOptions lo : {LossOptions{.align = false}, LossOptions{.align = true, .align_weight = 0.0}}) {
        nn::Tape t;
        auto f = forced_forward(t, m, g, ex, car_schema(), DecodeMode::Parallel, lo);
        EXPECT_EQ(t.scalar(f.total), t.scalar(f.action_nll));
    }
    nn::Tape t;
    auto f = forced_forward(t, m, g, ex, car_schema(), DecodeMode::Parallel);
    auto lb = f.breakdown(t);
    EXPECT_GT(lb.align_loss, 0.0);
    EXPECT_EQ(lb.total, lb.action_nll + lb.align_loss);
    nn::Tape u;
    auto mean = forced_forward(u, m, g, ex, car_schema(), DecodeMode::Parallel, {.align_mean = true});
    std::size_t rules = 0;
    for (const auto& s : ex.trace.steps) rules += s.action.kind == ActionKind::ApplyRule;
    EXPECT_NEAR(u.scalar(mean.align_loss) * static_cast<double>(rules), lb.align_loss, 1e-12);
}

TEST(Loss, UniformScoresGiveMeanLogK) {
    const auto& g = shipped_grammar();
    Model m(g, ModelDims{}, 28);
    for (auto* p : {m.rule_W, m.rule_b, m.col_W, m.tab_W, m.val_W}) p->value.zero();
    auto ex = join_example();
    nn::Tape t;
    auto f = forced_forward(t, m, g, ex, car_schema(), DecodeMode::Sequential);
    double expect = 0;
    for (const auto& c : f.candidates) expect += std::log(static_cast<double>(c.size()));
    expect /= static_cast<double>(f.candidates.size());
    EXPECT_NEAR(t.scalar(f.action_nll), expect, 1e-12);
}

TEST(Loss, OracleOutsideCandidatesIsAnError) {
    const auto& g = shipped_grammar();
    Model m(g, ModelDims{}, 29);
    auto ex = join_example();
    ex.trace.steps[0].action = Action::apply_rule(g.rules_for(g.clause_root(ClauseKind::From)).front());
    nn::Tape t;
    EXPECT_THROW(forced_forward(t, m, g, ex, car_schema(), DecodeMode::Parallel), TrainError);
}

TEST(Train, FullBatchLossMostlyFallsOnOneExample) {
    const auto& g = shipped_grammar();
    Model m(g, ModelDims{}, 30);
    auto d = car_dataset({join_example()});
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 1;
    cfg.stop_at_full_em = false;
    auto rep = train(m, g, d, cfg);
    ASSERT_EQ(rep.history.size(), 20u);
    int upticks = 0;
    for (std::size_t i = 1; i < rep.history.size(); ++i) upticks += rep.history[i].total > rep.history[i - 1].total;
    EXPECT_LE(upticks, 2);
    EXPECT_LT(rep.history.back().total, rep.history.front().total);
}

TEST(Train, HeldOutTwinImproves) {
    const auto& g = shipped_grammar();
    Model m(g, ModelDims{}, 31);
    const std::string sql = "select T1.horsepower from cars_data as T1 where T1.year > 1990";
    auto twin = car_example("show horsepower where year above 1990", sql);
    auto held = car_example("give horsepower where year above 1990", sql);
    auto nll = [&] {
        nn::Tape t;
        return t.scalar(forced_forward(t, m, g, held, car_schema(), DecodeMode::Parallel).action_nll);
    };
    const double before = nll();
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.stop_at_full_em = false;
    train(m, g, car_dataset({twin}), cfg);
    EXPECT_LT(nll(), before);
}

TEST(Train, MetricsLogAndDeterminism) {
    const auto& g = shipped_grammar();
    auto d = generated(6, 5);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.stop_at_full_em = false;
    std::ostringstream a, b, off;
    Model m1(g, ModelDims{}, 32), m2(g, ModelDims{}, 32), m3(g, ModelDims{}, 32);
    train(m1, g, d, cfg, &a);
    train(m2, g, d, cfg, &b);
    EXPECT_EQ(a.str(), b.str());
    for (std::size_t i = 0; i < m1.params.size(); ++i) EXPECT_EQ(m1.params[i].value, m2.params[i].value);

    std::istringstream in(a.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "epoch,action_nll,align_loss,total,train_em");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
    }
    EXPECT_EQ(rows, 3);

    cfg.loss.align = false;
    auto rep = train(m3, g, d, cfg, &off);
    for (const auto& e : rep.history) {
        EXPECT_EQ(e.align_loss, 0.0);
        EXPECT_EQ(e.total, e.action_nll);
    }
}

TEST(Train, OverfitsASmallCorpusInEitherMode) {
    const auto& g = shipped_grammar();
    auto d = generated(8, 9);
    for (auto mode : {DecodeMode::Sequential, DecodeMode::Parallel}) {
        Model m(g, ModelDims{}, 33);
        TrainConfig cfg;
        cfg.mode = mode;
        cfg.epochs = 150;
        cfg.adam.lr = 3e-3;
        cfg.batch_size = 1;
        auto rep = train(m, g, d, cfg);
        EXPECT_TRUE(rep.reached_full_em) << mode_name(mode) << " after " << rep.history.size() << " epochs, EM "
                                         << rep.history.back().train_em;
    }
}

TEST(Train, Errors) {
    const auto& g = shipped_grammar();
    Model m(g, ModelDims{}, 34);
    Dataset empty;
    EXPECT_THROW(train(m, g, empty, {}), TrainError);
    auto d = car_dataset({join_example()});
    TrainConfig bad;
    bad.batch_size = 0;
    EXPECT_THROW(train(m, g, d, bad), TrainError);
    d.examples[0].grammar_fingerprint ^= 1;
    EXPECT_THROW(train(m, g, d, {}), CorpusError);
}
