#pragma once

// Shared plumbing for the command-line tool: run configuration, evaluation
// by hardness bucket, the decoding benchmark, and the attention probes.

#include <algorithm>
#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "sqlpar/corpus.hpp"
#include "sqlpar/decoder.hpp"
#include "sqlpar/eval.hpp"
#include "sqlpar/training.hpp"

namespace sqlpar {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string grammar;
    std::string data;
    std::string schemas;
    std::string checkpoint;
    std::string out_dir = "out";
    std::string mode = "parallel";
    std::string align = "on";
    std::uint64_t seed = 1;
    std::string dims;  // e.g. "emb=32,hidden=64"; unset keys keep their defaults
    double lr = 1e-3;
    int epochs = 200;
    int batch = 2;
    double align_weight = 1.0;
    bool align_mean = false;
    int step_budget = 100;
    // bench
    int reps = 5;
    int warmup = 10;
    int threads = 0;
    // gen
    int n = 1000;
    double paraphrase_rate = 0.2;
    int min_clauses = 2;
    // decode / attn / align
    std::string question;
    std::string db;
    int example = -1;
};

namespace detail {

inline bool readable(const std::string& path) {
    std::ifstream in(path);
    return static_cast<bool>(in);
}

}  // namespace detail

/// Every problem with the configuration for one subcommand, not just the first.
inline std::vector<std::string> validate(const RunConfig& c, std::string_view cmd) {
    std::vector<std::string> errs;
    auto need_file = [&](const std::string& key, const std::string& path) {
        if (path.empty())
            errs.push_back(key + " is required");
        else if (!detail::readable(path))
            errs.push_back(key + " '" + path + "' cannot be read");
    };
    need_file("grammar", c.grammar);
    if (!parse_mode(c.mode)) errs.push_back("mode must be sequential or parallel, got '" + c.mode + "'");
    if (c.align != "on" && c.align != "off") errs.push_back("align must be on or off, got '" + c.align + "'");
    if (c.step_budget < 1) errs.push_back("step_budget must be positive");
    if (!c.dims.empty()) {
        try {
            auto d = parse_dims(c.dims);
            if (d.word_buckets == 0 || d.emb == 0 || d.type_emb == 0 || d.hidden == 0 || d.enc_hidden == 0)
                errs.push_back("dims entries must be positive");
        } catch (const std::exception& e) {
            errs.push_back(std::string("dims: ") + e.what());
        }
    }
    const bool uses_data = cmd == "train" || cmd == "eval" || cmd == "bench" || cmd == "align" || cmd == "attn";
    if (uses_data) need_file("data", c.data);
    if (uses_data || cmd == "decode") need_file("schemas", c.schemas);
    if (cmd == "eval" || cmd == "bench" || cmd == "decode" || cmd == "attn") need_file("checkpoint", c.checkpoint);
    if (cmd == "train") {
        if (c.epochs < 1) errs.push_back("epochs must be at least 1");
        if (c.batch < 1) errs.push_back("batch must be at least 1");
        if (!(c.lr > 0)) errs.push_back("lr must be positive");
        if (c.align_weight < 0) errs.push_back("align_weight must not be negative");
    }
    if (cmd == "bench") {
        if (c.reps < 5) errs.push_back("reps must be at least 5");
        if (c.warmup < 10) errs.push_back("warmup must be at least 10");
        if (c.threads < 0) errs.push_back("threads must not be negative");
    }
    if (cmd == "decode") {
        if (trim(c.question).empty()) errs.push_back("question is required");
        if (c.db.empty()) errs.push_back("db is required");
    }
    if (cmd == "attn" && c.example < 0) errs.push_back("example is required");
    if (cmd == "gen") {
        if (c.n < 1) errs.push_back("n must be at least 1");
        if (c.paraphrase_rate < 0 || c.paraphrase_rate > 1) errs.push_back("paraphrase_rate must lie in [0, 1]");
    }
    if (cmd != "gen" && cmd != "decode" && cmd != "align" && c.out_dir.empty()) errs.push_back("out_dir is required");
    return errs;
}

inline ModelDims dims_of(const RunConfig& c) { return c.dims.empty() ? ModelDims{} : parse_dims(c.dims); }

inline TrainConfig train_config(const RunConfig& c) {
    TrainConfig t;
    t.mode = *parse_mode(c.mode);
    t.loss.align = c.align == "on";
    t.loss.align_weight = c.align_weight;
    t.loss.align_mean = c.align_mean;
    t.epochs = c.epochs;
    t.batch_size = c.batch;
    t.adam.lr = c.lr;
    t.seed = c.seed;
    t.step_budget = c.step_budget;
    return t;
}

/// A model shaped by the checkpoint's own dims, then loaded.
inline std::unique_ptr<Model> load_model(const std::string& path, const Grammar& g) {
    auto meta = nn::read_checkpoint_meta(path);
    auto m = std::make_unique<Model>(g, parse_dims(meta["dims"]), 0);
    m->load(path);
    return m;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
    struct Bucket {
        std::size_t n = 0, hits = 0;
        double em() const { return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0; }
    };
    std::array<Bucket, kHardnessLevels.size()> buckets;
    Bucket overall;
    std::size_t invalid = 0;  // decodes that overran the budget or failed to replay
};

inline EvalReport evaluate(const Model& m, const Grammar& g, const Dataset& d, DecodeMode mode, int step_budget = 100) {
    Decoder dec(m, g);
    DecodeOptions opt;
    opt.step_budget = step_budget;
    EvalReport rep;
    for (const auto& ex : d.examples) {
        auto& b = rep.buckets[static_cast<std::size_t>(hardness(ex.gold, g))];
        ++b.n;
        ++rep.overall.n;
        try {
            auto r = dec.decode(ex.question, d.schema_of(ex), mode, opt);
            replay(r.actions(), g, ex.question);
            if (exact_match(r.ast, ex.gold, g)) {
                ++b.hits;
                ++rep.overall.hits;
            }
        } catch (const DecodeError&) {
            ++rep.invalid;
        } catch (const AstError&) {
            ++rep.invalid;
        }
    }
    return rep;
}

inline void print_eval(std::ostream& os, const EvalReport& r) {
    os << std::left << std::setw(10) << "bucket" << std::right << std::setw(8) << "n" << std::setw(8) << "EM" << '\n';
    auto line = [&](std::string_view name, const EvalReport::Bucket& b) {
        os << std::left << std::setw(10) << name << std::right << std::setw(8) << b.n << std::setw(8) << std::fixed
           << std::setprecision(3) << b.em() << '\n';
    };
    for (auto h : kHardnessLevels) line(hardness_name(h), r.buckets[static_cast<std::size_t>(h)]);
    line("all", r.overall);
    os << "invalid decodes: " << r.invalid << '\n';
}

inline void write_eval_csv(std::ostream& os, const EvalReport& r) {
    os << "bucket,n,hits,em\n";
    auto line = [&](std::string_view name, const EvalReport::Bucket& b) {
        os << name << ',' << b.n << ',' << b.hits << ',' << b.em() << '\n';
    };
    for (auto h : kHardnessLevels) line(hardness_name(h), r.buckets[static_cast<std::size_t>(h)]);
    line("all", r.overall);
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchOptions {
    int reps = 5;
    int warmup = 10;
    int threads = 0;
    int step_budget = 100;
};

struct BenchReport {
    std::size_t queries = 0;
    std::vector<double> seq_qps, par_qps;  // one per repetition
    double seq_median = 0, par_median = 0, speedup = 0;
    long seq_steps = 0;       // actions taken by the sequential decoder
    long par_steps = 0;       // actions taken by the parallel decoder
    long par_iterations = 0;  // batched steps on the parallel critical path
    double step_bound = 0;    // seq_steps / par_iterations
    std::array<long, kClauseCount> clause_steps{};  // sequential, by clause
    long longest_clause_steps = 0;  // sum over queries of the longest clause
    double bottleneck_share = 0;    // longest_clause_steps / seq_steps
    bool stable = true;             // outputs identical across repetitions
    int threads = 0;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Queries per second for both modes on the same model. Each query is timed
/// in both modes back to back, alternating which goes first, so drifting
/// machine load hits both modes alike. Encoding is part of every decode.
inline BenchReport bench(const Model& m, const Grammar& g, const Dataset& d, const BenchOptions& opt = {}) {
    if (d.examples.empty()) throw std::invalid_argument("bench over an empty corpus");
    using clock = std::chrono::steady_clock;
    Decoder dec(m, g);
    DecodeOptions seq_opt, par_opt;
    seq_opt.step_budget = par_opt.step_budget = opt.step_budget;
    par_opt.threads = opt.threads;
    auto run = [&](const Example& ex, DecodeMode mode) {
        return dec.decode(ex.question, d.schema_of(ex), mode, mode == DecodeMode::Parallel ? par_opt : seq_opt);
    };

    BenchReport rep;
    rep.queries = d.examples.size();
    rep.threads = opt.threads;
    for (int i = 0; i < std::max(opt.warmup, 10); ++i) {
        const auto& ex = d.examples[static_cast<std::size_t>(i) % d.examples.size()];
        run(ex, DecodeMode::Sequential);
        run(ex, DecodeMode::Parallel);
    }

    std::vector<std::vector<Action>> first_seq, first_par;
    for (int r = 0; r < opt.reps; ++r) {
        double t_seq = 0, t_par = 0;
        for (std::size_t i = 0; i < d.examples.size(); ++i) {
            const auto& ex = d.examples[i];
            for (int k = 0; k < 2; ++k) {
                const bool par = (k + i + static_cast<std::size_t>(r)) % 2 == 1;
                const auto t0 = clock::now();
                auto res = run(ex, par ? DecodeMode::Parallel : DecodeMode::Sequential);
                const double dt = std::chrono::duration<double>(clock::now() - t0).count();
                (par ? t_par : t_seq) += dt;
                auto& first = par ? first_par : first_seq;
                if (r == 0) {
                    first.push_back(res.actions());
                    if (par) {
                        rep.par_steps += res.total_steps;
                        rep.par_iterations += res.lstm_iterations;
                    } else {
                        rep.seq_steps += res.total_steps;
                        long longest = 0;
                        for (std::size_t c = 0; c < kClauseCount; ++c) {
                            const auto n = static_cast<long>(res.clauses[c].steps.size());
                            rep.clause_steps[c] += n;
                            longest = std::max(longest, n);
                        }
                        rep.longest_clause_steps += longest;
                    }
                } else if (res.actions() != first[i]) {
                    rep.stable = false;
                }
            }
        }
        rep.seq_qps.push_back(static_cast<double>(rep.queries) / t_seq);
        rep.par_qps.push_back(static_cast<double>(rep.queries) / t_par);
    }
    rep.seq_median = detail::median(rep.seq_qps);
    rep.par_median = detail::median(rep.par_qps);
    rep.speedup = rep.par_median / rep.seq_median;
    rep.step_bound = static_cast<double>(rep.seq_steps) / static_cast<double>(std::max(rep.par_iterations, 1L));
    rep.bottleneck_share = static_cast<double>(rep.longest_clause_steps) / static_cast<double>(std::max(rep.seq_steps, 1L));
    return rep;
}

inline void print_bench(std::ostream& os, const BenchReport& r) {
    os << std::fixed << std::setprecision(2);
    os << "queries          " << r.queries << '\n';
    os << "sequential q/s   " << r.seq_median << "  (median of " << r.seq_qps.size() << ")\n";
    os << "parallel q/s     " << r.par_median << "  (median of " << r.par_qps.size() << ")"
       << (r.threads > 1 ? "  [clauses on " + std::to_string(r.threads) + " threads]" : std::string("  [batched]"))
       << '\n';
    os << std::setprecision(3);
    os << "speedup          " << r.speedup << '\n';
    os << "step bound       " << r.step_bound << "  (" << r.seq_steps << " steps / " << r.par_iterations
       << " parallel iterations)\n";
    os << "longest clause   " << r.bottleneck_share << " of sequential steps\n";
    os << "steps by clause ";
    for (auto k : kClauseOrder) os << ' ' << clause_name(k) << '=' << r.clause_steps[static_cast<std::size_t>(clause_index(k))];
    os << '\n' << "stable outputs   " << (r.stable ? "yes" : "no") << '\n';
}

inline void write_bench_csv(std::ostream& os, const BenchReport& r) {
    os << "rep,sequential_qps,parallel_qps\n";
    for (std::size_t i = 0; i < r.seq_qps.size(); ++i) os << i << ',' << r.seq_qps[i] << ',' << r.par_qps[i] << '\n';
    os << "median," << r.seq_median << ',' << r.par_median << '\n';
    os << "# speedup=" << r.speedup << ",step_bound=" << r.step_bound << ",seq_steps=" << r.seq_steps
       << ",par_steps=" << r.par_steps << ",par_iterations=" << r.par_iterations
       << ",bottleneck_share=" << r.bottleneck_share << ",threads=" << r.threads << '\n';
}

// ---------------------------------------------------------------------------
// Attention against the alignment prior

/// Attention on one example under its own oracle actions, so rows line up
/// with the prior whatever the model would have chosen.
inline DecodeResult forced_attention(const Model& m, const Grammar& g, const Dataset& d, const Example& ex,
                                     DecodeMode mode) {
    Decoder dec(m, g);
    DecodeOptions opt;
    opt.step_budget = 1000;
    return dec.decode(ex.question, d.schema_of(ex), mode, opt, &ex.trace);
}

/// Per clause: examples whose segment is proper (a strict sub-span of the
/// question), and of those, how many put more mean attention mass inside
/// the segment than a uniform distribution would (len(S) / len(question)).
struct SegmentFocus {
    std::array<std::size_t, kClauseCount> proper{};
    std::array<std::size_t, kClauseCount> above{};

    double rate(std::size_t k) const {
        return proper[k] ? static_cast<double>(above[k]) / static_cast<double>(proper[k]) : 1.0;
    }
    double worst_rate() const {
        double w = 1.0;
        for (std::size_t k = 0; k < kClauseCount; ++k) w = std::min(w, rate(k));
        return w;
    }
};

inline SegmentFocus segment_focus(const Model& m, const Grammar& g, const Dataset& d, DecodeMode mode) {
    SegmentFocus f;
    for (const auto& ex : d.examples) {
        const int n = static_cast<int>(ex.question.size());
        auto r = forced_attention(m, g, d, ex, mode);
        std::array<double, kClauseCount> mass{};
        std::array<int, kClauseCount> rows{};
        for (const auto& cd : r.clauses)
            for (const auto& s : cd.steps) {
                if (s.action.kind != ActionKind::ApplyRule) continue;
                const auto k = static_cast<std::size_t>(clause_index(s.clause));
                const auto& seg = ex.segments[k];
                if (seg.whole_question) continue;
                for (int i = seg.begin; i < seg.end; ++i) mass[k] += s.p_att[static_cast<std::size_t>(i)];
                ++rows[k];
            }
        for (std::size_t k = 0; k < kClauseCount; ++k) {
            const auto& seg = ex.segments[k];
            if (seg.whole_question || seg.end - seg.begin >= n || rows[k] == 0) continue;
            ++f.proper[k];
            const double baseline = static_cast<double>(seg.end - seg.begin) / static_cast<double>(n);
            if (mass[k] / rows[k] > baseline) ++f.above[k];
        }
    }
    return f;
}

inline void print_alignment_stats(std::ostream& os, const AlignmentStats& st) {
    os << "pairs            " << st.pairs << '\n';
    os << "fallback pairs   " << st.fallback_pairs << "  (" << std::fixed << std::setprecision(3)
       << st.fallback_fraction << ")\n";
    for (auto k : kClauseOrder) {
        const auto& h = st.length_histogram[static_cast<std::size_t>(clause_index(k))];
        os << std::left << std::setw(8) << clause_name(k) << std::right;
        for (const auto& [len, count] : h) os << ' ' << len << ':' << count;
        os << '\n';
    }
}

inline void write_alignment_stats_csv(std::ostream& os, const AlignmentStats& st) {
    os << "clause,segment_length,count\n";
    for (auto k : kClauseOrder)
        for (const auto& [len, count] : st.length_histogram[static_cast<std::size_t>(clause_index(k))])
            os << clause_name(k) << ',' << len << ',' << count << '\n';
    os << "# pairs=" << st.pairs << ",fallback_pairs=" << st.fallback_pairs
       << ",fallback_fraction=" << st.fallback_fraction << '\n';
}

inline AlignmentStats dataset_alignment_stats(const Dataset& d) {
    std::vector<ClauseSegments> segs;
    segs.reserve(d.examples.size());
    for (const auto& ex : d.examples) segs.push_back(ex.segments);
    return alignment_stats(segs);
}

}  // namespace sqlpar
