// sqlpar: train, evaluate, decode and benchmark the clause-parallel parser.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "sqlpar/harness.hpp"

namespace fs = std::filesystem;
using namespace sqlpar;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

std::ofstream open_out(const RunConfig& c, const std::string& name) {
    fs::create_directories(c.out_dir);
    std::ofstream os(fs::path(c.out_dir) / name);
    if (!os) throw std::runtime_error("cannot write " + (fs::path(c.out_dir) / name).string());
    return os;
}

Dataset load(const RunConfig& c, const Grammar& g) { return load_dataset(c.data, c.schemas, g); }

int cmd_gen(const RunConfig& c, const Grammar& g) {
    GenConfig gc;
    gc.seed = c.seed;
    gc.n = c.n;
    gc.paraphrase_rate = c.paraphrase_rate;
    gc.min_clauses = c.min_clauses;
    if (auto errs = validate(gc, g); !errs.empty()) {
        for (const auto& e : errs) std::cerr << "config: " << e << '\n';
        return kConfigError;
    }
    auto d = generate_corpus(gc, g);
    fs::create_directories(c.out_dir);
    const auto ex_path = (fs::path(c.out_dir) / "examples.jsonl").string();
    const auto sc_path = (fs::path(c.out_dir) / "schemas.json").string();
    save_dataset(d, ex_path, sc_path);

    auto cov = rule_coverage(d.examples, g);
    auto os = open_out(c, "coverage.csv");
    os << "rule,fraction\n";
    double lowest = 1.0;
    for (std::size_t r = 0; r < cov.size(); ++r) {
        os << '"' << g.rule_label(static_cast<int>(r)) << "\"," << cov[r] << '\n';
        lowest = std::min(lowest, cov[r]);
    }
    auto st = dataset_alignment_stats(d);
    std::cout << "wrote " << d.examples.size() << " examples to " << ex_path << '\n'
              << "schemas          " << sc_path << '\n'
              << "fallback pairs   " << std::fixed << std::setprecision(3) << st.fallback_fraction << '\n'
              << "rarest rule      " << lowest << " of examples\n";
    return kOk;
}

int cmd_train(const RunConfig& c, const Grammar& g) {
    auto d = load(c, g);
    Model m(g, dims_of(c), c.seed);
    const auto tc = train_config(c);
    auto metrics = open_out(c, "metrics.csv");
    std::cout << "training " << d.examples.size() << " examples, " << mode_name(tc.mode) << ", align "
              << c.align << '\n';
    auto rep = train(m, g, d, tc, &metrics, [](const EpochMetrics& e) {
        std::cout << metrics_line(e) << '\n';
    });
    const auto ckpt = (fs::path(c.out_dir) / "model.ckpt").string();
    m.save(ckpt);

    auto st = dataset_alignment_stats(d);
    auto as = open_out(c, "align_stats.csv");
    write_alignment_stats_csv(as, st);
    std::cout << "epochs " << rep.history.size() << ", optimizer steps " << rep.optimizer_steps << ", train EM "
              << std::fixed << std::setprecision(4) << rep.history.back().train_em << '\n'
              << "checkpoint " << ckpt << '\n';
    print_alignment_stats(std::cout, st);
    return kOk;
}

int cmd_eval(const RunConfig& c, const Grammar& g) {
    auto m = load_model(c.checkpoint, g);
    auto d = load(c, g);
    auto rep = evaluate(*m, g, d, *parse_mode(c.mode), c.step_budget);
    print_eval(std::cout, rep);
    auto os = open_out(c, "eval.csv");
    write_eval_csv(os, rep);
    return kOk;
}

int cmd_decode(const RunConfig& c, const Grammar& g) {
    auto m = load_model(c.checkpoint, g);
    std::ifstream in(c.schemas);
    auto schemas = read_schemas(in);
    auto it = schemas.find(c.db);
    if (it == schemas.end()) {
        std::cerr << "config: db '" << c.db << "' is not in " << c.schemas << '\n';
        return kConfigError;
    }
    const auto q = tokenize_question(c.question);
    Decoder dec(*m, g);
    DecodeOptions opt;
    opt.step_budget = c.step_budget;
    opt.threads = c.threads;
    auto r = dec.decode(q, it->second, *parse_mode(c.mode), opt);
    std::cout << render_sql(r.ast, it->second, g) << '\n';
    return kOk;
}

int cmd_bench(const RunConfig& c, const Grammar& g) {
    auto m = load_model(c.checkpoint, g);
    auto d = load(c, g);
    BenchOptions bo;
    bo.reps = c.reps;
    bo.warmup = c.warmup;
    bo.threads = c.threads;
    bo.step_budget = c.step_budget;
    auto rep = bench(*m, g, d, bo);
    print_bench(std::cout, rep);
    auto os = open_out(c, "bench.csv");
    write_bench_csv(os, rep);
    return kOk;
}

int cmd_align(const RunConfig& c, const Grammar& g) {
    auto d = load(c, g);
    if (c.example >= static_cast<int>(d.examples.size())) {
        std::cerr << "config: example " << c.example << " is out of range (" << d.examples.size() << " examples)\n";
        return kConfigError;
    }
    auto st = dataset_alignment_stats(d);
    print_alignment_stats(std::cout, st);
    auto os = open_out(c, "align_stats.csv");
    write_alignment_stats_csv(os, st);
    if (c.example >= 0) {
        const auto& ex = d.examples[static_cast<std::size_t>(c.example)];
        auto ta = token_align(ex.question, ex.gold, d.schema_of(ex), g);
        auto mx = open_out(c, "align_" + std::to_string(c.example) + ".csv");
        write_alignment_matrix(mx, ex.question, ex.segments, ta);
    }
    return kOk;
}

int cmd_attn(const RunConfig& c, const Grammar& g) {
    auto m = load_model(c.checkpoint, g);
    auto d = load(c, g);
    if (c.example >= static_cast<int>(d.examples.size())) {
        std::cerr << "config: example " << c.example << " is out of range (" << d.examples.size() << " examples)\n";
        return kConfigError;
    }
    const auto& ex = d.examples[static_cast<std::size_t>(c.example)];
    auto r = forced_attention(*m, g, d, ex, *parse_mode(c.mode));
    const auto name = "attn_" + std::to_string(c.example) + ".csv";
    auto os = open_out(c, name);
    os << std::setprecision(9);
    write_attention_csv(os, r, ex.question, g, &ex.prior);
    int rows = 0;
    for (const auto& cd : r.clauses)
        for (const auto& s : cd.steps) rows += s.action.kind == ActionKind::ApplyRule;
    std::cout << ex.question_text << '\n'
              << rows << " ApplyRule rows written to " << (fs::path(c.out_dir) / name).string() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Clause-parallel grammar-based text-to-SQL parser"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "flat key = value file; command-line flags win");

    RunConfig c;
    c.grammar = std::string(SQLPAR_DATA_DIR) + "/sql.grammar";
    app.add_option("--grammar", c.grammar, "grammar file");
    app.add_option("--data", c.data, "examples file (JSON lines)");
    app.add_option("--schemas", c.schemas, "schemas file (JSON)");
    app.add_option("--checkpoint", c.checkpoint, "model checkpoint");
    app.add_option("--out-dir,--out_dir", c.out_dir, "directory for reports and checkpoints");
    app.add_option("--mode", c.mode, "sequential | parallel");
    app.add_option("--align", c.align, "alignment loss on | off");
    app.add_option("--seed", c.seed, "random seed");
    app.add_option("--dims", c.dims, "model sizes, e.g. emb=32,hidden=64");
    app.add_option("--lr", c.lr, "Adam learning rate");
    app.add_option("--epochs", c.epochs, "training epochs");
    app.add_option("--batch", c.batch, "minibatch size");
    app.add_option("--align-weight,--align_weight", c.align_weight, "weight of the alignment loss");
    app.add_flag("--align-mean,--align_mean", c.align_mean, "average the alignment loss over steps");
    app.add_option("--step-budget,--step_budget", c.step_budget, "decoder steps allowed per clause");
    app.add_option("--reps", c.reps, "bench repetitions (median reported)");
    app.add_option("--warmup", c.warmup, "bench warmup decodes");
    app.add_option("--threads", c.threads, "run parallel-mode clauses on threads instead of one batch");
    app.add_option("--n", c.n, "gen: number of examples");
    app.add_option("--paraphrase-rate,--paraphrase_rate", c.paraphrase_rate, "gen: paraphrased fraction");
    app.add_option("--min-clauses,--min_clauses", c.min_clauses, "gen: non-None clauses per query");
    app.add_option("--question", c.question, "decode: question text");
    app.add_option("--db", c.db, "decode: database id");
    app.add_option("--example", c.example, "align/attn: example index");

    const std::vector<std::pair<const char*, const char*>> cmds = {
        {"gen", "write a generated corpus"},
        {"train", "train a model and write its checkpoint and metrics"},
        {"eval", "exact match by hardness bucket"},
        {"decode", "parse one question"},
        {"bench", "queries per second, sequential against parallel"},
        {"align", "segment statistics and alignment matrices"},
        {"attn", "attention rows beside the alignment prior"},
    };
    for (const auto& [name, help] : cmds) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();

    if (auto errs = validate(c, cmd); !errs.empty()) {
        for (const auto& e : errs) std::cerr << "config: " << e << '\n';
        return kConfigError;
    }
    try {
        const Grammar g = load_grammar_file(c.grammar);
        if (cmd == "gen") return cmd_gen(c, g);
        if (cmd == "train") return cmd_train(c, g);
        if (cmd == "eval") return cmd_eval(c, g);
        if (cmd == "decode") return cmd_decode(c, g);
        if (cmd == "bench") return cmd_bench(c, g);
        if (cmd == "align") return cmd_align(c, g);
        if (cmd == "attn") return cmd_attn(c, g);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}
