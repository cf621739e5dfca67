#pragma once

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>

#include "sqlpar/ast.hpp"
#include "sqlpar/grammar.hpp"
#include "sqlpar/nn/params.hpp"

namespace sqlpar {

struct ModelDims {
    std::size_t word_buckets = 4096;
    std::size_t emb = 32;       // words, actions, fields, schema items
    std::size_t type_emb = 16;  // node types
    std::size_t hidden = 64;    // decoder LSTM
    std::size_t enc_hidden = 64;  // per direction; token vectors are 2x this

    std::size_t token_dim() const { return 2 * enc_hidden; }
    std::size_t input_dim() const { return emb + emb + type_emb + token_dim() + hidden; }

    std::string describe() const {
        std::ostringstream os;
        os << "buckets=" << word_buckets << ",emb=" << emb << ",type=" << type_emb << ",hidden=" << hidden
           << ",enc=" << enc_hidden;
        return os.str();
    }
};

inline std::string fingerprint_hex(const Grammar& g) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(g.fingerprint()));
    return buf;
}

/// Every trainable tensor of the parser, registered in a fixed order.
struct Model {
    ModelDims dims;
    std::size_t n_rules = 0;
    std::string grammar_fingerprint;
    nn::ParameterStore params;

    // encoder
    nn::Parameter* word_emb;
    nn::Parameter* token_link_emb;
    nn::Parameter* enc_fwd_W;
    nn::Parameter* enc_fwd_b;
    nn::Parameter* enc_bwd_W;
    nn::Parameter* enc_bwd_b;
    nn::Parameter* schema_kind_emb;  // row 0 column, row 1 table
    nn::Parameter* schema_link_emb;  // row 0 unlinked, row 1 linked
    nn::Parameter* col_table_proj;   // mixes the parent table's name into a column vector
    // decoder
    nn::Parameter* action_emb;  // rules, then SelectColumn, SelectTable, SelectValue
    nn::Parameter* field_emb;
    nn::Parameter* type_emb;
    nn::Parameter* dec_W;
    nn::Parameter* dec_b;
    nn::Parameter* c_init;
    nn::Parameter* h_init;
    nn::Parameter* start_action;
    nn::Parameter* att_W;
    // output heads
    nn::Parameter* rule_W;
    nn::Parameter* rule_b;
    nn::Parameter* col_W;
    nn::Parameter* tab_W;
    nn::Parameter* val_W;

    Model(const Grammar& g, ModelDims d, std::uint64_t seed) : dims(d) {
        n_rules = g.rules().size();
        grammar_fingerprint = fingerprint_hex(g);
        const auto E = d.emb, H = d.hidden, EH = d.enc_hidden, D = d.token_dim();
        word_emb = &params.add("word_emb", d.word_buckets, E);
        token_link_emb = &params.add("token_link_emb", 2, E);
        enc_fwd_W = &params.add("enc_fwd_W", 4 * EH, E + EH);
        enc_fwd_b = &params.add("enc_fwd_b", 1, 4 * EH);
        enc_bwd_W = &params.add("enc_bwd_W", 4 * EH, E + EH);
        enc_bwd_b = &params.add("enc_bwd_b", 1, 4 * EH);
        schema_kind_emb = &params.add("schema_kind_emb", 2, E);
        schema_link_emb = &params.add("schema_link_emb", 2, E);
        col_table_proj = &params.add("col_table_proj", E, E);
        action_emb = &params.add("action_emb", n_rules + 3, E);
        field_emb = &params.add("field_emb", g.field_count(), E);
        type_emb = &params.add("type_emb", g.node_types().size(), d.type_emb);
        dec_W = &params.add("dec_W", 4 * H, d.input_dim() + H);
        dec_b = &params.add("dec_b", 1, 4 * H);
        c_init = &params.add("c_init", 1, H);
        h_init = &params.add("h_init", 1, H);
        start_action = &params.add("start_action", 1, E);
        att_W = &params.add("att_W", H, D);
        rule_W = &params.add("rule_W", n_rules, H + D);
        rule_b = &params.add("rule_b", 1, n_rules);
        col_W = &params.add("col_W", E, H + D);
        tab_W = &params.add("tab_W", E, H + D);
        val_W = &params.add("val_W", D, H + D);
        params.init_uniform(seed, 0.1);
    }

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    /// Row of action_emb for an action.
    int action_index(const Action& a) const {
        switch (a.kind) {
            case ActionKind::ApplyRule: return a.id;
            case ActionKind::SelectColumn: return static_cast<int>(n_rules);
            case ActionKind::SelectTable: return static_cast<int>(n_rules) + 1;
            case ActionKind::SelectValue: return static_cast<int>(n_rules) + 2;
        }
        return 0;
    }

    nn::CheckpointMeta metadata() const {
        return {{"dims", dims.describe()}, {"grammar", grammar_fingerprint}};
    }

    void save(const std::string& path) const { nn::save_checkpoint_file(path, params, metadata()); }

    /// Loads a checkpoint written for the same grammar and dims.
    void load(const std::string& path) {
        auto meta = nn::read_checkpoint_meta(path);
        if (meta["grammar"] != grammar_fingerprint)
            throw nn::CheckpointError("checkpoint grammar fingerprint " + meta["grammar"] +
                                      " does not match grammar " + grammar_fingerprint);
        if (meta["dims"] != dims.describe())
            throw nn::CheckpointError("checkpoint dims " + meta["dims"] + " differ from " + dims.describe());
        nn::load_checkpoint_file(path, params);
    }
};

/// Parses the dims string stored in checkpoint metadata.
inline ModelDims parse_dims(const std::string& s) {
    ModelDims d;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) throw nn::CheckpointError("bad dims entry '" + item + "'");
        auto key = item.substr(0, eq);
        auto v = static_cast<std::size_t>(std::stoull(item.substr(eq + 1)));
        if (key == "buckets") d.word_buckets = v;
        else if (key == "emb") d.emb = v;
        else if (key == "type") d.type_emb = v;
        else if (key == "hidden") d.hidden = v;
        else if (key == "enc") d.enc_hidden = v;
        else throw nn::CheckpointError("unknown dims key '" + key + "'");
    }
    return d;
}

}  // namespace sqlpar
