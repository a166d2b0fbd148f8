#include "coaug/cli.hpp"

#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "coaug/analysis.hpp"
#include "coaug/config.hpp"
#include "coaug/corpus.hpp"
#include "coaug/error.hpp"
#include "coaug/trainer.hpp"

namespace coaug::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Options every subcommand shares.
struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::string out = "out";
    std::size_t workers = 1;
    std::string data;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* workers_opt = nullptr;
    CLI::Option* data_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
    c.seed_opt = cmd->add_option("--seed", c.seed, "Root random seed (overrides the config)");
    cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
    c.workers_opt = cmd->add_option("--workers", c.workers, "Maximum worker threads")->check(CLI::PositiveNumber);
    c.data_opt = cmd->add_option("--data", c.data, "Dataset directory in BEIR layout (overrides data.dir)");
}

config::ExperimentConfig load(const Common& c) {
    auto cfg = c.config.empty() ? config::ExperimentConfig{} : config::load_config(c.config);
    if (c.data_opt->count()) cfg.data.dir = c.data;
    if (c.workers_opt->count()) cfg.train.workers = c.workers;
    if (c.seed_opt->count()) cfg.train.seed = c.seed;
    return cfg;
}

// Collects written artifacts and writes the manifest last.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void text(const std::string& name, const std::string& content) {
        const auto p = path(name);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream f(p, std::ios::binary);
        f << content;
        if (!f) throw IngestionError("cannot write " + p.string());
        record(name);
    }

    void record(const std::string& name) {
        if (!fs::exists(path(name))) throw IngestionError("artifact was not written: " + path(name).string());
        artifacts_.push_back(name);
    }

    void manifest(const std::string& command, const json& effective_config) {
        const json doc{{"command", command},
                       {"config_hash", config::hash_hex(config::config_hash(effective_config))},
                       {"config", effective_config},
                       {"artifacts", artifacts_}};
        std::ofstream f(path("manifest.json"), std::ios::binary);
        f << doc.dump(2) << '\n';
        if (!f) throw IngestionError("cannot write manifest in " + dir_.string());
    }

private:
    fs::path dir_;
    std::vector<std::string> artifacts_;
};

std::unique_ptr<trainer::Workspace> load_workspace(const config::ExperimentConfig& cfg) {
    if (cfg.data.dir.empty()) throw ConfigError("data.dir", "no dataset directory (set data.dir or pass --data)");
    auto data = corpus::load_beir(cfg.data.dir, cfg.data.split);
    std::vector<std::string> extra;
    const auto meta = fs::path(cfg.data.dir) / "synthetic.json";
    if (fs::exists(meta)) {
        std::ifstream in(meta);
        try {
            const auto doc = json::parse(in);
            extra = doc.at("bridge_tokens").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw IngestionError(meta.string() + ": " + e.what());
        }
    }
    return std::make_unique<trainer::Workspace>(std::move(data), std::move(extra), cfg.tokenizer);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(digits);
    s << v;
    return s.str();
}

// -- gen-corpus -------------------------------------------------------------------------------

struct GenArgs {
    Common common;
    std::size_t topics = 0, queries = 0, docs = 0;
    CLI::Option *topics_opt = nullptr, *queries_opt = nullptr, *docs_opt = nullptr;
};

void gen_corpus(const GenArgs& a, std::ostream& out) {
    auto cfg = a.common.config.empty() ? config::ExperimentConfig{} : config::load_config(a.common.config);
    if (a.common.seed_opt->count()) cfg.synthetic.seed = a.common.seed;
    if (a.topics_opt->count()) cfg.synthetic.n_topics = a.topics;
    if (a.queries_opt->count()) cfg.synthetic.n_queries = a.queries;
    if (a.docs_opt->count()) cfg.synthetic.n_docs = a.docs;
    cfg.synthetic.validate();
    const auto syn = corpus::generate_synthetic(cfg.synthetic);
    Outputs o(a.common.out);
    corpus::write_beir(syn.data, a.common.out);
    o.record("corpus.jsonl");
    o.record("queries.jsonl");
    o.record("qrels/train.tsv");
    const json meta{{"spec", config::to_json(cfg.synthetic)},
                    {"bridge_tokens", syn.all_bridge_tokens()},
                    {"query_topic", syn.query_topic},
                    {"doc_topic", syn.doc_topic}};
    o.text("synthetic.json", meta.dump(2) + "\n");
    o.manifest("gen-corpus", json{{"synthetic", config::to_json(cfg.synthetic)}});
    out << "wrote " << syn.data.docs.size() << " docs, " << syn.data.queries.size() << " queries to "
        << a.common.out << '\n';
}

// -- index ------------------------------------------------------------------------------------

struct IndexArgs {
    Common common;
    std::string kind;
    CLI::Option* kind_opt = nullptr;
};

void index_cmd(const IndexArgs& a, std::ostream& out) {
    auto cfg = load(a.common);
    if (a.kind_opt->count()) cfg.index.kind = retrieval::retriever_from_string(a.kind);
    const auto ws = load_workspace(cfg);
    Outputs o(a.common.out);
    if (cfg.index.kind == retrieval::RetrieverKind::Bm25) {
        const auto& idx = ws->raw_index();
        json docs = json::array();
        for (const auto& ref : idx.doc_refs()) docs.push_back({{"id", ref}, {"length", idx.doc_length(ref)}});
        json terms = json::object();
        for (const auto& t : idx.terms()) {
            json post = json::array();
            for (const auto& p : *idx.postings(t)) post.push_back({idx.doc_refs()[p.doc], p.tf});
            terms[t] = post;
        }
        const json dump{{"kind", "bm25"},
                        {"k1", idx.params().k1},
                        {"b", idx.params().b},
                        {"doc_count", idx.doc_count()},
                        {"avg_doc_length", idx.avg_doc_length()},
                        {"docs", docs},
                        {"postings", terms}};
        o.text("index.json", dump.dump() + "\n");
        out << "bm25 index: " << idx.doc_count() << " docs, " << idx.vocabulary_size() << " terms\n";
    } else {
        retrieval::DenseIndex idx = [&] {
            if (!cfg.index.embeddings.empty()) return retrieval::DenseIndex::load_embeddings(cfg.index.embeddings);
            std::vector<std::pair<std::string, std::vector<std::string>>> docs;
            for (std::size_t i = 0; i < ws->data().docs.size(); ++i) {
                docs.emplace_back(ws->data().docs[i].id, ws->doc_tokens(i));
            }
            return retrieval::DenseIndex::build(docs, cfg.index.dim, cfg.index.seed);
        }();
        std::ostringstream tsv;
        tsv.precision(17);
        for (std::size_t d = 0; d < idx.doc_count(); ++d) {
            tsv << idx.doc_refs()[d] << '\t';
            const auto v = idx.vector(d);
            for (std::size_t i = 0; i < v.size(); ++i) tsv << (i ? "," : "") << v[i];
            tsv << '\n';
        }
        o.text("embeddings.tsv", tsv.str());
        out << "dense index: " << idx.doc_count() << " docs, dim " << idx.dim() << '\n';
    }
    o.manifest("index", config::to_json(cfg));
}

// -- train ------------------------------------------------------------------------------------

struct TrainArgs {
    Common common;
    std::size_t steps = 0, q = 0, d_pos = 0, d_neg = 0, n_rollout = 0, n_samp = 0, eval_every = 0, m = 0;
    double lr = 0.0;
    std::string target, mode, retriever, resume;
    std::vector<CLI::Option*> opts;
};

void train_cmd(const TrainArgs& a, std::ostream& out) {
    auto cfg = load(a.common);
    auto& t = cfg.train;
    std::optional<trainer::Checkpoint> resumed;
    if (!a.resume.empty()) {
        resumed = trainer::load_checkpoint(a.resume);
        const auto workers = t.workers;
        t = resumed->config;
        t.workers = workers;
        if (a.common.seed_opt->count() && a.common.seed != resumed->state.seed) {
            throw ConfigError("train.seed", "cannot change the seed of a resumed run");
        }
    }
    auto flag = [&](std::size_t i) { return a.opts[i]->count() > 0; };
    if (flag(0)) t.steps = a.steps;
    if (flag(1)) t.q = a.q;
    if (flag(2)) t.d_pos = a.d_pos;
    if (flag(3)) t.d_neg = a.d_neg;
    if (flag(4)) t.n_rollout = a.n_rollout;
    if (flag(5)) t.n_samp = a.n_samp;
    if (flag(6)) t.eval_every = a.eval_every;
    if (flag(7)) t.learning_rate = a.lr;
    if (flag(8)) t.target = trainer::target_from_string(a.target);
    if (flag(9)) t.advantage.mode = advantage::mode_from_string(a.mode);
    if (flag(10)) t.retriever = retrieval::retriever_from_string(a.retriever);
    if (flag(11)) t.tokens_per_rollout = a.m;
    t.validate();

    const auto ws = load_workspace(cfg);
    const trainer::Trainer trainer(*ws, t);
    trainer::TrainState state;
    if (resumed) {
        const auto& v = *resumed->vocabulary;
        if (v.input_tokens() != ws->vocabulary()->input_tokens() ||
            v.output_tokens() != ws->vocabulary()->output_tokens()) {
            throw ValidationError("checkpoint vocabulary does not match the dataset in " + cfg.data.dir);
        }
        state = resumed->state;
    } else {
        state = trainer.init_state();
    }

    Outputs o(a.common.out);
    std::ofstream groups(o.path("reward_groups.jsonl"), std::ios::binary);
    trainer.run(state, [&](const trainer::StepReport& r) {
        json g = json::array();
        for (const auto& grp : r.reward_groups) g.push_back({{"kind", to_string(grp.kind)}, {"rewards", grp.rewards}});
        groups << json{{"step", r.row.step}, {"groups", g}}.dump() << '\n';
        if (r.row.ndcg10) {
            out << "step " << r.row.step << "  reward " << fixed(r.row.mean_reward) << "  ndcg@10 "
                << fixed(*r.row.ndcg10) << "  H(Q,D) " << fixed(*r.row.hqd, 3) << '\n';
        }
    });
    groups.close();
    if (!groups) throw IngestionError("cannot write reward_groups.jsonl");
    o.record("reward_groups.jsonl");

    trainer::save_checkpoint(o.path("checkpoint.json"), t, *ws->vocabulary(), state);
    o.record("checkpoint.json");
    trainer::write_history_csv(o.path("history.csv"), state.history);
    o.record("history.csv");
    trainer::write_history_json(o.path("history.json"), state.history);
    o.record("history.json");
    auto effective = config::to_json(cfg);
    effective["train"] = config::to_json(t);
    o.manifest("train", effective);
    if (state.best_ndcg) {
        out << "final ndcg@10 " << fixed(state.history.back().ndcg10.value_or(0.0)) << ", best "
            << fixed(*state.best_ndcg) << " at step " << state.best_step << '\n';
    }
}

// -- eval -------------------------------------------------------------------------------------

struct EvalArgs {
    Common common;
    std::string checkpoint, params;
    std::size_t k = 10;
    CLI::Option *checkpoint_opt = nullptr, *params_opt = nullptr, *k_opt = nullptr;
};

void eval_cmd(const EvalArgs& a, std::ostream& out) {
    auto cfg = load(a.common);
    if (a.checkpoint_opt->count()) cfg.eval.checkpoint = a.checkpoint;
    if (a.params_opt->count()) cfg.eval.params = a.params;
    if (a.k_opt->count()) cfg.eval.k = a.k;
    if (cfg.eval.checkpoint.empty()) throw ConfigError("eval.checkpoint", "no checkpoint given");
    if (cfg.eval.params != "final" && cfg.eval.params != "best") throw ConfigError("eval.params", "expected final or best");
    if (cfg.eval.k == 0) throw ConfigError("eval.k", "must be >= 1");
    const auto ck = trainer::load_checkpoint(cfg.eval.checkpoint);
    const auto ws = load_workspace(cfg);
    const policy::ToyPolicy pol(ck.vocabulary, cfg.eval.params == "best" ? ck.state.best_params : ck.state.params,
                                ws->tokenizer());
    const bool q = ck.config.target != trainer::Target::DocOnly;
    const bool d = ck.config.target != trainer::Target::QueryOnly;
    const trainer::EvalOptions opts{ck.config.retriever, ck.config.dense, cfg.eval.k, ck.config.prompts};
    const auto res = trainer::evaluate(q ? &pol : nullptr, d ? &pol : nullptr, ws->data(), ws->tokenizer(), opts);

    json rows = json::array();
    std::vector<std::vector<std::string>> table;
    for (const auto& r : res.per_query) {
        rows.push_back({{"query_id", r.query_id}, {"base_ndcg", r.base_ndcg}, {"ndcg", r.ndcg}});
        table.push_back({r.query_id, fixed(r.base_ndcg), fixed(r.ndcg)});
    }
    table.push_back({"mean", fixed(res.base_ndcg), fixed(res.ndcg)});
    const std::string k = std::to_string(cfg.eval.k);
    const json report{{"k", cfg.eval.k},
                      {"retriever", retrieval::to_string(ck.config.retriever)},
                      {"params", cfg.eval.params},
                      {"base_ndcg", res.base_ndcg},
                      {"ndcg", res.ndcg},
                      {"per_query", rows}};
    Outputs o(a.common.out);
    o.text("eval.json", report.dump(2) + "\n");
    const auto text = analysis::format_table({"query", "base ndcg@" + k, "augmented ndcg@" + k}, table);
    o.text("eval.txt", text);
    o.manifest("eval", config::to_json(cfg));
    out << text;
}

// -- ablate -----------------------------------------------------------------------------------

struct AblateArgs {
    Common common;
    std::string cells, seeds;
    std::size_t steps = 0;
    CLI::Option *cells_opt = nullptr, *seeds_opt = nullptr, *steps_opt = nullptr;
};

void ablate_cmd(const AblateArgs& a, std::ostream& out) {
    auto cfg = load(a.common);
    if (a.cells_opt->count()) cfg.ablate.cells = split_list(a.cells);
    if (a.seeds_opt->count()) {
        cfg.ablate.seeds.clear();
        for (const auto& s : split_list(a.seeds)) {
            try {
                cfg.ablate.seeds.push_back(std::stoull(s));
            } catch (const std::exception&) {
                throw ConfigError("ablate.seeds", "not an integer: '" + s + "'");
            }
        }
    }
    if (a.steps_opt->count()) cfg.train.steps = a.steps;
    if (cfg.ablate.cells.empty()) cfg.ablate.cells = analysis::known_cells();
    if (cfg.ablate.seeds.empty()) throw ConfigError("ablate.seeds", "at least one seed required");
    cfg.train.validate();
    const auto ws = load_workspace(cfg);
    const auto grid = analysis::ablation_grid(*ws, cfg.train, cfg.ablate.cells, cfg.ablate.seeds,
                                              [&](const std::string& line) { out << line << '\n'; });
    Outputs o(a.common.out);
    o.text("ablation.json", grid.to_json().dump(2) + "\n");
    o.text("ablation.txt", grid.to_text());
    o.manifest("ablate", config::to_json(cfg));
    out << grid.to_text();
}

// -- analyze ----------------------------------------------------------------------------------

struct AnalyzeArgs {
    Common common;
    std::vector<std::string> variants, cases;
    std::string groups;
    std::size_t k = 10;
    CLI::Option *variants_opt = nullptr, *cases_opt = nullptr, *k_opt = nullptr;
};

void analyze_cmd(const AnalyzeArgs& a, std::ostream& out) {
    auto cfg = load(a.common);
    if (a.variants_opt->count()) {
        cfg.analyze.variants.clear();
        for (const auto& v : a.variants) {
            const auto eq = v.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw ConfigError("analyze.variants", "expected name=checkpoint, got '" + v + "'");
            }
            cfg.analyze.variants.push_back({v.substr(0, eq), v.substr(eq + 1)});
        }
    }
    if (a.cases_opt->count()) cfg.analyze.cases = a.cases;
    if (a.k_opt->count()) cfg.analyze.k = a.k;
    if (cfg.analyze.variants.empty() && a.groups.empty() && cfg.analyze.anomaly_steps == 0) {
        throw ConfigError("analyze.variants", "nothing to analyze (give variants, --groups or anomaly_steps)");
    }
    const auto ws = load_workspace(cfg);
    Outputs o(a.common.out);

    // Resolve variants into owned policies.
    std::vector<std::unique_ptr<policy::ToyPolicy>> owned;
    std::vector<analysis::Variant> variants;
    for (const auto& v : cfg.analyze.variants) {
        analysis::Variant var{v.name, nullptr, nullptr};
        if (v.checkpoint == "identity") {
            // both sides raw
        } else if (v.checkpoint == "base") {
            const trainer::Trainer t(*ws, cfg.train);
            owned.push_back(std::make_unique<policy::ToyPolicy>(t.make_policy(t.init_state().params)));
            var.query_policy = var.doc_policy = owned.back().get();
        } else {
            const auto ck = trainer::load_checkpoint(v.checkpoint);
            owned.push_back(std::make_unique<policy::ToyPolicy>(ck.vocabulary, ck.state.params, ws->tokenizer()));
            if (ck.config.target != trainer::Target::DocOnly) var.query_policy = owned.back().get();
            if (ck.config.target != trainer::Target::QueryOnly) var.doc_policy = owned.back().get();
        }
        variants.push_back(var);
    }

    if (!variants.empty()) {
        const auto report = analysis::hqd_report(variants, ws->data(), ws->tokenizer(), cfg.train.retriever,
                                                 cfg.train.hqd_epsilon, cfg.train.prompts);
        o.text("hqd.json", report.to_json().dump(2) + "\n");
        o.text("hqd.txt", report.to_text());
        out << report.to_text();
        const trainer::EvalOptions opts{cfg.train.retriever, cfg.train.dense, cfg.analyze.k, cfg.train.prompts};
        for (const auto& qid : cfg.analyze.cases) {
            for (const auto& var : variants) {
                const auto rec = analysis::case_extract(var, ws->data(), qid, ws->tokenizer(), opts);
                o.text("case_" + var.name + "_" + qid + ".json", rec.to_json().dump(2) + "\n");
            }
        }
    }

    std::vector<std::vector<advantage::RewardGroup>> logged;
    if (!a.groups.empty()) {
        std::ifstream in(a.groups);
        if (!in) throw IngestionError("cannot open " + a.groups);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (line.empty()) continue;
            try {
                const auto doc = json::parse(line);
                std::vector<advantage::RewardGroup> step;
                for (const auto& g : doc.at("groups")) {
                    step.push_back({source_kind_from_string(g.at("kind").get<std::string>()),
                                    g.at("rewards").get<std::vector<double>>()});
                }
                logged.push_back(std::move(step));
            } catch (const json::exception& e) {
                throw IngestionError(a.groups + ":" + std::to_string(n) + ": " + e.what());
            }
        }
    } else if (cfg.analyze.anomaly_steps > 0) {
        auto t = cfg.train;
        t.steps = cfg.analyze.anomaly_steps;
        t.advantage.mode = advantage::Mode::Centering;
        const trainer::Trainer trainer(*ws, t);
        auto state = trainer.init_state();
        trainer.run(state, [&](const trainer::StepReport& r) { logged.push_back(r.reward_groups); });
    }
    if (!logged.empty()) {
        const auto rows = analysis::anomaly_table(logged, cfg.train.advantage);
        o.text("anomaly.json", analysis::anomaly_json(rows, cfg.train.advantage.std_threshold).dump(2) + "\n");
        o.text("anomaly.txt", analysis::anomaly_text(rows));
        out << analysis::anomaly_text(rows);
    }
    o.manifest("analyze", config::to_json(cfg));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Query-document co-augmentation with reinforcement learning", "coaug"};
    app.require_subcommand(1);
    app.fallthrough(false);
    app.failure_message(CLI::FailureMessage::help);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "Write a synthetic bridge-vocabulary corpus in BEIR layout");
    add_common(gen_cmd, gen.common);
    gen.topics_opt = gen_cmd->add_option("--topics", gen.topics, "Number of topics (synthetic.n_topics)");
    gen.queries_opt = gen_cmd->add_option("--queries", gen.queries, "Number of queries (synthetic.n_queries)");
    gen.docs_opt = gen_cmd->add_option("--docs", gen.docs, "Number of documents (synthetic.n_docs)");

    IndexArgs idx;
    auto* idx_cmd = app.add_subcommand("index", "Build the raw-text index and dump it");
    add_common(idx_cmd, idx.common);
    idx.kind_opt = idx_cmd->add_option("--kind", idx.kind, "bm25 or dense (index.kind)");

    TrainArgs tr;
    auto* tr_cmd = app.add_subcommand("train", "Train the toy augmentation policy");
    add_common(tr_cmd, tr.common);
    tr.opts = {
        tr_cmd->add_option("--steps", tr.steps, "Training steps (train.steps)"),
        tr_cmd->add_option("--q", tr.q, "Queries per composite batch (train.q)"),
        tr_cmd->add_option("--d-pos", tr.d_pos, "Relevant docs per query (train.d_pos)"),
        tr_cmd->add_option("--d-neg", tr.d_neg, "Irrelevant docs per batch (train.d_neg)"),
        tr_cmd->add_option("--n-rollout", tr.n_rollout, "Rollouts per text (train.n_rollout)"),
        tr_cmd->add_option("--n-samp", tr.n_samp, "Reward sampling iterations (train.n_samp)"),
        tr_cmd->add_option("--eval-every", tr.eval_every, "Evaluation cadence in steps (train.eval_every)"),
        tr_cmd->add_option("--lr", tr.lr, "Learning rate (train.learning_rate)"),
        tr_cmd->add_option("--target", tr.target, "joint, query-only or doc-only (train.target)"),
        tr_cmd->add_option("--mode", tr.mode, "centering, group-norm or batch-norm (train.advantage.mode)"),
        tr_cmd->add_option("--retriever", tr.retriever, "bm25 or dense (train.retriever)"),
        tr_cmd->add_option("--m", tr.m, "Tokens per rollout (train.tokens_per_rollout)"),
    };
    tr_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "NDCG@k of a checkpoint against the raw base retriever");
    add_common(ev_cmd, ev.common);
    ev.checkpoint_opt = ev_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file (eval.checkpoint)");
    ev.params_opt = ev_cmd->add_option("--params", ev.params, "final or best (eval.params)");
    ev.k_opt = ev_cmd->add_option("--k", ev.k, "Cutoff (eval.k)");

    AblateArgs ab;
    auto* ab_cmd = app.add_subcommand("ablate", "Run the ablation grid and tabulate NDCG@10 per cell");
    add_common(ab_cmd, ab.common);
    ab.cells_opt = ab_cmd->add_option("--cells", ab.cells, "Comma-separated cells (ablate.cells)");
    ab.seeds_opt = ab_cmd->add_option("--seeds", ab.seeds, "Comma-separated seeds (ablate.seeds)");
    ab.steps_opt = ab_cmd->add_option("--steps", ab.steps, "Training steps per run (train.steps)");

    AnalyzeArgs an;
    auto* an_cmd = app.add_subcommand("analyze", "H(Q,D), case-study and anomaly-stat reports");
    add_common(an_cmd, an.common);
    an.variants_opt = an_cmd->add_option("--variant", an.variants,
                                         "name=checkpoint, or name=base / name=identity (analyze.variants)");
    an.cases_opt = an_cmd->add_option("--case", an.cases, "Query id for a case record (analyze.cases)");
    an.k_opt = an_cmd->add_option("--k", an.k, "Ranking depth for case records (analyze.k)");
    an_cmd->add_option("--groups", an.groups, "reward_groups.jsonl from a train run")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*gen_cmd) gen_corpus(gen, out);
        if (*idx_cmd) index_cmd(idx, out);
        if (*tr_cmd) train_cmd(tr, out);
        if (*ev_cmd) eval_cmd(ev, out);
        if (*ab_cmd) ablate_cmd(ab, out);
        if (*an_cmd) analyze_cmd(an, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace coaug::cli
