#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "coaug/error.hpp"
#include "coaug/trainer.hpp"
#include "support.hpp"

using namespace coaug;
using namespace coaug::trainer;

namespace {

struct Fixture {
    corpus::SyntheticCorpus syn = corpus::generate_synthetic(testing::small_spec());
    Workspace ws{syn.data, syn.all_bridge_tokens()};

    static TrainConfig config() {
        TrainConfig c;
        c.steps = 4;
        c.q = 1;
        c.d_pos = 2;
        c.d_neg = 4;
        c.n_rollout = 2;
        c.n_samp = 4;
        c.batch_size = 14;
        c.mini_batch_size = 7;
        c.micro_batch_size = 4;
        c.eval_every = 2;
        c.tokens_per_rollout = 4;
        c.learning_rate = 50.0;
        return c;
    }
};

double prob_of(const policy::ToyPolicy& pol, const std::vector<std::string>& tokens, SourceKind kind,
               const std::string& token) {
    const auto p = pol.probabilities(pol.sparse_features(tokens, kind));
    return p[static_cast<std::size_t>(pol.vocabulary().output_index(token))];
}

}  // namespace

TEST_CASE("config validation") {
    auto c = Fixture::config();
    c.micro_batch_size = 8;
    try {
        c.validate();
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "train.micro_batch_size");
    }
    c = Fixture::config();
    c.n_samp = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = Fixture::config();
    c.advantage.scale_query = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(Fixture::config().group_texts() == 7);
    CHECK(Fixture::config().groups_per_step() == 2);
    CHECK(target_from_string(to_string(Target::QueryOnly)) == Target::QueryOnly);
    CHECK_THROWS_AS(target_from_string("both"), ConfigError);
}

TEST_CASE("workspace lookups and vocabulary") {
    Fixture f;
    CHECK(f.ws.tokens_of(f.syn.data.docs[0].id, SourceKind::RelevantDoc) == retrieval::tokenize(f.syn.data.docs[0].content()));
    CHECK_THROWS_AS(f.ws.tokens_of("nope", SourceKind::Query), LookupError);
    CHECK_THROWS_AS(f.ws.tokens_of("nope", SourceKind::IrrelevantDoc), LookupError);
    for (const auto& b : f.syn.all_bridge_tokens()) {
        CHECK(f.ws.vocabulary()->output_index(b) >= 0);
        CHECK(f.ws.vocabulary()->input_index(b) == -1);
    }
    Workspace narrow(f.syn.data, {"b1", "b2"}, {}, false);
    CHECK(narrow.vocabulary()->output_tokens() == std::vector<std::string>{"b1", "b2"});
    CHECK(narrow.vocabulary()->input_size() == f.ws.vocabulary()->input_size());
}

TEST_CASE("identical rewards leave parameters bit-for-bit unchanged") {
    Fixture f;
    auto c = Fixture::config();
    c.tokens_per_rollout = 0;  // every rollout is the empty augmentation
    Trainer t(f.ws, c);
    auto state = t.init_state();
    const auto before = state.params;
    auto report = t.train_step(state);
    for (const auto& g : report.advantages.advantages) {
        for (double a : g) CHECK(a == 0.0);
    }
    CHECK(state.params == before);
    CHECK(state.step == 1);
}

TEST_CASE("training is deterministic and independent of worker count") {
    Fixture f;
    auto c = Fixture::config();
    Trainer a(f.ws, c);
    c.workers = 4;
    Trainer b(f.ws, c);
    auto sa = a.init_state();
    auto sb = b.init_state();
    a.run(sa);
    b.run(sb);
    CHECK(sa.params == sb.params);
    CHECK(sa.history == sb.history);
    CHECK(history_csv(sa.history) == history_csv(sb.history));
    REQUIRE(sa.history.size() == 4);
    CHECK_FALSE(sa.history[0].ndcg10.has_value());
    CHECK(sa.history[1].ndcg10.has_value());
    CHECK(sa.history[3].hqd.has_value());

    auto other = Fixture::config();
    other.seed = 2;
    Trainer d(f.ws, other);
    auto sd = d.init_state();
    d.run(sd);
    CHECK_FALSE(sd.params == sa.params);
}

TEST_CASE("parameters move under nonzero advantages") {
    Fixture f;
    Trainer t(f.ws, Fixture::config());
    auto s = t.init_state();
    const auto before = s.params;
    std::size_t nonzero = 0;
    for (int i = 0; i < 3; ++i) {
        auto r = t.train_step(s);
        for (const auto& g : r.advantages.advantages) {
            for (double a : g) nonzero += a != 0.0;
        }
    }
    REQUIRE(nonzero > 0);
    CHECK_FALSE(s.params == before);
}

TEST_CASE("targets zero the other side's advantages") {
    Fixture f;
    for (auto target : {Target::QueryOnly, Target::DocOnly}) {
        auto c = Fixture::config();
        c.target = target;
        Trainer t(f.ws, c);
        auto s = t.init_state();
        auto r = t.train_step(s);
        REQUIRE(r.reward_groups.size() == r.advantages.advantages.size());
        for (std::size_t i = 0; i < r.reward_groups.size(); ++i) {
            const bool doc = is_document(r.reward_groups[i].kind);
            if ((target == Target::QueryOnly && doc) || (target == Target::DocOnly && !doc)) {
                for (double a : r.advantages.advantages[i]) CHECK(a == 0.0);
            }
        }
    }
}

TEST_CASE("resume from a checkpoint equals an uninterrupted run") {
    Fixture f;
    auto c = Fixture::config();
    c.steps = 6;
    Trainer t(f.ws, c);
    auto full = t.init_state();
    t.run(full);

    auto part = t.init_state();
    for (int i = 0; i < 3; ++i) t.train_step(part);
    auto dir = testing::scratch_dir("resume");
    save_checkpoint(dir / "ckpt.json", c, *f.ws.vocabulary(), part);
    auto loaded = load_checkpoint(dir / "ckpt.json");
    CHECK(loaded.state.step == 3);
    CHECK(loaded.state.params == part.params);
    CHECK(loaded.state.history == part.history);
    CHECK(loaded.vocabulary->output_tokens() == f.ws.vocabulary()->output_tokens());
    Trainer resumed(f.ws, loaded.config);
    resumed.run(loaded.state);
    CHECK(loaded.state.params == full.params);
    CHECK(loaded.state.history == full.history);
    CHECK(loaded.state.best_step == full.best_step);
    CHECK(loaded.state.best_params == full.best_params);

    write_history_csv(dir / "a.csv", full.history);
    write_history_csv(dir / "b.csv", loaded.state.history);
    CHECK(testing::read_file(dir / "a.csv") == testing::read_file(dir / "b.csv"));
    CHECK(testing::read_file(dir / "a.csv").rfind("step,mean_reward,ndcg10,hqd,amp_var,same_sign\n", 0) == 0);
}

TEST_CASE("checkpoint format errors") {
    auto dir = testing::scratch_dir("ckpt_bad");
    testing::write_file(dir / "x.json", "{\"format\":\"other\"}");
    CHECK_THROWS(load_checkpoint(dir / "x.json"));
    CHECK_THROWS(load_checkpoint(dir / "missing.json"));
}

TEST_CASE("non-finite updates abort and leave the state unchanged") {
    Fixture f;
    auto c = Fixture::config();
    // Low temperature inflates the gradient so the first update overflows.
    c.learning_rate = 1e308;
    c.init_scale = 0.01;
    c.temperature = 0.01;
    Trainer t(f.ws, c);
    auto s = t.init_state();
    bool threw = false;
    for (int i = 0; i < 5 && !threw; ++i) {
        auto snapshot = s;
        try {
            t.train_step(s);
        } catch (const NumericError& e) {
            threw = true;
            CHECK(std::string(e.what()).find("step") != std::string::npos);
            CHECK(s.params == snapshot.params);
            CHECK(s.step == snapshot.step);
            CHECK(s.history == snapshot.history);
        }
    }
    CHECK(threw);
}

TEST_CASE("precomputed doc augmentations") {
    Fixture f;
    Trainer t(f.ws, Fixture::config());
    auto pol = t.make_policy(t.init_state().params);
    auto a = precompute_doc_augmentations(pol, f.syn.data);
    auto b = precompute_doc_augmentations(pol, f.syn.data);
    CHECK(a.size() == f.syn.data.docs.size());
    for (const auto& [id, text] : a) {
        CHECK(text.combined() == b.at(id).combined());
        CHECK(retrieval::tokenize(text.augmentation).size() == 4);
    }
    CHECK_THROWS_AS(precompute_doc_augmentations(pol, f.syn.data, AugmentMode::Sample), ConfigError);
    Rng rng(1);
    CHECK(precompute_doc_augmentations(pol, f.syn.data, AugmentMode::Sample, &rng).size() == f.syn.data.docs.size());

    policy::IdentityPolicy id;
    for (const auto& [docid, text] : precompute_doc_augmentations(id, f.syn.data)) {
        CHECK(text.combined() == f.syn.data.find_doc(docid)->content());
    }
}

TEST_CASE("evaluation") {
    Fixture f;
    policy::IdentityPolicy id;
    auto r = evaluate(&id, &id, f.syn.data, f.ws.tokenizer(), {});
    CHECK(r.ndcg == r.base_ndcg);
    CHECK(r.base_ndcg == 0.0);
    REQUIRE(r.per_query.size() == f.syn.data.queries.size());
    for (const auto& q : r.per_query) CHECK(q.ndcg == q.base_ndcg);
    auto none = evaluate(nullptr, nullptr, f.syn.data, f.ws.tokenizer(), {});
    CHECK(none.ndcg == 0.0);
    EvalOptions bad;
    bad.k = 0;
    CHECK_THROWS_AS(evaluate(nullptr, nullptr, f.syn.data, f.ws.tokenizer(), bad), ConfigError);

    // A policy that writes the topic's bridge token on both sides makes every relevant doc
    // retrievable.
    struct Oracle : policy::AugmentationPolicy {
        const corpus::SyntheticCorpus* syn;
        std::vector<policy::Rollout> rollout(const std::string&, std::string_view, SourceKind, std::string_view,
                                             std::size_t, Rng&) const override {
            return {};
        }
        std::string augment(std::string_view text, SourceKind, std::string_view) const override {
            const auto tok = retrieval::tokenize(text).front();
            for (std::size_t t = 0; t < syn->query_vocab.size(); ++t) {
                auto has = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), tok) != v.end(); };
                if (has(syn->query_vocab[t]) || has(syn->doc_vocab[t])) return syn->bridge_vocab[t][0];
            }
            return {};
        }
    } oracle;
    oracle.syn = &f.syn;
    auto best = evaluate(&oracle, &oracle, f.syn.data, f.ws.tokenizer(), {});
    CHECK(best.ndcg > 0.9);
    auto texts = augment_corpus(&oracle, &oracle, f.syn.data);
    auto raw = augment_corpus(nullptr, nullptr, f.syn.data);
    CHECK(hqd(texts, f.ws.tokenizer(), 1e-6) < hqd(raw, f.ws.tokenizer(), 1e-6));
}

TEST_CASE("bridge token emission grows on a one-topic corpus") {
    // One query, one relevant doc, disjoint surfaces. The policy may emit the bridge token or
    // junk; only the bridge on both sides makes the doc retrievable.
    corpus::SyntheticSpec spec;
    spec.n_topics = 1;
    spec.n_queries = 1;
    spec.n_docs = 1;
    spec.query_vocab_size = 2;
    spec.doc_vocab_size = 3;
    spec.bridge_vocab_size = 1;
    spec.query_len = 2;
    spec.doc_len = 3;
    auto syn = corpus::generate_synthetic(spec);
    const std::string bridge = syn.bridge_vocab[0][0];
    std::vector<std::string> extra{bridge, "junka", "junkb", "junkc", "junkd", "junke"};
    Workspace ws(syn.data, extra, {}, false);
    TrainConfig c;
    c.steps = 300;
    c.q = 1;
    c.d_pos = 1;
    c.d_neg = 0;
    c.n_rollout = 4;
    c.n_samp = 8;
    c.batch_size = 8;
    c.mini_batch_size = 8;
    c.micro_batch_size = 4;
    c.tokens_per_rollout = 1;
    c.eval_every = 100;
    Trainer t(ws, c);
    auto s = t.init_state();
    const auto& qt = ws.query_tokens(0);
    const auto& dt = ws.doc_tokens(0);
    std::vector<double> pq, pd;
    for (std::size_t i = 0; i < c.steps; ++i) {
        auto pol = t.make_policy(s.params);
        pq.push_back(prob_of(pol, qt, SourceKind::Query, bridge));
        pd.push_back(prob_of(pol, dt, SourceKind::RelevantDoc, bridge));
        t.train_step(s);
    }
    // Moving averages over 50-step windows rise window over window.
    auto window = [](const std::vector<double>& v, std::size_t w) {
        double sum = 0;
        for (std::size_t i = w * 50; i < (w + 1) * 50; ++i) sum += v[i];
        return sum / 50.0;
    };
    for (std::size_t w = 0; w + 1 < 6; ++w) {
        CHECK(window(pq, w + 1) >= window(pq, w));
        CHECK(window(pd, w + 1) >= window(pd, w));
    }
    CHECK(pq.back() > 0.5);
    CHECK(pd.back() > 0.5);
    CHECK(s.best_ndcg.value_or(0.0) == 1.0);
}
