#include <doctest.h>

#include "coaug/config.hpp"
#include "coaug/error.hpp"
#include "support.hpp"

using namespace coaug;
using namespace coaug::config;

namespace {

std::string field_of(const json& doc) {
    try {
        parse_config(doc);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<accepted>";
}

}  // namespace

TEST_CASE("empty config gives defaults") {
    auto c = parse_config(json::object());
    CHECK(c.train.steps == 300);
    CHECK(c.train.q == 4);
    CHECK(c.train.d_pos == 2);
    CHECK(c.train.d_neg == 10);
    CHECK(c.train.n_rollout == 4);
    CHECK(c.train.n_samp == 32);
    CHECK(c.train.temperature == 1.2);
    CHECK(c.train.tokens_per_rollout == 8);
    CHECK(c.train.advantage.mode == advantage::Mode::Centering);
    CHECK(c.eval.params == "final");
    CHECK(c.ablate.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(c.synthetic.n_topics == 2);
}

TEST_CASE("fields are read into nested sections") {
    auto c = parse_config(json::parse(R"({
        "data": {"dir": "d", "split": "test"},
        "synthetic": {"n_topics": 3, "bridge_vocab_size": 9},
        "tokenizer": {"min_length": 2, "stopwords": ["the"]},
        "train": {"steps": 10, "learning_rate": 5.5, "advantage": {"mode": "batch-norm", "scale_query": 2},
                  "target": "doc-only", "retriever": "dense", "dense": {"dim": 16}, "irrelevance": "qrels-only",
                  "prompts": {"query": "Q: {text}"}},
        "eval": {"params": "best", "k": 5},
        "ablate": {"cells": ["rl-qd"], "seeds": [4]},
        "analyze": {"variants": [{"name": "a", "checkpoint": "base"}], "cases": ["q1"], "anomaly_steps": 3},
        "index": {"kind": "dense", "dim": 32}
    })"));
    CHECK(c.data.split == "test");
    CHECK(c.synthetic.n_topics == 3);
    CHECK(c.tokenizer.stopwords == std::vector<std::string>{"the"});
    CHECK(c.train.learning_rate == 5.5);
    CHECK(c.train.advantage.mode == advantage::Mode::BatchNorm);
    CHECK(c.train.advantage.scale_query == 2.0);
    CHECK(c.train.target == trainer::Target::DocOnly);
    CHECK(c.train.retriever == retrieval::RetrieverKind::Dense);
    CHECK(c.train.dense.dim == 16);
    CHECK(c.train.irrelevance == sampler::IrrelevancePredicate::QrelsOnly);
    CHECK(c.train.prompts.query_template == "Q: {text}");
    CHECK(c.eval.params == "best");
    CHECK(c.ablate.cells == std::vector<std::string>{"rl-qd"});
    CHECK(c.analyze.variants.at(0).checkpoint == "base");
    CHECK(c.index.dim == 32);
}

TEST_CASE("schema violations name the field") {
    CHECK(field_of(json::parse(R"({"train": {"stepz": 3}})")) == "train.stepz");
    CHECK(field_of(json::parse(R"({"train": {"advantage": {"mode": "grpo"}}})")).find("mode") != std::string::npos);
    CHECK(field_of(json::parse(R"({"train": {"steps": "many"}})")) == "train.steps");
    CHECK(field_of(json::parse(R"({"train": {"steps": -1}})")) == "train.steps");
    CHECK(field_of(json::parse(R"({"train": {"micro_batch_size": 100}})")) == "train.micro_batch_size");
    CHECK(field_of(json::parse(R"({"synthetic": {"n_docs": 0}})")) == "synthetic.n_docs");
    CHECK(field_of(json::parse(R"({"eval": {"params": "last"}})")) == "eval.params");
    CHECK(field_of(json::parse(R"({"bogus": 1})")) == "bogus");
    CHECK(field_of(json::parse(R"({"analyze": {"variants": [{"name": "a", "ckpt": "x"}]}})")) ==
          "analyze.variants[0].ckpt");
    CHECK(field_of(json::parse(R"({"train": {"dense": {"dim": 4}, "retriever": "dense"}})")) == "train.dense.dim");
    try {
        parse_config(json::parse(R"({"train": {"stepz": 3}})"));
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()) == "train.stepz: unknown key");
    }
}

TEST_CASE("round trip through JSON") {
    auto c = parse_config(json::parse(R"({"train": {"steps": 7, "target": "query-only"}, "synthetic": {"seed": 9}})"));
    auto again = parse_config(to_json(c));
    CHECK(to_json(again) == to_json(c));
    CHECK(train_config_from_json(to_json(c.train)).steps == 7);
    CHECK(synthetic_from_json(to_json(c.synthetic)).seed == 9);
}

TEST_CASE("config hash is canonical") {
    auto a = json::parse(R"({"b": 1, "a": [1, 2]})");
    auto b = json::parse(R"({"a": [1, 2], "b": 1})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(json::parse(R"({"a": [2, 1], "b": 1})")));
    CHECK(hash_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("load_config reports parse errors") {
    auto dir = testing::scratch_dir("config");
    testing::write_file(dir / "bad.json", "{not json");
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "missing.json"), IngestionError);
    testing::write_file(dir / "ok.json", R"({"train": {"q": 1}})");
    CHECK(load_config(dir / "ok.json").train.q == 1);
}
