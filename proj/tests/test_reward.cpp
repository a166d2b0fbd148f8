#include <doctest.h>

#include <cmath>

#include "coaug/error.hpp"
#include "coaug/reward.hpp"
#include "coaug/rng.hpp"
#include "support.hpp"

using namespace coaug;
using namespace coaug::reward;

namespace {

using Tokens = std::vector<std::string>;

RewardTask random_task(Rng& rng, std::size_t q, std::size_t n_docs, std::size_t n_rollout, std::size_t vocab = 8) {
    RewardTask task;
    task.n_rollout = n_rollout;
    auto text = [&] {
        Tokens t;
        const std::size_t len = 1 + uniform_index(rng, 5);
        for (std::size_t i = 0; i < len; ++i) t.push_back("t" + std::to_string(uniform_index(rng, vocab)));
        return t;
    };
    for (std::size_t i = 0; i < q; ++i) {
        TextRollouts tr{"q" + std::to_string(i), SourceKind::Query, {}};
        for (std::size_t r = 0; r < n_rollout; ++r) tr.combined_tokens.push_back(text());
        task.queries.push_back(tr);
    }
    for (std::size_t d = 0; d < n_docs; ++d) {
        TextRollouts tr{"d" + std::to_string(d), d < q ? SourceKind::RelevantDoc : SourceKind::IrrelevantDoc, {}};
        for (std::size_t r = 0; r < n_rollout; ++r) tr.combined_tokens.push_back(text());
        task.docs.push_back(tr);
    }
    for (std::size_t i = 0; i < q; ++i) {
        std::map<std::string, int> g;
        for (std::size_t d = 0; d < n_docs; ++d) g["d" + std::to_string(d)] = static_cast<int>(uniform_index(rng, 3));
        g["d" + std::to_string(i % n_docs)] = 1;
        task.relevance.emplace_back(g);
    }
    return task;
}

std::vector<std::size_t> random_selection(Rng& rng, const RewardTask& task) {
    std::vector<std::size_t> s(task.docs.size());
    for (auto& x : s) x = uniform_index(rng, task.n_rollout);
    return s;
}

}  // namespace

TEST_CASE("matching pair count") {
    Rng rng(1);
    auto task = random_task(rng, 1, 3, 2);
    CHECK(combination_count(task) == 8);
    CHECK(matching_pair_count(task) == 16);
    auto est = exact_reward(task);
    CHECK(est.iterations == 8);
    CHECK(est.query_rewards.size() == 1);
    CHECK(est.query_rewards[0].size() == 2);
}

TEST_CASE("exact reward refuses over the cap") {
    Rng rng(2);
    auto task = random_task(rng, 1, 6, 4);
    CHECK(combination_count(task) == 4096);
    try {
        exact_reward(task, 1000);
        FAIL("expected a capacity error");
    } catch (const CapacityError& e) {
        CHECK(std::string(e.what()).find("4096") != std::string::npos);
    }
    auto huge = random_task(rng, 1, 70, 2);
    CHECK(combination_count(huge) == UINT64_MAX);
}

TEST_CASE("single rollout: exact equals one iteration") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        auto task = random_task(rng, 2, 4, 1);
        auto est = exact_reward(task);
        auto it = iteration_reward(task, std::vector<std::size_t>(4, 0));
        CHECK(est.query_rewards == it.query_ndcg);
        for (const auto& row : est.doc_rewards) CHECK(row[0] == it.doc_reward);
    }
}

TEST_CASE("relevant doc rollout adding the query term gives NDCG 1") {
    RewardTask task;
    task.n_rollout = 1;
    task.queries.push_back({"q", SourceKind::Query, {{"alpha"}}});
    task.docs.push_back({"rel", SourceKind::RelevantDoc, {{"beta", "gamma", "alpha"}}});
    task.docs.push_back({"irr", SourceKind::IrrelevantDoc, {{"delta", "epsilon"}}});
    task.relevance.emplace_back(std::map<std::string, int>{{"rel", 1}, {"irr", 0}});
    auto it = iteration_reward(task, std::vector<std::size_t>{0, 0});
    CHECK(it.query_ndcg[0][0] == 1.0);
    CHECK(it.doc_reward == 1.0);

    // Without the bridging term nothing is retrieved.
    task.docs[0].combined_tokens[0] = {"beta", "gamma", "zeta"};
    CHECK(iteration_reward(task, std::vector<std::size_t>{0, 0}).query_ndcg[0][0] == 0.0);
}

TEST_CASE("identity augmentation reproduces the base retriever within the batch") {
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
        auto base = random_task(rng, 2, 5, 1);
        RewardTask task = base;
        task.n_rollout = 3;
        for (auto* group : {&task.queries, &task.docs}) {
            for (auto& tr : *group) tr.combined_tokens.assign(3, tr.combined_tokens[0]);
        }
        std::vector<std::pair<std::string, Tokens>> docs;
        for (const auto& d : base.docs) docs.emplace_back(d.id, d.combined_tokens[0]);
        auto index = retrieval::SparseIndex::build(docs);
        auto it = iteration_reward(task, random_selection(rng, task));
        for (std::size_t i = 0; i < task.queries.size(); ++i) {
            const double want = metrics::ndcg_at_k(index.retrieve(base.queries[i].combined_tokens[0], 10), base.relevance[i], 10);
            for (double v : it.query_ndcg[i]) CHECK(v == want);
        }
    }
}

TEST_CASE("fast scorer is bit-identical to the reference path") {
    Rng rng(5);
    for (auto kind : {retrieval::RetrieverKind::Bm25, retrieval::RetrieverKind::Dense}) {
        for (int t = 0; t < 40; ++t) {
            auto task = random_task(rng, 1 + uniform_index(rng, 3), 2 + uniform_index(rng, 6), 1 + uniform_index(rng, 3),
                                    4 + uniform_index(rng, 10));
            task.retriever = kind;
            task.k = 1 + uniform_index(rng, 10);
            IterationScorer fast(task);
            for (int s = 0; s < 5; ++s) {
                auto sel = random_selection(rng, task);
                auto a = iteration_reward(task, sel);
                auto b = fast(sel);
                CHECK(a.query_ndcg == b.query_ndcg);
                CHECK(a.doc_reward == b.doc_reward);
            }
        }
    }
}

TEST_CASE("all rewards lie in [0, 1]") {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        auto task = random_task(rng, 2, 4, 2);
        task.n_samp = 8;
        for (const auto& est : {exact_reward(task), sampled_reward(task, rng)}) {
            for (const auto* m : {&est.query_rewards, &est.doc_rewards}) {
                for (const auto& row : *m) {
                    for (double v : row) {
                        CHECK(v >= 0.0);
                        CHECK(v <= 1.0);
                    }
                }
            }
        }
    }
}

TEST_CASE("identical doc rollouts make sampling exact") {
    Rng rng(7);
    for (int t = 0; t < 10; ++t) {
        auto task = random_task(rng, 2, 4, 3);
        for (auto& d : task.docs) d.combined_tokens.assign(3, d.combined_tokens[0]);
        task.n_samp = 7;
        auto exact = exact_reward(task);
        auto sampled = sampled_reward(task, rng);
        CHECK(sampled.query_rewards == exact.query_rewards);
        CHECK(sampled.doc_rewards == exact.doc_rewards);
        CHECK(sampled.max_abs_diff(exact) == 0.0);
    }
}

TEST_CASE("stratified blocks select every doc rollout once per block") {
    Rng rng(8);
    auto schedule = stratified_schedule(5, 3, 10, rng);
    REQUIRE(schedule.size() == 10);
    for (std::size_t block = 0; block < 3; ++block) {
        for (std::size_t d = 0; d < 5; ++d) {
            std::set<std::size_t> used;
            for (std::size_t i = block * 3; i < block * 3 + 3; ++i) used.insert(schedule[i][d]);
            CHECK(used.size() == 3);
        }
    }
    RewardTask task = random_task(rng, 1, 5, 3);
    task.n_samp = 3;
    auto est = sampled_reward(task, rng);
    for (const auto& row : est.doc_counts) CHECK(row == std::vector<std::size_t>{1, 1, 1});
}

TEST_CASE("one block is unbiased: permutation average equals the exact reward") {
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
        auto task = random_task(rng, 2, 2, 2);
        auto exact = exact_reward(task);
        // Both docs draw one of two permutations; enumerate the four equally likely blocks.
        std::vector<std::vector<double>> q(2, std::vector<double>(2, 0.0)), d(2, std::vector<double>(2, 0.0));
        const std::vector<std::vector<std::size_t>> perms{{0, 1}, {1, 0}};
        for (const auto& p0 : perms) {
            for (const auto& p1 : perms) {
                for (std::size_t pos = 0; pos < 2; ++pos) {
                    std::vector<std::size_t> sel{p0[pos], p1[pos]};
                    auto it = iteration_reward(task, sel);
                    for (std::size_t i = 0; i < 2; ++i) {
                        for (std::size_t r = 0; r < 2; ++r) q[i][r] += it.query_ndcg[i][r] / 8.0;
                    }
                    for (std::size_t k = 0; k < 2; ++k) d[k][sel[k]] += it.doc_reward / 4.0;
                }
            }
        }
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t r = 0; r < 2; ++r) {
                CHECK(q[i][r] == doctest::Approx(exact.query_rewards[i][r]).epsilon(1e-12));
                CHECK(d[i][r] == doctest::Approx(exact.doc_rewards[i][r]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("estimation error shrinks like one over root n") {
    Rng rng(10);
    double err64 = 0.0, err1024 = 0.0;
    const int tasks = 10, repeats = 5;
    for (int t = 0; t < tasks; ++t) {
        auto task = random_task(rng, 1, 4, 3, 6);
        auto exact = exact_reward(task);
        for (int r = 0; r < repeats; ++r) {
            task.n_samp = 64;
            err64 += sampled_reward(task, rng).max_abs_diff(exact);
            task.n_samp = 1024;
            err1024 += sampled_reward(task, rng).max_abs_diff(exact);
        }
    }
    // Sixteen times the iterations: about a quarter of the error for an unbiased estimator.
    CHECK(err1024 < err64 / 2.5);
}

TEST_CASE("rollouts that change no ordering share one reward") {
    Rng rng(11);
    for (int t = 0; t < 10; ++t) {
        auto task = random_task(rng, 2, 4, 3);
        // Every rollout of a text is its first rollout plus one private junk token; doc lengths
        // stay equal across rollouts and junk never matches a query.
        for (auto* group : {&task.queries, &task.docs}) {
            for (auto& tr : *group) {
                const auto base = tr.combined_tokens[0];
                for (std::size_t r = 0; r < 3; ++r) {
                    tr.combined_tokens[r] = base;
                    tr.combined_tokens[r].push_back("junk" + tr.id + "r" + std::to_string(r));
                }
            }
        }
        task.n_samp = 9;
        auto est = sampled_reward(task, rng);
        for (const auto* m : {&est.query_rewards, &est.doc_rewards}) {
            for (const auto& row : *m) {
                for (double v : row) CHECK(v == row[0]);
            }
        }
    }
}

TEST_CASE("task validation") {
    Rng rng(12);
    auto task = random_task(rng, 1, 2, 2);
    task.docs[0].combined_tokens.pop_back();
    CHECK_THROWS_AS(task.validate(), ConfigError);
    task = random_task(rng, 1, 2, 2);
    task.n_samp = 0;
    CHECK_THROWS_AS(sampled_reward(task, rng), ConfigError);
    CHECK_THROWS_AS(iteration_reward(task, std::vector<std::size_t>{0}), ConfigError);
}

TEST_CASE("make_task orders texts like attach_prompts") {
    sampler::CompositeBatch batch;
    batch.queries = {{"q1", "a"}};
    batch.relevant = {{{"d1", "", "x"}}};
    batch.irrelevant = {{"d2", "", "y"}};
    corpus::QrelSet qrels;
    qrels.set("q1", "d1", 2);
    auto task = make_task(batch, qrels, {{{"a"}}, {{"x"}}, {{"y"}}}, 1);
    REQUIRE(task.docs.size() == 2);
    CHECK(task.docs[0].id == "d1");
    CHECK(task.docs[0].kind == SourceKind::RelevantDoc);
    CHECK(task.docs[1].kind == SourceKind::IrrelevantDoc);
    CHECK(task.relevance[0].grade("d1") == 2);
    CHECK(task.relevance[0].grade("d2") == 0);
    CHECK_THROWS_AS(make_task(batch, qrels, {{{"a"}}}, 1), ConfigError);
}
