#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coaug/error.hpp"
#include "coaug/metrics.hpp"
#include "coaug/rng.hpp"

using namespace coaug;
using namespace coaug::metrics;
using retrieval::ScoredRanking;

namespace {

ScoredRanking ranking_of(const std::vector<std::string>& refs) {
    ScoredRanking r;
    double s = static_cast<double>(refs.size());
    for (const auto& ref : refs) r.push_back({ref, s--});
    return r;
}

}  // namespace

TEST_CASE("ndcg examples") {
    RelevanceView rel({{"d1", 1}});
    CHECK(ndcg_at_k(ranking_of({"d1", "d0"}), rel, 10) == 1.0);
    CHECK(ndcg_at_k(ranking_of({"d0", "d1"}), rel, 10) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
    CHECK(ndcg_at_k(ranking_of({"d0", "d1"}), rel, 10) == doctest::Approx(0.63093).epsilon(1e-5));
    CHECK(ndcg_at_k(ranking_of({"d0", "d1"}), RelevanceView({{"d1", 0}}), 10) == 0.0);
    CHECK(ndcg_at_k({}, rel, 10) == 0.0);
    // Ideal DCG is over the candidate set, including unretrieved relevant docs.
    RelevanceView two({{"a", 1}, {"b", 1}});
    CHECK(ndcg_at_k(ranking_of({"a"}), two, 10) == doctest::Approx(1.0 / (1.0 + 1.0 / std::log2(3.0))).epsilon(1e-12));
    // Truncation at k.
    CHECK(ndcg_at_k(ranking_of({"x", "a"}), RelevanceView({{"a", 1}}), 1) == 0.0);
}

TEST_CASE("graded gain") {
    const std::vector<int> g{1, 2};
    const double dcg = 1.0 + 3.0 / std::log2(3.0);
    CHECK(dcg_at_k(g, 10) == doctest::Approx(dcg).epsilon(1e-12));
    CHECK(ideal_dcg_at_k(g, 10) == doctest::Approx(3.0 + 1.0 / std::log2(3.0)).epsilon(1e-12));
}

TEST_CASE("ndcg is order-determined and swap-monotone") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 15);
        std::map<std::string, int> grades;
        std::vector<std::string> refs;
        for (std::size_t i = 0; i < n; ++i) {
            refs.push_back("d" + std::to_string(i));
            grades[refs.back()] = static_cast<int>(uniform_index(rng, 4));
        }
        shuffle(std::span<std::string>(refs), rng);
        RelevanceView rel(grades);
        const std::size_t k = 1 + uniform_index(rng, 12);
        auto r = ranking_of(refs);
        auto affine = r;
        for (auto& d : affine) d.score = 3.5 * d.score + 100.0;
        const double base = ndcg_at_k(r, rel, k);
        CHECK(ndcg_at_k(affine, rel, k) == base);
        CHECK(base >= 0.0);
        CHECK(base <= 1.0 + 1e-12);

        if (n >= 2) {
            const std::size_t i = uniform_index(rng, n - 1);
            auto swapped = refs;
            if (grades[swapped[i]] < grades[swapped[i + 1]]) std::swap(swapped[i], swapped[i + 1]);
            CHECK(ndcg_at_k(ranking_of(swapped), rel, k) >= ndcg_at_k(ranking_of(refs), rel, k) - 1e-15);
        }
    }
}

TEST_CASE("word distribution") {
    std::vector<std::string> texts{"a a b"};
    CHECK_THROWS_AS(build_word_distribution(texts, {"a", "b"}, 0.0), ConfigError);
    auto p = build_word_distribution(texts, {"a", "b"}, 0.5);
    CHECK(p("a") == doctest::Approx(2.5 / 4.0).epsilon(1e-12));
    CHECK(p("b") == doctest::Approx(1.5 / 4.0).epsilon(1e-12));
    CHECK_THROWS_AS(build_word_distribution(std::vector<std::string>{}, {}, 0.5), ConfigError);

    auto same = build_word_distribution(texts, {"a", "b"}, 0.5);
    CHECK(same.prob == p.prob);

    double total = 0;
    for (const auto& [_, v] : build_word_distribution(std::vector<std::string>{"x y z y"}, {"w"}, 1e-3).prob) {
        CHECK(v > 0.0);
        total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cross entropy") {
    std::vector<std::string> t{"a b"};
    auto u = build_word_distribution(t, {"a", "b"}, 1.0);
    CHECK(cross_entropy(u, u) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(cross_entropy(u, u, 2.0) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<std::string> a{"a"};
    std::set<std::string> vocab{"a", "b"};
    auto point_loose = build_word_distribution(a, vocab, 1e-3);
    auto point_tight = build_word_distribution(a, vocab, 1e-9);
    CHECK(cross_entropy(point_tight, point_tight) < cross_entropy(point_loose, point_loose));
    CHECK(cross_entropy(point_tight, point_tight) < 1e-6);

    std::vector<std::string> qs{"q1 q2 q3"}, ds{"d1 d2 d3"};
    std::vector<std::vector<std::string>> both{qs, ds};
    auto v = union_vocabulary(both);
    const double disjoint = cross_entropy(build_word_distribution(qs, v, 1e-6), build_word_distribution(ds, v, 1e-6));
    CHECK(disjoint > 10.0);
}

TEST_CASE("Gibbs inequality on random distributions") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        std::set<std::string> vocab;
        for (int i = 0; i < 6; ++i) vocab.insert("w" + std::to_string(i));
        auto draw = [&] {
            std::string s;
            const std::size_t n = 1 + uniform_index(rng, 20);
            for (std::size_t i = 0; i < n; ++i) s += "w" + std::to_string(uniform_index(rng, 6)) + " ";
            return std::vector<std::string>{s};
        };
        auto p = build_word_distribution(draw(), vocab, 0.1);
        auto q = build_word_distribution(draw(), vocab, 0.1);
        CHECK(cross_entropy(p, q) >= entropy(p) - 1e-9);
        CHECK(std::abs(cross_entropy(p, p) - entropy(p)) <= 1e-9);
    }
}
