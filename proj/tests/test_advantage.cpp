#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "coaug/advantage.hpp"
#include "coaug/error.hpp"
#include "coaug/rng.hpp"

using namespace coaug;
using namespace coaug::advantage;

namespace {

AdvantageConfig with_mode(Mode m) {
    AdvantageConfig c;
    c.mode = m;
    return c;
}

std::vector<RewardGroup> random_groups(Rng& rng, std::size_t n, std::size_t max_size = 6) {
    std::vector<RewardGroup> g;
    const SourceKind kinds[] = {SourceKind::Query, SourceKind::RelevantDoc, SourceKind::IrrelevantDoc};
    for (std::size_t i = 0; i < n; ++i) {
        RewardGroup grp{kinds[uniform_index(rng, 3)], {}};
        const std::size_t size = 1 + uniform_index(rng, max_size);
        const bool flat = uniform_index(rng, 4) == 0;
        const double base = uniform01(rng);
        for (std::size_t j = 0; j < size; ++j) grp.rewards.push_back(flat ? base : uniform01(rng));
        g.push_back(grp);
    }
    return g;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("mode names") {
    for (auto m : {Mode::Centering, Mode::GroupNorm, Mode::BatchNorm}) CHECK(mode_from_string(to_string(m)) == m);
    CHECK(to_string(Mode::GroupNorm) == "group-norm");
    CHECK_THROWS_AS(mode_from_string("grpo"), ConfigError);
}

TEST_CASE("config validation names the field") {
    AdvantageConfig c;
    c.scale_relevant = 0.0;
    try {
        c.validate();
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.field().find("scale_relevant") != std::string::npos);
    }
    c = {};
    c.epsilon = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(AdvantageConfig{}.scale(SourceKind::Query) == 1.0);
    CHECK(AdvantageConfig{}.scale(SourceKind::RelevantDoc) == 0.2);
    CHECK(AdvantageConfig{}.scale(SourceKind::IrrelevantDoc) == 0.1);
}

TEST_CASE("centering examples") {
    std::vector<RewardGroup> flat{{SourceKind::Query, {0.5, 0.5, 0.5}}};
    CHECK(compute_advantages(flat, {}).advantages[0] == std::vector<double>{0, 0, 0});
    std::vector<RewardGroup> q{{SourceKind::Query, {0.2, 0.4, 0.6}}};
    auto a = compute_advantages(q, {}).advantages[0];
    CHECK(a[0] == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK(std::abs(a[1]) < 1e-15);
    CHECK(a[2] == doctest::Approx(0.2).epsilon(1e-12));
    std::vector<RewardGroup> d{{SourceKind::RelevantDoc, {0.2, 0.4, 0.6}}};
    CHECK(compute_advantages(d, {}).advantages[0][2] == doctest::Approx(0.04).epsilon(1e-12));
}

TEST_CASE("group-norm amplifies a tiny difference to about unit scale") {
    std::vector<RewardGroup> g{{SourceKind::Query, {0.500001, 0.499999}}};
    auto rep = compute_advantages(g, with_mode(Mode::GroupNorm));
    // Oracle: mean 0.5, population std 1e-6 (both to rounding), eps 1e-8.
    const double mean = (0.500001 + 0.499999) / 2.0;
    const double sd = std::sqrt(((0.500001 - mean) * (0.500001 - mean) + (0.499999 - mean) * (0.499999 - mean)) / 2.0);
    CHECK(rep.advantages[0][0] == doctest::Approx((0.500001 - mean) / (sd + 1e-8)).epsilon(1e-9));
    CHECK(rep.advantages[0][1] == doctest::Approx((0.499999 - mean) / (sd + 1e-8)).epsilon(1e-9));
    // "Up to epsilon": within eps/std of unit magnitude.
    CHECK(std::abs(std::abs(rep.advantages[0][0]) - 1.0) <= 1e-8 / sd + 1e-9);
    CHECK(rep.pre_std[0] < 0.02);
    CHECK(rep.post_std[0] > 0.98);
    CHECK(rep.amplified_variance_fraction == 1.0);
}

TEST_CASE("single-member and empty groups") {
    std::vector<RewardGroup> one{{SourceKind::Query, {0.7}}};
    CHECK(compute_advantages(one, with_mode(Mode::Centering)).advantages[0][0] == 0.0);
    CHECK(compute_advantages(one, with_mode(Mode::GroupNorm)).advantages[0][0] == 0.0);
    std::vector<RewardGroup> empty{{SourceKind::Query, {}}};
    CHECK_THROWS_AS(compute_advantages(empty, {}), ConfigError);
}

TEST_CASE("centering never reports anomalies and sums to zero") {
    Rng rng(1);
    for (int t = 0; t < 300; ++t) {
        auto groups = random_groups(rng, 1 + uniform_index(rng, 10));
        auto rep = compute_advantages(groups, {});
        CHECK(rep.amplified_variance_fraction == 0.0);
        CHECK(rep.same_sign_fraction == 0.0);
        auto stats = anomaly_stats(groups, {});
        CHECK(stats.amplified_variance_fraction == 0.0);
        CHECK(stats.same_sign_fraction == 0.0);
        for (std::size_t i = 0; i < groups.size(); ++i) {
            double s = 0;
            for (double a : rep.advantages[i]) s += a;
            CHECK(std::abs(s) < 1e-12);
        }
    }
}

TEST_CASE("scaling keeps signs and within-group order") {
    Rng rng(2);
    for (auto mode : {Mode::Centering, Mode::GroupNorm, Mode::BatchNorm}) {
        for (int t = 0; t < 50; ++t) {
            auto groups = random_groups(rng, 6);
            auto unit = with_mode(mode);
            unit.scale_query = unit.scale_relevant = unit.scale_irrelevant = 1.0;
            auto scaled = with_mode(mode);
            auto a = compute_advantages(groups, unit);
            auto b = compute_advantages(groups, scaled);
            for (std::size_t i = 0; i < groups.size(); ++i) {
                const double s = scaled.scale(groups[i].kind);
                for (std::size_t j = 0; j < a.advantages[i].size(); ++j) {
                    CHECK(b.advantages[i][j] == doctest::Approx(a.advantages[i][j] * s).epsilon(1e-12));
                    CHECK((b.advantages[i][j] > 0) == (a.advantages[i][j] > 0));
                    for (std::size_t k = 0; k < a.advantages[i].size(); ++k) {
                        CHECK((b.advantages[i][j] < b.advantages[i][k]) == (a.advantages[i][j] < a.advantages[i][k]));
                    }
                }
            }
        }
    }
}

TEST_CASE("group-norm output std is one up to epsilon") {
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        auto groups = random_groups(rng, 5);
        auto rep = compute_advantages(groups, with_mode(Mode::GroupNorm));
        for (std::size_t i = 0; i < groups.size(); ++i) {
            const double sd = std_of(groups[i].rewards);
            CHECK(rep.pre_std[i] == doctest::Approx(sd).epsilon(1e-9));
            if (sd > 1e-6) CHECK(std::abs(rep.post_std[i] - sd / (sd + 1e-8)) < 1e-9);
        }
    }
}

TEST_CASE("group-norm on jittered flat groups amplifies nearly all of them") {
    Rng rng(4);
    std::vector<RewardGroup> groups;
    for (int i = 0; i < 50; ++i) {
        RewardGroup g{SourceKind::Query, {}};
        const double base = uniform01(rng);
        for (int j = 0; j < 4; ++j) g.rewards.push_back(base + 1e-4 * (uniform01(rng) - 0.5));
        groups.push_back(g);
    }
    auto stats = anomaly_stats(groups, with_mode(Mode::GroupNorm));
    CHECK(stats.amplified_variance_fraction > 0.9);
}

TEST_CASE("batch-norm on disjoint reward ranges is all same-sign") {
    std::vector<RewardGroup> g{{SourceKind::Query, {0.0, 0.1}}, {SourceKind::Query, {0.9, 1.0}}};
    auto rep = compute_advantages(g, with_mode(Mode::BatchNorm));
    CHECK(rep.same_sign_fraction == 1.0);
    CHECK(anomaly_stats(rep, 0.02).same_sign_fraction == 1.0);
    // Oracle over the pooled batch.
    const std::vector<double> all{0.0, 0.1, 0.9, 1.0};
    const double m = mean_of(all), sd = std_of(all);
    CHECK(rep.advantages[1][1] == doctest::Approx((1.0 - m) / (sd + 1e-8)).epsilon(1e-12));
}

TEST_CASE("batch-norm is dominated by group difficulty") {
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
        std::vector<RewardGroup> groups;
        const double within = 0.01;
        for (int i = 0; i < 4; ++i) {
            // Group means spaced 0.2 apart: between-group spread far above 10x within-group spread.
            RewardGroup g{SourceKind::Query, {}};
            const double center = 0.1 + 0.2 * i + (i >= 2 ? 0.05 : -0.05);
            for (int j = 0; j < 4; ++j) g.rewards.push_back(center + within * (uniform01(rng) - 0.5));
            groups.push_back(g);
        }
        CHECK(compute_advantages(groups, with_mode(Mode::BatchNorm)).same_sign_fraction == 1.0);
    }
}

TEST_CASE("same-sign counting is strict") {
    AdvantageReport rep;
    rep.advantages = {{0.0, 1.0}, {-1.0, -2.0}, {0.5, 0.5}};
    rep.pre_std = {0.1, 0.1, 0.1};
    rep.post_std = {0.1, 0.1, 0.1};
    auto s = anomaly_stats(rep, 0.02);
    CHECK(s.same_sign_fraction == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("pivot mean") {
    std::vector<double> v(7, 0.1);
    CHECK(pivot_mean(v) == 0.1);
    std::vector<double> w{0.3, 0.1, 0.2};
    CHECK(pivot_mean(w) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(population_std(w, 0.2) == doctest::Approx(std::sqrt(2.0 / 300.0)).epsilon(1e-12));
    Rng rng(6);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> x(2 + uniform_index(rng, 5));
        const double b = uniform01(rng);
        for (auto& e : x) e = b + 1e-12 * static_cast<double>(uniform_index(rng, 3));
        const double m = pivot_mean(x);
        const bool all_pos = std::all_of(x.begin(), x.end(), [&](double e) { return e - m > 0; });
        const bool all_neg = std::all_of(x.begin(), x.end(), [&](double e) { return e - m < 0; });
        CHECK_FALSE(all_pos);
        CHECK_FALSE(all_neg);
    }
}
