#include "coaug/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "coaug/error.hpp"

namespace coaug::metrics {

RelevanceView::RelevanceView(std::map<std::string, int> grades) : grades_(std::move(grades)) {
    for (const auto& [ref, g] : grades_) {
        if (g < 0) throw ValidationError("negative grade for '" + ref + "'");
    }
}

int RelevanceView::grade(const std::string& doc_ref) const {
    auto it = grades_.find(doc_ref);
    return it == grades_.end() ? 0 : it->second;
}

double dcg_at_k(std::span<const int> ranked_grades, std::size_t k) {
    double dcg = 0.0;
    const std::size_t n = std::min(k, ranked_grades.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (ranked_grades[i] <= 0) continue;
        dcg += (std::exp2(static_cast<double>(ranked_grades[i])) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg;
}

double ideal_dcg_at_k(std::span<const int> candidate_grades, std::size_t k) {
    std::vector<int> sorted(candidate_grades.begin(), candidate_grades.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    return dcg_at_k(sorted, k);
}

double ndcg_from_grades(std::span<const int> ranked_grades, double ideal_dcg, std::size_t k) {
    if (ideal_dcg <= 0.0) return 0.0;
    return dcg_at_k(ranked_grades, k) / ideal_dcg;
}

double ndcg_at_k(const retrieval::ScoredRanking& ranking, const RelevanceView& rel, std::size_t k) {
    if (k == 0) throw ConfigError("k", "must be >= 1");
    std::vector<int> ranked;
    ranked.reserve(std::min(k, ranking.size()));
    for (std::size_t i = 0; i < ranking.size() && i < k; ++i) ranked.push_back(rel.grade(ranking[i].doc_ref));
    std::vector<int> candidates;
    candidates.reserve(rel.grades().size());
    for (const auto& [_, g] : rel.grades()) candidates.push_back(g);
    return ndcg_from_grades(ranked, ideal_dcg_at_k(candidates, k), k);
}

double WordDistribution::operator()(const std::string& token) const {
    auto it = prob.find(token);
    return it == prob.end() ? 0.0 : it->second;
}

WordDistribution build_word_distribution(std::span<const std::string> texts, const std::set<std::string>& vocabulary,
                                         double epsilon, const retrieval::Tokenizer& tokenizer) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon", "smoothing epsilon must be > 0");
    std::map<std::string, double> counts;
    for (const auto& v : vocabulary) counts.emplace(v, 0.0);
    for (const auto& text : texts) {
        for (const auto& t : tokenizer.tokenize(text)) counts[t] += 1.0;
    }
    if (counts.empty()) throw ConfigError("texts", "no texts and no vocabulary to build a distribution from");
    double total = 0.0;
    for (auto& [_, c] : counts) {
        c += epsilon;
        total += c;
    }
    WordDistribution dist;
    dist.epsilon = epsilon;
    for (const auto& [t, c] : counts) dist.prob.emplace(t, c / total);
    return dist;
}

std::set<std::string> union_vocabulary(std::span<const std::vector<std::string>> collections,
                                       const retrieval::Tokenizer& tokenizer) {
    std::set<std::string> vocab;
    for (const auto& texts : collections) {
        for (const auto& text : texts) {
            for (auto& t : tokenizer.tokenize(text)) vocab.insert(std::move(t));
        }
    }
    return vocab;
}

namespace {

double log_in_base(double x, double base) { return base > 0.0 ? std::log(x) / std::log(base) : std::log(x); }

}  // namespace

double cross_entropy(const WordDistribution& p, const WordDistribution& q, double log_base) {
    double h = 0.0;
    for (const auto& [token, pw] : p.prob) {
        if (pw == 0.0) continue;
        const double qw = q(token);
        if (qw <= 0.0) throw ConfigError("vocabulary", "token '" + token + "' missing from the reference distribution");
        h -= pw * log_in_base(qw, log_base);
    }
    return h;
}

double entropy(const WordDistribution& p, double log_base) { return cross_entropy(p, p, log_base); }

}  // namespace coaug::metrics
