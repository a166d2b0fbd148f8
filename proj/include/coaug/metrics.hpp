#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "coaug/retrieval.hpp"

namespace coaug::metrics {

/// Relevance grades restricted to a candidate set (a batch, or the whole corpus). Docs outside
/// the map have grade 0.
class RelevanceView {
public:
    RelevanceView() = default;
    explicit RelevanceView(std::map<std::string, int> grades);

    int grade(const std::string& doc_ref) const;
    const std::map<std::string, int>& grades() const noexcept { return grades_; }

private:
    std::map<std::string, int> grades_;
};

/// DCG over the first k ranked grades with gain 2^rel - 1 and discount log2(i + 1).
double dcg_at_k(std::span<const int> ranked_grades, std::size_t k);

/// DCG of the ideal ordering of `candidate_grades`, truncated to k.
double ideal_dcg_at_k(std::span<const int> candidate_grades, std::size_t k);

/// NDCG from already-resolved grades; 0 when the ideal DCG is 0.
double ndcg_from_grades(std::span<const int> ranked_grades, double ideal_dcg, std::size_t k);

/// NDCG@k of a ranking against a relevance view; 0 when no candidate is relevant.
double ndcg_at_k(const retrieval::ScoredRanking& ranking, const RelevanceView& rel, std::size_t k);

/// Smoothed unigram distribution over a fixed vocabulary.
struct WordDistribution {
    std::map<std::string, double> prob;
    double epsilon = 0.0;

    double operator()(const std::string& token) const;
};

/// Token counts from `texts` plus add-epsilon smoothing over `vocabulary` (extended with any
/// token seen in the texts), normalized. Throws ConfigError for epsilon <= 0 and when both the
/// texts and the vocabulary are empty.
WordDistribution build_word_distribution(std::span<const std::string> texts, const std::set<std::string>& vocabulary,
                                         double epsilon, const retrieval::Tokenizer& tokenizer = {});

/// Union of token sets over several text collections.
std::set<std::string> union_vocabulary(std::span<const std::vector<std::string>> collections,
                                       const retrieval::Tokenizer& tokenizer = {});

/// H(P, Q) = -sum_w P(w) log Q(w). Both distributions must share a vocabulary; `log_base`
/// defaults to e.
double cross_entropy(const WordDistribution& p, const WordDistribution& q, double log_base = 0.0);

double entropy(const WordDistribution& p, double log_base = 0.0);

}  // namespace coaug::metrics
