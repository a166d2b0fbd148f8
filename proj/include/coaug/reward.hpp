#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coaug/corpus.hpp"
#include "coaug/kinds.hpp"
#include "coaug/metrics.hpp"
#include "coaug/retrieval.hpp"
#include "coaug/rng.hpp"
#include "coaug/sampler.hpp"

namespace coaug::reward {

/// One batch text and the combined (original + augmentation) tokens of each of its rollouts.
struct TextRollouts {
    std::string id;
    SourceKind kind = SourceKind::Query;
    std::vector<std::vector<std::string>> combined_tokens;
};

struct DenseOptions {
    std::size_t dim = 64;
    std::uint64_t seed = 13;
};

/// Everything needed to score one composite batch.
struct RewardTask {
    std::vector<TextRollouts> queries;
    std::vector<TextRollouts> docs;
    /// relevance[i]: grades of the batch docs for queries[i] (the batch-restricted view).
    std::vector<metrics::RelevanceView> relevance;
    retrieval::RetrieverKind retriever = retrieval::RetrieverKind::Bm25;
    retrieval::Bm25Params bm25;
    DenseOptions dense;
    std::size_t n_rollout = 1;
    std::size_t n_samp = 32;
    std::size_t k = 10;

    /// Throws ConfigError when any text lacks exactly n_rollout rollouts or n_samp == 0.
    void validate() const;
};

/// Builds a task from a batch and per-text combined token lists ordered like attach_prompts.
RewardTask make_task(const sampler::CompositeBatch& batch, const corpus::QrelSet& qrels,
                     std::vector<std::vector<std::vector<std::string>>> combined_tokens, std::size_t n_rollout);

struct IterationResult {
    /// query_ndcg[i][r]: NDCG of rollout r of query i.
    std::vector<std::vector<double>> query_ndcg;
    /// Mean over all query-rollout NDCGs; credited to every selected doc rollout.
    double doc_reward = 0.0;
};

/// Reference path: builds a transient index over the selected doc rollouts with the retrieval
/// module and runs every query rollout through it.
IterationResult iteration_reward(const RewardTask& task, std::span<const std::size_t> doc_selection);

/// Precomputed fast path. Produces the same bits as iteration_reward for every selection.
class IterationScorer {
public:
    explicit IterationScorer(const RewardTask& task);
    IterationResult operator()(std::span<const std::size_t> doc_selection) const;

private:
    struct DocTerm {
        std::uint32_t term;
        std::uint32_t tf;
    };
    IterationResult score_sparse(std::span<const std::size_t> selection) const;
    IterationResult score_dense(std::span<const std::size_t> selection) const;

    const RewardTask& task_;
    std::size_t n_docs_ = 0;
    std::vector<std::size_t> ordinal_;
    std::vector<double> ideal_;
    std::vector<std::vector<int>> grades_;
    // sparse: query terms are interned into [0, n_terms_); docs keep only terms queries use.
    std::size_t n_terms_ = 0;
    std::vector<std::vector<std::vector<std::uint32_t>>> query_terms_;
    std::vector<std::vector<std::vector<DocTerm>>> doc_terms_;
    std::vector<std::vector<std::uint32_t>> doc_len_;
    // dense: cosine[q][r][d][s]
    std::vector<double> cosine_;
};

struct RewardEstimate {
    std::vector<std::vector<double>> query_rewards;
    std::vector<std::vector<double>> doc_rewards;
    std::vector<std::vector<std::size_t>> doc_counts;
    std::size_t iterations = 0;
    /// Mean over iterations of the variance of per-iteration query NDCGs about their final
    /// means, divided by the iteration count (a standard-error-squared summary).
    double query_estimator_variance = 0.0;

    double max_abs_diff(const RewardEstimate& other) const;
};

constexpr std::uint64_t kDefaultExactCap = 100000;

/// Combinations exact_reward would enumerate: n_rollout^(#docs); saturates at UINT64_MAX.
std::uint64_t combination_count(const RewardTask& task);

/// Matching pairs of the exhaustive evaluation: q * n_rollout * n_rollout^(#docs).
std::uint64_t matching_pair_count(const RewardTask& task);

/// Ground truth: uniform average over every doc-rollout combination. Throws CapacityError when
/// the combination count exceeds `cap`.
RewardEstimate exact_reward(const RewardTask& task, std::uint64_t cap = kDefaultExactCap);

/// Multi-sampling estimator with stratified permutation blocks: in each block of n_rollout
/// iterations every doc uses each of its rollouts exactly once.
RewardEstimate sampled_reward(const RewardTask& task, Rng& rng);

/// The doc selections sampled_reward would draw for `task` from `rng`.
std::vector<std::vector<std::size_t>> stratified_schedule(std::size_t n_docs, std::size_t n_rollout,
                                                          std::size_t n_samp, Rng& rng);

}  // namespace coaug::reward
