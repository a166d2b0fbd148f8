#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "coaug/corpus.hpp"
#include "coaug/kinds.hpp"
#include "coaug/retrieval.hpp"
#include "coaug/rng.hpp"

namespace coaug::sampler {

/// q queries, d_pos relevant docs per query and d_neg shared irrelevant docs.
struct CompositeBatch {
    std::vector<corpus::QueryItem> queries;
    /// relevant[i] belongs to queries[i].
    std::vector<std::vector<corpus::CorpusItem>> relevant;
    std::vector<corpus::CorpusItem> irrelevant;
    std::uint64_t seed = 0;

    std::size_t text_count() const;
    std::vector<std::string> doc_ids() const;
};

/// How "irrelevant" is decided. Bm25 is the default; QrelsOnly is the fallback for dense-only
/// runs and only requires the doc to be unjudged (grade 0) for every batch query.
enum class IrrelevancePredicate { Bm25ZeroScore, QrelsOnly };

struct SamplerOptions {
    std::size_t q = 4;
    std::size_t d_pos = 2;
    std::size_t d_neg = 10;
    IrrelevancePredicate predicate = IrrelevancePredicate::Bm25ZeroScore;
};

/// Draws composite batches from a dataset. Owns per-query caches of which docs score above
/// zero on the raw query text.
class CompositeSampler {
public:
    /// `raw_index` must be built over the raw content of `data.docs`. Both must outlive the sampler.
    CompositeSampler(const corpus::Dataset& data, const retrieval::SparseIndex& raw_index,
                     const retrieval::Tokenizer& tokenizer, SamplerOptions options);

    /// Queries with at least d_pos relevant docs present in the corpus.
    const std::vector<std::size_t>& eligible_queries() const noexcept { return eligible_; }

    CompositeBatch sample(Rng& rng) const;

    const SamplerOptions& options() const noexcept { return options_; }

private:
    const std::vector<std::size_t>& positive_docs(std::size_t query) const;

    const corpus::Dataset& data_;
    const retrieval::SparseIndex& index_;
    SamplerOptions options_;
    std::vector<std::size_t> eligible_;
    std::vector<std::vector<std::size_t>> relevant_docs_;
    std::vector<std::vector<std::size_t>> positive_score_docs_;
};

/// One-shot convenience wrapper around CompositeSampler.
CompositeBatch sample_batch(const corpus::Dataset& data, const retrieval::SparseIndex& raw_index, std::size_t q,
                            std::size_t d_pos, std::size_t d_neg, Rng& rng,
                            const retrieval::Tokenizer& tokenizer = {});

/// Checks every CompositeBatch invariant against qrels and the raw index; returns violations.
std::vector<std::string> verify_batch(const CompositeBatch& batch, const corpus::Dataset& data,
                                      const retrieval::SparseIndex& raw_index,
                                      const retrieval::Tokenizer& tokenizer = {});

/// Templates with a `{text}` placeholder.
struct PromptSet {
    std::string query_template = "{text}";
    std::string doc_template = "{text}";
};

std::string render_prompt(const std::string& templ, const std::string& text);

/// Recovers the text substituted into a single-placeholder template; nullopt when the prompt
/// does not match.
std::optional<std::string> extract_prompt_text(const std::string& templ, const std::string& prompt);

struct PromptedRecord {
    SourceKind kind = SourceKind::Query;
    std::string source_id;
    /// For relevant docs, the query they were sampled for; empty otherwise.
    std::string owner_query;
    std::string prompt;
    std::string text;
};

/// Queries first, then each query's relevant docs, then irrelevant docs.
std::vector<PromptedRecord> attach_prompts(const CompositeBatch& batch, const PromptSet& prompts);

}  // namespace coaug::sampler
