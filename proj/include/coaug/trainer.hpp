#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coaug/advantage.hpp"
#include "coaug/corpus.hpp"
#include "coaug/policy.hpp"
#include "coaug/retrieval.hpp"
#include "coaug/reward.hpp"
#include "coaug/sampler.hpp"

namespace coaug::trainer {

/// Which source kinds receive a training signal. The other kind still produces rollouts and
/// shares the reward; only its advantages are forced to zero.
enum class Target { Joint, QueryOnly, DocOnly };

std::string to_string(Target target);
Target target_from_string(const std::string& name);

struct TrainConfig {
    std::size_t steps = 300;
    std::size_t q = 4;
    std::size_t d_pos = 2;
    std::size_t d_neg = 10;
    std::size_t n_rollout = 4;
    std::size_t n_samp = 32;
    std::size_t k = 10;
    retrieval::RetrieverKind retriever = retrieval::RetrieverKind::Bm25;
    reward::DenseOptions dense;
    sampler::IrrelevancePredicate irrelevance = sampler::IrrelevancePredicate::Bm25ZeroScore;
    advantage::AdvantageConfig advantage;
    Target target = Target::Joint;
    // Large because the gradient is averaged over every rollout of a mini-batch and features are
    // L1-normalized, so per-weight steps are small.
    double learning_rate = 300.0;
    /// Batch hierarchy in texts (prompted records); every text carries n_rollout rollouts.
    std::size_t batch_size = 64;
    std::size_t mini_batch_size = 32;
    std::size_t micro_batch_size = 16;
    double temperature = 1.2;
    std::size_t tokens_per_rollout = 8;
    bool without_replacement = true;
    double init_scale = 0.01;
    std::size_t eval_every = 25;
    double hqd_epsilon = 1e-6;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    sampler::PromptSet prompts;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    /// Texts per composite batch.
    std::size_t group_texts() const { return q + q * d_pos + d_neg; }
    std::size_t groups_per_step() const;
};

/// Dataset plus everything derived from it once: raw tokens, the raw BM25 index used by the
/// sampler, and the policy vocabulary. Not movable because the sampler keeps references.
/// With `surface_outputs` off the policy can emit only the extra tokens.
class Workspace {
public:
    Workspace(corpus::Dataset data, std::vector<std::string> extra_output_tokens,
              retrieval::TokenizerOptions tokenizer = {}, bool surface_outputs = true);
    Workspace(const Workspace&) = delete;
    Workspace& operator=(const Workspace&) = delete;

    const corpus::Dataset& data() const noexcept { return data_; }
    const retrieval::Tokenizer& tokenizer() const noexcept { return tokenizer_; }
    const retrieval::SparseIndex& raw_index() const noexcept { return raw_index_; }
    const std::vector<std::string>& extra_output_tokens() const noexcept { return extra_; }
    std::shared_ptr<const policy::PolicyVocabulary> vocabulary() const noexcept { return vocab_; }
    const std::vector<std::string>& doc_tokens(std::size_t doc) const { return doc_tokens_.at(doc); }
    const std::vector<std::string>& query_tokens(std::size_t query) const { return query_tokens_.at(query); }
    const std::vector<std::string>& tokens_of(const std::string& id, SourceKind kind) const;

private:
    corpus::Dataset data_;
    retrieval::Tokenizer tokenizer_;
    std::vector<std::string> extra_;
    std::vector<std::vector<std::string>> doc_tokens_;
    std::vector<std::vector<std::string>> query_tokens_;
    std::map<std::string, std::size_t> doc_pos_;
    std::map<std::string, std::size_t> query_pos_;
    retrieval::SparseIndex raw_index_;
    std::shared_ptr<const policy::PolicyVocabulary> vocab_;
};

/// One history row. Evaluation columns are empty on steps without an evaluation.
struct MetricRow {
    std::size_t step = 0;
    double mean_reward = 0.0;
    std::optional<double> ndcg10;
    std::optional<double> hqd;
    double amp_var = 0.0;
    double same_sign = 0.0;

    bool operator==(const MetricRow&) const = default;
};

struct TrainState {
    policy::ToyPolicyParams params;
    std::size_t step = 0;
    std::uint64_t seed = 0;
    std::vector<MetricRow> history;
    policy::ToyPolicyParams best_params;
    std::optional<double> best_ndcg;
    std::size_t best_step = 0;
};

struct StepReport {
    MetricRow row;
    std::size_t groups = 0;
    double rollout_seconds = 0.0;
    /// sampled_reward calls only.
    double reward_seconds = 0.0;
    /// Task construction (combined-text tokenization) plus sampled_reward.
    double reward_phase_seconds = 0.0;
    double update_seconds = 0.0;
    /// Reward groups of this step, in record order (for offline anomaly analysis).
    std::vector<advantage::RewardGroup> reward_groups;
    advantage::AdvantageReport advantages;
};

struct QueryScore {
    std::string query_id;
    double ndcg = 0.0;
    double base_ndcg = 0.0;
};

struct EvalResult {
    double ndcg = 0.0;
    double base_ndcg = 0.0;
    std::vector<QueryScore> per_query;
};

enum class AugmentMode { Argmax, Sample };

/// One augmentation per document. Sample mode draws from the policy with `rng` (required).
std::map<std::string, policy::AugmentedText> precompute_doc_augmentations(
    const policy::AugmentationPolicy& policy, const corpus::Dataset& data, AugmentMode mode = AugmentMode::Argmax,
    Rng* rng = nullptr, const sampler::PromptSet& prompts = {});

struct EvalOptions {
    retrieval::RetrieverKind retriever = retrieval::RetrieverKind::Bm25;
    reward::DenseOptions dense;
    std::size_t k = 10;
    sampler::PromptSet prompts;
};

/// NDCG@k over the full corpus. A null policy leaves that side raw; the base columns always use
/// raw texts on both sides.
EvalResult evaluate(const policy::AugmentationPolicy* query_policy, const policy::AugmentationPolicy* doc_policy,
                    const corpus::Dataset& data, const retrieval::Tokenizer& tokenizer, const EvalOptions& options);

/// Combined texts of every query and doc under the given policies (null = raw).
struct AugmentedCorpus {
    std::vector<std::string> queries;
    std::vector<std::string> docs;
    std::vector<std::string> query_augmentations;
    std::vector<std::string> doc_augmentations;
};
AugmentedCorpus augment_corpus(const policy::AugmentationPolicy* query_policy,
                               const policy::AugmentationPolicy* doc_policy, const corpus::Dataset& data,
                               const sampler::PromptSet& prompts = {});

/// Cross-entropy of the augmented-query word distribution against the augmented-doc one, in nats.
double hqd(const AugmentedCorpus& texts, const retrieval::Tokenizer& tokenizer, double epsilon);

class Trainer {
public:
    Trainer(const Workspace& workspace, TrainConfig config);

    const TrainConfig& config() const noexcept { return config_; }
    const Workspace& workspace() const noexcept { return ws_; }

    /// Fresh state: Gaussian init from the seed, step 0, empty history.
    TrainState init_state() const;
    policy::ToyPolicy make_policy(const policy::ToyPolicyParams& params) const;

    /// Sample, roll out, reward, advantage, update. On any error the state is left untouched.
    StepReport train_step(TrainState& state) const;

    /// Runs train_step until state.step == config.steps.
    void run(TrainState& state, const std::function<void(const StepReport&)>& on_step = {}) const;

    /// Evaluation of `params` under the configured target (query-only leaves docs raw, etc.).
    EvalResult evaluate(const policy::ToyPolicyParams& params) const;
    double hqd(const policy::ToyPolicyParams& params) const;

private:
    bool is_eval_step(std::size_t step) const;

    const Workspace& ws_;
    TrainConfig config_;
    sampler::CompositeSampler sampler_;
};

/// Versioned JSON checkpoint carrying the config, the vocabulary and the full state.
void save_checkpoint(const std::filesystem::path& file, const TrainConfig& config,
                     const policy::PolicyVocabulary& vocab, const TrainState& state);

struct Checkpoint {
    TrainConfig config;
    std::shared_ptr<const policy::PolicyVocabulary> vocabulary;
    TrainState state;
};
Checkpoint load_checkpoint(const std::filesystem::path& file);

void write_history_csv(const std::filesystem::path& file, const std::vector<MetricRow>& history);
void write_history_json(const std::filesystem::path& file, const std::vector<MetricRow>& history);
std::string history_csv(const std::vector<MetricRow>& history);

}  // namespace coaug::trainer
