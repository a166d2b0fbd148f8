#pragma once

#include <cstdint>
#include <cstdio>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coaug/kinds.hpp"
#include "coaug/retrieval.hpp"
#include "coaug/rng.hpp"

namespace coaug::policy {

using TokenId = std::uint32_t;

/// One sampled augmentation of one source text.
struct Rollout {
    std::string source_id;
    SourceKind kind = SourceKind::Query;
    /// Augmentation-vocabulary ids (toy policy only).
    std::vector<TokenId> tokens;
    std::string augmentation;
    double log_prob = 0.0;
    double reward = 0.0;
    double advantage = 0.0;
};

struct AugmentedText {
    std::string original;
    std::string augmentation;

    std::string combined() const;
};

/// Concatenates with a single space; an empty augmentation leaves the original unchanged.
AugmentedText apply_augmentation(std::string original, std::string augmentation);

/// Content of the first well-formed <answer>...</answer> pair, trimmed; empty when absent.
std::string parse_augmentation(std::string_view model_output);

/// Input features and output tokens of the toy policy.
class PolicyVocabulary {
public:
    PolicyVocabulary() = default;
    PolicyVocabulary(std::vector<std::string> input_tokens, std::vector<std::string> output_tokens);

    std::size_t input_size() const noexcept { return input_.size(); }
    std::size_t output_size() const noexcept { return output_.size(); }
    const std::vector<std::string>& input_tokens() const noexcept { return input_; }
    const std::vector<std::string>& output_tokens() const noexcept { return output_; }
    const std::string& output_token(TokenId id) const { return output_.at(id); }

    /// -1 when absent.
    std::int64_t input_index(const std::string& token) const;
    std::int64_t output_index(const std::string& token) const;

private:
    std::vector<std::string> input_;
    std::vector<std::string> output_;
    std::unordered_map<std::string, std::size_t> input_index_;
    std::unordered_map<std::string, std::size_t> output_index_;
};

/// Input vocabulary = every surface token of `texts` (sorted); output vocabulary = input plus
/// `extra_output` (e.g. synthetic bridge tokens), sorted and deduplicated.
PolicyVocabulary build_policy_vocabulary(std::span<const std::string> texts,
                                         std::span<const std::string> extra_output,
                                         const retrieval::Tokenizer& tokenizer = {});

/// Sparse L1-normalized term frequencies plus the source-kind indicator.
struct SparseFeatures {
    std::vector<std::pair<std::uint32_t, double>> entries;
    double indicator = 0.0;
};

struct ToyPolicyParams {
    std::size_t feature_dim = 0;
    std::size_t output_dim = 0;
    /// (feature_dim + 1) x output_dim, row-major; the last row multiplies the indicator.
    std::vector<double> weights;
    double temperature = 1.2;
    std::size_t tokens_per_rollout = 8;
    bool without_replacement = true;

    std::size_t rows() const noexcept { return feature_dim + 1; }
    double& at(std::size_t row, std::size_t col) { return weights[row * output_dim + col]; }
    double at(std::size_t row, std::size_t col) const { return weights[row * output_dim + col]; }

    /// Zero weights of the right shape.
    static ToyPolicyParams zeros(std::size_t feature_dim, std::size_t output_dim);
    /// Gaussian init with standard deviation `scale`.
    static ToyPolicyParams random(std::size_t feature_dim, std::size_t output_dim, double scale, Rng& rng);

    /// Throws ConfigError on shape mismatch, non-finite weights, temperature <= 0, or m larger
    /// than the output vocabulary with without-replacement sampling.
    void validate() const;

    bool operator==(const ToyPolicyParams&) const = default;
};

/// Anything that can augment text. The toy policy is the only trainable implementation.
class AugmentationPolicy {
public:
    virtual ~AugmentationPolicy() = default;

    virtual std::vector<Rollout> rollout(const std::string& source_id, std::string_view text, SourceKind kind,
                                         std::string_view prompt, std::size_t n, Rng& rng) const = 0;

    /// Deterministic single augmentation used for evaluation and document precomputation.
    virtual std::string augment(std::string_view text, SourceKind kind, std::string_view prompt) const = 0;
};

/// Linear-softmax bag-of-words policy: logits = W^T [tf; indicator] / temperature.
class ToyPolicy : public AugmentationPolicy {
public:
    ToyPolicy(std::shared_ptr<const PolicyVocabulary> vocab, ToyPolicyParams params,
              retrieval::Tokenizer tokenizer = {});

    const PolicyVocabulary& vocabulary() const noexcept { return *vocab_; }
    std::shared_ptr<const PolicyVocabulary> shared_vocabulary() const noexcept { return vocab_; }
    const ToyPolicyParams& params() const noexcept { return params_; }
    ToyPolicyParams& mutable_params() noexcept { return params_; }
    const retrieval::Tokenizer& tokenizer() const noexcept { return tokenizer_; }

    /// Dense feature vector of length input_size + 1; the last slot is 1 for queries, 0 for docs.
    std::vector<double> featurize(std::string_view text, SourceKind kind) const;
    SparseFeatures sparse_features(std::string_view text, SourceKind kind) const;
    SparseFeatures sparse_features(std::span<const std::string> tokens, SourceKind kind) const;

    /// Temperature-scaled logits W^T x / T.
    std::vector<double> scaled_logits(const SparseFeatures& x) const;
    std::vector<double> probabilities(const SparseFeatures& x) const;

    std::vector<Rollout> rollout(const std::string& source_id, std::string_view text, SourceKind kind,
                                 std::string_view prompt, std::size_t n, Rng& rng) const override;
    std::vector<Rollout> rollout_features(const std::string& source_id, const SparseFeatures& x, SourceKind kind,
                                          std::size_t n, Rng& rng) const;

    /// Top-m tokens by probability, ties broken by token id.
    std::vector<TokenId> argmax_tokens(const SparseFeatures& x) const;
    std::string augment(std::string_view text, SourceKind kind, std::string_view prompt) const override;

    /// Log-probability of an ordered token sequence under the sampling scheme.
    double log_prob(const SparseFeatures& x, std::span<const TokenId> tokens) const;

    /// Adds scale * d log_prob / dW into `grad` (same layout as weights) and returns log_prob.
    double accumulate_log_prob_gradient(const SparseFeatures& x, std::span<const TokenId> tokens, double scale,
                                        std::span<double> grad) const;

    std::string join_tokens(std::span<const TokenId> tokens) const;

private:
    std::shared_ptr<const PolicyVocabulary> vocab_;
    ToyPolicyParams params_;
    retrieval::Tokenizer tokenizer_;
};

/// Line channel to an external text generator.
class LineChannel {
public:
    virtual ~LineChannel() = default;
    virtual void send(const std::string& line) = 0;
    /// Throws IngestionError when the peer closed the stream.
    virtual std::string receive() = 0;
};

class StreamChannel : public LineChannel {
public:
    StreamChannel(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
    void send(const std::string& line) override;
    std::string receive() override;

private:
    std::istream& in_;
    std::ostream& out_;
};

/// Spawns `/bin/sh -c command` and talks to it over its stdin/stdout.
class SubprocessChannel : public LineChannel {
public:
    explicit SubprocessChannel(const std::string& command);
    ~SubprocessChannel() override;
    SubprocessChannel(const SubprocessChannel&) = delete;
    SubprocessChannel& operator=(const SubprocessChannel&) = delete;

    void send(const std::string& line) override;
    std::string receive() override;

private:
    int pid_ = -1;
    std::FILE* to_child_ = nullptr;
    std::FILE* from_child_ = nullptr;
};

/// Request: one JSON object {kind, prompt, text, n}. Response: n lines of raw model output,
/// each passed through parse_augmentation. Log-probabilities are unavailable (reported as 0).
class ExternalPolicy : public AugmentationPolicy {
public:
    explicit ExternalPolicy(std::shared_ptr<LineChannel> channel) : channel_(std::move(channel)) {}

    std::vector<Rollout> rollout(const std::string& source_id, std::string_view text, SourceKind kind,
                                 std::string_view prompt, std::size_t n, Rng& rng) const override;
    std::string augment(std::string_view text, SourceKind kind, std::string_view prompt) const override;

private:
    std::vector<std::string> request(std::string_view text, SourceKind kind, std::string_view prompt,
                                     std::size_t n) const;
    std::shared_ptr<LineChannel> channel_;
};

/// Empty augmentation for every text.
class IdentityPolicy : public AugmentationPolicy {
public:
    std::vector<Rollout> rollout(const std::string& source_id, std::string_view text, SourceKind kind,
                                 std::string_view prompt, std::size_t n, Rng& rng) const override;
    std::string augment(std::string_view, SourceKind, std::string_view) const override { return {}; }
};

}  // namespace coaug::policy
