#include "coaug/policy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <sys/wait.h>
#include <unistd.h>

#include <csignal>

#include <json.hpp>

#include "coaug/error.hpp"

namespace coaug::policy {

std::string AugmentedText::combined() const {
    if (augmentation.empty()) return original;
    if (original.empty()) return augmentation;
    return original + " " + augmentation;
}

AugmentedText apply_augmentation(std::string original, std::string augmentation) {
    return AugmentedText{std::move(original), std::move(augmentation)};
}

std::string parse_augmentation(std::string_view model_output) {
    static constexpr std::string_view kOpen = "<answer>";
    static constexpr std::string_view kClose = "</answer>";
    const auto close = model_output.find(kClose);
    if (close == std::string_view::npos) return {};
    const auto open = model_output.rfind(kOpen, close);
    if (open == std::string_view::npos || open + kOpen.size() > close) return {};
    auto body = model_output.substr(open + kOpen.size(), close - open - kOpen.size());
    const auto first = body.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = body.find_last_not_of(" \t\r\n");
    return std::string(body.substr(first, last - first + 1));
}

// ---------------------------------------------------------------------------------------------

PolicyVocabulary::PolicyVocabulary(std::vector<std::string> input_tokens, std::vector<std::string> output_tokens)
    : input_(std::move(input_tokens)), output_(std::move(output_tokens)) {
    for (std::size_t i = 0; i < input_.size(); ++i) {
        if (!input_index_.emplace(input_[i], i).second) throw ConfigError("vocabulary", "duplicate input token '" + input_[i] + "'");
    }
    for (std::size_t i = 0; i < output_.size(); ++i) {
        if (!output_index_.emplace(output_[i], i).second) {
            throw ConfigError("vocabulary", "duplicate output token '" + output_[i] + "'");
        }
    }
}

std::int64_t PolicyVocabulary::input_index(const std::string& token) const {
    auto it = input_index_.find(token);
    return it == input_index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

std::int64_t PolicyVocabulary::output_index(const std::string& token) const {
    auto it = output_index_.find(token);
    return it == output_index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

PolicyVocabulary build_policy_vocabulary(std::span<const std::string> texts, std::span<const std::string> extra_output,
                                         const retrieval::Tokenizer& tokenizer) {
    std::set<std::string> input;
    for (const auto& t : texts) {
        for (auto& tok : tokenizer.tokenize(t)) input.insert(std::move(tok));
    }
    std::set<std::string> output = input;
    for (const auto& e : extra_output) {
        for (auto& tok : tokenizer.tokenize(e)) output.insert(std::move(tok));
    }
    return PolicyVocabulary({input.begin(), input.end()}, {output.begin(), output.end()});
}

// ---------------------------------------------------------------------------------------------

ToyPolicyParams ToyPolicyParams::zeros(std::size_t feature_dim, std::size_t output_dim) {
    ToyPolicyParams p;
    p.feature_dim = feature_dim;
    p.output_dim = output_dim;
    p.weights.assign((feature_dim + 1) * output_dim, 0.0);
    return p;
}

ToyPolicyParams ToyPolicyParams::random(std::size_t feature_dim, std::size_t output_dim, double scale, Rng& rng) {
    auto p = zeros(feature_dim, output_dim);
    for (auto& w : p.weights) w = scale * standard_normal(rng);
    return p;
}

void ToyPolicyParams::validate() const {
    if (weights.size() != rows() * output_dim) throw ConfigError("policy.weights", "shape mismatch");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("policy.temperature", "must be > 0");
    if (without_replacement && tokens_per_rollout > output_dim) {
        throw ConfigError("policy.tokens_per_rollout",
                          std::to_string(tokens_per_rollout) + " tokens without replacement exceed the output vocabulary of " +
                              std::to_string(output_dim));
    }
    if (tokens_per_rollout > 0 && output_dim == 0) throw ConfigError("policy.output_dim", "empty output vocabulary");
    for (double w : weights) {
        if (!std::isfinite(w)) throw ConfigError("policy.weights", "non-finite entry");
    }
}

ToyPolicy::ToyPolicy(std::shared_ptr<const PolicyVocabulary> vocab, ToyPolicyParams params,
                     retrieval::Tokenizer tokenizer)
    : vocab_(std::move(vocab)), params_(std::move(params)), tokenizer_(std::move(tokenizer)) {
    if (!vocab_) throw ConfigError("policy.vocabulary", "missing vocabulary");
    if (params_.feature_dim != vocab_->input_size() || params_.output_dim != vocab_->output_size()) {
        throw ConfigError("policy.weights", "parameter shape does not match the vocabulary");
    }
    params_.validate();
}

SparseFeatures ToyPolicy::sparse_features(std::span<const std::string> tokens, SourceKind kind) const {
    std::map<std::uint32_t, double> counts;
    double total = 0.0;
    for (const auto& t : tokens) {
        const auto idx = vocab_->input_index(t);
        if (idx < 0) continue;
        counts[static_cast<std::uint32_t>(idx)] += 1.0;
        total += 1.0;
    }
    SparseFeatures x;
    x.indicator = kind == SourceKind::Query ? 1.0 : 0.0;
    x.entries.reserve(counts.size());
    for (const auto& [idx, c] : counts) x.entries.emplace_back(idx, c / total);
    return x;
}

SparseFeatures ToyPolicy::sparse_features(std::string_view text, SourceKind kind) const {
    return sparse_features(tokenizer_.tokenize(text), kind);
}

std::vector<double> ToyPolicy::featurize(std::string_view text, SourceKind kind) const {
    const auto x = sparse_features(text, kind);
    std::vector<double> dense(vocab_->input_size() + 1, 0.0);
    for (const auto& [idx, v] : x.entries) dense[idx] = v;
    dense.back() = x.indicator;
    return dense;
}

std::vector<double> ToyPolicy::scaled_logits(const SparseFeatures& x) const {
    const std::size_t v = params_.output_dim;
    std::vector<double> z(v, 0.0);
    auto add_row = [&](std::size_t row, double scale) {
        const double* w = params_.weights.data() + row * v;
        for (std::size_t k = 0; k < v; ++k) z[k] += scale * w[k];
    };
    for (const auto& [idx, value] : x.entries) add_row(idx, value);
    if (x.indicator != 0.0) add_row(params_.feature_dim, x.indicator);
    const double inv_t = 1.0 / params_.temperature;
    for (auto& zk : z) zk *= inv_t;
    return z;
}

namespace {

// Softmax weights exp(z - max) over the tokens still available, and their sum.
double masked_weights(std::span<const double> z, const std::vector<bool>& removed, std::vector<double>& w) {
    double max_z = -INFINITY;
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (!removed[k]) max_z = std::max(max_z, z[k]);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        w[k] = removed[k] ? 0.0 : std::exp(z[k] - max_z);
        sum += w[k];
    }
    return sum;
}

}  // namespace

std::vector<double> ToyPolicy::probabilities(const SparseFeatures& x) const {
    const auto z = scaled_logits(x);
    std::vector<double> w(z.size());
    const double sum = masked_weights(z, std::vector<bool>(z.size(), false), w);
    for (auto& p : w) p /= sum;
    return w;
}

std::vector<Rollout> ToyPolicy::rollout_features(const std::string& source_id, const SparseFeatures& x,
                                                 SourceKind kind, std::size_t n, Rng& rng) const {
    if (n < 1) throw ConfigError("train.n_rollout", "must be >= 1");
    const auto z = scaled_logits(x);
    const std::size_t v = z.size();
    const std::size_t m = params_.tokens_per_rollout;
    std::vector<double> w(v);
    std::vector<Rollout> out;
    out.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        Rollout ro;
        ro.source_id = source_id;
        ro.kind = kind;
        std::vector<bool> removed(v, false);
        double sum = masked_weights(z, removed, w);
        for (std::size_t j = 0; j < m; ++j) {
            if (params_.without_replacement && j > 0) sum = masked_weights(z, removed, w);
            const double u = uniform01(rng) * sum;
            double acc = 0.0;
            std::size_t pick = v;
            for (std::size_t k = 0; k < v; ++k) {
                if (w[k] == 0.0) continue;
                acc += w[k];
                pick = k;
                if (u < acc) break;
            }
            ro.log_prob += std::log(w[pick]) - std::log(sum);
            ro.tokens.push_back(static_cast<TokenId>(pick));
            if (params_.without_replacement) removed[pick] = true;
        }
        ro.augmentation = join_tokens(ro.tokens);
        out.push_back(std::move(ro));
    }
    return out;
}

std::vector<Rollout> ToyPolicy::rollout(const std::string& source_id, std::string_view text, SourceKind kind,
                                        std::string_view /*prompt*/, std::size_t n, Rng& rng) const {
    return rollout_features(source_id, sparse_features(text, kind), kind, n, rng);
}

double ToyPolicy::log_prob(const SparseFeatures& x, std::span<const TokenId> tokens) const {
    const auto z = scaled_logits(x);
    std::vector<double> w(z.size());
    std::vector<bool> removed(z.size(), false);
    double sum = masked_weights(z, removed, w);
    double lp = 0.0;
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        if (params_.without_replacement && j > 0) sum = masked_weights(z, removed, w);
        lp += std::log(w[tokens[j]]) - std::log(sum);
        if (params_.without_replacement) removed[tokens[j]] = true;
    }
    return lp;
}

double ToyPolicy::accumulate_log_prob_gradient(const SparseFeatures& x, std::span<const TokenId> tokens, double scale,
                                               std::span<double> grad) const {
    const auto z = scaled_logits(x);
    const std::size_t v = z.size();
    std::vector<double> w(v);
    std::vector<double> dz(v, 0.0);
    std::vector<bool> removed(v, false);
    double sum = masked_weights(z, removed, w);
    double lp = 0.0;
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        if (params_.without_replacement && j > 0) sum = masked_weights(z, removed, w);
        const TokenId t = tokens[j];
        lp += std::log(w[t]) - std::log(sum);
        for (std::size_t k = 0; k < v; ++k) dz[k] -= w[k] / sum;
        dz[t] += 1.0;
        if (params_.without_replacement) removed[t] = true;
    }
    const double inv_t = scale / params_.temperature;
    auto add_row = [&](std::size_t row, double xf) {
        double* g = grad.data() + row * v;
        const double c = xf * inv_t;
        for (std::size_t k = 0; k < v; ++k) g[k] += c * dz[k];
    };
    for (const auto& [idx, value] : x.entries) add_row(idx, value);
    if (x.indicator != 0.0) add_row(params_.feature_dim, x.indicator);
    return lp;
}

std::vector<TokenId> ToyPolicy::argmax_tokens(const SparseFeatures& x) const {
    const auto z = scaled_logits(x);
    std::vector<TokenId> order(z.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t m = std::min(params_.tokens_per_rollout, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                      [&](TokenId a, TokenId b) { return z[a] != z[b] ? z[a] > z[b] : a < b; });
    order.resize(m);
    return order;
}

std::string ToyPolicy::augment(std::string_view text, SourceKind kind, std::string_view /*prompt*/) const {
    return join_tokens(argmax_tokens(sparse_features(text, kind)));
}

std::string ToyPolicy::join_tokens(std::span<const TokenId> tokens) const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += vocab_->output_token(tokens[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------------------------

std::vector<Rollout> IdentityPolicy::rollout(const std::string& source_id, std::string_view, SourceKind kind,
                                             std::string_view, std::size_t n, Rng&) const {
    std::vector<Rollout> out(n);
    for (auto& r : out) {
        r.source_id = source_id;
        r.kind = kind;
    }
    return out;
}

void StreamChannel::send(const std::string& line) {
    out_ << line << '\n';
    out_.flush();
}

std::string StreamChannel::receive() {
    std::string line;
    if (!std::getline(in_, line)) throw IngestionError("external policy closed its output stream");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

SubprocessChannel::SubprocessChannel(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0) throw IngestionError("pipe() failed");
    if (pipe(from_child) != 0) {
        close(to_child[0]);
        close(to_child[1]);
        throw IngestionError("pipe() failed");
    }
    pid_ = fork();
    if (pid_ < 0) throw IngestionError("fork() failed");
    if (pid_ == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    to_child_ = fdopen(to_child[1], "w");
    from_child_ = fdopen(from_child[0], "r");
}

SubprocessChannel::~SubprocessChannel() {
    if (to_child_) std::fclose(to_child_);
    if (from_child_) std::fclose(from_child_);
    if (pid_ > 0) {
        int status = 0;
        waitpid(pid_, &status, 0);
    }
}

void SubprocessChannel::send(const std::string& line) {
    std::signal(SIGPIPE, SIG_IGN);
    if (std::fputs(line.c_str(), to_child_) < 0 || std::fputc('\n', to_child_) == EOF || std::fflush(to_child_) != 0) {
        throw IngestionError("external policy process is not accepting input");
    }
}

std::string SubprocessChannel::receive() {
    std::string line;
    int c;
    bool any = false;
    while ((c = std::fgetc(from_child_)) != EOF) {
        any = true;
        if (c == '\n') break;
        line.push_back(static_cast<char>(c));
    }
    if (!any) throw IngestionError("external policy closed its output stream");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::vector<std::string> ExternalPolicy::request(std::string_view text, SourceKind kind, std::string_view prompt,
                                                 std::size_t n) const {
    nlohmann::json req{{"kind", to_string(kind)}, {"prompt", prompt}, {"text", text}, {"n", n}};
    channel_->send(req.dump());
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(parse_augmentation(channel_->receive()));
    return out;
}

std::vector<Rollout> ExternalPolicy::rollout(const std::string& source_id, std::string_view text, SourceKind kind,
                                             std::string_view prompt, std::size_t n, Rng&) const {
    std::vector<Rollout> out;
    for (auto& aug : request(text, kind, prompt, n)) {
        Rollout r;
        r.source_id = source_id;
        r.kind = kind;
        r.augmentation = std::move(aug);
        out.push_back(std::move(r));
    }
    return out;
}

std::string ExternalPolicy::augment(std::string_view text, SourceKind kind, std::string_view prompt) const {
    return request(text, kind, prompt, 1).front();
}

}  // namespace coaug::policy
