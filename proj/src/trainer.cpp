#include "coaug/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "coaug/config.hpp"
#include "coaug/error.hpp"
#include "coaug/metrics.hpp"
#include "coaug/parallel.hpp"

namespace coaug::trainer {

using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Stream tags for derive_seed; each (step, purpose, index) triple gets its own generator.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kRolloutStream = 2;
constexpr std::uint64_t kRewardStream = 3;

TrainConfig validated(TrainConfig c) {
    c.validate();
    return c;
}

retrieval::RetrievalIndex build_index(const std::vector<std::pair<std::string, std::vector<std::string>>>& docs,
                                      retrieval::RetrieverKind kind, const reward::DenseOptions& dense) {
    if (kind == retrieval::RetrieverKind::Bm25) return retrieval::SparseIndex::build(docs);
    return retrieval::DenseIndex::build(docs, dense.dim, dense.seed);
}

retrieval::ScoredRanking run_query(const retrieval::RetrievalIndex& index, const std::vector<std::string>& tokens,
                                   std::size_t k) {
    if (index.kind() == retrieval::RetrieverKind::Bm25) return index.sparse().retrieve(tokens, k);
    return index.dense().retrieve(tokens, k);
}

}  // namespace

std::string to_string(Target target) {
    switch (target) {
        case Target::Joint: return "joint";
        case Target::QueryOnly: return "query-only";
        case Target::DocOnly: return "doc-only";
    }
    return "joint";
}

Target target_from_string(const std::string& name) {
    if (name == "joint") return Target::Joint;
    if (name == "query-only") return Target::QueryOnly;
    if (name == "doc-only") return Target::DocOnly;
    throw ConfigError("train.target", "unknown target '" + name + "' (expected joint, query-only or doc-only)");
}

void TrainConfig::validate() const {
    auto at_least_one = [](std::size_t v, const char* field) {
        if (v < 1) throw ConfigError(field, "must be >= 1");
    };
    at_least_one(steps, "train.steps");
    at_least_one(q, "train.q");
    at_least_one(d_pos, "train.d_pos");
    at_least_one(n_rollout, "train.n_rollout");
    at_least_one(n_samp, "train.n_samp");
    at_least_one(k, "train.k");
    at_least_one(batch_size, "train.batch_size");
    at_least_one(mini_batch_size, "train.mini_batch_size");
    at_least_one(micro_batch_size, "train.micro_batch_size");
    at_least_one(eval_every, "train.eval_every");
    at_least_one(workers, "train.workers");
    if (micro_batch_size > mini_batch_size) throw ConfigError("train.micro_batch_size", "must be <= mini_batch_size");
    if (mini_batch_size > batch_size) throw ConfigError("train.mini_batch_size", "must be <= batch_size");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("train.learning_rate", "must be a finite non-negative number");
    }
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("train.temperature", "must be > 0");
    if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw ConfigError("train.init_scale", "must be >= 0");
    if (!(hqd_epsilon > 0.0)) throw ConfigError("train.hqd_epsilon", "must be > 0");
    if (retriever == retrieval::RetrieverKind::Dense && dense.dim < 8) throw ConfigError("train.dense.dim", "must be >= 8");
    try {
        advantage.validate();
    } catch (const ConfigError& e) {
        throw ConfigError("train." + e.field(), "must be a positive finite number");
    }
}

std::size_t TrainConfig::groups_per_step() const { return std::max<std::size_t>(1, batch_size / group_texts()); }

// ---------------------------------------------------------------------------------------------

Workspace::Workspace(corpus::Dataset data, std::vector<std::string> extra_output_tokens,
                     retrieval::TokenizerOptions tokenizer, bool surface_outputs)
    : data_(std::move(data)), tokenizer_(std::move(tokenizer)), extra_(std::move(extra_output_tokens)) {
    std::vector<std::pair<std::string, std::vector<std::string>>> docs;
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < data_.docs.size(); ++i) {
        const auto content = data_.docs[i].content();
        doc_tokens_.push_back(tokenizer_.tokenize(content));
        doc_pos_.emplace(data_.docs[i].id, i);
        docs.emplace_back(data_.docs[i].id, doc_tokens_.back());
        texts.push_back(content);
    }
    for (std::size_t i = 0; i < data_.queries.size(); ++i) {
        query_tokens_.push_back(tokenizer_.tokenize(data_.queries[i].text));
        query_pos_.emplace(data_.queries[i].id, i);
        texts.push_back(data_.queries[i].text);
    }
    raw_index_ = retrieval::SparseIndex::build(docs);
    auto vocab = policy::build_policy_vocabulary(texts, extra_, tokenizer_);
    if (!surface_outputs) {
        std::set<std::string> out;
        for (const auto& e : extra_) {
            for (auto& t : tokenizer_.tokenize(e)) out.insert(std::move(t));
        }
        vocab = policy::PolicyVocabulary(vocab.input_tokens(), {out.begin(), out.end()});
    }
    vocab_ = std::make_shared<const policy::PolicyVocabulary>(std::move(vocab));
}

const std::vector<std::string>& Workspace::tokens_of(const std::string& id, SourceKind kind) const {
    if (kind == SourceKind::Query) {
        auto it = query_pos_.find(id);
        if (it == query_pos_.end()) throw LookupError("unknown query id '" + id + "'");
        return query_tokens_[it->second];
    }
    auto it = doc_pos_.find(id);
    if (it == doc_pos_.end()) throw LookupError("unknown doc id '" + id + "'");
    return doc_tokens_[it->second];
}

// ---------------------------------------------------------------------------------------------

std::map<std::string, policy::AugmentedText> precompute_doc_augmentations(const policy::AugmentationPolicy& policy,
                                                                       const corpus::Dataset& data, AugmentMode mode,
                                                                       Rng* rng, const sampler::PromptSet& prompts) {
    if (mode == AugmentMode::Sample && rng == nullptr) {
        throw ConfigError("mode", "sample mode needs a random generator");
    }
    std::map<std::string, policy::AugmentedText> out;
    for (const auto& doc : data.docs) {
        const auto content = doc.content();
        const auto prompt = sampler::render_prompt(prompts.doc_template, content);
        std::string aug;
        if (mode == AugmentMode::Argmax) {
            aug = policy.augment(content, SourceKind::RelevantDoc, prompt);
        } else {
            aug = policy.rollout(doc.id, content, SourceKind::RelevantDoc, prompt, 1, *rng).front().augmentation;
        }
        out.emplace(doc.id, policy::apply_augmentation(content, std::move(aug)));
    }
    return out;
}

AugmentedCorpus augment_corpus(const policy::AugmentationPolicy* query_policy,
                               const policy::AugmentationPolicy* doc_policy, const corpus::Dataset& data,
                               const sampler::PromptSet& prompts) {
    AugmentedCorpus out;
    for (const auto& q : data.queries) {
        std::string aug;
        if (query_policy) {
            aug = query_policy->augment(q.text, SourceKind::Query, sampler::render_prompt(prompts.query_template, q.text));
        }
        out.queries.push_back(policy::apply_augmentation(q.text, aug).combined());
        out.query_augmentations.push_back(std::move(aug));
    }
    if (doc_policy) {
        const auto docs = precompute_doc_augmentations(*doc_policy, data, AugmentMode::Argmax, nullptr, prompts);
        for (const auto& d : data.docs) {
            const auto& a = docs.at(d.id);
            out.docs.push_back(a.combined());
            out.doc_augmentations.push_back(a.augmentation);
        }
    } else {
        for (const auto& d : data.docs) {
            out.docs.push_back(d.content());
            out.doc_augmentations.emplace_back();
        }
    }
    return out;
}

namespace {

std::vector<double> ndcg_per_query(const std::vector<std::string>& query_texts,
                                   const std::vector<std::string>& doc_texts, const corpus::Dataset& data,
                                   const retrieval::Tokenizer& tokenizer, const EvalOptions& options) {
    std::vector<std::pair<std::string, std::vector<std::string>>> docs;
    docs.reserve(data.docs.size());
    for (std::size_t i = 0; i < data.docs.size(); ++i) docs.emplace_back(data.docs[i].id, tokenizer.tokenize(doc_texts[i]));
    const auto index = build_index(docs, options.retriever, options.dense);
    std::vector<double> out;
    for (std::size_t i = 0; i < data.queries.size(); ++i) {
        const auto ranking = run_query(index, tokenizer.tokenize(query_texts[i]), options.k);
        const metrics::RelevanceView rel(data.qrels.judged(data.queries[i].id));
        out.push_back(metrics::ndcg_at_k(ranking, rel, options.k));
    }
    return out;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

EvalResult evaluate(const policy::AugmentationPolicy* query_policy, const policy::AugmentationPolicy* doc_policy,
                    const corpus::Dataset& data, const retrieval::Tokenizer& tokenizer, const EvalOptions& options) {
    if (options.k == 0) throw ConfigError("eval.k", "must be >= 1");
    const auto raw = augment_corpus(nullptr, nullptr, data, options.prompts);
    const auto base = ndcg_per_query(raw.queries, raw.docs, data, tokenizer, options);
    std::vector<double> aug = base;
    if (query_policy || doc_policy) {
        const auto texts = augment_corpus(query_policy, doc_policy, data, options.prompts);
        aug = ndcg_per_query(texts.queries, texts.docs, data, tokenizer, options);
    }
    EvalResult r;
    for (std::size_t i = 0; i < data.queries.size(); ++i) r.per_query.push_back({data.queries[i].id, aug[i], base[i]});
    r.ndcg = mean_of(aug);
    r.base_ndcg = mean_of(base);
    return r;
}

double hqd(const AugmentedCorpus& texts, const retrieval::Tokenizer& tokenizer, double epsilon) {
    std::vector<std::vector<std::string>> tokens;
    tokens.reserve(texts.queries.size() + texts.docs.size());
    for (const auto& t : texts.queries) tokens.push_back(tokenizer.tokenize(t));
    for (const auto& t : texts.docs) tokens.push_back(tokenizer.tokenize(t));
    const auto vocab = metrics::union_vocabulary(tokens);
    const auto pq = metrics::build_word_distribution(texts.queries, vocab, epsilon, tokenizer);
    const auto pd = metrics::build_word_distribution(texts.docs, vocab, epsilon, tokenizer);
    return metrics::cross_entropy(pq, pd);
}

// ---------------------------------------------------------------------------------------------

Trainer::Trainer(const Workspace& workspace, TrainConfig config)
    : ws_(workspace),
      config_(validated(std::move(config))),
      sampler_(ws_.data(), ws_.raw_index(), ws_.tokenizer(),
               sampler::SamplerOptions{config_.q, config_.d_pos, config_.d_neg, config_.irrelevance}) {}

policy::ToyPolicy Trainer::make_policy(const policy::ToyPolicyParams& params) const {
    return policy::ToyPolicy(ws_.vocabulary(), params, ws_.tokenizer());
}

TrainState Trainer::init_state() const {
    TrainState s;
    s.seed = config_.seed;
    auto rng = make_rng(config_.seed, {kInitStream});
    const auto& vocab = *ws_.vocabulary();
    s.params = policy::ToyPolicyParams::random(vocab.input_size(), vocab.output_size(), config_.init_scale, rng);
    s.params.temperature = config_.temperature;
    s.params.tokens_per_rollout = config_.tokens_per_rollout;
    s.params.without_replacement = config_.without_replacement;
    s.params.validate();
    s.best_params = s.params;
    return s;
}

bool Trainer::is_eval_step(std::size_t step) const { return step % config_.eval_every == 0 || step == config_.steps; }

EvalResult Trainer::evaluate(const policy::ToyPolicyParams& params) const {
    const auto pol = make_policy(params);
    const bool q = config_.target != Target::DocOnly;
    const bool d = config_.target != Target::QueryOnly;
    return trainer::evaluate(q ? &pol : nullptr, d ? &pol : nullptr, ws_.data(), ws_.tokenizer(),
                             EvalOptions{config_.retriever, config_.dense, config_.k, config_.prompts});
}

double Trainer::hqd(const policy::ToyPolicyParams& params) const {
    const auto pol = make_policy(params);
    const bool q = config_.target != Target::DocOnly;
    const bool d = config_.target != Target::QueryOnly;
    const auto texts = augment_corpus(q ? &pol : nullptr, d ? &pol : nullptr, ws_.data(), config_.prompts);
    return trainer::hqd(texts, ws_.tokenizer(), config_.hqd_epsilon);
}

namespace {

struct Item {
    std::size_t group = 0;
    sampler::PromptedRecord record;
    policy::SparseFeatures features;
    std::vector<policy::Rollout> rollouts;
};

}  // namespace

StepReport Trainer::train_step(TrainState& state) const {
    if (state.params.weights.empty()) throw ConfigError("state", "uninitialized parameters");
    const std::size_t step = state.step + 1;
    const auto& vocab = *ws_.vocabulary();
    const auto current = make_policy(state.params);
    StepReport report;

    // Batch-level sampling.
    const std::size_t n_groups = config_.groups_per_step();
    std::vector<sampler::CompositeBatch> batches;
    std::vector<Item> items;
    std::vector<std::size_t> group_begin;
    for (std::size_t g = 0; g < n_groups; ++g) {
        auto rng = make_rng(state.seed, {step, kBatchStream, g});
        batches.push_back(sampler_.sample(rng));
        group_begin.push_back(items.size());
        for (auto& rec : sampler::attach_prompts(batches.back(), config_.prompts)) {
            items.push_back(Item{g, std::move(rec), {}, {}});
        }
    }
    group_begin.push_back(items.size());
    report.groups = n_groups;

    // Sample-level inference: every record is rolled out on its own.
    std::vector<double> rollout_time(items.size(), 0.0);
    parallel_for(items.size(), config_.workers, [&](std::size_t i) {
        const auto t0 = Clock::now();
        auto& it = items[i];
        it.features = current.sparse_features(ws_.tokens_of(it.record.source_id, it.record.kind), it.record.kind);
        auto rng = make_rng(state.seed, {step, kRolloutStream, i});
        it.rollouts = current.rollout_features(it.record.source_id, it.features, it.record.kind, config_.n_rollout, rng);
        rollout_time[i] = seconds_since(t0);
    });
    for (double t : rollout_time) report.rollout_seconds += t;

    // Batch-level reward.
    std::vector<reward::RewardEstimate> estimates(n_groups);
    std::vector<double> reward_time(n_groups, 0.0), phase_time(n_groups, 0.0);
    parallel_for(n_groups, config_.workers, [&](std::size_t g) {
        const auto t0 = Clock::now();
        std::vector<std::vector<std::vector<std::string>>> combined;
        for (std::size_t i = group_begin[g]; i < group_begin[g + 1]; ++i) {
            const auto& raw = ws_.tokens_of(items[i].record.source_id, items[i].record.kind);
            std::vector<std::vector<std::string>> per_rollout;
            for (const auto& ro : items[i].rollouts) {
                auto toks = raw;
                for (auto t : ro.tokens) toks.push_back(vocab.output_token(t));
                per_rollout.push_back(std::move(toks));
            }
            combined.push_back(std::move(per_rollout));
        }
        auto task = reward::make_task(batches[g], ws_.data().qrels, std::move(combined), config_.n_rollout);
        task.retriever = config_.retriever;
        task.dense = config_.dense;
        task.n_samp = config_.n_samp;
        task.k = config_.k;
        auto rng = make_rng(state.seed, {step, kRewardStream, g});
        const auto t1 = Clock::now();
        estimates[g] = reward::sampled_reward(task, rng);
        reward_time[g] = seconds_since(t1);
        phase_time[g] = seconds_since(t0);
    });
    for (std::size_t g = 0; g < n_groups; ++g) {
        report.reward_seconds += reward_time[g];
        report.reward_phase_seconds += phase_time[g];
    }

    double reward_sum = 0.0;
    std::size_t reward_n = 0;
    for (std::size_t g = 0; g < n_groups; ++g) {
        const std::size_t nq = estimates[g].query_rewards.size();
        for (std::size_t i = group_begin[g]; i < group_begin[g + 1]; ++i) {
            const std::size_t local = i - group_begin[g];
            const auto& rewards = local < nq ? estimates[g].query_rewards[local] : estimates[g].doc_rewards[local - nq];
            report.reward_groups.push_back({items[i].record.kind, rewards});
            for (std::size_t r = 0; r < rewards.size(); ++r) items[i].rollouts[r].reward = rewards[r];
            if (local < nq) {
                for (double v : rewards) reward_sum += v;
                reward_n += rewards.size();
            }
        }
    }
    report.advantages = advantage::compute_advantages(report.reward_groups, config_.advantage);
    auto& adv = report.advantages.advantages;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const bool doc = is_document(items[i].record.kind);
        const bool frozen = (config_.target == Target::QueryOnly && doc) || (config_.target == Target::DocOnly && !doc);
        for (std::size_t r = 0; r < adv[i].size(); ++r) {
            if (frozen) adv[i][r] = 0.0;
            items[i].rollouts[r].advantage = adv[i][r];
        }
    }

    // Sample-level update: ordered micro-batch reduction, one parameter write per mini-batch.
    // Gradient buffers are dense but only rows with a nonzero feature are ever written, so they
    // are allocated once per step and cleared row by row.
    const auto t_update = Clock::now();
    auto updated = make_policy(state.params);
    auto& weights = updated.mutable_params().weights;
    const std::size_t v = vocab.output_size();
    const std::size_t n_rows = updated.params().rows();
    const std::size_t max_micro = (config_.mini_batch_size + config_.micro_batch_size - 1) / config_.micro_batch_size;
    std::vector<std::vector<double>> micro(max_micro);
    std::vector<std::vector<std::size_t>> touched(max_micro);
    std::vector<double> grad;
    std::vector<bool> row_used(n_rows, false);
    std::vector<std::size_t> used_rows;
    for (std::size_t start = 0, mb = 0; start < items.size(); start += config_.mini_batch_size, ++mb) {
        const std::size_t end = std::min(items.size(), start + config_.mini_batch_size);
        const std::size_t n_micro = (end - start + config_.micro_batch_size - 1) / config_.micro_batch_size;
        std::size_t rollouts = 0;
        for (std::size_t i = start; i < end; ++i) rollouts += items[i].rollouts.size();
        parallel_for(n_micro, config_.workers, [&](std::size_t m) {
            const std::size_t lo = start + m * config_.micro_batch_size;
            const std::size_t hi = std::min(end, lo + config_.micro_batch_size);
            std::vector<bool> seen(n_rows, false);
            touched[m].clear();
            for (std::size_t i = lo; i < hi; ++i) {
                const auto& x = items[i].features;
                for (const auto& ro : items[i].rollouts) {
                    if (ro.advantage == 0.0) continue;
                    if (micro[m].empty()) micro[m].assign(weights.size(), 0.0);
                    updated.accumulate_log_prob_gradient(x, ro.tokens, ro.advantage, micro[m]);
                    for (const auto& [idx, _] : x.entries) seen[idx] = true;
                    if (x.indicator != 0.0) seen[n_rows - 1] = true;
                }
            }
            for (std::size_t r = 0; r < n_rows; ++r) {
                if (seen[r]) touched[m].push_back(r);
            }
        });
        used_rows.clear();
        for (std::size_t m = 0; m < n_micro; ++m) {
            if (touched[m].empty()) continue;
            if (grad.empty()) grad.assign(weights.size(), 0.0);
            for (auto r : touched[m]) {
                if (!row_used[r]) {
                    row_used[r] = true;
                    used_rows.push_back(r);
                }
                double* dst = grad.data() + r * v;
                double* src = micro[m].data() + r * v;
                for (std::size_t c = 0; c < v; ++c) {
                    dst[c] += src[c];
                    src[c] = 0.0;
                }
            }
        }
        if (used_rows.empty() || rollouts == 0) continue;
        std::sort(used_rows.begin(), used_rows.end());
        for (auto r : used_rows) {
            for (std::size_t c = r * v; c < (r + 1) * v; ++c) {
                if (!std::isfinite(grad[c])) {
                    std::ostringstream msg;
                    msg << "non-finite gradient at step " << step << ", mini-batch " << mb << ", weight (row " << r
                        << ", token '" << vocab.output_token(c % v) << "'); step aborted";
                    throw NumericError(msg.str());
                }
            }
        }
        const double lr = config_.learning_rate / static_cast<double>(rollouts);
        for (auto r : used_rows) {
            for (std::size_t c = r * v; c < (r + 1) * v; ++c) {
                weights[c] += lr * grad[c];
                grad[c] = 0.0;
                if (!std::isfinite(weights[c])) {
                    throw NumericError("non-finite weight after update at step " + std::to_string(step) +
                                       "; step aborted (learning rate too large?)");
                }
            }
            row_used[r] = false;
        }
    }
    report.update_seconds = seconds_since(t_update);

    MetricRow row;
    row.step = step;
    row.mean_reward = reward_n ? reward_sum / static_cast<double>(reward_n) : 0.0;
    row.amp_var = report.advantages.amplified_variance_fraction;
    row.same_sign = report.advantages.same_sign_fraction;
    std::optional<double> new_best;
    if (is_eval_step(step)) {
        row.ndcg10 = evaluate(updated.params()).ndcg;
        row.hqd = hqd(updated.params());
        if (!state.best_ndcg || *row.ndcg10 > *state.best_ndcg) new_best = row.ndcg10;
    }

    // Commit.
    state.params = updated.params();
    state.step = step;
    state.history.push_back(row);
    if (new_best) {
        state.best_ndcg = new_best;
        state.best_params = state.params;
        state.best_step = step;
    }
    report.row = row;
    return report;
}

void Trainer::run(TrainState& state, const std::function<void(const StepReport&)>& on_step) const {
    while (state.step < config_.steps) {
        auto report = train_step(state);
        if (on_step) on_step(report);
    }
}

// ---------------------------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "coaug-checkpoint";
constexpr int kCheckpointVersion = 1;

json params_to_json(const policy::ToyPolicyParams& p) {
    return json{{"feature_dim", p.feature_dim},
                {"output_dim", p.output_dim},
                {"temperature", p.temperature},
                {"tokens_per_rollout", p.tokens_per_rollout},
                {"without_replacement", p.without_replacement},
                {"weights", p.weights}};
}

policy::ToyPolicyParams params_from_json(const json& j) {
    policy::ToyPolicyParams p;
    p.feature_dim = j.at("feature_dim").get<std::size_t>();
    p.output_dim = j.at("output_dim").get<std::size_t>();
    p.temperature = j.at("temperature").get<double>();
    p.tokens_per_rollout = j.at("tokens_per_rollout").get<std::size_t>();
    p.without_replacement = j.at("without_replacement").get<bool>();
    p.weights = j.at("weights").get<std::vector<double>>();
    p.validate();
    return p;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

json row_to_json(const MetricRow& r) {
    return json{{"step", r.step},
                {"mean_reward", r.mean_reward},
                {"ndcg10", optional_json(r.ndcg10)},
                {"hqd", optional_json(r.hqd)},
                {"amp_var", r.amp_var},
                {"same_sign", r.same_sign}};
}

MetricRow row_from_json(const json& j) {
    MetricRow r;
    r.step = j.at("step").get<std::size_t>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.ndcg10 = optional_from(j.at("ndcg10"));
    r.hqd = optional_from(j.at("hqd"));
    r.amp_var = j.at("amp_var").get<double>();
    r.same_sign = j.at("same_sign").get<double>();
    return r;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IngestionError("cannot write " + file.string());
    out << text;
    if (!out) throw IngestionError("write failed for " + file.string());
}

std::string format_double(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const TrainConfig& config,
                     const policy::PolicyVocabulary& vocab, const TrainState& state) {
    json history = json::array();
    for (const auto& r : state.history) history.push_back(row_to_json(r));
    const json doc{
        {"format", kCheckpointFormat},
        {"version", kCheckpointVersion},
        {"config", config::to_json(config)},
        {"vocabulary", {{"input", vocab.input_tokens()}, {"output", vocab.output_tokens()}}},
        {"step", state.step},
        {"seed", state.seed},
        {"params", params_to_json(state.params)},
        {"history", history},
        {"best", {{"step", state.best_step}, {"ndcg10", optional_json(state.best_ndcg)}, {"params", params_to_json(state.best_params)}}},
    };
    write_text(file, doc.dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IngestionError("cannot open checkpoint " + file.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IngestionError(file.string() + ": not a checkpoint (" + e.what() + ")");
    }
    if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat) {
        throw IngestionError(file.string() + ": not a checkpoint");
    }
    if (doc.value("version", 0) != kCheckpointVersion) {
        throw IngestionError(file.string() + ": unsupported checkpoint version " + doc.at("version").dump());
    }
    try {
        Checkpoint c;
        c.config = config::train_config_from_json(doc.at("config"));
        c.vocabulary = std::make_shared<const policy::PolicyVocabulary>(
            doc.at("vocabulary").at("input").get<std::vector<std::string>>(),
            doc.at("vocabulary").at("output").get<std::vector<std::string>>());
        c.state.step = doc.at("step").get<std::size_t>();
        c.state.seed = doc.at("seed").get<std::uint64_t>();
        c.state.params = params_from_json(doc.at("params"));
        for (const auto& r : doc.at("history")) c.state.history.push_back(row_from_json(r));
        const auto& best = doc.at("best");
        c.state.best_step = best.at("step").get<std::size_t>();
        c.state.best_ndcg = optional_from(best.at("ndcg10"));
        c.state.best_params = params_from_json(best.at("params"));
        if (c.state.params.feature_dim != c.vocabulary->input_size() ||
            c.state.params.output_dim != c.vocabulary->output_size()) {
            throw IngestionError(file.string() + ": parameter shape does not match the stored vocabulary");
        }
        return c;
    } catch (const json::exception& e) {
        throw IngestionError(file.string() + ": malformed checkpoint (" + e.what() + ")");
    }
}

std::string history_csv(const std::vector<MetricRow>& history) {
    std::ostringstream out;
    out << "step,mean_reward,ndcg10,hqd,amp_var,same_sign\n";
    for (const auto& r : history) {
        out << r.step << ',' << format_double(r.mean_reward) << ',' << (r.ndcg10 ? format_double(*r.ndcg10) : "")
            << ',' << (r.hqd ? format_double(*r.hqd) : "") << ',' << format_double(r.amp_var) << ','
            << format_double(r.same_sign) << '\n';
    }
    return out.str();
}

void write_history_csv(const std::filesystem::path& file, const std::vector<MetricRow>& history) {
    write_text(file, history_csv(history));
}

void write_history_json(const std::filesystem::path& file, const std::vector<MetricRow>& history) {
    json rows = json::array();
    for (const auto& r : history) rows.push_back(row_to_json(r));
    write_text(file, rows.dump(1) + "\n");
}

}  // namespace coaug::trainer
