#include "coaug/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "coaug/error.hpp"

namespace coaug::reward {

void RewardTask::validate() const {
    if (n_rollout < 1) throw ConfigError("train.n_rollout", "must be >= 1");
    if (n_samp < 1) throw ConfigError("train.n_samp", "must be >= 1");
    if (k < 1) throw ConfigError("k", "must be >= 1");
    if (relevance.size() != queries.size()) throw ConfigError("relevance", "one relevance view per query required");
    for (const auto* group : {&queries, &docs}) {
        for (const auto& t : *group) {
            if (t.combined_tokens.size() != n_rollout) {
                throw ConfigError("rollouts", "text '" + t.id + "' has " + std::to_string(t.combined_tokens.size()) +
                                                  " rollouts, expected " + std::to_string(n_rollout));
            }
        }
    }
}

RewardTask make_task(const sampler::CompositeBatch& batch, const corpus::QrelSet& qrels,
                     std::vector<std::vector<std::vector<std::string>>> combined_tokens, std::size_t n_rollout) {
    if (combined_tokens.size() != batch.text_count()) {
        throw ConfigError("rollouts", "expected one rollout list per batch text");
    }
    RewardTask task;
    task.n_rollout = n_rollout;
    std::size_t next = 0;
    for (const auto& q : batch.queries) {
        task.queries.push_back({q.id, SourceKind::Query, std::move(combined_tokens[next++])});
    }
    for (const auto& rel : batch.relevant) {
        for (const auto& d : rel) task.docs.push_back({d.id, SourceKind::RelevantDoc, std::move(combined_tokens[next++])});
    }
    for (const auto& d : batch.irrelevant) {
        task.docs.push_back({d.id, SourceKind::IrrelevantDoc, std::move(combined_tokens[next++])});
    }
    for (const auto& q : batch.queries) {
        std::map<std::string, int> grades;
        for (const auto& d : task.docs) grades[d.id] = qrels.grade(q.id, d.id);
        task.relevance.emplace_back(std::move(grades));
    }
    return task;
}

namespace {

IterationResult finish(std::vector<std::vector<double>> ndcg) {
    IterationResult out;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : ndcg) {
        for (double v : row) {
            sum += v;
            ++n;
        }
    }
    out.doc_reward = n ? sum / static_cast<double>(n) : 0.0;
    out.query_ndcg = std::move(ndcg);
    return out;
}

void check_selection(const RewardTask& task, std::span<const std::size_t> selection) {
    if (selection.size() != task.docs.size()) throw ConfigError("doc_selection", "must cover every batch document");
    for (auto s : selection) {
        if (s >= task.n_rollout) throw ConfigError("doc_selection", "rollout index out of range");
    }
}

}  // namespace

IterationResult iteration_reward(const RewardTask& task, std::span<const std::size_t> doc_selection) {
    check_selection(task, doc_selection);
    std::vector<std::pair<std::string, std::vector<std::string>>> docs;
    docs.reserve(task.docs.size());
    for (std::size_t d = 0; d < task.docs.size(); ++d) {
        docs.emplace_back(task.docs[d].id, task.docs[d].combined_tokens[doc_selection[d]]);
    }
    const bool sparse = task.retriever == retrieval::RetrieverKind::Bm25;
    const retrieval::RetrievalIndex index = sparse
        ? retrieval::RetrievalIndex(retrieval::SparseIndex::build(docs, task.bm25))
        : retrieval::RetrievalIndex(retrieval::DenseIndex::build(docs, task.dense.dim, task.dense.seed));
    std::vector<std::vector<double>> ndcg(task.queries.size());
    for (std::size_t i = 0; i < task.queries.size(); ++i) {
        for (const auto& tokens : task.queries[i].combined_tokens) {
            const auto ranking = sparse ? index.sparse().retrieve(tokens, task.k) : index.dense().retrieve(tokens, task.k);
            ndcg[i].push_back(metrics::ndcg_at_k(ranking, task.relevance[i], task.k));
        }
    }
    return finish(std::move(ndcg));
}

// ---------------------------------------------------------------------------------------------

IterationScorer::IterationScorer(const RewardTask& task) : task_(task), n_docs_(task.docs.size()) {
    task_.validate();
    std::vector<std::string> refs;
    for (const auto& d : task_.docs) refs.push_back(d.id);
    ordinal_ = retrieval::lexicographic_ordinals(refs);
    for (std::size_t i = 0; i < task_.queries.size(); ++i) {
        std::vector<int> g;
        std::vector<int> candidates;
        for (const auto& d : task_.docs) g.push_back(task_.relevance[i].grade(d.id));
        for (const auto& [_, grade] : task_.relevance[i].grades()) candidates.push_back(grade);
        ideal_.push_back(metrics::ideal_dcg_at_k(candidates, task_.k));
        grades_.push_back(std::move(g));
    }

    if (task_.retriever == retrieval::RetrieverKind::Bm25) {
        std::unordered_map<std::string, std::uint32_t> terms;
        query_terms_.resize(task_.queries.size());
        for (std::size_t i = 0; i < task_.queries.size(); ++i) {
            for (const auto& tokens : task_.queries[i].combined_tokens) {
                std::vector<std::uint32_t> ids;
                ids.reserve(tokens.size());
                for (const auto& t : tokens) {
                    auto [it, _] = terms.emplace(t, static_cast<std::uint32_t>(terms.size()));
                    ids.push_back(it->second);
                }
                query_terms_[i].push_back(std::move(ids));
            }
        }
        n_terms_ = terms.size();
        doc_terms_.resize(n_docs_);
        doc_len_.resize(n_docs_);
        std::vector<std::uint32_t> tf(n_terms_, 0);
        for (std::size_t d = 0; d < n_docs_; ++d) {
            for (const auto& tokens : task_.docs[d].combined_tokens) {
                std::vector<DocTerm> dt;
                for (const auto& t : tokens) {
                    auto it = terms.find(t);
                    if (it == terms.end()) continue;
                    if (tf[it->second]++ == 0) dt.push_back({it->second, 0});
                }
                for (auto& e : dt) {
                    e.tf = tf[e.term];
                    tf[e.term] = 0;
                }
                doc_terms_[d].push_back(std::move(dt));
                doc_len_[d].push_back(static_cast<std::uint32_t>(tokens.size()));
            }
        }
    } else {
        // The reference path stores doc vectors through DenseIndex::build and re-normalizes query
        // vectors at retrieval time; mirror both so scores match exactly.
        std::vector<std::vector<std::vector<double>>> doc_vecs(n_docs_);
        for (std::size_t d = 0; d < n_docs_; ++d) {
            std::vector<std::pair<std::string, std::vector<std::string>>> one;
            for (const auto& tokens : task_.docs[d].combined_tokens) one.emplace_back(std::to_string(one.size()), tokens);
            const auto idx = retrieval::DenseIndex::build(one, task_.dense.dim, task_.dense.seed);
            for (std::size_t s = 0; s < one.size(); ++s) {
                if (idx.is_zero(s)) {
                    doc_vecs[d].emplace_back();
                } else {
                    const auto v = idx.vector(s);
                    doc_vecs[d].emplace_back(v.begin(), v.end());
                }
            }
        }
        const std::size_t nr = task_.n_rollout;
        cosine_.assign(task_.queries.size() * nr * n_docs_ * nr, 0.0);
        for (std::size_t i = 0; i < task_.queries.size(); ++i) {
            for (std::size_t r = 0; r < nr; ++r) {
                const auto q = retrieval::unit_query_vector(
                    retrieval::hashed_text_vector(task_.queries[i].combined_tokens[r], task_.dense.dim, task_.dense.seed));
                for (std::size_t d = 0; d < n_docs_; ++d) {
                    for (std::size_t s = 0; s < nr; ++s) {
                        if (doc_vecs[d][s].empty()) continue;
                        cosine_[((i * nr + r) * n_docs_ + d) * nr + s] = retrieval::dense_dot(q, doc_vecs[d][s]);
                    }
                }
            }
        }
    }
}

IterationResult IterationScorer::operator()(std::span<const std::size_t> doc_selection) const {
    check_selection(task_, doc_selection);
    return task_.retriever == retrieval::RetrieverKind::Bm25 ? score_sparse(doc_selection) : score_dense(doc_selection);
}

IterationResult IterationScorer::score_sparse(std::span<const std::size_t> selection) const {
    std::uint64_t total_len = 0;
    std::vector<double> len(n_docs_);
    for (std::size_t d = 0; d < n_docs_; ++d) {
        const auto l = doc_len_[d][selection[d]];
        total_len += l;
        len[d] = static_cast<double>(l);
    }
    const double avg = n_docs_ ? static_cast<double>(total_len) / static_cast<double>(n_docs_) : 0.0;

    // Per-iteration postings restricted to terms that occur in some query rollout.
    std::vector<std::vector<retrieval::Posting>> postings(n_terms_);
    for (std::size_t d = 0; d < n_docs_; ++d) {
        for (const auto& e : doc_terms_[d][selection[d]]) postings[e.term].push_back({static_cast<std::uint32_t>(d), e.tf});
    }

    std::vector<std::vector<double>> ndcg(task_.queries.size());
    std::vector<double> acc(n_docs_);
    std::vector<int> ranked;
    for (std::size_t i = 0; i < task_.queries.size(); ++i) {
        for (const auto& terms : query_terms_[i]) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (auto t : terms) {
                const auto& p = postings[t];
                if (p.empty()) continue;
                const double idf = retrieval::bm25_idf(n_docs_, p.size());
                for (const auto& post : p) {
                    acc[post.doc] += retrieval::bm25_term_weight(idf, post.tf, len[post.doc], avg, task_.bm25);
                }
            }
            ranked.clear();
            for (auto d : retrieval::top_k(acc, ordinal_, task_.k, true)) ranked.push_back(grades_[i][d]);
            ndcg[i].push_back(metrics::ndcg_from_grades(ranked, ideal_[i], task_.k));
        }
    }
    return finish(std::move(ndcg));
}

IterationResult IterationScorer::score_dense(std::span<const std::size_t> selection) const {
    const std::size_t nr = task_.n_rollout;
    std::vector<std::vector<double>> ndcg(task_.queries.size());
    std::vector<double> scores(n_docs_);
    std::vector<int> ranked;
    for (std::size_t i = 0; i < task_.queries.size(); ++i) {
        for (std::size_t r = 0; r < nr; ++r) {
            for (std::size_t d = 0; d < n_docs_; ++d) scores[d] = cosine_[((i * nr + r) * n_docs_ + d) * nr + selection[d]];
            ranked.clear();
            for (auto d : retrieval::top_k(scores, ordinal_, task_.k, false)) ranked.push_back(grades_[i][d]);
            ndcg[i].push_back(metrics::ndcg_from_grades(ranked, ideal_[i], task_.k));
        }
    }
    return finish(std::move(ndcg));
}

// ---------------------------------------------------------------------------------------------

double RewardEstimate::max_abs_diff(const RewardEstimate& other) const {
    double m = 0.0;
    auto scan = [&](const auto& a, const auto& b) {
        for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
            for (std::size_t r = 0; r < a[i].size() && r < b[i].size(); ++r) m = std::max(m, std::abs(a[i][r] - b[i][r]));
        }
    };
    scan(query_rewards, other.query_rewards);
    scan(doc_rewards, other.doc_rewards);
    return m;
}

std::uint64_t combination_count(const RewardTask& task) {
    std::uint64_t n = 1;
    for (std::size_t d = 0; d < task.docs.size(); ++d) {
        if (n > std::numeric_limits<std::uint64_t>::max() / task.n_rollout) return std::numeric_limits<std::uint64_t>::max();
        n *= task.n_rollout;
    }
    return n;
}

std::uint64_t matching_pair_count(const RewardTask& task) {
    const std::uint64_t combos = combination_count(task);
    const std::uint64_t per_combo = task.queries.size() * task.n_rollout;
    if (per_combo != 0 && combos > std::numeric_limits<std::uint64_t>::max() / per_combo) {
        return std::numeric_limits<std::uint64_t>::max();
    }
    return combos * per_combo;
}

namespace {

// Running means (Welford), so identical iteration results reproduce their value bit-for-bit
// whatever the iteration count.
struct Accumulator {
    explicit Accumulator(const RewardTask& task)
        : query_mean(task.queries.size(), std::vector<double>(task.n_rollout, 0.0)),
          query_m2(task.queries.size(), std::vector<double>(task.n_rollout, 0.0)),
          doc_mean(task.docs.size(), std::vector<double>(task.n_rollout, 0.0)),
          doc_count(task.docs.size(), std::vector<std::size_t>(task.n_rollout, 0)) {}

    void add(const IterationResult& it, std::span<const std::size_t> selection) {
        ++iterations;
        const double n = static_cast<double>(iterations);
        for (std::size_t i = 0; i < it.query_ndcg.size(); ++i) {
            for (std::size_t r = 0; r < it.query_ndcg[i].size(); ++r) {
                const double x = it.query_ndcg[i][r];
                const double delta = x - query_mean[i][r];
                query_mean[i][r] += delta / n;
                query_m2[i][r] += delta * (x - query_mean[i][r]);
            }
        }
        for (std::size_t d = 0; d < selection.size(); ++d) {
            auto& c = doc_count[d][selection[d]];
            ++c;
            doc_mean[d][selection[d]] += (it.doc_reward - doc_mean[d][selection[d]]) / static_cast<double>(c);
        }
        overall += (it.doc_reward - overall) / n;
    }

    RewardEstimate finish() const {
        RewardEstimate est;
        est.iterations = iterations;
        const double n = static_cast<double>(iterations);
        double var_sum = 0.0;
        std::size_t var_n = 0;
        for (std::size_t i = 0; i < query_mean.size(); ++i) {
            for (std::size_t r = 0; r < query_mean[i].size(); ++r) {
                var_sum += query_m2[i][r] / n / n;
                ++var_n;
            }
        }
        est.query_rewards = query_mean;
        est.query_estimator_variance = var_n && iterations ? var_sum / static_cast<double>(var_n) : 0.0;
        for (std::size_t d = 0; d < doc_mean.size(); ++d) {
            std::vector<double> row;
            for (std::size_t s = 0; s < doc_mean[d].size(); ++s) {
                // Unselected rollouts (n_samp < n_rollout) get the overall mean, i.e. no signal.
                row.push_back(doc_count[d][s] ? doc_mean[d][s] : overall);
            }
            est.doc_rewards.push_back(std::move(row));
        }
        est.doc_counts = doc_count;
        return est;
    }

    std::vector<std::vector<double>> query_mean;
    std::vector<std::vector<double>> query_m2;
    std::vector<std::vector<double>> doc_mean;
    std::vector<std::vector<std::size_t>> doc_count;
    double overall = 0.0;
    std::size_t iterations = 0;
};

}  // namespace

RewardEstimate exact_reward(const RewardTask& task, std::uint64_t cap) {
    task.validate();
    const std::uint64_t combos = combination_count(task);
    if (combos > cap) {
        throw CapacityError("exhaustive reward needs " + std::to_string(combos) + " doc-rollout combinations (" +
                            std::to_string(matching_pair_count(task)) + " matching pairs), above the cap of " +
                            std::to_string(cap));
    }
    const IterationScorer scorer(task);
    Accumulator acc(task);
    std::vector<std::size_t> selection(task.docs.size(), 0);
    for (std::uint64_t c = 0; c < combos; ++c) {
        acc.add(scorer(selection), selection);
        for (std::size_t d = 0; d < selection.size(); ++d) {
            if (++selection[d] < task.n_rollout) break;
            selection[d] = 0;
        }
    }
    return acc.finish();
}

std::vector<std::vector<std::size_t>> stratified_schedule(std::size_t n_docs, std::size_t n_rollout, std::size_t n_samp,
                                                          Rng& rng) {
    std::vector<std::vector<std::size_t>> schedule;
    schedule.reserve(n_samp);
    std::vector<std::vector<std::size_t>> perms(n_docs, std::vector<std::size_t>(n_rollout));
    for (std::size_t it = 0; it < n_samp; ++it) {
        const std::size_t pos = it % n_rollout;
        if (pos == 0) {
            for (auto& p : perms) {
                for (std::size_t r = 0; r < n_rollout; ++r) p[r] = r;
                shuffle(std::span<std::size_t>(p), rng);
            }
        }
        std::vector<std::size_t> sel(n_docs);
        for (std::size_t d = 0; d < n_docs; ++d) sel[d] = perms[d][pos];
        schedule.push_back(std::move(sel));
    }
    return schedule;
}

RewardEstimate sampled_reward(const RewardTask& task, Rng& rng) {
    task.validate();
    const IterationScorer scorer(task);
    Accumulator acc(task);
    for (const auto& sel : stratified_schedule(task.docs.size(), task.n_rollout, task.n_samp, rng)) {
        acc.add(scorer(sel), sel);
    }
    return acc.finish();
}

}  // namespace coaug::reward
