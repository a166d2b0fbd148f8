#include "coaug/sampler.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "coaug/error.hpp"

namespace coaug::sampler {

std::size_t CompositeBatch::text_count() const {
    std::size_t n = queries.size() + irrelevant.size();
    for (const auto& r : relevant) n += r.size();
    return n;
}

std::vector<std::string> CompositeBatch::doc_ids() const {
    std::vector<std::string> ids;
    for (const auto& r : relevant) {
        for (const auto& d : r) ids.push_back(d.id);
    }
    for (const auto& d : irrelevant) ids.push_back(d.id);
    return ids;
}

CompositeSampler::CompositeSampler(const corpus::Dataset& data, const retrieval::SparseIndex& raw_index,
                                   const retrieval::Tokenizer& tokenizer, SamplerOptions options)
    : data_(data), index_(raw_index), options_(options) {
    if (options_.q < 1) throw ConfigError("train.q", "must be >= 1");
    if (options_.d_pos < 1) throw ConfigError("train.d_pos", "must be >= 1");
    bool aligned = index_.doc_count() == data_.docs.size();
    for (std::size_t i = 0; aligned && i < data_.docs.size(); ++i) aligned = index_.doc_refs()[i] == data_.docs[i].id;
    if (!aligned) throw ConfigError("index", "raw index must be built over the dataset's documents in order");
    std::unordered_map<std::string, std::size_t> doc_pos;
    for (std::size_t i = 0; i < data_.docs.size(); ++i) doc_pos.emplace(data_.docs[i].id, i);

    relevant_docs_.resize(data_.queries.size());
    positive_score_docs_.resize(data_.queries.size());
    for (std::size_t qi = 0; qi < data_.queries.size(); ++qi) {
        for (const auto& [doc_id, grade] : data_.qrels.judged(data_.queries[qi].id)) {
            auto it = doc_pos.find(doc_id);
            if (grade > 0 && it != doc_pos.end()) relevant_docs_[qi].push_back(it->second);
        }
        std::sort(relevant_docs_[qi].begin(), relevant_docs_[qi].end());
        if (relevant_docs_[qi].size() >= options_.d_pos) eligible_.push_back(qi);

        const auto tokens = tokenizer.tokenize(data_.queries[qi].text);
        const auto scores = index_.score_all(tokens);
        for (std::size_t d = 0; d < scores.size(); ++d) {
            // The index is built in dataset order, so index position d is data_.docs[d].
            if (scores[d] > 0.0) positive_score_docs_[qi].push_back(d);
        }
    }
}

const std::vector<std::size_t>& CompositeSampler::positive_docs(std::size_t query) const {
    return positive_score_docs_[query];
}

CompositeBatch CompositeSampler::sample(Rng& rng) const {
    const auto& [q, d_pos, d_neg, predicate] = options_;
    if (eligible_.size() < q) {
        throw SamplingError("need " + std::to_string(q) + " queries with >= d_pos=" + std::to_string(d_pos) +
                            " relevant docs, only " + std::to_string(eligible_.size()) + " eligible");
    }
    CompositeBatch batch;
    batch.seed = rng();
    Rng local(batch.seed);

    std::vector<std::size_t> chosen_queries;
    for (auto i : sample_without_replacement(eligible_.size(), q, local)) chosen_queries.push_back(eligible_[i]);

    std::vector<bool> used(data_.docs.size(), false);
    for (auto qi : chosen_queries) {
        batch.queries.push_back(data_.queries[qi]);
        std::vector<std::size_t> pool;
        for (auto d : relevant_docs_[qi]) {
            if (!used[d]) pool.push_back(d);
        }
        if (pool.size() < d_pos) {
            throw SamplingError("query '" + data_.queries[qi].id + "' has fewer than d_pos=" + std::to_string(d_pos) +
                                " relevant docs left after removing docs already in the batch");
        }
        std::vector<corpus::CorpusItem> rel;
        for (auto i : sample_without_replacement(pool.size(), d_pos, local)) {
            used[pool[i]] = true;
            rel.push_back(data_.docs[pool[i]]);
        }
        batch.relevant.push_back(std::move(rel));
    }

    std::vector<bool> excluded = used;
    for (auto qi : chosen_queries) {
        for (const auto& [doc_id, grade] : data_.qrels.judged(data_.queries[qi].id)) {
            if (grade <= 0) continue;
            if (auto pos = index_.doc_index(doc_id)) excluded[*pos] = true;
        }
        if (predicate == IrrelevancePredicate::Bm25ZeroScore) {
            for (auto d : positive_docs(qi)) excluded[d] = true;
        }
    }
    std::vector<std::size_t> pool;
    for (std::size_t d = 0; d < data_.docs.size(); ++d) {
        if (!excluded[d]) pool.push_back(d);
    }
    if (pool.size() < d_neg) {
        throw SamplingError("only " + std::to_string(pool.size()) + " docs have zero score and zero grade for all " +
                            std::to_string(q) + " batch queries; try a smaller d_neg (currently " +
                            std::to_string(d_neg) + ")");
    }
    for (auto i : sample_without_replacement(pool.size(), d_neg, local)) batch.irrelevant.push_back(data_.docs[pool[i]]);
    return batch;
}

CompositeBatch sample_batch(const corpus::Dataset& data, const retrieval::SparseIndex& raw_index, std::size_t q,
                            std::size_t d_pos, std::size_t d_neg, Rng& rng, const retrieval::Tokenizer& tokenizer) {
    CompositeSampler sampler(data, raw_index, tokenizer, {q, d_pos, d_neg, IrrelevancePredicate::Bm25ZeroScore});
    return sampler.sample(rng);
}

std::vector<std::string> verify_batch(const CompositeBatch& batch, const corpus::Dataset& data,
                                      const retrieval::SparseIndex& raw_index, const retrieval::Tokenizer& tokenizer) {
    std::vector<std::string> problems;
    if (batch.relevant.size() != batch.queries.size()) problems.push_back("relevant lists do not match queries");
    std::set<std::string> ids;
    for (const auto& id : batch.doc_ids()) {
        if (!ids.insert(id).second) problems.push_back("duplicate doc '" + id + "'");
    }
    for (std::size_t i = 0; i < batch.queries.size() && i < batch.relevant.size(); ++i) {
        for (const auto& d : batch.relevant[i]) {
            if (data.qrels.grade(batch.queries[i].id, d.id) <= 0) {
                problems.push_back("doc '" + d.id + "' is not relevant to '" + batch.queries[i].id + "'");
            }
        }
    }
    for (const auto& q : batch.queries) {
        const auto tokens = tokenizer.tokenize(q.text);
        for (const auto& d : batch.irrelevant) {
            if (raw_index.score(tokens, d.id) != 0.0) {
                problems.push_back("irrelevant doc '" + d.id + "' scores above zero for '" + q.id + "'");
            }
            if (data.qrels.grade(q.id, d.id) > 0) {
                problems.push_back("irrelevant doc '" + d.id + "' is judged relevant for '" + q.id + "'");
            }
        }
    }
    return problems;
}

std::string render_prompt(const std::string& templ, const std::string& text) {
    static const std::string kPlaceholder = "{text}";
    std::string out;
    std::size_t pos = 0;
    for (;;) {
        auto hit = templ.find(kPlaceholder, pos);
        if (hit == std::string::npos) {
            out.append(templ, pos, std::string::npos);
            return out;
        }
        out.append(templ, pos, hit - pos);
        out += text;
        pos = hit + kPlaceholder.size();
    }
}

std::optional<std::string> extract_prompt_text(const std::string& templ, const std::string& prompt) {
    static const std::string kPlaceholder = "{text}";
    const auto hit = templ.find(kPlaceholder);
    if (hit == std::string::npos || templ.find(kPlaceholder, hit + 1) != std::string::npos) return std::nullopt;
    const std::string prefix = templ.substr(0, hit);
    const std::string suffix = templ.substr(hit + kPlaceholder.size());
    if (prompt.size() < prefix.size() + suffix.size()) return std::nullopt;
    if (prompt.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
    if (prompt.compare(prompt.size() - suffix.size(), suffix.size(), suffix) != 0) return std::nullopt;
    return prompt.substr(prefix.size(), prompt.size() - prefix.size() - suffix.size());
}

std::vector<PromptedRecord> attach_prompts(const CompositeBatch& batch, const PromptSet& prompts) {
    std::vector<PromptedRecord> out;
    out.reserve(batch.text_count());
    for (const auto& q : batch.queries) {
        out.push_back({SourceKind::Query, q.id, "", render_prompt(prompts.query_template, q.text), q.text});
    }
    for (std::size_t i = 0; i < batch.relevant.size(); ++i) {
        for (const auto& d : batch.relevant[i]) {
            const auto text = d.content();
            out.push_back({SourceKind::RelevantDoc, d.id, batch.queries[i].id, render_prompt(prompts.doc_template, text),
                           text});
        }
    }
    for (const auto& d : batch.irrelevant) {
        const auto text = d.content();
        out.push_back({SourceKind::IrrelevantDoc, d.id, "", render_prompt(prompts.doc_template, text), text});
    }
    return out;
}

}  // namespace coaug::sampler
