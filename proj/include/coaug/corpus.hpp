#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace coaug::corpus {

struct CorpusItem {
    std::string id;
    std::string title;
    std::string text;

    /// Canonical retrieval text: title + " " + text when the title is nonempty.
    std::string content() const;

    bool operator==(const CorpusItem&) const = default;
};

struct QueryItem {
    std::string id;
    std::string text;

    bool operator==(const QueryItem&) const = default;
};

/// Graded relevance judgments keyed by (query-id, doc-id). Absent pairs have grade 0.
class QrelSet {
public:
    using Judgments = std::map<std::string, int>;

    void set(const std::string& query_id, const std::string& doc_id, int grade);
    int grade(const std::string& query_id, const std::string& doc_id) const;

    /// All judged docs for a query (including explicit zero grades); empty map when unjudged.
    const Judgments& judged(const std::string& query_id) const;

    /// Number of docs with grade > 0 for the query.
    std::size_t relevant_count(const std::string& query_id) const;

    std::vector<std::string> query_ids() const;
    std::size_t size() const;
    bool empty() const { return by_query_.empty(); }

    /// Throws ValidationError listing every (query, doc) pair whose ids are not in the collections.
    void validate(const std::vector<CorpusItem>& docs, const std::vector<QueryItem>& queries) const;

    bool operator==(const QrelSet&) const = default;

private:
    std::map<std::string, Judgments> by_query_;
};

struct Dataset {
    std::vector<CorpusItem> docs;
    std::vector<QueryItem> queries;
    QrelSet qrels;

    const CorpusItem* find_doc(const std::string& id) const;
    const QueryItem* find_query(const std::string& id) const;
};

/// Loads a BEIR-layout directory: corpus.jsonl, queries.jsonl, qrels/<split>.tsv.
/// An empty split selects "train" when present, then "test", then "dev".
Dataset load_beir(const std::filesystem::path& dir, const std::string& split = {}, bool validate = true);

/// Writes the BEIR layout; qrels go to qrels/<split>.tsv with a header row.
void write_beir(const Dataset& data, const std::filesystem::path& dir, const std::string& split = "train");

/// Picks the split load_beir would use for an empty selector.
std::string default_split(const std::filesystem::path& dir);

struct SyntheticSpec {
    std::size_t n_topics = 2;
    std::size_t n_queries = 20;
    std::size_t n_docs = 60;
    std::size_t query_vocab_size = 80;
    std::size_t doc_vocab_size = 200;
    std::size_t bridge_vocab_size = 8;
    std::size_t doc_len = 10;
    std::size_t query_len = 4;
    std::uint64_t seed = 7;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

struct SyntheticCorpus {
    Dataset data;
    std::vector<std::size_t> query_topic;
    std::vector<std::size_t> doc_topic;
    /// Per-topic vocabularies; bridge tokens never occur in any surface text.
    std::vector<std::vector<std::string>> query_vocab;
    std::vector<std::vector<std::string>> doc_vocab;
    std::vector<std::vector<std::string>> bridge_vocab;

    std::vector<std::string> all_bridge_tokens() const;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace coaug::corpus
