#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace coaug::retrieval {

struct TokenizerOptions {
    bool lowercase = true;
    std::size_t min_length = 1;
    /// Harman's S-stemmer (plural stripping). Off by default.
    bool s_stemmer = false;
    std::vector<std::string> stopwords;
};

/// Splits on ASCII non-alphanumeric bytes. Bytes >= 0x80 are kept inside tokens so UTF-8
/// words survive intact.
class Tokenizer {
public:
    Tokenizer() = default;
    explicit Tokenizer(TokenizerOptions options);

    std::vector<std::string> tokenize(std::string_view text) const;
    const TokenizerOptions& options() const noexcept { return options_; }

private:
    TokenizerOptions options_;
    std::vector<std::string> stop_sorted_;
};

/// Default-options tokenization.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Lucene-style IDF: ln(1 + (N - df + 0.5) / (df + 0.5)).
inline double bm25_idf(std::size_t n_docs, std::size_t df) {
    const double n = static_cast<double>(n_docs);
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

/// One term's contribution. All BM25 scoring paths in the library go through this function so
/// they agree bit-for-bit.
inline double bm25_term_weight(double idf, std::uint32_t tf, double doc_len, double avg_len,
                               const Bm25Params& p) {
    const double f = static_cast<double>(tf);
    return idf * (f * (p.k1 + 1.0)) / (f + p.k1 * (1.0 - p.b + p.b * doc_len / avg_len));
}

struct ScoredDoc {
    std::string doc_ref;
    double score = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

/// Descending by score, ties broken by doc-ref ascending; no duplicates.
using ScoredRanking = std::vector<ScoredDoc>;

/// Indices of the top-k entries of `scores` under (score desc, ordinal asc). `ordinal[i]` is the
/// lexicographic rank of doc i's ref. Entries with score <= 0 are skipped when drop_nonpositive.
std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const std::size_t> ordinal,
                               std::size_t k, bool drop_nonpositive);

/// Lexicographic rank of each string in `refs`.
std::vector<std::size_t> lexicographic_ordinals(std::span<const std::string> refs);

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;
};

class SparseIndex {
public:
    /// Docs are (doc-ref, token sequence). Throws BuildError on a duplicate doc-ref.
    static SparseIndex build(std::span<const std::pair<std::string, std::vector<std::string>>> docs,
                             Bm25Params params = {});

    std::size_t doc_count() const noexcept { return refs_.size(); }
    double avg_doc_length() const noexcept;
    std::uint64_t total_length() const noexcept { return total_len_; }
    std::size_t df(const std::string& term) const;
    std::uint32_t tf(const std::string& term, const std::string& doc_ref) const;
    std::uint32_t doc_length(const std::string& doc_ref) const;
    const std::vector<std::string>& doc_refs() const noexcept { return refs_; }
    const Bm25Params& params() const noexcept { return params_; }
    std::size_t vocabulary_size() const noexcept { return postings_.size(); }
    const std::vector<Posting>* postings(const std::string& term) const;
    /// Indexed terms in byte order.
    std::vector<std::string> terms() const;

    /// Score of every doc, indexed like doc_refs(). Each query token occurrence contributes.
    std::vector<double> score_all(std::span<const std::string> query_tokens) const;
    double score(std::span<const std::string> query_tokens, const std::string& doc_ref) const;
    ScoredRanking retrieve(std::span<const std::string> query_tokens, std::size_t k) const;

    std::optional<std::size_t> doc_index(const std::string& doc_ref) const;

private:
    Bm25Params params_;
    std::vector<std::string> refs_;
    std::vector<std::size_t> ordinal_;
    std::vector<std::uint32_t> lengths_;
    std::uint64_t total_len_ = 0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::unordered_map<std::string, std::size_t> ref_index_;
};

/// Deterministic pseudo-random unit vector for a token; the same (token, dim, seed) always yields
/// the same vector.
std::vector<double> hashed_token_vector(std::string_view token, std::size_t dim, std::uint64_t seed);

/// L2-normalized sum of hashed token projections; all zeros when `tokens` is empty.
std::vector<double> hashed_text_vector(std::span<const std::string> tokens, std::size_t dim,
                                       std::uint64_t seed);

/// Re-normalizes a query vector exactly as DenseIndex retrieval does; zero stays zero.
std::vector<double> unit_query_vector(std::span<const double> v);

/// Dot product in the summation order DenseIndex uses for scoring.
double dense_dot(std::span<const double> a, std::span<const double> b);

class DenseIndex {
public:
    /// Hashed-projection stub. Throws ConfigError when dim < 8.
    static DenseIndex build(std::span<const std::pair<std::string, std::vector<std::string>>> docs,
                            std::size_t dim, std::uint64_t seed);

    /// Precomputed vectors, one `doc-id<TAB>v1,v2,...` line per document. Vectors are
    /// normalized on load; the dimension is fixed by the first line.
    static DenseIndex load_embeddings(const std::filesystem::path& file);

    /// Builds from explicit vectors (normalized here).
    static DenseIndex from_vectors(std::vector<std::string> refs, const std::vector<std::vector<double>>& vectors);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t doc_count() const noexcept { return refs_.size(); }
    const std::vector<std::string>& doc_refs() const noexcept { return refs_; }
    std::span<const double> vector(std::size_t doc) const;
    bool is_zero(std::size_t doc) const { return zero_[doc]; }
    bool hashed() const noexcept { return hashed_; }
    std::uint64_t seed() const noexcept { return seed_; }

    /// Cosine against every doc; zero-vector docs score 0.
    std::vector<double> score_all(std::span<const double> query_unit) const;
    ScoredRanking retrieve_vector(std::span<const double> query_vector, std::size_t k) const;
    /// Embeds tokens with the hashed projection; VariantError for imported embeddings.
    ScoredRanking retrieve(std::span<const std::string> query_tokens, std::size_t k) const;

private:
    std::size_t dim_ = 0;
    std::uint64_t seed_ = 0;
    bool hashed_ = false;
    std::vector<std::string> refs_;
    std::vector<std::size_t> ordinal_;
    std::vector<double> data_;
    std::vector<bool> zero_;
};

enum class RetrieverKind { Bm25, Dense };

std::string to_string(RetrieverKind kind);
RetrieverKind retriever_from_string(const std::string& name);

/// The retrieval black box: either a sparse BM25 index or a dense cosine table.
class RetrievalIndex {
public:
    RetrievalIndex(SparseIndex index) : impl_(std::move(index)) {}
    RetrievalIndex(DenseIndex index) : impl_(std::move(index)) {}

    RetrieverKind kind() const noexcept {
        return std::holds_alternative<SparseIndex>(impl_) ? RetrieverKind::Bm25 : RetrieverKind::Dense;
    }
    const SparseIndex& sparse() const;
    const DenseIndex& dense() const;
    std::size_t doc_count() const;

private:
    std::variant<SparseIndex, DenseIndex> impl_;
};

RetrievalIndex build_sparse_index(std::span<const std::pair<std::string, std::string>> docs,
                                  const Tokenizer& tokenizer = {}, Bm25Params params = {});
RetrievalIndex build_dense_index(std::span<const std::pair<std::string, std::string>> docs, std::size_t dim,
                                 std::uint64_t seed, const Tokenizer& tokenizer = {});

double bm25_score(const RetrievalIndex& index, std::span<const std::string> query_tokens,
                  const std::string& doc_ref);

/// Top-k ranking for a raw query text. Sparse rankings omit zero-score docs. Throws ConfigError
/// when k == 0.
ScoredRanking retrieve(const RetrievalIndex& index, std::string_view query_text, std::size_t k,
                       const Tokenizer& tokenizer = {});

}  // namespace coaug::retrieval
