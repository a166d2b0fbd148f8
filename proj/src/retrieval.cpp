#include "coaug/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>

#include "coaug/error.hpp"
#include "coaug/rng.hpp"

namespace coaug::retrieval {

namespace {

bool is_token_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void s_stem(std::string& w) {
    if (ends_with(w, "ies") && !ends_with(w, "eies") && !ends_with(w, "aies")) {
        w.replace(w.size() - 3, 3, "y");
    } else if (ends_with(w, "es") && !ends_with(w, "aes") && !ends_with(w, "ees") && !ends_with(w, "oes")) {
        w.pop_back();
    } else if (ends_with(w, "s") && !ends_with(w, "us") && !ends_with(w, "ss")) {
        w.pop_back();
    }
}

}  // namespace

Tokenizer::Tokenizer(TokenizerOptions options) : options_(std::move(options)) {
    stop_sorted_ = options_.stopwords;
    if (options_.lowercase) {
        for (auto& s : stop_sorted_) {
            std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
                return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
            });
        }
    }
    std::sort(stop_sorted_.begin(), stop_sorted_.end());
}

std::vector<std::string> Tokenizer::tokenize(std::string_view text) const {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
        if (i == start) continue;
        std::string token(text.substr(start, i - start));
        if (options_.lowercase) {
            for (auto& c : token) {
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            }
        }
        if (options_.s_stemmer) s_stem(token);
        if (token.size() < std::max<std::size_t>(1, options_.min_length)) continue;
        if (!stop_sorted_.empty() && std::binary_search(stop_sorted_.begin(), stop_sorted_.end(), token)) continue;
        out.push_back(std::move(token));
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    static const Tokenizer kDefault;
    return kDefault.tokenize(text);
}

std::vector<std::size_t> lexicographic_ordinals(std::span<const std::string> refs) {
    std::vector<std::size_t> order(refs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return refs[a] < refs[b]; });
    std::vector<std::size_t> ordinal(refs.size());
    for (std::size_t r = 0; r < order.size(); ++r) ordinal[order[r]] = r;
    return ordinal;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const std::size_t> ordinal, std::size_t k,
                               bool drop_nonpositive) {
    std::vector<std::size_t> idx;
    idx.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!drop_nonpositive || scores[i] > 0.0) idx.push_back(i);
    }
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ordinal[a] < ordinal[b];
    };
    if (k < idx.size()) {
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
        idx.resize(k);
    } else {
        std::sort(idx.begin(), idx.end(), better);
    }
    return idx;
}

// ---------------------------------------------------------------------------------------------
// Sparse

SparseIndex SparseIndex::build(std::span<const std::pair<std::string, std::vector<std::string>>> docs,
                               Bm25Params params) {
    SparseIndex index;
    index.params_ = params;
    index.refs_.reserve(docs.size());
    index.lengths_.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto& [ref, tokens] = docs[i];
        if (!index.ref_index_.emplace(ref, i).second) throw BuildError("duplicate doc-ref '" + ref + "'");
        index.refs_.push_back(ref);
        index.lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        index.total_len_ += tokens.size();
        std::unordered_map<std::string_view, std::uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) {
            index.postings_[std::string(term)].push_back({static_cast<std::uint32_t>(i), count});
        }
    }
    for (auto& [_, list] : index.postings_) {
        std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
    }
    index.ordinal_ = lexicographic_ordinals(index.refs_);
    return index;
}

double SparseIndex::avg_doc_length() const noexcept {
    if (refs_.empty()) return 0.0;
    return static_cast<double>(total_len_) / static_cast<double>(refs_.size());
}

const std::vector<Posting>* SparseIndex::postings(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

std::size_t SparseIndex::df(const std::string& term) const {
    const auto* p = postings(term);
    return p ? p->size() : 0;
}

std::optional<std::size_t> SparseIndex::doc_index(const std::string& doc_ref) const {
    auto it = ref_index_.find(doc_ref);
    if (it == ref_index_.end()) return std::nullopt;
    return it->second;
}

std::uint32_t SparseIndex::tf(const std::string& term, const std::string& doc_ref) const {
    auto doc = doc_index(doc_ref);
    const auto* p = postings(term);
    if (!doc || !p) return 0;
    auto it = std::lower_bound(p->begin(), p->end(), *doc,
                               [](const Posting& a, std::size_t d) { return a.doc < d; });
    return (it != p->end() && it->doc == *doc) ? it->tf : 0;
}

std::vector<std::string> SparseIndex::terms() const {
    std::vector<std::string> out;
    out.reserve(postings_.size());
    for (const auto& [term, _] : postings_) out.push_back(term);
    std::sort(out.begin(), out.end());
    return out;
}

std::uint32_t SparseIndex::doc_length(const std::string& doc_ref) const {
    auto doc = doc_index(doc_ref);
    if (!doc) throw LookupError("unknown doc-ref '" + doc_ref + "'");
    return lengths_[*doc];
}

std::vector<double> SparseIndex::score_all(std::span<const std::string> query_tokens) const {
    std::vector<double> acc(refs_.size(), 0.0);
    if (refs_.empty()) return acc;
    const double avg = avg_doc_length();
    for (const auto& term : query_tokens) {
        const auto* p = postings(term);
        if (!p) continue;
        const double idf = bm25_idf(refs_.size(), p->size());
        for (const auto& post : *p) {
            acc[post.doc] += bm25_term_weight(idf, post.tf, lengths_[post.doc], avg, params_);
        }
    }
    return acc;
}

double SparseIndex::score(std::span<const std::string> query_tokens, const std::string& doc_ref) const {
    auto doc = doc_index(doc_ref);
    if (!doc) throw LookupError("unknown doc-ref '" + doc_ref + "'");
    return score_all(query_tokens)[*doc];
}

ScoredRanking SparseIndex::retrieve(std::span<const std::string> query_tokens, std::size_t k) const {
    const auto scores = score_all(query_tokens);
    ScoredRanking out;
    for (auto i : top_k(scores, ordinal_, k, true)) out.push_back({refs_[i], scores[i]});
    return out;
}

// ---------------------------------------------------------------------------------------------
// Dense

std::vector<double> hashed_token_vector(std::string_view token, std::size_t dim, std::uint64_t seed) {
    Rng rng(mix64(fnv1a64(token) ^ mix64(seed)));
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = standard_normal(rng);
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

namespace {

bool normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) return false;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return true;
}

}  // namespace

std::vector<double> hashed_text_vector(std::span<const std::string> tokens, std::size_t dim, std::uint64_t seed) {
    std::vector<double> sum(dim, 0.0);
    for (const auto& t : tokens) {
        const auto v = hashed_token_vector(t, dim, seed);
        for (std::size_t i = 0; i < dim; ++i) sum[i] += v[i];
    }
    if (!normalize(sum)) std::fill(sum.begin(), sum.end(), 0.0);
    return sum;
}

DenseIndex DenseIndex::from_vectors(std::vector<std::string> refs, const std::vector<std::vector<double>>& vectors) {
    if (refs.size() != vectors.size()) throw BuildError("refs and vectors differ in length");
    DenseIndex index;
    index.dim_ = vectors.empty() ? 0 : vectors.front().size();
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (!seen.emplace(refs[i], i).second) throw BuildError("duplicate doc-ref '" + refs[i] + "'");
        if (vectors[i].size() != index.dim_) throw BuildError("dimension mismatch for doc-ref '" + refs[i] + "'");
        auto v = vectors[i];
        const bool nonzero = normalize(v);
        index.zero_.push_back(!nonzero);
        if (!nonzero) std::fill(v.begin(), v.end(), 0.0);
        index.data_.insert(index.data_.end(), v.begin(), v.end());
    }
    index.refs_ = std::move(refs);
    index.ordinal_ = lexicographic_ordinals(index.refs_);
    return index;
}

DenseIndex DenseIndex::build(std::span<const std::pair<std::string, std::vector<std::string>>> docs, std::size_t dim,
                             std::uint64_t seed) {
    if (dim < 8) throw ConfigError("dense.dim", "must be >= 8");
    std::vector<std::string> refs;
    std::vector<std::vector<double>> vectors;
    for (const auto& [ref, tokens] : docs) {
        refs.push_back(ref);
        vectors.push_back(hashed_text_vector(tokens, dim, seed));
    }
    auto index = from_vectors(std::move(refs), vectors);
    index.dim_ = dim;
    index.seed_ = seed;
    index.hashed_ = true;
    return index;
}

DenseIndex DenseIndex::load_embeddings(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IngestionError("missing or unreadable file: " + file.string());
    std::vector<std::string> refs;
    std::vector<std::vector<double>> vectors;
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = file.string() + ":" + std::to_string(line_no);
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) throw IngestionError(where + ": expected doc-id<TAB>values");
        std::vector<double> v;
        std::size_t pos = tab + 1;
        while (pos <= line.size()) {
            auto comma = line.find(',', pos);
            const auto end = comma == std::string::npos ? line.size() : comma;
            double x = 0.0;
            auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + end, x);
            if (ec != std::errc() || ptr != line.data() + end) {
                throw IngestionError(where + ": malformed value '" + line.substr(pos, end - pos) + "'");
            }
            v.push_back(x);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (dim == 0) dim = v.size();
        if (v.size() != dim) {
            throw IngestionError(where + ": expected " + std::to_string(dim) + " values, got " +
                                 std::to_string(v.size()));
        }
        refs.push_back(line.substr(0, tab));
        vectors.push_back(std::move(v));
    }
    try {
        return from_vectors(std::move(refs), vectors);
    } catch (const BuildError& e) {
        throw IngestionError(file.string() + ": " + e.what());
    }
}

std::vector<double> unit_query_vector(std::span<const double> v) {
    std::vector<double> q(v.begin(), v.end());
    if (!normalize(q)) std::fill(q.begin(), q.end(), 0.0);
    return q;
}

double dense_dot(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;
}

std::span<const double> DenseIndex::vector(std::size_t doc) const {
    return std::span<const double>(data_).subspan(doc * dim_, dim_);
}

std::vector<double> DenseIndex::score_all(std::span<const double> query_unit) const {
    std::vector<double> scores(refs_.size(), 0.0);
    if (query_unit.size() != dim_) throw ConfigError("dense.dim", "query vector dimension mismatch");
    for (std::size_t d = 0; d < refs_.size(); ++d) {
        if (zero_[d]) continue;
        scores[d] = dense_dot(query_unit, vector(d));
    }
    return scores;
}

ScoredRanking DenseIndex::retrieve_vector(std::span<const double> query_vector, std::size_t k) const {
    const auto scores = score_all(unit_query_vector(query_vector));
    ScoredRanking out;
    for (auto i : top_k(scores, ordinal_, k, false)) out.push_back({refs_[i], scores[i]});
    return out;
}

ScoredRanking DenseIndex::retrieve(std::span<const std::string> query_tokens, std::size_t k) const {
    if (!hashed_) throw VariantError("imported embeddings cannot embed query text; use retrieve_vector");
    return retrieve_vector(hashed_text_vector(query_tokens, dim_, seed_), k);
}

// ---------------------------------------------------------------------------------------------

std::string to_string(RetrieverKind kind) { return kind == RetrieverKind::Bm25 ? "bm25" : "dense"; }

RetrieverKind retriever_from_string(const std::string& name) {
    if (name == "bm25" || name == "sparse") return RetrieverKind::Bm25;
    if (name == "dense") return RetrieverKind::Dense;
    throw ConfigError("retriever", "unknown retriever '" + name + "' (expected bm25 or dense)");
}

const SparseIndex& RetrievalIndex::sparse() const {
    if (const auto* s = std::get_if<SparseIndex>(&impl_)) return *s;
    throw VariantError("operation requires a sparse index");
}

const DenseIndex& RetrievalIndex::dense() const {
    if (const auto* d = std::get_if<DenseIndex>(&impl_)) return *d;
    throw VariantError("operation requires a dense index");
}

std::size_t RetrievalIndex::doc_count() const {
    return std::visit([](const auto& idx) { return idx.doc_count(); }, impl_);
}

namespace {

std::vector<std::pair<std::string, std::vector<std::string>>> tokenize_docs(
    std::span<const std::pair<std::string, std::string>> docs, const Tokenizer& tokenizer) {
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    out.reserve(docs.size());
    for (const auto& [ref, text] : docs) out.emplace_back(ref, tokenizer.tokenize(text));
    return out;
}

}  // namespace

RetrievalIndex build_sparse_index(std::span<const std::pair<std::string, std::string>> docs,
                                  const Tokenizer& tokenizer, Bm25Params params) {
    return SparseIndex::build(tokenize_docs(docs, tokenizer), params);
}

RetrievalIndex build_dense_index(std::span<const std::pair<std::string, std::string>> docs, std::size_t dim,
                                 std::uint64_t seed, const Tokenizer& tokenizer) {
    return DenseIndex::build(tokenize_docs(docs, tokenizer), dim, seed);
}

double bm25_score(const RetrievalIndex& index, std::span<const std::string> query_tokens,
                  const std::string& doc_ref) {
    return index.sparse().score(query_tokens, doc_ref);
}

ScoredRanking retrieve(const RetrievalIndex& index, std::string_view query_text, std::size_t k,
                       const Tokenizer& tokenizer) {
    if (k == 0) throw ConfigError("k", "must be >= 1");
    const auto tokens = tokenizer.tokenize(query_text);
    if (index.kind() == RetrieverKind::Bm25) return index.sparse().retrieve(tokens, k);
    return index.dense().retrieve(tokens, k);
}

}  // namespace coaug::retrieval
