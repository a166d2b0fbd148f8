#include "coaug/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "coaug/error.hpp"
#include "coaug/rng.hpp"

namespace coaug::corpus {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string CorpusItem::content() const {
    if (title.empty()) return text;
    return title + " " + text;
}

void QrelSet::set(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) {
        throw ValidationError("negative relevance grade " + std::to_string(grade) + " for (" + query_id + ", " +
                              doc_id + ")");
    }
    by_query_[query_id][doc_id] = grade;
}

int QrelSet::grade(const std::string& query_id, const std::string& doc_id) const {
    auto q = by_query_.find(query_id);
    if (q == by_query_.end()) return 0;
    auto d = q->second.find(doc_id);
    return d == q->second.end() ? 0 : d->second;
}

const QrelSet::Judgments& QrelSet::judged(const std::string& query_id) const {
    static const Judgments kEmpty;
    auto q = by_query_.find(query_id);
    return q == by_query_.end() ? kEmpty : q->second;
}

std::size_t QrelSet::relevant_count(const std::string& query_id) const {
    const auto& j = judged(query_id);
    return static_cast<std::size_t>(std::count_if(j.begin(), j.end(), [](const auto& kv) { return kv.second > 0; }));
}

std::vector<std::string> QrelSet::query_ids() const {
    std::vector<std::string> ids;
    ids.reserve(by_query_.size());
    for (const auto& [q, _] : by_query_) ids.push_back(q);
    return ids;
}

std::size_t QrelSet::size() const {
    std::size_t n = 0;
    for (const auto& [_, j] : by_query_) n += j.size();
    return n;
}

void QrelSet::validate(const std::vector<CorpusItem>& docs, const std::vector<QueryItem>& queries) const {
    std::set<std::string> doc_ids;
    std::set<std::string> query_ids;
    for (const auto& d : docs) doc_ids.insert(d.id);
    for (const auto& q : queries) query_ids.insert(q.id);
    std::vector<std::string> offenders;
    for (const auto& [q, judgments] : by_query_) {
        const bool q_ok = query_ids.count(q) > 0;
        for (const auto& [d, _] : judgments) {
            if (!q_ok || doc_ids.count(d) == 0) offenders.push_back("(" + q + ", " + d + ")");
        }
    }
    if (!offenders.empty()) {
        std::string msg = "qrels reference unknown ids: ";
        const std::size_t shown = std::min<std::size_t>(offenders.size(), 20);
        for (std::size_t i = 0; i < shown; ++i) msg += (i ? ", " : "") + offenders[i];
        if (offenders.size() > shown) msg += ", ... (" + std::to_string(offenders.size()) + " total)";
        throw ValidationError(msg);
    }
}

const CorpusItem* Dataset::find_doc(const std::string& id) const {
    auto it = std::find_if(docs.begin(), docs.end(), [&](const CorpusItem& d) { return d.id == id; });
    return it == docs.end() ? nullptr : &*it;
}

const QueryItem* Dataset::find_query(const std::string& id) const {
    auto it = std::find_if(queries.begin(), queries.end(), [&](const QueryItem& q) { return q.id == id; });
    return it == queries.end() ? nullptr : &*it;
}

namespace {

std::ifstream open_input(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IngestionError("missing or unreadable file: " + file.string());
    return in;
}

std::string string_field(const json& obj, const char* key, const fs::path& file, std::size_t line_no,
                         bool required) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        if (required) {
            throw IngestionError(file.string() + ":" + std::to_string(line_no) + ": missing field '" + key + "'");
        }
        return {};
    }
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    throw IngestionError(file.string() + ":" + std::to_string(line_no) + ": field '" + key + "' is not a string");
}

template <typename Fn>
void for_each_json_line(const fs::path& file, Fn&& fn) {
    auto in = open_input(file);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IngestionError(file.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!obj.is_object()) {
            throw IngestionError(file.string() + ":" + std::to_string(line_no) + ": expected a JSON object");
        }
        fn(obj, line_no);
    }
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

bool parse_int(const std::string& s, int& value) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    return ec == std::errc() && ptr == s.data() + s.size();
}

QrelSet load_qrels(const fs::path& file) {
    auto in = open_input(file);
    QrelSet qrels;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        if (cols.size() != 3) {
            throw IngestionError(file.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated columns");
        }
        int grade = 0;
        if (!parse_int(cols[2], grade)) {
            if (first) {  // header row
                first = false;
                continue;
            }
            throw IngestionError(file.string() + ":" + std::to_string(line_no) + ": score '" + cols[2] +
                                 "' is not an integer");
        }
        first = false;
        if (cols[0].empty() || cols[1].empty()) {
            throw IngestionError(file.string() + ":" + std::to_string(line_no) + ": empty id");
        }
        if (grade < 0) {
            throw IngestionError(file.string() + ":" + std::to_string(line_no) + ": negative score");
        }
        qrels.set(cols[0], cols[1], grade);
    }
    return qrels;
}

}  // namespace

std::string default_split(const fs::path& dir) {
    for (const char* split : {"train", "test", "dev"}) {
        if (fs::exists(dir / "qrels" / (std::string(split) + ".tsv"))) return split;
    }
    throw IngestionError("no qrels split found under " + (dir / "qrels").string());
}

Dataset load_beir(const fs::path& dir, const std::string& split, bool validate) {
    Dataset data;
    const fs::path corpus_file = dir / "corpus.jsonl";
    const fs::path queries_file = dir / "queries.jsonl";

    std::set<std::string> seen;
    for_each_json_line(corpus_file, [&](const json& obj, std::size_t line_no) {
        CorpusItem item{string_field(obj, "_id", corpus_file, line_no, true),
                        string_field(obj, "title", corpus_file, line_no, false),
                        string_field(obj, "text", corpus_file, line_no, true)};
        const std::string where = corpus_file.string() + ":" + std::to_string(line_no);
        if (item.id.empty()) throw IngestionError(where + ": empty _id");
        if (item.text.empty()) throw IngestionError(where + ": empty text");
        if (!seen.insert(item.id).second) throw IngestionError(where + ": duplicate _id '" + item.id + "'");
        data.docs.push_back(std::move(item));
    });
    if (data.docs.empty()) throw IngestionError(corpus_file.string() + ": no documents");

    seen.clear();
    for_each_json_line(queries_file, [&](const json& obj, std::size_t line_no) {
        QueryItem item{string_field(obj, "_id", queries_file, line_no, true),
                       string_field(obj, "text", queries_file, line_no, true)};
        const std::string where = queries_file.string() + ":" + std::to_string(line_no);
        if (item.id.empty()) throw IngestionError(where + ": empty _id");
        if (item.text.empty()) throw IngestionError(where + ": empty text");
        if (!seen.insert(item.id).second) throw IngestionError(where + ": duplicate _id '" + item.id + "'");
        data.queries.push_back(std::move(item));
    });
    if (data.queries.empty()) throw IngestionError(queries_file.string() + ": no queries");

    const std::string chosen = split.empty() ? default_split(dir) : split;
    data.qrels = load_qrels(dir / "qrels" / (chosen + ".tsv"));
    if (validate) data.qrels.validate(data.docs, data.queries);
    return data;
}

void write_beir(const Dataset& data, const fs::path& dir, const std::string& split) {
    fs::create_directories(dir / "qrels");
    auto open_output = [](const fs::path& file) {
        std::ofstream out(file, std::ios::binary);
        if (!out) throw IngestionError("cannot write " + file.string());
        return out;
    };
    {
        auto out = open_output(dir / "corpus.jsonl");
        for (const auto& d : data.docs) {
            out << json{{"_id", d.id}, {"title", d.title}, {"text", d.text}}.dump() << '\n';
        }
    }
    {
        auto out = open_output(dir / "queries.jsonl");
        for (const auto& q : data.queries) out << json{{"_id", q.id}, {"text", q.text}}.dump() << '\n';
    }
    auto out = open_output(dir / "qrels" / (split + ".tsv"));
    out << "query-id\tcorpus-id\tscore\n";
    for (const auto& q : data.qrels.query_ids()) {
        for (const auto& [d, grade] : data.qrels.judged(q)) out << q << '\t' << d << '\t' << grade << '\n';
    }
}

void SyntheticSpec::validate() const {
    auto positive = [](const char* field, std::size_t v) {
        if (v < 1) throw ConfigError(std::string("synthetic.") + field, "must be >= 1");
    };
    positive("n_topics", n_topics);
    positive("n_queries", n_queries);
    positive("n_docs", n_docs);
    positive("query_vocab_size", query_vocab_size);
    positive("doc_vocab_size", doc_vocab_size);
    positive("bridge_vocab_size", bridge_vocab_size);
    positive("doc_len", doc_len);
    positive("query_len", query_len);
    auto per_topic = [&](const char* field, std::size_t v) {
        if (v < n_topics) {
            throw ConfigError(std::string("synthetic.") + field,
                              "too small to give each of " + std::to_string(n_topics) + " topics a token");
        }
    };
    per_topic("query_vocab_size", query_vocab_size);
    per_topic("doc_vocab_size", doc_vocab_size);
    per_topic("bridge_vocab_size", bridge_vocab_size);
}

std::vector<std::string> SyntheticCorpus::all_bridge_tokens() const {
    std::vector<std::string> out;
    for (const auto& v : bridge_vocab) out.insert(out.end(), v.begin(), v.end());
    return out;
}

namespace {

std::string padded(const char* prefix, std::size_t i, std::size_t n) {
    std::string digits = std::to_string(i);
    const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
    return prefix + std::string(width - std::min(width, digits.size()), '0') + digits;
}

// Topic t owns [t * size / n_topics, (t + 1) * size / n_topics).
std::vector<std::vector<std::string>> split_vocab(const char* prefix, std::size_t size, std::size_t n_topics) {
    std::vector<std::vector<std::string>> out(n_topics);
    for (std::size_t t = 0; t < n_topics; ++t) {
        const std::size_t lo = t * size / n_topics;
        const std::size_t hi = (t + 1) * size / n_topics;
        for (std::size_t i = lo; i < hi; ++i) {
            out[t].push_back(std::string(prefix) + "t" + std::to_string(t) + "w" + std::to_string(i - lo));
        }
    }
    return out;
}

std::string draw_text(const std::vector<std::string>& vocab, std::size_t len, Rng& rng) {
    std::string text;
    for (std::size_t i = 0; i < len; ++i) {
        if (i) text += ' ';
        text += vocab[uniform_index(rng, vocab.size())];
    }
    return text;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticCorpus out;
    out.query_vocab = split_vocab("q", spec.query_vocab_size, spec.n_topics);
    out.doc_vocab = split_vocab("d", spec.doc_vocab_size, spec.n_topics);
    out.bridge_vocab = split_vocab("b", spec.bridge_vocab_size, spec.n_topics);

    Rng topic_rng = make_rng(spec.seed, {1});
    Rng text_rng = make_rng(spec.seed, {2});
    auto assign_topics = [&](std::size_t n) {
        std::vector<std::size_t> topics(n);
        for (std::size_t i = 0; i < n; ++i) topics[i] = i % spec.n_topics;
        shuffle(std::span<std::size_t>(topics), topic_rng);
        return topics;
    };
    out.query_topic = assign_topics(spec.n_queries);
    out.doc_topic = assign_topics(spec.n_docs);

    for (std::size_t i = 0; i < spec.n_docs; ++i) {
        out.data.docs.push_back(
            {padded("d", i, spec.n_docs), "", draw_text(out.doc_vocab[out.doc_topic[i]], spec.doc_len, text_rng)});
    }
    for (std::size_t i = 0; i < spec.n_queries; ++i) {
        out.data.queries.push_back(
            {padded("q", i, spec.n_queries), draw_text(out.query_vocab[out.query_topic[i]], spec.query_len, text_rng)});
    }
    for (std::size_t qi = 0; qi < spec.n_queries; ++qi) {
        for (std::size_t di = 0; di < spec.n_docs; ++di) {
            if (out.query_topic[qi] == out.doc_topic[di]) out.data.qrels.set(out.data.queries[qi].id, out.data.docs[di].id, 1);
        }
    }
    return out;
}

}  // namespace coaug::corpus
