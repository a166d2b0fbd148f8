#include "coaug/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "coaug/error.hpp"
#include "coaug/rng.hpp"

namespace coaug::config {

namespace {

std::string message_of(const ConfigError& e) {
    const std::string what = e.what();
    const std::string prefix = e.field() + ": ";
    return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

// Walks one JSON object, remembers which keys were read and rejects the rest.
class Section {
public:
    Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = doc_.find(key);
        return it == doc_.end() ? nullptr : &*it;
    }

    template <class T>
    void read(const std::string& key, T& out) {
        const json* v = find(key);
        if (!v) return;
        try {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
                if (!v->is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
                out = v->get<T>();
            } else if constexpr (std::is_same_v<T, double>) {
                if (!v->is_number()) throw ConfigError(field(key), "expected a number");
                out = v->get<double>();
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
                out = v->get<bool>();
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v->is_string()) throw ConfigError(field(key), "expected a string");
                out = v->get<std::string>();
            } else {
                out = v->get<T>();
            }
        } catch (const json::exception& e) {
            throw ConfigError(field(key), e.what());
        }
    }

    template <class Fn>
    void read_with(const std::string& key, Fn&& fn) {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_string()) throw ConfigError(field(key), "expected a string");
        try {
            fn(v->get<std::string>());
        } catch (const ConfigError& e) {
            throw ConfigError(field(key), message_of(e));
        }
    }

    void finish() const {
        for (const auto& [key, _] : doc_.items()) {
            if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
        }
    }

private:
    const json& doc_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string predicate_name(sampler::IrrelevancePredicate p) {
    return p == sampler::IrrelevancePredicate::Bm25ZeroScore ? "bm25-zero" : "qrels-only";
}

sampler::IrrelevancePredicate predicate_from(const std::string& s) {
    if (s == "bm25-zero") return sampler::IrrelevancePredicate::Bm25ZeroScore;
    if (s == "qrels-only") return sampler::IrrelevancePredicate::QrelsOnly;
    throw ConfigError("irrelevance", "expected bm25-zero or qrels-only, got '" + s + "'");
}

template <class Fn>
void with_section(Section& parent, const std::string& key, Fn&& fn) {
    if (const json* v = parent.find(key)) {
        Section s(*v, parent.field(key));
        fn(s);
        s.finish();
    }
}

}  // namespace

json to_json(const trainer::TrainConfig& c) {
    return json{
        {"steps", c.steps},
        {"q", c.q},
        {"d_pos", c.d_pos},
        {"d_neg", c.d_neg},
        {"n_rollout", c.n_rollout},
        {"n_samp", c.n_samp},
        {"k", c.k},
        {"retriever", retrieval::to_string(c.retriever)},
        {"dense", {{"dim", c.dense.dim}, {"seed", c.dense.seed}}},
        {"irrelevance", predicate_name(c.irrelevance)},
        {"advantage",
         {{"mode", advantage::to_string(c.advantage.mode)},
          {"scale_query", c.advantage.scale_query},
          {"scale_relevant", c.advantage.scale_relevant},
          {"scale_irrelevant", c.advantage.scale_irrelevant},
          {"epsilon", c.advantage.epsilon},
          {"std_threshold", c.advantage.std_threshold}}},
        {"target", trainer::to_string(c.target)},
        {"learning_rate", c.learning_rate},
        {"batch_size", c.batch_size},
        {"mini_batch_size", c.mini_batch_size},
        {"micro_batch_size", c.micro_batch_size},
        {"temperature", c.temperature},
        {"tokens_per_rollout", c.tokens_per_rollout},
        {"without_replacement", c.without_replacement},
        {"init_scale", c.init_scale},
        {"eval_every", c.eval_every},
        {"hqd_epsilon", c.hqd_epsilon},
        {"seed", c.seed},
        {"workers", c.workers},
        {"prompts", {{"query", c.prompts.query_template}, {"doc", c.prompts.doc_template}}},
    };
}

trainer::TrainConfig train_config_from_json(const json& doc, const std::string& path) {
    trainer::TrainConfig c;
    Section s(doc, path);
    s.read("steps", c.steps);
    s.read("q", c.q);
    s.read("d_pos", c.d_pos);
    s.read("d_neg", c.d_neg);
    s.read("n_rollout", c.n_rollout);
    s.read("n_samp", c.n_samp);
    s.read("k", c.k);
    s.read_with("retriever", [&](const std::string& v) { c.retriever = retrieval::retriever_from_string(v); });
    with_section(s, "dense", [&](Section& d) {
        d.read("dim", c.dense.dim);
        d.read("seed", c.dense.seed);
    });
    s.read_with("irrelevance", [&](const std::string& v) { c.irrelevance = predicate_from(v); });
    with_section(s, "advantage", [&](Section& a) {
        a.read_with("mode", [&](const std::string& v) { c.advantage.mode = advantage::mode_from_string(v); });
        a.read("scale_query", c.advantage.scale_query);
        a.read("scale_relevant", c.advantage.scale_relevant);
        a.read("scale_irrelevant", c.advantage.scale_irrelevant);
        a.read("epsilon", c.advantage.epsilon);
        a.read("std_threshold", c.advantage.std_threshold);
    });
    s.read_with("target", [&](const std::string& v) { c.target = trainer::target_from_string(v); });
    s.read("learning_rate", c.learning_rate);
    s.read("batch_size", c.batch_size);
    s.read("mini_batch_size", c.mini_batch_size);
    s.read("micro_batch_size", c.micro_batch_size);
    s.read("temperature", c.temperature);
    s.read("tokens_per_rollout", c.tokens_per_rollout);
    s.read("without_replacement", c.without_replacement);
    s.read("init_scale", c.init_scale);
    s.read("eval_every", c.eval_every);
    s.read("hqd_epsilon", c.hqd_epsilon);
    s.read("seed", c.seed);
    s.read("workers", c.workers);
    with_section(s, "prompts", [&](Section& p) {
        p.read("query", c.prompts.query_template);
        p.read("doc", c.prompts.doc_template);
    });
    s.finish();
    c.validate();
    return c;
}

json to_json(const corpus::SyntheticSpec& s) {
    return json{{"n_topics", s.n_topics},
                {"n_queries", s.n_queries},
                {"n_docs", s.n_docs},
                {"query_vocab_size", s.query_vocab_size},
                {"doc_vocab_size", s.doc_vocab_size},
                {"bridge_vocab_size", s.bridge_vocab_size},
                {"doc_len", s.doc_len},
                {"query_len", s.query_len},
                {"seed", s.seed}};
}

corpus::SyntheticSpec synthetic_from_json(const json& doc, const std::string& path) {
    corpus::SyntheticSpec spec;
    Section s(doc, path);
    s.read("n_topics", spec.n_topics);
    s.read("n_queries", spec.n_queries);
    s.read("n_docs", spec.n_docs);
    s.read("query_vocab_size", spec.query_vocab_size);
    s.read("doc_vocab_size", spec.doc_vocab_size);
    s.read("bridge_vocab_size", spec.bridge_vocab_size);
    s.read("doc_len", spec.doc_len);
    s.read("query_len", spec.query_len);
    s.read("seed", spec.seed);
    s.finish();
    spec.validate();
    return spec;
}

ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig c;
    Section root(doc, "");
    with_section(root, "data", [&](Section& s) {
        s.read("dir", c.data.dir);
        s.read("split", c.data.split);
    });
    if (const json* v = root.find("synthetic")) c.synthetic = synthetic_from_json(*v);
    with_section(root, "tokenizer", [&](Section& s) {
        s.read("lowercase", c.tokenizer.lowercase);
        s.read("min_length", c.tokenizer.min_length);
        s.read("s_stemmer", c.tokenizer.s_stemmer);
        s.read("stopwords", c.tokenizer.stopwords);
    });
    if (const json* v = root.find("train")) c.train = train_config_from_json(*v);
    with_section(root, "eval", [&](Section& s) {
        s.read("checkpoint", c.eval.checkpoint);
        s.read("params", c.eval.params);
        s.read("k", c.eval.k);
        if (c.eval.params != "final" && c.eval.params != "best") {
            throw ConfigError("eval.params", "expected final or best");
        }
    });
    with_section(root, "ablate", [&](Section& s) {
        s.read("cells", c.ablate.cells);
        s.read("seeds", c.ablate.seeds);
    });
    with_section(root, "analyze", [&](Section& s) {
        if (const json* v = s.find("variants")) {
            if (!v->is_array()) throw ConfigError("analyze.variants", "expected an array");
            for (std::size_t i = 0; i < v->size(); ++i) {
                Section e((*v)[i], "analyze.variants[" + std::to_string(i) + "]");
                AnalyzeVariant var;
                e.read("name", var.name);
                e.read("checkpoint", var.checkpoint);
                e.finish();
                if (var.name.empty()) throw ConfigError(e.field("name"), "must be nonempty");
                c.analyze.variants.push_back(std::move(var));
            }
        }
        s.read("cases", c.analyze.cases);
        s.read("k", c.analyze.k);
        s.read("anomaly_steps", c.analyze.anomaly_steps);
    });
    with_section(root, "index", [&](Section& s) {
        s.read_with("kind", [&](const std::string& v) { c.index.kind = retrieval::retriever_from_string(v); });
        s.read("dim", c.index.dim);
        s.read("seed", c.index.seed);
        s.read("embeddings", c.index.embeddings);
    });
    root.finish();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IngestionError("cannot open config " + file.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", file.string() + ": " + e.what());
    }
    return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
    json variants = json::array();
    for (const auto& v : c.analyze.variants) variants.push_back({{"name", v.name}, {"checkpoint", v.checkpoint}});
    return json{
        {"data", {{"dir", c.data.dir}, {"split", c.data.split}}},
        {"synthetic", to_json(c.synthetic)},
        {"tokenizer",
         {{"lowercase", c.tokenizer.lowercase},
          {"min_length", c.tokenizer.min_length},
          {"s_stemmer", c.tokenizer.s_stemmer},
          {"stopwords", c.tokenizer.stopwords}}},
        {"train", to_json(c.train)},
        {"eval", {{"checkpoint", c.eval.checkpoint}, {"params", c.eval.params}, {"k", c.eval.k}}},
        {"ablate", {{"cells", c.ablate.cells}, {"seeds", c.ablate.seeds}}},
        {"analyze",
         {{"variants", variants},
          {"cases", c.analyze.cases},
          {"k", c.analyze.k},
          {"anomaly_steps", c.analyze.anomaly_steps}}},
        {"index",
         {{"kind", retrieval::to_string(c.index.kind)},
          {"dim", c.index.dim},
          {"seed", c.index.seed},
          {"embeddings", c.index.embeddings}}},
    };
}

std::uint64_t config_hash(const json& doc) { return fnv1a64(doc.dump()); }

std::string hash_hex(std::uint64_t hash) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

}  // namespace coaug::config
