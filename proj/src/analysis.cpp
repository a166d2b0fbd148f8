#include "coaug/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "coaug/config.hpp"
#include "coaug/error.hpp"
#include "coaug/metrics.hpp"

namespace coaug::analysis {

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::vector<std::string> sorted_intersection(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::vector<std::string> out;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(out));
    return out;
}

}  // namespace

std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size(), 0);
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < width.size(); ++c) {
            const std::string cell = c < cells.size() ? cells[c] : "";
            out << cell;
            if (c + 1 < width.size()) out << std::string(width[c] - cell.size() + 2, ' ');
        }
        out << '\n';
    };
    line(header);
    std::vector<std::string> rule;
    for (auto w : width) rule.emplace_back(w, '-');
    line(rule);
    for (const auto& r : rows) line(r);
    return out.str();
}

// -- H(Q,D) ---------------------------------------------------------------------------------

HqdReport hqd_report(std::span<const Variant> variants, const corpus::Dataset& data,
                     const retrieval::Tokenizer& tokenizer, retrieval::RetrieverKind retriever, double epsilon,
                     const sampler::PromptSet& prompts) {
    HqdReport report;
    for (const auto& v : variants) {
        const auto texts = trainer::augment_corpus(v.query_policy, v.doc_policy, data, prompts);
        report.rows.push_back({v.name, retrieval::to_string(retriever), trainer::hqd(texts, tokenizer, epsilon), false});
    }
    if (!report.rows.empty()) {
        double best = report.rows.front().hqd;
        for (const auto& r : report.rows) best = std::min(best, r.hqd);
        for (auto& r : report.rows) r.minimum = r.hqd == best;
    }
    return report;
}

json HqdReport::to_json() const {
    json rows_json = json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"variant", r.variant}, {"retriever", r.retriever}, {"hqd", r.hqd}, {"minimum", r.minimum}});
    }
    return json{{"report", "hqd"}, {"rows", rows_json}};
}

std::string HqdReport::to_text() const {
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) cells.push_back({r.variant, r.retriever, fixed(r.hqd, 3) + (r.minimum ? " *" : "")});
    return format_table({"variant", "retriever", "H(Q,D)"}, cells);
}

// -- case study -----------------------------------------------------------------------------

CaseRecord case_extract(const Variant& variant, const corpus::Dataset& data, const std::string& query_id,
                        const retrieval::Tokenizer& tokenizer, const trainer::EvalOptions& options) {
    std::size_t qi = data.queries.size();
    for (std::size_t i = 0; i < data.queries.size(); ++i) {
        if (data.queries[i].id == query_id) qi = i;
    }
    if (qi == data.queries.size()) throw LookupError("unknown query id '" + query_id + "'");
    if (options.k == 0) throw ConfigError("analyze.k", "must be >= 1");

    const auto raw = trainer::augment_corpus(nullptr, nullptr, data, options.prompts);
    const auto aug = trainer::augment_corpus(variant.query_policy, variant.doc_policy, data, options.prompts);
    const metrics::RelevanceView rel(data.qrels.judged(query_id));

    auto rank = [&](const trainer::AugmentedCorpus& texts, double& ndcg) {
        std::vector<std::pair<std::string, std::vector<std::string>>> docs;
        for (std::size_t i = 0; i < data.docs.size(); ++i) docs.emplace_back(data.docs[i].id, tokenizer.tokenize(texts.docs[i]));
        const auto qtok = tokenizer.tokenize(texts.queries[qi]);
        retrieval::ScoredRanking ranking;
        if (options.retriever == retrieval::RetrieverKind::Bm25) {
            ranking = retrieval::SparseIndex::build(docs).retrieve(qtok, options.k);
        } else {
            ranking = retrieval::DenseIndex::build(docs, options.dense.dim, options.dense.seed).retrieve(qtok, options.k);
        }
        ndcg = metrics::ndcg_at_k(ranking, rel, options.k);
        std::vector<RankedDoc> out;
        for (const auto& s : ranking) out.push_back({s.doc_ref, s.score, rel.grade(s.doc_ref)});
        return out;
    };

    CaseRecord rec;
    rec.query_id = query_id;
    rec.query_text = data.queries[qi].text;
    rec.query_augmentation = tokenizer.tokenize(aug.query_augmentations[qi]);
    rec.raw_ranking = rank(raw, rec.raw_ndcg);
    rec.augmented_ranking = rank(aug, rec.augmented_ndcg);

    std::map<std::string, std::size_t> doc_pos;
    for (std::size_t i = 0; i < data.docs.size(); ++i) doc_pos.emplace(data.docs[i].id, i);
    const auto q_raw = tokenizer.tokenize(raw.queries[qi]);
    const auto q_aug = tokenizer.tokenize(aug.queries[qi]);
    std::set<std::string> shared_all;
    for (const auto& r : rec.augmented_ranking) {
        const std::size_t d = doc_pos.at(r.id);
        CaseDoc cd;
        cd.id = r.id;
        cd.grade = r.grade;
        cd.augmentation = tokenizer.tokenize(aug.doc_augmentations[d]);
        cd.shared = sorted_intersection(q_aug, tokenizer.tokenize(aug.docs[d]));
        cd.raw_shared = sorted_intersection(q_raw, tokenizer.tokenize(raw.docs[d]));
        shared_all.insert(cd.shared.begin(), cd.shared.end());
        rec.top_docs.push_back(std::move(cd));
    }
    rec.shared_tokens.assign(shared_all.begin(), shared_all.end());
    return rec;
}

json CaseRecord::to_json() const {
    auto ranking = [](const std::vector<RankedDoc>& r) {
        json out = json::array();
        for (const auto& d : r) out.push_back({{"id", d.id}, {"score", d.score}, {"grade", d.grade}});
        return out;
    };
    json docs = json::array();
    for (const auto& d : top_docs) {
        docs.push_back({{"id", d.id},
                        {"grade", d.grade},
                        {"augmentation", d.augmentation},
                        {"shared", d.shared},
                        {"raw_shared", d.raw_shared}});
    }
    return json{{"query_id", query_id},
                {"query_text", query_text},
                {"query_augmentation", query_augmentation},
                {"raw_ranking", ranking(raw_ranking)},
                {"augmented_ranking", ranking(augmented_ranking)},
                {"top_docs", docs},
                {"shared_tokens", shared_tokens},
                {"raw_ndcg", raw_ndcg},
                {"augmented_ndcg", augmented_ndcg}};
}

// -- anomaly statistics ---------------------------------------------------------------------

std::vector<AnomalyRow> anomaly_table(std::span<const std::vector<advantage::RewardGroup>> steps,
                                      const advantage::AdvantageConfig& base) {
    std::vector<AnomalyRow> rows;
    for (auto mode : {advantage::Mode::GroupNorm, advantage::Mode::BatchNorm, advantage::Mode::Centering}) {
        auto cfg = base;
        cfg.mode = mode;
        AnomalyRow row{advantage::to_string(mode), 0.0, 0.0};
        for (const auto& groups : steps) {
            const auto s = advantage::anomaly_stats(groups, cfg);
            row.amplified_variance += s.amplified_variance_fraction;
            row.same_sign += s.same_sign_fraction;
        }
        if (!steps.empty()) {
            row.amplified_variance /= static_cast<double>(steps.size());
            row.same_sign /= static_cast<double>(steps.size());
        }
        rows.push_back(row);
    }
    return rows;
}

json anomaly_json(const std::vector<AnomalyRow>& rows, double std_threshold) {
    json out = json::array();
    for (const auto& r : rows) {
        out.push_back({{"mode", r.mode}, {"amplified_variance", r.amplified_variance}, {"same_sign", r.same_sign}});
    }
    return json{{"report", "anomaly"}, {"std_threshold", std_threshold}, {"rows", out}};
}

std::string anomaly_text(const std::vector<AnomalyRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        cells.push_back({r.mode, fixed(100.0 * r.amplified_variance, 1) + "%", fixed(100.0 * r.same_sign, 1) + "%"});
    }
    return format_table({"mode", "amplified variance", "same sign"}, cells);
}

// -- ablation grid --------------------------------------------------------------------------

const std::vector<std::string>& known_cells() {
    static const std::vector<std::string> cells{"base",      "base-q",     "base-d",     "base-q+base-d",
                                                "rl-q",      "rl-d",       "rl-q+rl-d",  "rl-qd",
                                                "centering", "group-norm", "batch-norm", "no-scale"};
    return cells;
}

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

// What a cell evaluates: an optional trained/untrained policy per side.
struct CellPlan {
    enum class Source { None, Untrained, Trained };
    Source query = Source::None;
    Source doc = Source::None;
    trainer::TrainConfig query_config;
    trainer::TrainConfig doc_config;
};

CellPlan plan_cell(const std::string& cell, const trainer::TrainConfig& base) {
    using S = CellPlan::Source;
    CellPlan p;
    auto joint = base;
    joint.target = trainer::Target::Joint;
    auto q_only = joint;
    q_only.target = trainer::Target::QueryOnly;
    auto d_only = joint;
    d_only.target = trainer::Target::DocOnly;
    p.query_config = joint;
    p.doc_config = joint;
    if (cell == "base") return p;
    if (cell == "base-q") {
        p.query = S::Untrained;
    } else if (cell == "base-d") {
        p.doc = S::Untrained;
    } else if (cell == "base-q+base-d") {
        p.query = p.doc = S::Untrained;
    } else if (cell == "rl-q") {
        p.query = S::Trained;
        p.query_config = q_only;
    } else if (cell == "rl-d") {
        p.doc = S::Trained;
        p.doc_config = d_only;
    } else if (cell == "rl-q+rl-d") {
        p.query = p.doc = S::Trained;
        p.query_config = q_only;
        p.doc_config = d_only;
    } else if (cell == "rl-qd" || cell == "centering" || cell == "group-norm" || cell == "batch-norm" ||
               cell == "no-scale") {
        p.query = p.doc = S::Trained;
        if (cell == "rl-qd" || cell == "centering") joint.advantage.mode = advantage::Mode::Centering;
        if (cell == "group-norm") joint.advantage.mode = advantage::Mode::GroupNorm;
        if (cell == "batch-norm") joint.advantage.mode = advantage::Mode::BatchNorm;
        if (cell == "no-scale") {
            joint.advantage.mode = advantage::Mode::Centering;
            joint.advantage.scale_query = joint.advantage.scale_relevant = joint.advantage.scale_irrelevant = 1.0;
        }
        p.query_config = p.doc_config = joint;
    } else {
        throw ConfigError("ablate.cells", "unknown cell '" + cell + "'");
    }
    return p;
}

}  // namespace

GridReport ablation_grid(const trainer::Workspace& workspace, const trainer::TrainConfig& base,
                         std::span<const std::string> cells, std::span<const std::uint64_t> seeds,
                         const std::function<void(const std::string&)>& log) {
    using S = CellPlan::Source;
    // Trained params keyed by the canonical config dump, so shared runs (rl-qd and centering,
    // rl-q and rl-q+rl-d) are trained once.
    std::map<std::string, policy::ToyPolicyParams> trained;
    auto params_for = [&](trainer::TrainConfig cfg, std::uint64_t seed, S source) {
        cfg.seed = seed;
        const trainer::Trainer t(workspace, cfg);
        if (source == S::Untrained) return t.init_state().params;
        const auto key = config::to_json(cfg).dump();
        auto it = trained.find(key);
        if (it != trained.end()) return it->second;
        if (log) log("training " + trainer::to_string(cfg.target) + "/" + advantage::to_string(cfg.advantage.mode) +
                     " seed " + std::to_string(seed));
        auto state = t.init_state();
        t.run(state);
        trained.emplace(key, state.params);
        return state.params;
    };

    GridReport report;
    for (const auto& cell : cells) {
        CellResult res;
        res.cell = cell;
        res.seeds.assign(seeds.begin(), seeds.end());
        try {
            const auto plan = plan_cell(cell, base);
            json hash_doc{{"cell", cell}};
            if (plan.query != S::None) hash_doc["query"] = config::to_json(plan.query_config);
            if (plan.doc != S::None) hash_doc["doc"] = config::to_json(plan.doc_config);
            hash_doc["seeds"] = res.seeds;
            res.config_hash = config::hash_hex(config::config_hash(hash_doc));
            for (auto seed : seeds) {
                std::unique_ptr<policy::ToyPolicy> qp, dp;
                if (plan.query != S::None) {
                    qp = std::make_unique<policy::ToyPolicy>(workspace.vocabulary(),
                                                             params_for(plan.query_config, seed, plan.query),
                                                             workspace.tokenizer());
                }
                if (plan.doc != S::None) {
                    dp = std::make_unique<policy::ToyPolicy>(workspace.vocabulary(),
                                                             params_for(plan.doc_config, seed, plan.doc),
                                                             workspace.tokenizer());
                }
                const trainer::EvalOptions opts{base.retriever, base.dense, base.k, base.prompts};
                res.ndcg.push_back(
                    trainer::evaluate(qp.get(), dp.get(), workspace.data(), workspace.tokenizer(), opts).ndcg);
            }
            res.median = median(res.ndcg);
        } catch (const std::exception& e) {
            res.failed = true;
            res.reason = e.what();
            if (log) log("cell " + cell + " failed: " + res.reason);
        }
        report.cells.push_back(std::move(res));
    }
    return report;
}

json GridReport::to_json() const {
    json rows = json::array();
    for (const auto& c : cells) {
        json row{{"cell", c.cell}, {"seeds", c.seeds}, {"ndcg10", c.ndcg}, {"config_hash", c.config_hash},
                 {"failed", c.failed}};
        row["median"] = c.failed ? json(nullptr) : json(c.median);
        if (c.failed) row["reason"] = c.reason;
        rows.push_back(std::move(row));
    }
    return json{{"report", "ablation"}, {"rows", rows}};
}

std::string GridReport::to_text() const {
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : cells) {
        std::string per_seed;
        for (std::size_t i = 0; i < c.ndcg.size(); ++i) {
            if (i) per_seed += " ";
            per_seed += fixed(c.ndcg[i]);
        }
        std::string seeds;
        for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
        rows.push_back({c.cell, c.failed ? "FAILED" : fixed(c.median), per_seed, seeds, c.config_hash,
                        c.failed ? c.reason : ""});
    }
    return format_table({"cell", "median ndcg@10", "per-seed", "seeds", "config", "note"}, rows);
}

}  // namespace coaug::analysis
