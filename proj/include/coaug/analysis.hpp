#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coaug/advantage.hpp"
#include "coaug/corpus.hpp"
#include "coaug/policy.hpp"
#include "coaug/retrieval.hpp"
#include "coaug/trainer.hpp"

namespace coaug::analysis {

using json = nlohmann::json;

/// A named pair of augmenters; null leaves that side raw.
struct Variant {
    std::string name;
    const policy::AugmentationPolicy* query_policy = nullptr;
    const policy::AugmentationPolicy* doc_policy = nullptr;
};

/// Fixed-width text table; numbers are preformatted by the caller.
std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

// -- H(Q,D) ---------------------------------------------------------------------------------

struct HqdRow {
    std::string variant;
    std::string retriever;
    double hqd = 0.0;
    bool minimum = false;
};

struct HqdReport {
    std::vector<HqdRow> rows;

    json to_json() const;
    std::string to_text() const;
};

HqdReport hqd_report(std::span<const Variant> variants, const corpus::Dataset& data,
                     const retrieval::Tokenizer& tokenizer, retrieval::RetrieverKind retriever, double epsilon,
                     const sampler::PromptSet& prompts = {});

// -- case study -----------------------------------------------------------------------------

struct RankedDoc {
    std::string id;
    double score = 0.0;
    int grade = 0;
};

struct CaseDoc {
    std::string id;
    int grade = 0;
    std::vector<std::string> augmentation;
    /// Tokens common to the augmented query and the augmented doc.
    std::vector<std::string> shared;
    /// Tokens common to the raw query and the raw doc.
    std::vector<std::string> raw_shared;
};

struct CaseRecord {
    std::string query_id;
    std::string query_text;
    std::vector<std::string> query_augmentation;
    std::vector<RankedDoc> raw_ranking;
    std::vector<RankedDoc> augmented_ranking;
    /// Top-k of the augmented ranking.
    std::vector<CaseDoc> top_docs;
    /// Union of the per-doc shared sets.
    std::vector<std::string> shared_tokens;
    double raw_ndcg = 0.0;
    double augmented_ndcg = 0.0;

    json to_json() const;
};

/// Throws LookupError for an unknown query id.
CaseRecord case_extract(const Variant& variant, const corpus::Dataset& data, const std::string& query_id,
                        const retrieval::Tokenizer& tokenizer, const trainer::EvalOptions& options);

// -- anomaly statistics ---------------------------------------------------------------------

struct AnomalyRow {
    std::string mode;
    double amplified_variance = 0.0;
    double same_sign = 0.0;
};

/// Mean per-step anomaly stats of every advantage mode over logged reward groups (one entry per
/// training step); batch statistics are taken within each step.
std::vector<AnomalyRow> anomaly_table(std::span<const std::vector<advantage::RewardGroup>> steps,
                                      const advantage::AdvantageConfig& base);
json anomaly_json(const std::vector<AnomalyRow>& rows, double std_threshold);
std::string anomaly_text(const std::vector<AnomalyRow>& rows);

// -- ablation grid --------------------------------------------------------------------------

/// Known cells: base, base-q, base-d, base-q+base-d, rl-q, rl-d, rl-q+rl-d, rl-qd, centering,
/// group-norm, batch-norm, no-scale.
const std::vector<std::string>& known_cells();

struct CellResult {
    std::string cell;
    std::vector<std::uint64_t> seeds;
    std::vector<double> ndcg;
    double median = 0.0;
    std::string config_hash;
    bool failed = false;
    std::string reason;
};

struct GridReport {
    std::vector<CellResult> cells;

    json to_json() const;
    std::string to_text() const;
};

double median(std::vector<double> values);

/// Trains (or reuses) every run a cell needs and evaluates it. A failing cell is reported with
/// its reason and the grid carries on. `log` receives progress lines when set.
GridReport ablation_grid(const trainer::Workspace& workspace, const trainer::TrainConfig& base,
                         std::span<const std::string> cells, std::span<const std::uint64_t> seeds,
                         const std::function<void(const std::string&)>& log = {});

}  // namespace coaug::analysis
