#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "coaug/corpus.hpp"
#include "coaug/retrieval.hpp"
#include "coaug/trainer.hpp"

namespace coaug::config {

using json = nlohmann::json;

struct DataConfig {
    std::string dir;
    /// Empty: first of train/test/dev present.
    std::string split;
};

struct IndexConfig {
    retrieval::RetrieverKind kind = retrieval::RetrieverKind::Bm25;
    std::size_t dim = 64;
    std::uint64_t seed = 13;
    /// Optional `id<TAB>v1,v2,...` file; replaces the hashed dense stub.
    std::string embeddings;
};

struct EvalConfig {
    std::string checkpoint;
    /// "final" or "best".
    std::string params = "final";
    std::size_t k = 10;
};

struct AblateConfig {
    std::vector<std::string> cells;
    std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct AnalyzeVariant {
    std::string name;
    /// Checkpoint path, or "base" / "identity" for the untrained / empty policies.
    std::string checkpoint;
};

struct AnalyzeConfig {
    std::vector<AnalyzeVariant> variants;
    std::vector<std::string> cases;
    std::size_t k = 10;
    /// Train for this many steps with centering and tabulate anomaly stats of every mode; 0 skips.
    std::size_t anomaly_steps = 0;
};

struct ExperimentConfig {
    DataConfig data;
    corpus::SyntheticSpec synthetic;
    retrieval::TokenizerOptions tokenizer;
    trainer::TrainConfig train;
    EvalConfig eval;
    AblateConfig ablate;
    AnalyzeConfig analyze;
    IndexConfig index;
};

/// Unknown keys and type mismatches throw ConfigError with the dotted field path.
ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config(const std::filesystem::path& file);
json to_json(const ExperimentConfig& config);

json to_json(const trainer::TrainConfig& config);
trainer::TrainConfig train_config_from_json(const json& doc, const std::string& path = "train");

json to_json(const corpus::SyntheticSpec& spec);
corpus::SyntheticSpec synthetic_from_json(const json& doc, const std::string& path = "synthetic");

/// FNV-1a over the canonical (sorted-key, compact) dump.
std::uint64_t config_hash(const json& doc);
std::string hash_hex(std::uint64_t hash);

}  // namespace coaug::config
