#pragma once

#include <span>
#include <string>
#include <vector>

#include "coaug/kinds.hpp"

namespace coaug::advantage {

enum class Mode {
    Centering,  ///< r - mean(group)
    GroupNorm,  ///< (r - mean(group)) / (std(group) + eps), GRPO-style
    BatchNorm,  ///< (r - mean(batch)) / (std(batch) + eps), REINFORCE++-style
};

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);

struct AdvantageConfig {
    Mode mode = Mode::Centering;
    double scale_query = 1.0;
    double scale_relevant = 0.2;
    double scale_irrelevant = 0.1;
    double epsilon = 1e-8;
    double std_threshold = 0.02;

    double scale(SourceKind kind) const;
    /// Throws ConfigError for non-positive scales, epsilon or threshold.
    void validate() const;
};

/// All rollouts of one source text.
struct RewardGroup {
    SourceKind kind = SourceKind::Query;
    std::vector<double> rewards;
};

struct AdvantageReport {
    std::vector<std::vector<double>> advantages;
    /// Population std of each group's rewards.
    std::vector<double> pre_std;
    /// Population std of each group's normalized advantages, before kind scaling.
    std::vector<double> post_std;
    double amplified_variance_fraction = 0.0;
    double same_sign_fraction = 0.0;
};

/// Scaling is applied after centering/normalization. Single-member groups get 0 under centering
/// and group-norm. Throws ConfigError on an empty group.
AdvantageReport compute_advantages(std::span<const RewardGroup> groups, const AdvantageConfig& config);

struct AnomalyStats {
    double amplified_variance_fraction = 0.0;
    double same_sign_fraction = 0.0;
};

/// Share of groups with pre-normalization std below the threshold minus the share after
/// normalization; and share of groups whose advantages are all strictly positive or all strictly
/// negative.
AnomalyStats anomaly_stats(std::span<const RewardGroup> groups, const AdvantageConfig& config);
AnomalyStats anomaly_stats(const AdvantageReport& report, double std_threshold);

/// Population mean with the minimum as pivot, so identical values yield exactly that value and
/// centered values never share one strict sign.
double pivot_mean(std::span<const double> values);
double population_std(std::span<const double> values, double mean);

}  // namespace coaug::advantage
