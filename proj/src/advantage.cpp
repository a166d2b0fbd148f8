#include "coaug/advantage.hpp"

#include <algorithm>
#include <cmath>

#include "coaug/error.hpp"

namespace coaug::advantage {

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::Centering: return "centering";
        case Mode::GroupNorm: return "group-norm";
        case Mode::BatchNorm: return "batch-norm";
    }
    return "centering";
}

Mode mode_from_string(const std::string& name) {
    if (name == "centering") return Mode::Centering;
    if (name == "group-norm") return Mode::GroupNorm;
    if (name == "batch-norm") return Mode::BatchNorm;
    throw ConfigError("advantage.mode", "unknown mode '" + name + "' (expected centering, group-norm or batch-norm)");
}

double AdvantageConfig::scale(SourceKind kind) const {
    switch (kind) {
        case SourceKind::Query: return scale_query;
        case SourceKind::RelevantDoc: return scale_relevant;
        case SourceKind::IrrelevantDoc: return scale_irrelevant;
    }
    return scale_query;
}

void AdvantageConfig::validate() const {
    auto positive = [](double v, const char* field) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be a positive finite number");
    };
    positive(scale_query, "advantage.scale_query");
    positive(scale_relevant, "advantage.scale_relevant");
    positive(scale_irrelevant, "advantage.scale_irrelevant");
    positive(epsilon, "advantage.epsilon");
    positive(std_threshold, "advantage.std_threshold");
}

double pivot_mean(std::span<const double> values) {
    if (values.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    double offset = 0.0;
    for (double v : values) offset += v - *lo;
    const double m = *lo + offset / static_cast<double>(values.size());
    return std::clamp(m, *lo, *hi);
}

double population_std(std::span<const double> values, double mean) {
    if (values.empty()) return 0.0;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size()));
}

AnomalyStats anomaly_stats(const AdvantageReport& report, double std_threshold) {
    AnomalyStats s;
    const std::size_t n = report.advantages.size();
    if (n == 0) return s;
    std::size_t pre_low = 0, post_low = 0, same = 0;
    for (std::size_t g = 0; g < n; ++g) {
        if (report.pre_std[g] < std_threshold) ++pre_low;
        if (report.post_std[g] < std_threshold) ++post_low;
        const auto& a = report.advantages[g];
        const bool all_pos = !a.empty() && std::all_of(a.begin(), a.end(), [](double v) { return v > 0.0; });
        const bool all_neg = !a.empty() && std::all_of(a.begin(), a.end(), [](double v) { return v < 0.0; });
        if (all_pos || all_neg) ++same;
    }
    const double dn = static_cast<double>(n);
    s.amplified_variance_fraction = static_cast<double>(pre_low) / dn - static_cast<double>(post_low) / dn;
    s.same_sign_fraction = static_cast<double>(same) / dn;
    return s;
}

AdvantageReport compute_advantages(std::span<const RewardGroup> groups, const AdvantageConfig& config) {
    config.validate();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].rewards.empty()) throw ConfigError("rewards", "group " + std::to_string(g) + " is empty");
    }

    double batch_mean = 0.0, batch_std = 0.0;
    if (config.mode == Mode::BatchNorm) {
        std::vector<double> all;
        for (const auto& g : groups) all.insert(all.end(), g.rewards.begin(), g.rewards.end());
        batch_mean = pivot_mean(all);
        batch_std = population_std(all, batch_mean);
    }

    AdvantageReport report;
    for (const auto& g : groups) {
        const double mean = pivot_mean(g.rewards);
        const double pre = population_std(g.rewards, mean);
        std::vector<double> norm(g.rewards.size());
        double post = pre;
        switch (config.mode) {
            case Mode::Centering:
                // A pure shift: the std is unchanged by construction.
                for (std::size_t i = 0; i < norm.size(); ++i) norm[i] = g.rewards[i] - mean;
                break;
            case Mode::GroupNorm:
                for (std::size_t i = 0; i < norm.size(); ++i) norm[i] = (g.rewards[i] - mean) / (pre + config.epsilon);
                post = population_std(norm, pivot_mean(norm));
                break;
            case Mode::BatchNorm:
                for (std::size_t i = 0; i < norm.size(); ++i) {
                    norm[i] = (g.rewards[i] - batch_mean) / (batch_std + config.epsilon);
                }
                post = population_std(norm, pivot_mean(norm));
                break;
        }
        const double scale = config.scale(g.kind);
        for (auto& v : norm) v *= scale;
        report.advantages.push_back(std::move(norm));
        report.pre_std.push_back(pre);
        report.post_std.push_back(post);
    }
    const auto stats = anomaly_stats(report, config.std_threshold);
    report.amplified_variance_fraction = stats.amplified_variance_fraction;
    report.same_sign_fraction = stats.same_sign_fraction;
    return report;
}

AnomalyStats anomaly_stats(std::span<const RewardGroup> groups, const AdvantageConfig& config) {
    const auto report = compute_advantages(groups, config);
    return {report.amplified_variance_fraction, report.same_sign_fraction};
}

}  // namespace coaug::advantage
