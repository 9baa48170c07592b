#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tripnet/data.hpp"

namespace tripnet {

/// Binary coalition over m units (trips for event-level, logical features
/// for feature-level).
using Coalition = std::vector<int>;

enum class ExplainLevel { Event, Feature };

ExplainLevel level_from_string(const std::string& s);
std::string to_string(ExplainLevel level);

/// Scores one output dimension of a model on a (perturbed) sample.
using ScoreFn = std::function<double(const SequenceSample&)>;

/// Per-unit attribution of one model score. Efficiency holds by construction:
/// base_score + sum(weights) == model_score.
struct Attribution {
    std::vector<double> weights;
    double base_score = 0.0;
    double model_score = 0.0;
    ExplainLevel level = ExplainLevel::Event;
    int output_index = 0; // 0 = dt, 1 = d
};

/// The logical feature groups for feature-level explanation: column ranges
/// within the 9-wide feature layout.
inline constexpr int kLogicalFeatureCount = 3; // delta_t, distance, weekday
std::string logical_feature_name(int i);

/// Units with z_i = 0 are replaced by the background values (per-feature, in
/// normalized space). Event-level: whole trips; feature-level: feature
/// columns across all valid trips. All-ones returns X unchanged.
SequenceSample perturb(const SequenceSample& X, const Coalition& z,
                       const Eigen::VectorXd& background, ExplainLevel level);

/// Per-feature mean over the valid rows of the training samples
/// (normalized space). The default masking background.
Eigen::VectorXd mean_background(const std::vector<SequenceSample>& train);

/// Shapley kernel weight (m-1) / (C(m,s) s (m-s)) for interior sizes
/// 0 < s < m; the endpoints are handled as equality constraints, not weights.
double shapley_kernel_weight(int m, int s);

/// Number of units the sample exposes at this level.
int unit_count(const SequenceSample& X, ExplainLevel level);

struct TimeShapOptions {
    int max_exact_m = 12;  // enumerate all coalitions up to this size
    int n_samples = 2048;  // sampled coalitions beyond that (paired complements)
    std::uint64_t seed = 0;
};

/// Fits the local linear surrogate by Shapley-kernel-weighted least squares
/// with the two endpoint equality constraints, so efficiency is exact.
/// Exact enumeration below max_exact_m, paired-complement sampling above.
Attribution timeshap(const ScoreFn& score, const SequenceSample& X,
                     const Eigen::VectorXd& background, ExplainLevel level,
                     const TimeShapOptions& opts = {});

/// Classical Shapley values by direct subset enumeration (test oracle;
/// m <= 16 guard).
std::vector<double> brute_force_shapley(const ScoreFn& score, const SequenceSample& X,
                                        const Eigen::VectorXd& background, ExplainLevel level);

} // namespace tripnet
