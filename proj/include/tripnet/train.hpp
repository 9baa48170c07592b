#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tripnet/data.hpp"
#include "tripnet/nn.hpp"
#include "tripnet/tensor.hpp"

namespace tripnet {

enum class LossKind { MAE, MSE, LHC, HL, MSLE, PS };
enum class OptimizerKind { SGD, Adam, Adagrad, RMSProp };

LossKind loss_from_string(const std::string& s);
OptimizerKind optimizer_from_string(const std::string& s);
std::string to_string(LossKind k);
std::string to_string(OptimizerKind k);

/// Scalar loss of a prediction against a target of the same shape.
/// MAE/MSE/log-cosh/Huber(delta=1)/MSLE/Poisson; MSLE needs pred,target > -1,
/// Poisson needs pred > 0.
Tensor loss(const Tensor& pred, const Tensor& target, LossKind kind);

/// First-order update with per-parameter state. Adam: beta1=0.9, beta2=0.999,
/// eps=1e-8, bias-corrected; RMSProp rho=0.9; Adagrad standard.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate);

    /// Applies one step; `grads` aligned with `params`. NaN gradients abort.
    void step(std::vector<Tensor>& params, const std::vector<Eigen::MatrixXd>& grads);

    OptimizerKind kind() const { return kind_; }

private:
    OptimizerKind kind_;
    double lr_;
    std::int64_t t_ = 0;
    std::vector<Eigen::MatrixXd> m_, v_;
};

/// Relative-L2 error: 100 * sqrt(sum |x - xhat|^2 / sum |x|^2), on
/// denormalized values.
double prediction_error(const std::vector<double>& preds, const std::vector<double>& labels);

struct TrainConfig {
    LossKind loss_kind = LossKind::MAE;
    OptimizerKind optimizer_kind = OptimizerKind::Adam;
    double learning_rate = 0.01;
    int batch_size = 128;
    int epochs = 60;
    int patience = 50; // early-stop on validation error
    std::uint64_t seed = 0;
    bool record_history = true;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double train_error = 0.0;
    double test_error = 0.0;
};

struct EvalReport {
    double prediction_error_pct = 0.0;
    double dt_error_pct = 0.0;
    double d_error_pct = 0.0;
    std::size_t sample_count = 0;
    std::vector<EpochStats> history;
};

struct TrainResult {
    ModelParams params;
    EvalReport report;
};

/// Denormalized per-sample predictions for evaluation.
std::vector<Eigen::Vector2d> predict_all(const ModelConfig& config, const ModelParams& params,
                                         const std::vector<SequenceSample>& samples);

/// Relative-L2 error of a model over samples, both targets combined, denormalized.
EvalReport evaluate(const ModelConfig& config, const ModelParams& params,
                    const std::vector<SequenceSample>& samples);

/// Persistence baseline: predict the previous trip's (dt, d).
double persistence_error(const std::vector<SequenceSample>& samples, const NormStats& stats);

/// Mini-batch training on a fixed 70/15/15 split; returns the
/// best-validation checkpoint with train/test curves per epoch.
TrainResult train_fixed_split(const ModelConfig& mcfg, const Dataset& data,
                              const TrainConfig& tcfg);

/// The cross-validation transfer regime: `rounds` successive trainings, each
/// on a fresh seeded 75%/15% resample of the pool, weights carried forward;
/// final evaluation on the held-out test set (must be disjoint from pool).
TrainResult cross_validate_transfer(const ModelConfig& mcfg,
                                    const std::vector<SequenceSample>& pool,
                                    const std::vector<SequenceSample>& test_set,
                                    const NormStats& stats, const TrainConfig& tcfg,
                                    int rounds = 10);

// -- grid search --------------------------------------------------------------

struct GridSpec {
    std::vector<int> window_days{8};
    std::vector<std::vector<int>> lstm_layer_sizes{{40, 60, 40}};
    std::vector<int> attention_sizes{64};
    std::vector<int> batch_sizes{128};
    std::vector<double> learning_rates{0.01};
    std::vector<OptimizerKind> optimizers{OptimizerKind::Adam};
    std::vector<LossKind> losses{LossKind::MAE};

    std::size_t point_count() const;
};

struct GridPoint {
    int window_days;
    std::vector<int> lstm_layer_sizes;
    int attention_size;
    int batch_size;
    double learning_rate;
    OptimizerKind optimizer;
    LossKind loss;

    std::string describe() const;
};

struct GridTrial {
    GridPoint point;
    double val_error = 0.0;
};

struct GridResult {
    std::vector<GridTrial> trials; // sorted, best first
    GridPoint best;
    /// Error spread (max mean - min mean, % of overall mean) per
    /// hyperparameter, in GridSpec field order.
    std::vector<std::pair<std::string, double>> error_variation;
};

/// Budget-capped sweep. Tuning runs on a seeded 25% subsample of the
/// training split; each trial is isolated and seeded from (seed, index).
GridResult grid_search(const GridSpec& grid, Variant variant,
                       const std::vector<TripRecord>& trips, const PipelineConfig& pcfg,
                       const TrainConfig& base, std::size_t budget, std::uint64_t seed);

} // namespace tripnet
