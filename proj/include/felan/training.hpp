#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "felan/dataset.hpp"
#include "felan/methods.hpp"

namespace felan {

/// Diagonal W_tau: inverse per-coordinate variance of the training torques.
struct TorqueWeights {
  VecX variance;
  VecX weight;              // 1 / variance, 0 on excluded channels
  std::vector<int> excluded;  // variance < 1e-12

  int active() const { return static_cast<int>(variance.size() - excluded.size()); }
};

/// strict: throw DegenerateVariance on any channel below 1e-12; otherwise
/// such channels are excluded (all-degenerate data falls back to unit weights).
TorqueWeights torque_weights(const MatX& tau_train, bool strict = false);
TorqueWeights torque_weights_from_variance(const VecX& variance, bool strict = false);

/// Mean over samples and active coordinates of residual^2 / variance.
/// Throws DimensionMismatch.
double nmse(const MatX& predictions, const MatX& targets, const TorqueWeights& w);
/// Per active coordinate NMSE (excluded channels report 0).
VecX nmse_per_coordinate(const MatX& predictions, const MatX& targets, const TorqueWeights& w);

/// (NMSE_i - min) / max. Throws AllZero when max is 0 or the list is empty.
std::vector<double> rnmse(const std::vector<double>& nmse_values);

enum class Optimizer { AdamW, SGD };

struct TrainConfig {
  int batch_size = 1024;
  double learning_rate = 5e-4;
  double weight_decay = 1e-5;
  double grad_clip_norm = 1000.0;
  InertiaShifts shifts;
  double w_U = 1e-3;
  double w_D = 1e-3;
  int epochs = 100;
  std::uint64_t seed = 0;
  double split_fraction = 0.9;
  Optimizer optimizer = Optimizer::AdamW;
  std::vector<int> hidden;             // empty: method default
  std::optional<double> prior_mass;
  int eval_every = 1;                  // full-split NMSE every k epochs and at the end
  double target_test_nmse = 0.0;       // stop once reached; 0 disables
  bool parallel = true;

  /// Throws InvalidSpec.
  void validate() const;
  ModelOptions model_options() const;
};

struct LossValue {
  double total = 0.0;
  double residual = 0.0;  // batch mean of ||r||^2_W
  double aux = 0.0;       // batch mean of the auxiliary terms
};

/// Loss over the listed rows (all rows when empty).
LossValue loss(const MethodModel& model, const TrajectoryDataset& data, const TorqueWeights& w,
               std::span<const int> rows = {});

struct BatchGradient {
  VecX grad;
  LossValue loss;
  double beta_sum = 0.0;
  double m_hat_sum = 0.0;
  long nondifferentiable = 0;
};

/// Samples are processed in fixed chunks whose partial sums are added in
/// chunk order, so the result is bitwise independent of the thread count.
BatchGradient batch_gradient(const MethodModel& model, const TrajectoryDataset& data, std::span<const int> rows,
                             const TorqueWeights& w, bool parallel);

/// Scales g to norm max_norm when it exceeds it; returns the pre-clip norm.
double clip_gradient(VecX& g, double max_norm);

struct AdamState {
  VecX m;
  VecX v;
  long step = 0;
};

/// Adam moments with weight decay applied to the parameters directly.
void adamw_step(VecX& params, const VecX& grad, AdamState& state, double lr, double weight_decay);
void sgd_step(VecX& params, const VecX& grad, double lr, double weight_decay);

/// First `fraction` of the rows train, the rest test. Throws InvalidSpec.
std::pair<TrajectoryDataset, TrajectoryDataset> chronological_split(const TrajectoryDataset& data, double fraction);

struct EpochMetrics {
  int epoch = 0;
  double train_nmse = 0.0;
  double test_nmse = 0.0;
  double loss = 0.0;
  double beta_mean = 0.0;
  double m_hat = 0.0;
  long nondifferentiable = 0;
};

struct TrainResult {
  MethodModel best;  // lowest test NMSE seen
  MethodModel last;
  std::vector<EpochMetrics> history;
  TorqueWeights weights;
  int best_epoch = 0;
  double best_test_nmse = 0.0;
  bool reached_target = false;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Throws InvalidSpec, NumericalFailure (non-finite loss or gradient).
TrainResult train(Method method, const TrajectoryDataset& data, const TrainConfig& config,
                  const GroundTruthModel* kinematics = nullptr, const EpochCallback& on_epoch = {});
TrainResult train(MethodModel model, const TrajectoryDataset& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct Evaluation {
  double nmse = 0.0;
  VecX coordinate_nmse;
  VecX residual_variance;  // per coordinate, about the residual mean
  MatX total, inertial, coriolis, gravity;  // filled when requested
};

/// Throws TopologyMismatch.
Evaluation evaluate(const MethodModel& model, const TrajectoryDataset& data, const TorqueWeights& w,
                    bool keep_decomposition = false);

/// CSV: row, then per coordinate target/total/inertial/coriolis/gravity.
std::string decomposition_csv(const Evaluation& eval, const TrajectoryDataset& data);

std::string metrics_csv(const std::vector<EpochMetrics>& history);

/// Model checkpoint plus the training torque variance and run summary.
io::Checkpoint training_checkpoint(const MethodModel& model, const TorqueWeights& w, const nlohmann::json& summary);
/// Torque weights stored in a training checkpoint, if any.
std::optional<TorqueWeights> checkpoint_weights(const io::Checkpoint& ck);

}  // namespace felan
