#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "felan/ad.hpp"
#include "felan/dataset.hpp"
#include "felan/inertia_param.hpp"
#include "felan/io.hpp"
#include "felan/lagrangian.hpp"
#include "felan/net.hpp"
#include "felan/refdyn.hpp"
#include "felan/topology.hpp"

namespace felan {

enum class Method { FFNN, DeLaN, DeLaN_PP, FeLaN_BS, FeLaN, WhiteBoxNS, WhiteBoxPD, WhiteBoxCov };

/// "ffnn", "delan", "delan_pp", "felan_bs", "felan", "wb_ns", "wb_pd", "wb_cov".
std::string method_name(Method m);
/// Accepts the names above (case-insensitive, '-' for '_'). Throws InvalidSpec.
Method parse_method(std::string_view name);
std::vector<Method> all_methods();

bool is_white_box(Method m);
/// FeLaN and FeLaN-BS: H carries the reordered-Cholesky branch sparsity.
bool is_branch_sparse(Method m);

struct ModelOptions {
  std::vector<int> hidden;  // empty: 2x32 for FFNN, 2x16 otherwise
  InertiaShifts shifts;
  double w_U = 1e-3;
  double w_D = 1e-3;
  std::optional<double> prior_mass;  // seeds theta_m = sqrt(prior)
  std::uint64_t seed = 0;
  Vec3 gravity = kGravity;
};

/// One learnable parameterization behind a flat parameter vector.
///
/// Network wiring per method (all joint inputs pass through [cos q; sin q]
/// except where noted):
///   FFNN      one net, standardized raw [Theta, q, nu_dot, nu_ddot] -> tau
///   DeLaN     net_H: q -> packed dense C (H = C C^T);
///             net_P: [r, Theta, q] -> P, r raw, angles through cos/sin
///   DeLaN_PP  net_H as DeLaN; P from m(q), h(q) read off H
///   FeLaN_BS  net_R: q -> L_F, L_FR, L_R; net_k: q_k -> K_k, W_k, L_k;
///             P from m(q), h(q) read off H
///   FeLaN     net_R: q -> h, L_Sigma; net_k as FeLaN_BS; scalar theta_m
///   WhiteBox  10 raw values per body, known kinematics
class MethodModel {
 public:
  MethodModel() = default;

  /// `train` supplies FFNN standardization; `kinematics` is required by the
  /// white-box methods. Throws InvalidSpec.
  static MethodModel create(Method method, const RobotTopology& topology, const ModelOptions& options,
                            const TrajectoryDataset* train = nullptr, const GroundTruthModel* kinematics = nullptr);

  Method method() const { return method_; }
  const RobotTopology& topology() const { return topology_; }
  const ModelOptions& options() const { return options_; }

  int param_count() const;
  VecX params() const;
  void set_params(const VecX& p);

  const std::vector<MLP>& nets() const { return nets_; }
  double theta_m() const { return theta_m_; }

  /// White-box body inertias, base first.
  std::vector<SpatialInertia> white_box_bodies() const;
  /// Sets raw values reproducing `bodies` (PD/Cov need the matching consistency).
  void set_white_box_bodies(const std::vector<SpatialInertia>& bodies);
  const GroundTruthModel& kinematics() const { return kinematics_; }

  struct Prediction {
    TorqueDecomposition torque;  // FFNN fills only `total`
    bool has_inertia = false;
    MatX H;                      // base frame
    double mass = 0.0;           // mass entering P
    double m_hat = 0.0;          // mass on the diagonal of H (FeLaN), else mass
    Vec3 h = Vec3::Zero();
    bool has_shifts = false;     // FeLaN only
    AssemblyDiagnostics diagnostics;
  };

  /// Throws DimensionMismatch, GimbalLock.
  Prediction predict(const GeneralizedState& state) const;

  io::Checkpoint to_checkpoint() const;
  /// Throws ParseError, InvalidSpec.
  static MethodModel from_checkpoint(const io::Checkpoint& ck);

  /// Output slice of one branch network: K_k, W_k (row-major), then the
  /// masked entries of L_k.
  struct BranchLayout {
    int offset = 0;
    int size = 0;
    std::vector<std::pair<int, int>> l_entries;  // local (row, col), row >= col
  };
  const std::vector<BranchLayout>& branch_layouts() const { return branches_; }

  /// FFNN standardization: input mean/std, output mean/std.
  const VecX& input_mean() const { return in_mean_; }
  const VecX& input_std() const { return in_std_; }
  const VecX& output_mean() const { return out_mean_; }
  const VecX& output_std() const { return out_std_; }

 private:
  friend class GradientWorkspace;

  Method method_ = Method::FeLaN;
  RobotTopology topology_;
  ModelOptions options_;
  std::vector<MLP> nets_;
  std::vector<BranchLayout> branches_;
  double theta_m_ = 1.0;
  std::vector<double> white_;
  GroundTruthModel kinematics_;
  VecX in_mean_, in_std_, out_mean_, out_std_;
};

struct SampleTerms {
  double residual = 0.0;  // ||tau_hat - tau||^2_W
  double aux = 0.0;       // w_U (m_hat - m)^2 + w_D softplus(-mu_D)^2
  double beta = 0.0;
  double m_hat = 0.0;
};

/// Per-thread scratch for per-sample gradients. Network gradients accumulate
/// here across samples and are flushed into a flat vector.
class GradientWorkspace {
 public:
  explicit GradientWorkspace(const MethodModel& model);

  /// Adds d/dparams of scale * (residual + aux) for one sample; returns the
  /// unscaled terms. `weights` are the per-coordinate W_tau diagonal.
  SampleTerms accumulate(const MethodModel& model, const GeneralizedState& state, const VecX& tau,
                         const VecX& weights, double scale);

  /// grad += accumulated; then resets the accumulators.
  void flush(VecX& grad);

  long nondifferentiable() const { return eig_.nondifferentiable; }

 private:
  ad::JetTape tape_;
  std::vector<MlpCache> caches_;
  std::vector<MLP> net_grads_;
  double theta_m_grad_ = 0.0;
  std::vector<double> white_grad_;
  EigenDiagnostics eig_;
};

}  // namespace felan
