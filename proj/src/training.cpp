#include "felan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <random>

#include "felan/error.hpp"

namespace felan {

namespace {

constexpr int kChunk = 32;
constexpr double kDegenerate = 1e-12;

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw Error(ErrorCode::NumericalFailure, what);
}

std::vector<int> all_rows(int n) {
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

TorqueWeights torque_weights_from_variance(const VecX& variance, bool strict) {
  TorqueWeights w;
  w.variance = variance;
  w.weight = VecX::Zero(variance.size());
  for (int c = 0; c < variance.size(); ++c) {
    if (!(variance[c] >= kDegenerate)) {
      require(!strict, ErrorCode::DegenerateVariance,
              "torque coordinate " + std::to_string(c) + " has variance below 1e-12");
      w.excluded.push_back(c);
    } else {
      w.weight[c] = 1.0 / variance[c];
    }
  }
  if (w.active() == 0 && variance.size() > 0) {
    std::clog << "warning: every torque coordinate is constant; using unit weights\n";
    w.variance = VecX::Ones(variance.size());
    w.weight = VecX::Ones(variance.size());
    w.excluded.clear();
  } else if (!w.excluded.empty()) {
    std::clog << "warning: " << w.excluded.size() << " constant torque coordinate(s) excluded from loss and NMSE\n";
  }
  return w;
}

TorqueWeights torque_weights(const MatX& tau, bool strict) {
  require(tau.rows() > 0, ErrorCode::DimensionMismatch, "no torque samples");
  const VecX mean = tau.colwise().mean().transpose();
  const VecX var = (tau.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  return torque_weights_from_variance(var, strict);
}

VecX nmse_per_coordinate(const MatX& pred, const MatX& target, const TorqueWeights& w) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols() && pred.cols() == w.weight.size(),
          ErrorCode::DimensionMismatch, "prediction, target and weight shapes differ");
  require(pred.rows() > 0, ErrorCode::DimensionMismatch, "no samples");
  const VecX mse = (pred - target).array().square().colwise().mean().transpose();
  return mse.cwiseProduct(w.weight);
}

double nmse(const MatX& pred, const MatX& target, const TorqueWeights& w) {
  return nmse_per_coordinate(pred, target, w).sum() / w.active();
}

std::vector<double> rnmse(const std::vector<double>& v) {
  require(!v.empty(), ErrorCode::AllZero, "no NMSE values");
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());
  for (double x : v) require(x >= 0.0, ErrorCode::InvalidSpec, "NMSE values must be nonnegative");
  require(hi > 0.0, ErrorCode::AllZero, "all NMSE values are zero");
  std::vector<double> out;
  for (double x : v) out.push_back((x - lo) / hi);
  return out;
}

void TrainConfig::validate() const {
  require(batch_size >= 1, ErrorCode::InvalidSpec, "batch size must be positive");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorCode::InvalidSpec, "bad learning rate");
  require(weight_decay >= 0.0, ErrorCode::InvalidSpec, "weight decay must be nonnegative");
  require(grad_clip_norm > 0.0, ErrorCode::InvalidSpec, "clip norm must be positive");
  require(shifts.eps_L > 0.0 && shifts.eps_m > 0.0 && shifts.eps_D > 0.0, ErrorCode::InvalidSpec,
          "shifts must be positive");
  require(w_U >= 0.0 && w_D >= 0.0, ErrorCode::InvalidSpec, "auxiliary weights must be nonnegative");
  require(epochs >= 1, ErrorCode::InvalidSpec, "need at least one epoch");
  require(split_fraction > 0.0 && split_fraction < 1.0, ErrorCode::InvalidSpec, "split must lie in (0, 1)");
  require(eval_every >= 1, ErrorCode::InvalidSpec, "eval interval must be positive");
}

ModelOptions TrainConfig::model_options() const {
  ModelOptions o;
  o.hidden = hidden;
  o.shifts = shifts;
  o.w_U = w_U;
  o.w_D = w_D;
  o.prior_mass = prior_mass;
  o.seed = seed;
  return o;
}

BatchGradient batch_gradient(const MethodModel& model, const TrajectoryDataset& data, std::span<const int> rows,
                             const TorqueWeights& w, bool parallel) {
  require(data.n_q == model.topology().n_q(), ErrorCode::TopologyMismatch, "dataset joint count differs");
  const int count = static_cast<int>(rows.size());
  require(count > 0, ErrorCode::DimensionMismatch, "empty batch");
  const int chunks = (count + kChunk - 1) / kChunk;
  const int p = model.param_count();
  const double scale = 1.0 / count;
  std::vector<VecX> partial(chunks);
  std::vector<SampleTerms> terms(count);
  std::vector<long> nondiff(chunks, 0);
  std::vector<std::string> failures(chunks);

  auto run_chunk = [&](GradientWorkspace& ws, int c) {
    const long before = ws.nondifferentiable();
    try {
      for (int i = c * kChunk; i < std::min(count, (c + 1) * kChunk); ++i) {
        const int r = rows[i];
        terms[i] = ws.accumulate(model, data.state(r), data.tau.row(r).transpose(), w.weight, scale);
      }
    } catch (const Error& e) {
      failures[c] = e.what();
    }
    partial[c] = VecX::Zero(p);
    ws.flush(partial[c]);
    nondiff[c] = ws.nondifferentiable() - before;
  };

  if (parallel) {
#pragma omp parallel
    {
      GradientWorkspace ws(model);
#pragma omp for schedule(dynamic)
      for (int c = 0; c < chunks; ++c) run_chunk(ws, c);
    }
  } else {
    GradientWorkspace ws(model);
    for (int c = 0; c < chunks; ++c) run_chunk(ws, c);
  }
  for (const std::string& f : failures)
    if (!f.empty()) throw Error(ErrorCode::NumericalFailure, "per-sample gradient failed: " + f);

  BatchGradient out;
  out.grad = VecX::Zero(p);
  for (int c = 0; c < chunks; ++c) {
    out.grad += partial[c];
    out.nondifferentiable += nondiff[c];
  }
  for (const SampleTerms& t : terms) {
    out.loss.residual += t.residual;
    out.loss.aux += t.aux;
    out.beta_sum += t.beta;
    out.m_hat_sum += t.m_hat;
  }
  out.loss.residual *= scale;
  out.loss.aux *= scale;
  out.loss.total = out.loss.residual + out.loss.aux;
  return out;
}

LossValue loss(const MethodModel& model, const TrajectoryDataset& data, const TorqueWeights& w,
               std::span<const int> rows) {
  std::vector<int> all;
  if (rows.empty()) {
    all = all_rows(data.size());
    rows = all;
  }
  return batch_gradient(model, data, rows, w, true).loss;
}

double clip_gradient(VecX& g, double max_norm) {
  const double norm = g.norm();
  if (norm > max_norm) g *= max_norm / norm;
  return norm;
}

void adamw_step(VecX& params, const VecX& grad, AdamState& s, double lr, double weight_decay) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (s.m.size() != params.size()) {
    s.m = VecX::Zero(params.size());
    s.v = VecX::Zero(params.size());
    s.step = 0;
  }
  ++s.step;
  s.m = b1 * s.m + (1.0 - b1) * grad;
  s.v = b2 * s.v + (1.0 - b2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
  const VecX update = (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
  params -= lr * (update + weight_decay * params);
}

void sgd_step(VecX& params, const VecX& grad, double lr, double weight_decay) {
  params -= lr * (grad + weight_decay * params);
}

std::pair<TrajectoryDataset, TrajectoryDataset> chronological_split(const TrajectoryDataset& data, double fraction) {
  require(fraction > 0.0 && fraction < 1.0, ErrorCode::InvalidSpec, "split must lie in (0, 1)");
  const int cut = static_cast<int>(std::floor(fraction * data.size()));
  require(cut >= 1 && cut < data.size(), ErrorCode::InvalidSpec, "split leaves an empty train or test set");
  return {data.slice(0, cut), data.slice(cut, data.size())};
}

Evaluation evaluate(const MethodModel& model, const TrajectoryDataset& data, const TorqueWeights& w,
                    bool keep_decomposition) {
  require(data.n_q == model.topology().n_q(), ErrorCode::TopologyMismatch,
          "dataset joint count does not match the model topology");
  const int n = data.size();
  const int dim = data.dim();
  Evaluation ev;
  ev.total = MatX::Zero(n, dim);
  const bool decompose = keep_decomposition && model.method() != Method::FFNN;
  if (decompose) ev.inertial = ev.coriolis = ev.gravity = MatX::Zero(n, dim);
  std::vector<std::string> failures(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    try {
      const auto p = model.predict(data.state(i));
      ev.total.row(i) = p.torque.total.transpose();
      if (decompose) {
        ev.inertial.row(i) = p.torque.inertial.transpose();
        ev.coriolis.row(i) = p.torque.coriolis.transpose();
        ev.gravity.row(i) = p.torque.gravity.transpose();
      }
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  }
  for (const std::string& f : failures)
    if (!f.empty()) throw Error(ErrorCode::NumericalFailure, "prediction failed: " + f);
  ev.coordinate_nmse = nmse_per_coordinate(ev.total, data.tau, w);
  ev.nmse = ev.coordinate_nmse.sum() / w.active();
  const MatX r = ev.total - data.tau;
  const VecX mean = r.colwise().mean().transpose();
  ev.residual_variance = (r.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  if (!keep_decomposition) ev.total.resize(0, 0);
  return ev;
}

namespace {

double evaluate_nmse(const MethodModel& model, const TrajectoryDataset& data, const TorqueWeights& w) {
  return evaluate(model, data, w, false).nmse;
}

TrainResult run(MethodModel model, const TrajectoryDataset& train_set, const TrajectoryDataset& test_set,
                const TrainConfig& cfg, const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  TrainResult res;
  res.weights = torque_weights(train_set.tau, false);
  const int n = train_set.size();
  const int batch = std::min(cfg.batch_size, n);
  std::mt19937_64 rng(cfg.seed ^ 0xD1B54A32D192ED03ull);
  std::vector<int> order = all_rows(n);
  VecX params = model.params();
  AdamState adam;
  res.best = model;
  res.best_test_nmse = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, beta_sum = 0.0, m_hat_sum = 0.0;
    long nondiff = 0;
    for (int begin = 0; begin < n; begin += batch) {
      const int end = std::min(n, begin + batch);
      const std::span<const int> rows(order.data() + begin, end - begin);
      BatchGradient g = batch_gradient(model, train_set, rows, res.weights, cfg.parallel);
      check_finite(g.loss.total, "non-finite loss at epoch " + std::to_string(epoch));
      const double norm = clip_gradient(g.grad, cfg.grad_clip_norm);
      check_finite(norm, "non-finite gradient at epoch " + std::to_string(epoch));
      if (cfg.optimizer == Optimizer::AdamW) {
        adamw_step(params, g.grad, adam, cfg.learning_rate, cfg.weight_decay);
      } else {
        sgd_step(params, g.grad, cfg.learning_rate, cfg.weight_decay);
      }
      for (int i = 0; i < params.size(); ++i)
        check_finite(params[i], "non-finite parameters at epoch " + std::to_string(epoch));
      model.set_params(params);
      loss_sum += g.loss.total * (end - begin);
      beta_sum += g.beta_sum;
      m_hat_sum += g.m_hat_sum;
      nondiff += g.nondifferentiable;
    }
    const bool last = epoch == cfg.epochs;
    if (epoch % cfg.eval_every != 0 && !last) continue;

    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / n;
    m.beta_mean = beta_sum / n;
    m.m_hat = m_hat_sum / n;
    m.nondifferentiable = nondiff;
    m.train_nmse = evaluate_nmse(model, train_set, res.weights);
    m.test_nmse = evaluate_nmse(model, test_set, res.weights);
    check_finite(m.train_nmse, "non-finite training NMSE at epoch " + std::to_string(epoch));
    res.history.push_back(m);
    if (on_epoch) on_epoch(m);
    if (m.test_nmse < res.best_test_nmse) {
      res.best_test_nmse = m.test_nmse;
      res.best_epoch = epoch;
      res.best = model;
    }
    if (cfg.target_test_nmse > 0.0 && m.test_nmse <= cfg.target_test_nmse) {
      res.reached_target = true;
      break;
    }
  }
  res.last = std::move(model);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace

TrainResult train(Method method, const TrajectoryDataset& data, const TrainConfig& cfg,
                  const GroundTruthModel* kinematics, const EpochCallback& on_epoch) {
  cfg.validate();
  auto [train_set, test_set] = chronological_split(data, cfg.split_fraction);
  RobotTopology topo = kinematics != nullptr ? kinematics->topology() : RobotTopology();
  if (kinematics == nullptr) {
    require(data.meta.contains("topology"), ErrorCode::InvalidSpec,
            "dataset metadata carries no topology; supply one");
    topo = RobotTopology::from_json(data.meta.at("topology"));
  }
  require(data.n_q == topo.n_q(), ErrorCode::TopologyMismatch, "dataset joint count differs from topology");
  if (data.meta.contains("topology_hash"))
    require(data.meta.at("topology_hash").get<std::string>() == io::hex64(topo.hash()), ErrorCode::TopologyMismatch,
            "dataset topology hash differs");
  ModelOptions opts = cfg.model_options();
  if (data.meta.contains("gravity")) {
    const auto g = data.meta.at("gravity").get<std::vector<double>>();
    require(g.size() == 3, ErrorCode::ParseError, "dataset gravity needs 3 entries");
    opts.gravity = Vec3(g[0], g[1], g[2]);
  }
  MethodModel model = MethodModel::create(method, topo, opts, &train_set, kinematics);
  return run(std::move(model), train_set, test_set, cfg, on_epoch);
}

TrainResult train(MethodModel model, const TrajectoryDataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  require(data.n_q == model.topology().n_q(), ErrorCode::TopologyMismatch, "dataset joint count differs");
  auto [train_set, test_set] = chronological_split(data, cfg.split_fraction);
  return run(std::move(model), train_set, test_set, cfg, on_epoch);
}

std::string decomposition_csv(const Evaluation& ev, const TrajectoryDataset& data) {
  const auto cols = dataset_columns(data.n_q);
  const int dim = data.dim();
  require(ev.total.rows() == data.size(), ErrorCode::DimensionMismatch, "evaluation kept no decomposition");
  const bool parts = ev.inertial.rows() == data.size();
  std::string out = "row";
  for (int c = 0; c < dim; ++c) {
    const std::string& name = cols[c];
    out += "," + name + "_target," + name + "_total";
    if (parts) out += "," + name + "_inertial," + name + "_coriolis," + name + "_gravity";
  }
  out += '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v);
    out += buf;
  };
  for (int i = 0; i < data.size(); ++i) {
    out += std::to_string(i);
    for (int c = 0; c < dim; ++c) {
      put(data.tau(i, c));
      put(ev.total(i, c));
      if (parts) {
        put(ev.inertial(i, c));
        put(ev.coriolis(i, c));
        put(ev.gravity(i, c));
      }
    }
    out += '\n';
  }
  return out;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::string out = "epoch,train_nmse,test_nmse,loss,beta_mean,m_hat\n";
  char buf[200];
  for (const EpochMetrics& m : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.train_nmse, m.test_nmse, m.loss,
                  m.beta_mean, m.m_hat);
    out += buf;
  }
  return out;
}

io::Checkpoint training_checkpoint(const MethodModel& model, const TorqueWeights& w, const nlohmann::json& summary) {
  io::Checkpoint ck = model.to_checkpoint();
  ck.arrays["tau_variance"] = std::vector<double>(w.variance.data(), w.variance.data() + w.variance.size());
  ck.manifest["training"] = summary;
  return ck;
}

std::optional<TorqueWeights> checkpoint_weights(const io::Checkpoint& ck) {
  const auto it = ck.arrays.find("tau_variance");
  if (it == ck.arrays.end()) return std::nullopt;
  return torque_weights_from_variance(
      Eigen::Map<const VecX>(it->second.data(), static_cast<Eigen::Index>(it->second.size())), false);
}

}  // namespace felan
