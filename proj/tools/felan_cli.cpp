// felan: data generation, training, evaluation and inspection.
//
// Exit codes: 0 ok, 1 internal error, 2 usage/configuration, 3 data,
// 4 numerical failure.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "felan/dataset.hpp"
#include "felan/error.hpp"
#include "felan/io.hpp"
#include "felan/methods.hpp"
#include "felan/refdyn.hpp"
#include "felan/spatial.hpp"
#include "felan/topology.hpp"
#include "felan/training.hpp"

namespace fs = std::filesystem;
using namespace felan;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kNumerical = 4 };

struct CliError {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) { throw CliError{code, message}; }

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidSpec:
    case ErrorCode::InvalidTopology:
    case ErrorCode::IoError:
      return kConfig;
    case ErrorCode::NumericalFailure:
    case ErrorCode::NotPSD:
    case ErrorCode::NotSPD:
      return kNumerical;
    default:
      return kData;
  }
}

// Runs f; library errors become CliError with the given code.
template <class F>
auto with_code(int code, const std::string& what, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    fail(code, what + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    fail(code, what + ": " + e.what());
  }
}

void require_file(const std::string& path, int code, const std::string& what) {
  if (!fs::exists(path)) fail(code, what + " not found: " + path);
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      fail(kConfig, "not an integer list: " + text);
    }
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      fail(kConfig, "not a number list: " + text);
    }
  }
  return out;
}

RobotTopology load_topology(const std::string& topology_file, const std::string& chains) {
  if (!chains.empty())
    return with_code(kConfig, "topology", [&] { return RobotTopology::chains(parse_int_list(chains)); });
  if (topology_file.empty()) fail(kConfig, "give --topology or --chains");
  require_file(topology_file, kConfig, "topology file");
  // Accepts topology JSON, model JSON, or a sidecar with a "topology" entry.
  return with_code(kConfig, "topology file", [&] {
    const nlohmann::json j = io::read_json(topology_file);
    return RobotTopology::from_json(j.contains("topology") ? j.at("topology") : j);
  });
}

GroundTruthModel load_model(const std::string& path) {
  require_file(path, kConfig, "model file");
  return with_code(kConfig, "model file", [&] { return GroundTruthModel::from_json(io::read_json(path)); });
}

TrajectoryDataset load_data(const std::string& path) {
  require_file(path, kData, "dataset");
  return with_code(kData, "dataset", [&] { return load_dataset(path); });
}

io::Checkpoint load_ck(const std::string& path) {
  require_file(path, kConfig, "checkpoint");
  return with_code(kConfig, "checkpoint", [&] { return io::load_checkpoint(path); });
}

void write_text(const fs::path& path, const std::string& text) {
  with_code(kConfig, "writing " + path.string(), [&] {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    io::write_file_atomic(path, text);
    return 0;
  });
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

void check_dataset_topology(const TrajectoryDataset& data, const RobotTopology& topo) {
  if (data.n_q != topo.n_q()) fail(kData, "dataset joint count does not match the topology");
  if (data.meta.contains("topology_hash") &&
      data.meta.at("topology_hash").get<std::string>() != io::hex64(topo.hash()))
    fail(kData, "dataset topology hash does not match");
}

// ---------------------------------------------------------------------------

struct GenModelArgs {
  std::string topology, chains, out;
};

int cmd_gen_model(const GenModelArgs& a, std::uint64_t seed) {
  const RobotTopology topo = load_topology(a.topology, a.chains);
  const GroundTruthModel model = random_model(topo, seed);
  write_text(a.out, model.to_json().dump(2) + "\n");
  std::cout << "model: " << model.n_bodies() << " bodies, total mass " << fmt("%.6g", model.total_mass())
            << " kg, hash " << io::hex64(model.hash()) << "\n";
  return kOk;
}

struct GenDataArgs {
  std::string model, out;
  ExcitationSpec spec;
};

int cmd_gen_data(GenDataArgs a, std::uint64_t seed) {
  if (!(a.spec.rate > 0.0)) fail(kConfig, "--rate must be positive");
  if (!(a.spec.duration > 0.0)) fail(kConfig, "--duration must be positive");
  const GroundTruthModel model = load_model(a.model);
  a.spec.seed = seed;
  const TrajectoryDataset data = with_code(kConfig, "excitation", [&] { return generate_excitation(model, a.spec); });
  with_code(kConfig, "writing dataset", [&] {
    save_dataset(a.out, data);
    return 0;
  });
  std::cout << "samples: " << data.size() << "\n";
  const auto names = dataset_columns(data.n_q);
  const VecX mean = data.tau.colwise().mean().transpose();
  const VecX sd = (data.tau.rowwise() - mean.transpose()).array().square().colwise().mean().sqrt().transpose();
  std::printf("%-12s %14s %14s\n", "coordinate", "mean", "std");
  for (int c = 0; c < data.dim(); ++c)
    std::printf("%-12s %14.6g %14.6g\n", names[3 * data.dim() + c].c_str(), mean[c], sd[c]);
  return kOk;
}

struct TrainArgs {
  std::string data, model, topology, method = "felan", out = "run", hidden, optimizer = "adamw";
  TrainConfig cfg;
  double prior_mass = 0.0;
  bool serial = false;
  bool quiet = false;
};

int cmd_train(TrainArgs a, std::uint64_t seed) {
  const Method method = with_code(kConfig, "method", [&] { return parse_method(a.method); });
  a.cfg.seed = seed;
  if (!a.hidden.empty()) a.cfg.hidden = parse_int_list(a.hidden);
  if (a.prior_mass > 0.0) a.cfg.prior_mass = a.prior_mass;
  if (a.optimizer == "sgd") {
    a.cfg.optimizer = Optimizer::SGD;
  } else if (a.optimizer != "adamw") {
    fail(kConfig, "--optimizer must be adamw or sgd");
  }
  a.cfg.parallel = !a.serial;
  with_code(kConfig, "config", [&] {
    a.cfg.validate();
    return 0;
  });

  std::optional<GroundTruthModel> kin;
  if (!a.model.empty()) kin = load_model(a.model);
  if (is_white_box(method) && !kin) fail(kConfig, "white-box methods need --model for the kinematics");
  TrajectoryDataset data = load_data(a.data);
  if (!a.topology.empty() || kin) {
    const RobotTopology topo = kin ? kin->topology() : load_topology(a.topology, "");
    check_dataset_topology(data, topo);
    data.meta["topology"] = topo.to_json();
  }
  if (!data.meta.contains("topology")) fail(kConfig, "dataset has no topology sidecar; give --topology");

  const fs::path out(a.out);
  std::vector<EpochMetrics> rows;
  const auto started = std::chrono::system_clock::now();
  TrainResult res;
  try {
    res = train(method, data, a.cfg, kin ? &*kin : nullptr, [&](const EpochMetrics& m) {
      if (!a.quiet)
        std::printf("epoch %5d  train %.6g  test %.6g  loss %.6g  beta %.4g  m_hat %.6g\n", m.epoch, m.train_nmse,
                    m.test_nmse, m.loss, m.beta_mean, m.m_hat);
      std::fflush(stdout);
    });
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NumericalFailure) fail(kNumerical, std::string("training diverged: ") + e.what());
    fail(exit_code_for(e.code()), e.what());
  }

  nlohmann::json summary;
  summary["method"] = method_name(method);
  summary["epochs_run"] = res.history.empty() ? 0 : res.history.back().epoch;
  summary["best_epoch"] = res.best_epoch;
  summary["best_test_nmse"] = res.best_test_nmse;
  summary["final_train_nmse"] = res.history.back().train_nmse;
  summary["final_test_nmse"] = res.history.back().test_nmse;
  summary["reached_target"] = res.reached_target;
  summary["param_count"] = res.last.param_count();
  summary["seed"] = seed;
  summary["dataset_rows"] = data.size();
  summary["split_fraction"] = a.cfg.split_fraction;
  summary["excluded_coordinates"] = res.weights.excluded;
  nlohmann::json ck_summary = summary;

  with_code(kConfig, "writing checkpoint", [&] {
    fs::create_directories(out);
    io::save_checkpoint(out / "checkpoint.felan", training_checkpoint(res.best, res.weights, ck_summary));
    io::save_checkpoint(out / "last.felan", training_checkpoint(res.last, res.weights, ck_summary));
    return 0;
  });
  write_text(out / "metrics.csv", metrics_csv(res.history));
  // Wall-clock fields live only in the summary sidecar.
  summary["seconds"] = res.seconds;
  summary["finished_at"] = std::chrono::duration_cast<std::chrono::seconds>(
                               std::chrono::system_clock::now().time_since_epoch()).count();
  summary["started_at"] = std::chrono::duration_cast<std::chrono::seconds>(started.time_since_epoch()).count();
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "best epoch " << res.best_epoch << ", test NMSE " << fmt("%.6g", res.best_test_nmse) << "\n";
  return kOk;
}

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::string data, split = "all", decompose;
  double split_fraction = 0.9;
};

int cmd_eval(const EvalArgs& a) {
  if (a.checkpoints.empty()) fail(kConfig, "give --checkpoint or --methods");
  std::vector<io::Checkpoint> cks;
  for (const std::string& p : a.checkpoints) cks.push_back(load_ck(p));
  const TrajectoryDataset all = load_data(a.data);
  TrajectoryDataset part = all;
  if (a.split != "all") {
    auto [tr, te] = with_code(kConfig, "split", [&] { return chronological_split(all, a.split_fraction); });
    if (a.split == "train") {
      part = tr;
    } else if (a.split == "test") {
      part = te;
    } else {
      fail(kConfig, "--split must be all, train or test");
    }
  }

  std::vector<double> values;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < cks.size(); ++i) {
    const MethodModel model = with_code(kConfig, "checkpoint", [&] { return MethodModel::from_checkpoint(cks[i]); });
    if (cks[i].manifest.contains("topology_hash") && all.meta.contains("topology_hash") &&
        cks[i].manifest.at("topology_hash") != all.meta.at("topology_hash"))
      fail(kData, "checkpoint and dataset topology hashes differ");
    check_dataset_topology(all, model.topology());
    std::optional<TorqueWeights> w = checkpoint_weights(cks[i]);
    if (!w) {
      const auto [tr, te] = chronological_split(all, a.split_fraction);
      w = torque_weights(tr.tau);
    }
    const bool keep = !a.decompose.empty() && i == 0;
    const Evaluation ev = with_code(kData, "evaluation", [&] { return evaluate(model, part, *w, keep); });
    if (keep) write_text(a.decompose, decomposition_csv(ev, part));
    values.push_back(ev.nmse);
    names.push_back(method_name(model.method()));
  }
  const bool rel = values.size() > 1;
  std::vector<double> r;
  if (rel) r = with_code(kData, "rNMSE", [&] { return rnmse(values); });
  std::printf("%-10s %-40s %14s%s\n", "method", "checkpoint", "nmse", rel ? "          rnmse" : "");
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::printf("%-10s %-40s %14.6g", names[i].c_str(), a.checkpoints[i].c_str(), values[i]);
    if (rel) std::printf(" %14.6g", r[i]);
    std::printf("\n");
  }
  return kOk;
}

struct InspectArgs {
  std::string checkpoint, q;
};

int cmd_inspect(const InspectArgs& a, std::uint64_t seed) {
  const io::Checkpoint ck = load_ck(a.checkpoint);
  const MethodModel model = with_code(kConfig, "checkpoint", [&] { return MethodModel::from_checkpoint(ck); });
  const RobotTopology& topo = model.topology();
  VecX q = VecX::Zero(topo.n_q());
  if (!a.q.empty()) {
    const auto v = parse_double_list(a.q);
    if (static_cast<int>(v.size()) != topo.n_q()) fail(kData, "--q needs one value per joint");
    for (int i = 0; i < topo.n_q(); ++i) q[i] = v[i];
  } else if (seed != 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-3.14159, 3.14159);
    for (int i = 0; i < topo.n_q(); ++i) q[i] = u(rng);
  }
  std::printf("method: %s\n", method_name(model.method()).c_str());
  std::printf("topology hash: %s  (n_q %d, branches %d)\n", io::hex64(topo.hash()).c_str(), topo.n_q(), topo.n_k());
  std::printf("q:");
  for (int i = 0; i < q.size(); ++i) std::printf(" %.6g", q[i]);
  std::printf("\n");
  if (model.method() == Method::FFNN) {
    std::printf("FFNN has no inertia matrix; nothing to inspect\n");
    return kOk;
  }
  GeneralizedState s(topo.n_q());
  s.pos.tail(topo.n_q()) = q;
  const auto p = with_code(kData, "prediction", [&] { return model.predict(s); });
  const MatX& H = p.H;
  std::printf("m_hat: %.9g\n", p.m_hat);
  std::printf("m (potential): %.9g\n", p.mass);
  std::printf("h(q): %.9g %.9g %.9g\n", p.h[0], p.h[1], p.h[2]);
  const Eigen::SelfAdjointEigenSolver<MatX> eh(H);
  std::printf("H min eigenvalue: %.6g (%s)\n", eh.eigenvalues()[0], eh.eigenvalues()[0] > 0 ? "SPD" : "NOT SPD");
  const SymMat3 ib(Mat3(H.block<3, 3>(3, 3)));
  const Vec3 ev = sym_eigen3(ib.matrix()).values;
  std::printf("I_B eigenvalues: %.6g %.6g %.6g\n", ev[0], ev[1], ev[2]);
  const double margin = triangle_margin(ib);
  std::printf("triangle inequality: %s (margin %s 0)  margin %.6g\n", margin >= 0 ? "PASS" : "FAIL",
              margin >= 0 ? "\u2265" : "<", margin);
  if (model.method() == Method::FeLaN) {
    const double iso = (Mat3(H.block<3, 3>(0, 0)) - p.m_hat * Mat3::Identity()).cwiseAbs().maxCoeff();
    std::printf("m_hat isotropy (mass block = m_hat 1_3): %s (max deviation %.3g)\n", iso == 0.0 ? "PASS" : "FAIL", iso);
  }
  if (is_branch_sparse(model.method())) {
    try {
      const StructuredFactor l = branch_sparse_factor(H, topo);
      const int expected = count_parameters(topo, ParamScheme::ReorderedL);
      std::printf("sparsity mask: %s (nnz L %d, ReorderedL count %d)\n", l.nnz() == expected ? "PASS" : "FAIL",
                  l.nnz(), expected);
    } catch (const Error& e) {
      std::printf("sparsity mask: FAIL (%s)\n", e.what());
    }
  } else {
    std::printf("sparsity mask: not enforced by %s (dense H)\n", method_name(model.method()).c_str());
  }
  if (p.has_shifts) {
    std::printf("beta: %.6g\n", p.diagnostics.beta);
    std::printf("mu_D: %.6g\n", p.diagnostics.mu_D);
    std::printf("lambda_U: %.6g\n", p.diagnostics.lambda_U);
  }
  return kOk;
}

struct CountArgs {
  std::string topology, chains;
};

int cmd_count(const CountArgs& a) {
  const RobotTopology topo = load_topology(a.topology, a.chains);
  const std::pair<const char*, ParamScheme> schemes[] = {{"DenseH", ParamScheme::DenseH},
                                                         {"StandardCholesky", ParamScheme::StandardCholesky},
                                                         {"ReorderedL", ParamScheme::ReorderedL},
                                                         {"Proposed", ParamScheme::Proposed},
                                                         {"Body16", ParamScheme::Body16}};
  std::vector<int> counts;
  for (const auto& [name, scheme] : schemes) {
    const int c = with_code(kConfig, "count", [&] { return count_parameters(topo, scheme); });
    counts.push_back(c);
    std::printf("%-18s %d\n", name, c);
  }
  std::printf("%d / %d / %d / %d / %d\n", counts[0], counts[1], counts[2], counts[3], counts[4]);
  return kOk;
}

struct IngestArgs {
  std::string data, contacts, topology, out;
};

int cmd_ingest(const IngestArgs& a) {
  TrajectoryDataset data = load_data(a.data);
  std::vector<std::vector<Contact>> contacts(data.size());
  if (!a.contacts.empty()) {
    require_file(a.contacts, kData, "contacts file");
    contacts = with_code(kData, "contacts", [&] { return read_contacts(a.contacts, data.n_q, data.size()); });
  }
  if (!a.topology.empty()) {
    const RobotTopology topo = load_topology(a.topology, "");
    if (topo.n_q() != data.n_q) fail(kData, "topology joint count differs from the dataset");
    data.meta["topology"] = topo.to_json();
    data.meta["topology_hash"] = io::hex64(topo.hash());
  }
  for (int i = 0; i < data.size(); ++i) {
    const VecX tau_q = data.tau.row(i).tail(data.n_q).transpose();
    data.tau.row(i) =
        with_code(kData, "row " + std::to_string(i), [&] { return assemble_generalized_torque(tau_q, contacts[i]); })
            .transpose();
  }
  data.meta["ingested_from"] = fs::path(a.data).filename().string();
  with_code(kConfig, "writing dataset", [&] {
    save_dataset(a.out, data);
    return 0;
  });
  std::cout << "ingested " << data.size() << " rows\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"felan: structured inertia learning for floating-base robots"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--seed", seed, "random seed")->default_val(0);
  app.add_option("--threads", threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);

  GenModelArgs gm;
  auto* c_gm = app.add_subcommand("gen-model", "random fully consistent model for a topology");
  c_gm->add_option("--topology", gm.topology, "topology JSON");
  c_gm->add_option("--chains", gm.chains, "joints per branch, e.g. 2,2");
  c_gm->add_option("--out", gm.out, "model JSON")->required();

  GenDataArgs gd;
  auto* c_gd = app.add_subcommand("gen-data", "synthetic excitation dataset from a model");
  c_gd->add_option("--model", gd.model, "model JSON")->required();
  c_gd->add_option("--duration", gd.spec.duration, "seconds")->default_val(gd.spec.duration);
  c_gd->add_option("--rate", gd.spec.rate, "Hz")->default_val(gd.spec.rate);
  c_gd->add_option("--sines", gd.spec.sines, "sines per coordinate")->default_val(gd.spec.sines);
  c_gd->add_option("--joint-amp-max", gd.spec.joint_amp_max, "rad per sine")->default_val(gd.spec.joint_amp_max);
  c_gd->add_option("--freq-max", gd.spec.freq_max, "Hz")->default_val(gd.spec.freq_max);
  c_gd->add_option("--out", gd.out, "dataset CSV")->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train one method");
  c_tr->add_option("--data", tr.data, "dataset CSV")->required();
  c_tr->add_option("--method", tr.method, "ffnn|delan|delan_pp|felan_bs|felan|wb_ns|wb_pd|wb_cov")
      ->default_val(tr.method);
  c_tr->add_option("--model", tr.model, "model JSON (kinematics for white-box methods)");
  c_tr->add_option("--topology", tr.topology, "topology JSON (default: dataset sidecar)");
  c_tr->add_option("--epochs", tr.cfg.epochs)->default_val(tr.cfg.epochs);
  c_tr->add_option("--batch", tr.cfg.batch_size)->default_val(tr.cfg.batch_size);
  c_tr->add_option("--lr", tr.cfg.learning_rate)->default_val(tr.cfg.learning_rate);
  c_tr->add_option("--weight-decay", tr.cfg.weight_decay)->default_val(tr.cfg.weight_decay);
  c_tr->add_option("--clip", tr.cfg.grad_clip_norm)->default_val(tr.cfg.grad_clip_norm);
  c_tr->add_option("--eps-L", tr.cfg.shifts.eps_L)->default_val(tr.cfg.shifts.eps_L);
  c_tr->add_option("--eps-m", tr.cfg.shifts.eps_m)->default_val(tr.cfg.shifts.eps_m);
  c_tr->add_option("--eps-D", tr.cfg.shifts.eps_D)->default_val(tr.cfg.shifts.eps_D);
  c_tr->add_option("--w-U", tr.cfg.w_U)->default_val(tr.cfg.w_U);
  c_tr->add_option("--w-D", tr.cfg.w_D)->default_val(tr.cfg.w_D);
  c_tr->add_option("--split", tr.cfg.split_fraction, "training fraction")->default_val(tr.cfg.split_fraction);
  c_tr->add_option("--optimizer", tr.optimizer, "adamw|sgd")->default_val(tr.optimizer);
  c_tr->add_option("--hidden", tr.hidden, "hidden widths, e.g. 16,16");
  c_tr->add_option("--prior-mass", tr.prior_mass, "FeLaN: theta_m = sqrt(prior)");
  c_tr->add_option("--eval-every", tr.cfg.eval_every, "full NMSE every k epochs")->default_val(1);
  c_tr->add_option("--target-nmse", tr.cfg.target_test_nmse, "stop at this test NMSE (0: off)")->default_val(0.0);
  c_tr->add_flag("--serial", tr.serial, "single-threaded gradients");
  c_tr->add_flag("--quiet", tr.quiet, "no per-epoch output");
  c_tr->add_option("--out", tr.out, "output directory")->default_val(tr.out);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "NMSE of checkpoints on a dataset");
  c_ev->add_option("--checkpoint", ev.checkpoints, "checkpoint file");
  c_ev->add_option("--methods", ev.checkpoints, "several checkpoints (adds rNMSE)");
  c_ev->add_option("--data", ev.data, "dataset CSV")->required();
  c_ev->add_option("--split", ev.split, "all|train|test")->default_val(ev.split);
  c_ev->add_option("--split-fraction", ev.split_fraction)->default_val(ev.split_fraction);
  c_ev->add_option("--decompose", ev.decompose, "torque decomposition CSV (first checkpoint)");

  InspectArgs in;
  auto* c_in = app.add_subcommand("inspect", "inertia diagnostics of a checkpoint at q");
  c_in->add_option("--checkpoint", in.checkpoint)->required();
  c_in->add_option("--q", in.q, "comma-separated joint angles (default: zeros, or random with --seed)");

  CountArgs ct;
  auto* c_ct = app.add_subcommand("count-params", "parameter counts per scheme");
  c_ct->add_option("--topology", ct.topology, "topology JSON");
  c_ct->add_option("--chains", ct.chains, "joints per branch, e.g. 3,3,3,3");

  IngestArgs ig;
  auto* c_ig = app.add_subcommand("ingest", "external log with contacts -> generalized torques");
  c_ig->add_option("--data", ig.data, "CSV in dataset schema; tau_q columns hold joint torques")->required();
  c_ig->add_option("--contacts", ig.contacts, "binary contacts sidecar");
  c_ig->add_option("--topology", ig.topology, "topology JSON to embed");
  c_ig->add_option("--out", ig.out, "output dataset CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (*c_gm) return cmd_gen_model(gm, seed);
    if (*c_gd) return cmd_gen_data(gd, seed);
    if (*c_tr) return cmd_train(tr, seed);
    if (*c_ev) return cmd_eval(ev);
    if (*c_in) return cmd_inspect(in, seed);
    if (*c_ct) return cmd_count(ct);
    if (*c_ig) return cmd_ingest(ig);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
