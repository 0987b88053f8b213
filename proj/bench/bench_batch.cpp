// Batch loss gradient: serial reference vs OpenMP, per method.

#include <benchmark/benchmark.h>

#include <omp.h>

#include "felan/refdyn.hpp"
#include "felan/training.hpp"

namespace felan {
namespace {

struct Fixture {
  GroundTruthModel truth = random_model(RobotTopology::chains({3, 3, 3, 3}), 1);
  TrajectoryDataset data;
  TorqueWeights weights;
  std::vector<int> rows;

  Fixture() {
    ExcitationSpec spec;
    spec.duration = 10.24;
    spec.seed = 2;
    data = generate_excitation(truth, spec);
    weights = torque_weights(data.tau);
    for (int i = 0; i < data.size(); ++i) rows.push_back(i);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_BatchGradient(benchmark::State& state) {
  const Fixture& f = fixture();
  const auto method = static_cast<Method>(state.range(0));
  const bool parallel = state.range(1) != 0;
  const MethodModel model = MethodModel::create(method, f.truth.topology(), {}, &f.data, &f.truth);
  for (auto _ : state) benchmark::DoNotOptimize(batch_gradient(model, f.data, f.rows, f.weights, parallel));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.rows.size()));
  state.SetLabel(method_name(method) + (parallel ? " omp x" + std::to_string(omp_get_max_threads()) : " serial"));
}

void methods(benchmark::internal::Benchmark* b) {
  for (Method m : {Method::FFNN, Method::DeLaN, Method::FeLaN_BS, Method::FeLaN, Method::WhiteBoxCov})
    for (int parallel : {0, 1}) b->Args({static_cast<int>(m), parallel});
}

BENCHMARK(BM_BatchGradient)->Apply(methods)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace felan

BENCHMARK_MAIN();
