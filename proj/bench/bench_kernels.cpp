// Serial reference kernel vs batched kernel on Test-1 sized networks.
#include <benchmark/benchmark.h>

#include "mfdgm/jet.hpp"
#include "mfdgm/network.hpp"
#include "mfdgm/sampling.hpp"

namespace {

using namespace mfdgm;

NetworkSpec spec_for(int d, int layers, Activation act) {
  NetworkSpec s;
  s.input_dim = d + 1;
  s.hidden_width = 100;
  s.hidden_layers = layers;
  s.activation = act;
  s.skip_weight = 0.5;
  return s;
}

SampleBatch batch_for(int d, Eigen::Index n) {
  Rng rng(7);
  SampleBatch b;
  b.times.resize(n);
  b.points.resize(d, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    b.times[s] = rng.uniform();
    for (int i = 0; i < d; ++i) b.points(i, s) = rng.uniform(-2.0, 2.0);
  }
  return b;
}

JetOrder order_arg(int64_t v) { return v == 0 ? JetOrder::value : v == 1 ? JetOrder::diagonal : JetOrder::mixed; }

// args: d, order, activation
void BM_SerialForward(benchmark::State& st) {
  const int d = static_cast<int>(st.range(0));
  const NetworkSpec spec = spec_for(d, 3, static_cast<Activation>(st.range(2)));
  const NetworkParams p = init_network(spec, 1);
  const SampleBatch b = batch_for(d, 256);
  const JetOrder order = order_arg(st.range(1));
  for (auto _ : st)
    for (Eigen::Index s = 0; s < b.size(); ++s)
      benchmark::DoNotOptimize(serial::eval(spec, p.flat, b.times[s], b.points.col(s), order));
  st.SetItemsProcessed(st.iterations() * b.size());
}

void BM_BatchedForward(benchmark::State& st) {
  const int d = static_cast<int>(st.range(0));
  const NetworkSpec spec = spec_for(d, 3, static_cast<Activation>(st.range(2)));
  const NetworkParams p = init_network(spec, 1);
  const SampleBatch b = batch_for(d, 256);
  const JetOrder order = order_arg(st.range(1));
  for (auto _ : st) {
    batched::JetEvaluation ev(spec, p.flat, b, order);
    benchmark::DoNotOptimize(ev.jets().value.data());
  }
  st.SetItemsProcessed(st.iterations() * b.size());
}

void BM_SerialForwardBackward(benchmark::State& st) {
  const int d = static_cast<int>(st.range(0));
  const NetworkSpec spec = spec_for(d, 3, static_cast<Activation>(st.range(2)));
  const NetworkParams p = init_network(spec, 1);
  const SampleBatch b = batch_for(d, 256);
  const JetOrder order = order_arg(st.range(1));
  std::vector<double> g(p.count());
  for (auto _ : st)
    for (Eigen::Index s = 0; s < b.size(); ++s) {
      const Jet jet = serial::eval(spec, p.flat, b.times[s], b.points.col(s), order);
      serial::backward(spec, p.flat, b.times[s], b.points.col(s), order, jet, g);
    }
  st.SetItemsProcessed(st.iterations() * b.size());
}

void BM_BatchedForwardBackward(benchmark::State& st) {
  const int d = static_cast<int>(st.range(0));
  const NetworkSpec spec = spec_for(d, 3, static_cast<Activation>(st.range(2)));
  const NetworkParams p = init_network(spec, 1);
  const SampleBatch b = batch_for(d, 256);
  const JetOrder order = order_arg(st.range(1));
  std::vector<double> g(p.count());
  for (auto _ : st) {
    batched::JetEvaluation ev(spec, p.flat, b, order);
    ev.backward(ev.jets(), g);
  }
  st.SetItemsProcessed(st.iterations() * b.size());
}

void args(benchmark::internal::Benchmark* b) {
  const auto tanh = static_cast<int64_t>(Activation::tanh);
  const auto softplus = static_cast<int64_t>(Activation::softplus);
  b->Args({1, 0, tanh})->Args({1, 1, tanh})->Args({1, 1, softplus})->Args({10, 1, tanh})->Args({10, 2, tanh});
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_SerialForward)->Apply(args);
BENCHMARK(BM_BatchedForward)->Apply(args);
BENCHMARK(BM_SerialForwardBackward)->Apply(args);
BENCHMARK(BM_BatchedForwardBackward)->Apply(args);

BENCHMARK_MAIN();
