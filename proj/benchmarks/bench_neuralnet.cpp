#include <benchmark/benchmark.h>

#include "floodcast/model.hpp"
#include "floodcast/neuralnet.hpp"
#include "floodcast/verify.hpp"

using namespace floodcast;

namespace {

std::vector<Eigen::MatrixXd> random_sequence(int steps, long n, int width, Rng& rng) {
  std::vector<Eigen::MatrixXd> seq;
  for (int t = 0; t < steps; ++t) {
    Eigen::MatrixXd x(n, width);
    for (long i = 0; i < x.rows(); ++i) {
      for (long j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
    }
    seq.push_back(std::move(x));
  }
  return seq;
}

void recurrent_forward(benchmark::State& state, nn::CellType cell) {
  Rng rng(1);
  nn::RecurrentLayer layer("bench", cell, 5, 20, rng);
  const auto inputs = random_sequence(4, state.range(0), 5, rng);
  for (auto _ : state) {
    auto hidden = layer.forward(inputs);
    benchmark::DoNotOptimize(hidden);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LstmForward(benchmark::State& state) { recurrent_forward(state, nn::CellType::lstm); }
void BM_GruForward(benchmark::State& state) { recurrent_forward(state, nn::CellType::gru); }

void BM_GruForwardBackward(benchmark::State& state) {
  Rng rng(1);
  nn::RecurrentLayer layer("bench", nn::CellType::gru, 5, 20, rng);
  const auto inputs = random_sequence(4, state.range(0), 5, rng);
  std::vector<Eigen::MatrixXd> d_hidden(4, Eigen::MatrixXd::Zero(state.range(0), 20));
  d_hidden.back().setConstant(1e-3);
  for (auto _ : state) {
    layer.zero_grads();
    nn::RecurrentLayer::Cache cache;
    auto hidden = layer.forward(inputs, &cache);
    auto d_inputs = layer.backward(cache, d_hidden);
    benchmark::DoNotOptimize(d_inputs);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ChampionTrainingStep(benchmark::State& state) {
  const auto arch = model::ArchConfig::champion();
  model::TwoBranchModel net(arch, 7);
  Rng rng(3);
  auto batch = verify::random_batch(arch, state.range(0), rng);
  nn::Nadam optimizer;
  auto params = net.params();
  const nn::RegSpec reg{};
  for (auto _ : state) {
    const auto loss = net.loss_and_grad(batch, reg);
    optimizer.step(params);
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_NadamStep(benchmark::State& state) {
  const long n = state.range(0);
  std::vector<double> value(n, 0.5), grad(n, 1e-3), m(n, 0.0), v(n, 0.0);
  long t = 0;
  for (auto _ : state) {
    nn::nadam_update(value, grad, m, v, ++t, {});
    benchmark::DoNotOptimize(value);
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(BM_LstmForward)->Arg(64)->Arg(512);
BENCHMARK(BM_GruForward)->Arg(64)->Arg(512);
BENCHMARK(BM_GruForwardBackward)->Arg(64)->Arg(512);
BENCHMARK(BM_ChampionTrainingStep)->Arg(512);
BENCHMARK(BM_NadamStep)->Arg(8353);

BENCHMARK_MAIN();
