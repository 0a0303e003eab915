#include "floodcast/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "floodcast/error.hpp"
#include "floodcast/thread_pool.hpp"

namespace floodcast::verify {

namespace {

constexpr double k_kink_margin = 1e-3;
// L1 regularization has a kink at w = 0: a weight inside the probe step of
// the central difference makes the numeric derivative meaningless. Exactly
// zero is fine (both sides agree at 0).
constexpr double k_l1_margin = 1e-4;
constexpr int k_max_redraws = 50;

bool kinked(nn::Activation act) {
  return act == nn::Activation::relu || act == nn::Activation::selu;
}

double min_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().minCoeff(); }

Eigen::MatrixXd random_matrix(long rows, long cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      m(r, c) = rng.normal();
    }
  }
  return m;
}

// Targets pushed a safe distance away from the predictions so the MAE
// subgradient is constant within the finite-difference probes.
Eigen::VectorXd offset_targets(const Eigen::VectorXd& pred, Rng& rng) {
  Eigen::VectorXd target(pred.size());
  for (long i = 0; i < pred.size(); ++i) {
    const double offset = rng.uniform(0.3, 1.0);
    target(i) = pred(i) + (rng.uniform() < 0.5 ? -offset : offset);
  }
  return target;
}

// Smallest |pre-activation| over the kinked dense layers of the model plus
// the smallest |residual|; below the margin the seed is rejected.
double model_kink_margin(const model::TwoBranchModel& net, const windowing::SampleBatch& batch,
                         const Eigen::VectorXd& targets) {
  double margin = std::numeric_limits<double>::infinity();
  std::vector<Eigen::MatrixXd> sequence;
  {
    std::span<const Eigen::MatrixXd> input = batch.temporal;
    for (const auto& layer : net.rnn_stack()) {
      sequence = layer.forward(input);
      input = sequence;
    }
  }
  Eigen::MatrixXd spatial_out = batch.spatial;
  for (const auto& layer : net.spatial_stack()) {
    nn::DenseLayer::Cache cache;
    spatial_out = layer.forward(spatial_out, &cache);
    if (kinked(layer.activation)) margin = std::min(margin, min_abs(cache.pre));
  }
  Eigen::MatrixXd joint(batch.size(), sequence.back().cols() + spatial_out.cols());
  joint.leftCols(sequence.back().cols()) = sequence.back();
  joint.rightCols(spatial_out.cols()) = spatial_out;
  for (const auto& layer : net.head_stack()) {
    nn::DenseLayer::Cache cache;
    joint = layer.forward(joint, &cache);
    if (kinked(layer.activation)) margin = std::min(margin, min_abs(cache.pre));
  }
  margin = std::min(margin, (joint.col(0) - targets).cwiseAbs().minCoeff());
  return margin;
}

bool regularized_weights_clear_of_zero(const model::TwoBranchModel& net) {
  const auto block_ok = [](const double* data, long size) {
    for (long i = 0; i < size; ++i) {
      const double w = std::abs(data[i]);
      if (w != 0.0 && w < k_l1_margin) return false;
    }
    return true;
  };
  for (const auto& layer : net.rnn_stack()) {
    if (!block_ok(layer.kernel.data(), layer.kernel.size()) ||
        !block_ok(layer.recurrent_kernel.data(), layer.recurrent_kernel.size()) ||
        !block_ok(layer.bias.data(), layer.bias.size())) {
      return false;
    }
  }
  return true;
}

void merge(CheckResult& total, const nn::GradCheckReport& report, const std::string& detail) {
  if (report.max_rel_err > total.max_rel_err) {
    total.max_rel_err = report.max_rel_err;
    total.worst_detail = detail + " @" + report.worst_param + "[" +
                         std::to_string(report.worst_index) + "] analytic=" +
                         std::to_string(report.analytic) + " numeric=" +
                         std::to_string(report.numeric);
  }
  ++total.seeds_checked;
}

}  // namespace

windowing::SampleBatch random_batch(const model::ArchConfig& arch, long n_samples, Rng& rng) {
  windowing::SampleBatch batch;
  batch.look_back = arch.look_back;
  batch.include_max15 = arch.include_max15;
  for (int t = 0; t < arch.look_back; ++t) {
    batch.temporal.push_back(random_matrix(n_samples, arch.n_temporal(), rng));
  }
  batch.spatial = random_matrix(n_samples, 3, rng);
  batch.targets = Eigen::VectorXd::Zero(n_samples);
  batch.index.resize(static_cast<std::size_t>(n_samples));
  return batch;
}

CheckResult check_dense_layer_grads(int n_seeds, double eps, std::uint64_t base_seed) {
  const nn::Activation acts[] = {nn::Activation::relu, nn::Activation::selu,
                                 nn::Activation::linear, nn::Activation::tanh,
                                 nn::Activation::sigmoid};
  CheckResult total;
  for (int s = 0; s < n_seeds; ++s) {
    for (int attempt = 0; attempt < k_max_redraws; ++attempt) {
      Rng rng(derive_seed(derive_seed(base_seed, "dense", static_cast<std::uint64_t>(s)),
                          "attempt", static_cast<std::uint64_t>(attempt)));
      const int in = static_cast<int>(rng.uniform_int(1, 5));
      const int out = static_cast<int>(rng.uniform_int(1, 5));
      const long n = rng.uniform_int(1, 6);
      const nn::Activation act = acts[s % 5];
      nn::DenseLayer layer("dense", in, out, act, rng);
      const Eigen::MatrixXd input = random_matrix(n, in, rng);
      const Eigen::VectorXd readout = random_matrix(out, 1, rng);

      nn::DenseLayer::Cache probe;
      const Eigen::MatrixXd probe_out = layer.forward(input, &probe);
      const Eigen::VectorXd pred = probe_out * readout;
      const Eigen::VectorXd targets = offset_targets(pred, rng);
      if (kinked(act) && min_abs(probe.pre) < k_kink_margin) continue;
      if ((pred - targets).cwiseAbs().minCoeff() < k_kink_margin) continue;

      const auto loss = [&]() {
        const Eigen::VectorXd p = layer.forward(input) * readout;
        return nn::mae_loss(p, targets).loss;
      };
      const auto compute_grads = [&]() {
        layer.zero_grads();
        nn::DenseLayer::Cache cache;
        const Eigen::MatrixXd out_m = layer.forward(input, &cache);
        const auto mae = nn::mae_loss(out_m * readout, targets);
        layer.backward(cache, mae.grad * readout.transpose());
      };
      std::vector<nn::ParamRef> params = {
          {"kernel", layer.kernel.data(), layer.g_kernel.data(), layer.kernel.size()},
          {"bias", layer.bias.data(), layer.g_bias.data(), layer.bias.size()}};
      merge(total, nn::grad_check(params, loss, compute_grads, eps),
            std::string("dense/") + nn::activation_name(act) + " seed=" + std::to_string(s));
      break;
    }
  }
  return total;
}

CheckResult check_recurrent_layer_grads(nn::CellType cell, int n_seeds, double eps,
                                        std::uint64_t base_seed) {
  CheckResult total;
  for (int s = 0; s < n_seeds; ++s) {
    Rng rng(derive_seed(base_seed, cell == nn::CellType::lstm ? "lstm" : "gru",
                        static_cast<std::uint64_t>(s)));
    const int in = static_cast<int>(rng.uniform_int(1, 3));
    const int units = static_cast<int>(rng.uniform_int(1, 3));
    const int steps = static_cast<int>(rng.uniform_int(1, 4));
    const long n = rng.uniform_int(1, 4);
    nn::RecurrentLayer layer("recurrent", cell, in, units, rng);
    std::vector<Eigen::MatrixXd> inputs;
    for (int t = 0; t < steps; ++t) {
      inputs.push_back(random_matrix(n, in, rng));
    }
    // Readout over the full hidden sequence so every step receives gradient.
    std::vector<Eigen::VectorXd> readouts;
    for (int t = 0; t < steps; ++t) {
      readouts.push_back(random_matrix(units, 1, rng));
    }
    const auto predict = [&]() {
      const auto hidden = layer.forward(inputs);
      Eigen::VectorXd pred = Eigen::VectorXd::Zero(n);
      for (int t = 0; t < steps; ++t) {
        pred += hidden[static_cast<std::size_t>(t)] * readouts[static_cast<std::size_t>(t)];
      }
      return pred;
    };
    const Eigen::VectorXd targets = offset_targets(predict(), rng);

    const auto loss = [&]() { return nn::mae_loss(predict(), targets).loss; };
    const auto compute_grads = [&]() {
      layer.zero_grads();
      nn::RecurrentLayer::Cache cache;
      const auto hidden = layer.forward(inputs, &cache);
      Eigen::VectorXd pred = Eigen::VectorXd::Zero(n);
      for (int t = 0; t < steps; ++t) {
        pred += hidden[static_cast<std::size_t>(t)] * readouts[static_cast<std::size_t>(t)];
      }
      const auto mae = nn::mae_loss(pred, targets);
      std::vector<Eigen::MatrixXd> d_hidden;
      for (int t = 0; t < steps; ++t) {
        d_hidden.push_back(mae.grad * readouts[static_cast<std::size_t>(t)].transpose());
      }
      layer.backward(cache, d_hidden);
    };
    std::vector<nn::ParamRef> params = {
        {"kernel", layer.kernel.data(), layer.g_kernel.data(), layer.kernel.size()},
        {"recurrent_kernel", layer.recurrent_kernel.data(), layer.g_recurrent_kernel.data(),
         layer.recurrent_kernel.size()},
        {"bias", layer.bias.data(), layer.g_bias.data(), layer.bias.size()}};
    merge(total, nn::grad_check(params, loss, compute_grads, eps),
          std::string(nn::cell_name(cell)) + " seed=" + std::to_string(s));
  }
  return total;
}

CheckResult check_model_grads(const model::ArchConfig& arch, int n_seeds, int n_samples,
                              double eps, std::uint64_t base_seed, int workers) {
  std::vector<nn::GradCheckReport> reports(static_cast<std::size_t>(n_seeds));
  parallel_for(n_seeds, workers, [&](long s) {
    const nn::RegSpec reg{};
    for (int attempt = 0; attempt < k_max_redraws; ++attempt) {
      Rng rng(derive_seed(derive_seed(base_seed, "model", static_cast<std::uint64_t>(s)),
                          "attempt", static_cast<std::uint64_t>(attempt)));
      model::TwoBranchModel net(arch, rng.next_u64());
      auto batch = random_batch(arch, n_samples, rng);
      batch.targets = offset_targets(net.forward(batch), rng);
      if (model_kink_margin(net, batch, batch.targets) < k_kink_margin) continue;
      if (!regularized_weights_clear_of_zero(net)) continue;

      const auto loss = [&]() { return net.loss(batch, reg).total(); };
      const auto compute_grads = [&]() { net.loss_and_grad(batch, reg); };
      auto params = net.params();
      reports[static_cast<std::size_t>(s)] = nn::grad_check(params, loss, compute_grads, eps);
      break;
    }
  });
  CheckResult total;
  for (int s = 0; s < n_seeds; ++s) {
    merge(total, reports[static_cast<std::size_t>(s)], "model seed=" + std::to_string(s));
  }
  return total;
}

}  // namespace floodcast::verify
