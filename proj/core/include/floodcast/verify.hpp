#pragma once

#include <cstdint>
#include <string>

#include "floodcast/model.hpp"
#include "floodcast/neuralnet.hpp"
#include "floodcast/rng.hpp"
#include "floodcast/windowing.hpp"

namespace floodcast::verify {

struct CheckResult {
  double max_rel_err = 0.0;
  int seeds_checked = 0;
  std::string worst_detail;
};

// Gaussian temporal/spatial inputs shaped for the given architecture.
windowing::SampleBatch random_batch(const model::ArchConfig& arch, long n_samples, Rng& rng);

// Central finite differences against the analytic backward pass, across
// n_seeds randomized cases each. Cases where a relu/selu pre-activation or
// an absolute-error residual sits within a kink margin of zero are re-drawn,
// since the loss is not differentiable there.
CheckResult check_dense_layer_grads(int n_seeds, double eps, std::uint64_t base_seed);
CheckResult check_recurrent_layer_grads(nn::CellType cell, int n_seeds, double eps,
                                        std::uint64_t base_seed);
// Full two-branch model: total training loss (MAE + regularization).
CheckResult check_model_grads(const model::ArchConfig& arch, int n_seeds, int n_samples,
                              double eps, std::uint64_t base_seed, int workers = 1);

}  // namespace floodcast::verify
