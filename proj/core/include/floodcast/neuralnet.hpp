#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "floodcast/rng.hpp"

namespace floodcast::nn {

enum class Activation { relu, selu, linear, tanh, sigmoid };

const char* activation_name(Activation act);
Activation parse_activation(std::string_view name);

double activate(Activation act, double x);
// Derivative with respect to the pre-activation value.
double activate_grad(Activation act, double pre);

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& pre);

// Affine layer with elementwise activation. Gradients accumulate into
// g_kernel / g_bias until zero_grads().
struct DenseLayer {
  std::string name;
  Eigen::MatrixXd kernel;   // [in, out]
  Eigen::RowVectorXd bias;  // [out]
  Activation activation = Activation::linear;
  Eigen::MatrixXd g_kernel;
  Eigen::RowVectorXd g_bias;

  DenseLayer() = default;
  DenseLayer(std::string layer_name, int in, int out, Activation act, Rng& rng);

  int input_dim() const { return static_cast<int>(kernel.rows()); }
  int output_dim() const { return static_cast<int>(kernel.cols()); }
  long param_count() const { return kernel.size() + bias.size(); }
  void zero_grads();

  struct Cache {
    Eigen::MatrixXd input;
    Eigen::MatrixXd pre;
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Cache* cache = nullptr) const;
  // Accumulates parameter gradients and returns the input gradient.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_output);
};

enum class CellType { lstm, gru };

const char* cell_name(CellType cell);
CellType parse_cell(std::string_view name);

// Recurrent layer over full sequences. Gate blocks are packed along the
// columns of the kernels: (i, f, g, o) for LSTM, (z, r, h) for GRU.
// Hidden and cell state start at zero for every sequence.
struct RecurrentLayer {
  std::string name;
  CellType cell = CellType::lstm;
  int input_dim = 0;
  int units = 0;
  Eigen::MatrixXd kernel;            // [in, gates*units]
  Eigen::MatrixXd recurrent_kernel;  // [units, gates*units]
  Eigen::RowVectorXd bias;           // [gates*units]
  Eigen::MatrixXd g_kernel;
  Eigen::MatrixXd g_recurrent_kernel;
  Eigen::RowVectorXd g_bias;

  RecurrentLayer() = default;
  RecurrentLayer(std::string layer_name, CellType cell_type, int in, int n_units, Rng& rng);

  int gates() const { return cell == CellType::lstm ? 4 : 3; }
  long param_count() const { return kernel.size() + recurrent_kernel.size() + bias.size(); }
  void zero_grads();

  struct State {
    Eigen::MatrixXd h;
    Eigen::MatrixXd c;  // unused for GRU
  };
  State initial_state(long n_samples) const;

  struct StepCache {
    Eigen::MatrixXd input, h_prev, c_prev;
    Eigen::MatrixXd i, f, g, o, c, tanh_c;  // LSTM
    Eigen::MatrixXd z, r, h_cand, r_h;      // GRU
  };
  struct Cache {
    std::vector<StepCache> steps;
  };

  // Advances one time step in place; the sequence forward below calls this,
  // so stepwise and whole-sequence execution agree bitwise.
  Eigen::MatrixXd step(const Eigen::MatrixXd& input, State& state,
                       StepCache* cache = nullptr) const;

  // Returns the full hidden sequence, one [n, units] matrix per step.
  std::vector<Eigen::MatrixXd> forward(std::span<const Eigen::MatrixXd> inputs,
                                       Cache* cache = nullptr) const;

  // Backpropagation through time. d_hidden holds the loss gradient of every
  // step's hidden output (zero matrices where unused). Accumulates parameter
  // gradients, returns per-step input gradients.
  std::vector<Eigen::MatrixXd> backward(const Cache& cache,
                                        std::span<const Eigen::MatrixXd> d_hidden);
};

struct MaeResult {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// Mean absolute error with the subgradient sign(pred - target) / n,
// sign(0) = 0.
MaeResult mae_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target);

// L1 + L2 penalty applied to the recurrent layers' kernel, recurrent kernel
// and bias. Excluded from reported error metrics.
struct RegSpec {
  double l1 = 0.01;
  double l2 = 0.01;
};

// penalty = sum(l1*|w| + l2*w^2); gradients accumulate onto the layer.
double reg_penalty(RecurrentLayer& layer, const RegSpec& spec, bool accumulate_grads);
double reg_penalty_value(const RecurrentLayer& layer, const RegSpec& spec);

struct NadamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

// View over one named parameter tensor and its gradient buffer.
struct ParamRef {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  std::ptrdiff_t size = 0;
};

// One Nadam update for a flat parameter block; t is the already-incremented
// step counter.
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr*(b1*m/(1-b1^t) + (1-b1)*g/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
void nadam_update(std::span<double> value, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, long t, const NadamConfig& config);

class Nadam {
 public:
  explicit Nadam(const NadamConfig& config = {}) : config_(config) {}

  void step(std::span<ParamRef> params);
  long steps_taken() const { return t_; }

 private:
  NadamConfig config_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::ptrdiff_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central finite differences of `loss` against the analytic gradients filled
// by `compute_grads` (which must zero and then accumulate every grad buffer).
// Relative error uses max(|analytic|, |numeric|, 1e-4) as the denominator:
// below that scale the numeric estimate is dominated by double roundoff in
// the loss, so the comparison degrades to an absolute check at ~1e-9.
GradCheckReport grad_check(std::span<ParamRef> params, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, double eps = 1e-5);

}  // namespace floodcast::nn
