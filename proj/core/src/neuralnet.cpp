#include "floodcast/neuralnet.hpp"

#include <algorithm>
#include <cmath>

#include "floodcast/error.hpp"

namespace floodcast::nn {

namespace {

constexpr double k_selu_lambda = 1.0507009873554804934193349852946;
constexpr double k_selu_alpha = 1.6732632423543772848170429916717;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd glorot_uniform(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (static_cast<double>(rows) + static_cast<double>(cols)));
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = rng.uniform(-limit, limit);
    }
  }
  return m;
}

Eigen::MatrixXd orthogonal(int n, Rng& rng) {
  Eigen::MatrixXd a(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      a(r, c) = rng.normal();
    }
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < n; ++c) {
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return q;
}

}  // namespace

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::selu: return "selu";
    case Activation::linear: return "linear";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "linear";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "selu") return Activation::selu;
  if (name == "linear") return Activation::linear;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  raise(Errc::invalid_config, "unknown activation '" + std::string(name) + "'");
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::selu:
      return x > 0.0 ? k_selu_lambda * x : k_selu_lambda * k_selu_alpha * (std::exp(x) - 1.0);
    case Activation::linear: return x;
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

double activate_grad(Activation act, double pre) {
  switch (act) {
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::selu:
      return pre > 0.0 ? k_selu_lambda : k_selu_lambda * k_selu_alpha * std::exp(pre);
    case Activation::linear: return 1.0;
    case Activation::tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::sigmoid: {
      const double s = sigmoid(pre);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& pre) {
  return pre.unaryExpr([act](double x) { return activate(act, x); });
}

DenseLayer::DenseLayer(std::string layer_name, int in, int out, Activation act, Rng& rng)
    : name(std::move(layer_name)),
      kernel(glorot_uniform(in, out, rng)),
      bias(Eigen::RowVectorXd::Zero(out)),
      activation(act),
      g_kernel(Eigen::MatrixXd::Zero(in, out)),
      g_bias(Eigen::RowVectorXd::Zero(out)) {}

void DenseLayer::zero_grads() {
  g_kernel.setZero();
  g_bias.setZero();
}

Eigen::MatrixXd DenseLayer::forward(const Eigen::MatrixXd& input, Cache* cache) const {
  if (input.cols() != kernel.rows()) {
    raise(Errc::shape_mismatch, name + ": input width " + std::to_string(input.cols()) +
                                    " does not match kernel rows " + std::to_string(kernel.rows()));
  }
  Eigen::MatrixXd pre = input * kernel;
  pre.rowwise() += bias;
  if (cache != nullptr) {
    cache->input = input;
    cache->pre = pre;
  }
  return activate(activation, pre);
}

Eigen::MatrixXd DenseLayer::backward(const Cache& cache, const Eigen::MatrixXd& d_output) {
  const Activation act = activation;
  const Eigen::MatrixXd d_pre =
      d_output.array() * cache.pre.unaryExpr([act](double x) { return activate_grad(act, x); }).array();
  g_kernel.noalias() += cache.input.transpose() * d_pre;
  g_bias += d_pre.colwise().sum();
  return d_pre * kernel.transpose();
}

const char* cell_name(CellType cell) { return cell == CellType::lstm ? "lstm" : "gru"; }

CellType parse_cell(std::string_view name) {
  if (name == "lstm" || name == "LSTM") return CellType::lstm;
  if (name == "gru" || name == "GRU") return CellType::gru;
  raise(Errc::invalid_config, "unknown cell type '" + std::string(name) + "'");
}

RecurrentLayer::RecurrentLayer(std::string layer_name, CellType cell_type, int in, int n_units,
                               Rng& rng)
    : name(std::move(layer_name)), cell(cell_type), input_dim(in), units(n_units) {
  const int g = gates();
  kernel.resize(in, g * units);
  recurrent_kernel.resize(units, g * units);
  for (int block = 0; block < g; ++block) {
    kernel.middleCols(block * units, units) = glorot_uniform(in, units, rng);
  }
  for (int block = 0; block < g; ++block) {
    recurrent_kernel.middleCols(block * units, units) = orthogonal(units, rng);
  }
  bias = Eigen::RowVectorXd::Zero(g * units);
  if (cell == CellType::lstm) {
    // forget-gate bias starts open
    bias.segment(units, units).setOnes();
  }
  g_kernel = Eigen::MatrixXd::Zero(in, g * units);
  g_recurrent_kernel = Eigen::MatrixXd::Zero(units, g * units);
  g_bias = Eigen::RowVectorXd::Zero(g * units);
}

void RecurrentLayer::zero_grads() {
  g_kernel.setZero();
  g_recurrent_kernel.setZero();
  g_bias.setZero();
}

RecurrentLayer::State RecurrentLayer::initial_state(long n_samples) const {
  State state;
  state.h = Eigen::MatrixXd::Zero(n_samples, units);
  if (cell == CellType::lstm) {
    state.c = Eigen::MatrixXd::Zero(n_samples, units);
  }
  return state;
}

Eigen::MatrixXd RecurrentLayer::step(const Eigen::MatrixXd& input, State& state,
                                     StepCache* cache) const {
  if (input.cols() != input_dim) {
    raise(Errc::shape_mismatch, name + ": input width " + std::to_string(input.cols()) +
                                    " does not match input_dim " + std::to_string(input_dim));
  }
  const long n = input.rows();
  if (state.h.rows() != n) {
    raise(Errc::shape_mismatch, name + ": carried state has wrong batch size");
  }
  const auto sig = [](double x) { return sigmoid(x); };
  const auto th = [](double x) { return std::tanh(x); };

  if (cell == CellType::lstm) {
    Eigen::MatrixXd pre = input * kernel;
    pre.noalias() += state.h * recurrent_kernel;
    pre.rowwise() += bias;
    const Eigen::MatrixXd i = pre.middleCols(0, units).unaryExpr(sig);
    const Eigen::MatrixXd f = pre.middleCols(units, units).unaryExpr(sig);
    const Eigen::MatrixXd g = pre.middleCols(2 * units, units).unaryExpr(th);
    const Eigen::MatrixXd o = pre.middleCols(3 * units, units).unaryExpr(sig);
    Eigen::MatrixXd c_new = (f.array() * state.c.array() + i.array() * g.array()).matrix();
    Eigen::MatrixXd tanh_c = c_new.unaryExpr(th);
    Eigen::MatrixXd h_new = (o.array() * tanh_c.array()).matrix();
    if (cache != nullptr) {
      cache->input = input;
      cache->h_prev = state.h;
      cache->c_prev = state.c;
      cache->i = i;
      cache->f = f;
      cache->g = g;
      cache->o = o;
      cache->c = c_new;
      cache->tanh_c = tanh_c;
    }
    state.c = std::move(c_new);
    state.h = h_new;
    return h_new;
  }

  // GRU: z decides how much of the previous state survives; the candidate
  // sees the reset-gated previous state through the recurrent kernel.
  Eigen::MatrixXd gate_pre = input * kernel.leftCols(2 * units);
  gate_pre.noalias() += state.h * recurrent_kernel.leftCols(2 * units);
  gate_pre.rowwise() += bias.head(2 * units);
  const Eigen::MatrixXd z = gate_pre.middleCols(0, units).unaryExpr(sig);
  const Eigen::MatrixXd r = gate_pre.middleCols(units, units).unaryExpr(sig);
  const Eigen::MatrixXd r_h = (r.array() * state.h.array()).matrix();
  Eigen::MatrixXd cand_pre = input * kernel.middleCols(2 * units, units);
  cand_pre.noalias() += r_h * recurrent_kernel.middleCols(2 * units, units);
  cand_pre.rowwise() += bias.segment(2 * units, units);
  const Eigen::MatrixXd h_cand = cand_pre.unaryExpr(th);
  Eigen::MatrixXd h_new =
      (z.array() * state.h.array() + (1.0 - z.array()) * h_cand.array()).matrix();
  if (cache != nullptr) {
    cache->input = input;
    cache->h_prev = state.h;
    cache->z = z;
    cache->r = r;
    cache->h_cand = h_cand;
    cache->r_h = r_h;
  }
  state.h = h_new;
  return h_new;
}

std::vector<Eigen::MatrixXd> RecurrentLayer::forward(std::span<const Eigen::MatrixXd> inputs,
                                                     Cache* cache) const {
  if (inputs.empty()) {
    raise(Errc::shape_mismatch, name + ": empty input sequence");
  }
  State state = initial_state(inputs.front().rows());
  if (cache != nullptr) {
    cache->steps.resize(inputs.size());
  }
  std::vector<Eigen::MatrixXd> hidden;
  hidden.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    hidden.push_back(step(inputs[t], state, cache != nullptr ? &cache->steps[t] : nullptr));
  }
  return hidden;
}

std::vector<Eigen::MatrixXd> RecurrentLayer::backward(const Cache& cache,
                                                      std::span<const Eigen::MatrixXd> d_hidden) {
  const std::size_t steps = cache.steps.size();
  if (d_hidden.size() != steps) {
    raise(Errc::shape_mismatch, name + ": gradient sequence length mismatch");
  }
  const long n = cache.steps.front().input.rows();
  std::vector<Eigen::MatrixXd> d_inputs(steps);
  Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(n, units);
  Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(n, units);

  for (std::size_t t = steps; t-- > 0;) {
    const StepCache& sc = cache.steps[t];
    const Eigen::MatrixXd dh = d_hidden[t] + dh_next;

    if (cell == CellType::lstm) {
      const Eigen::ArrayXXd o = sc.o.array();
      const Eigen::ArrayXXd tanh_c = sc.tanh_c.array();
      const Eigen::ArrayXXd do_pre = dh.array() * tanh_c * o * (1.0 - o);
      const Eigen::ArrayXXd dc = dh.array() * o * (1.0 - tanh_c * tanh_c) + dc_next.array();
      const Eigen::ArrayXXd i = sc.i.array();
      const Eigen::ArrayXXd f = sc.f.array();
      const Eigen::ArrayXXd g = sc.g.array();
      const Eigen::ArrayXXd di_pre = dc * g * i * (1.0 - i);
      const Eigen::ArrayXXd df_pre = dc * sc.c_prev.array() * f * (1.0 - f);
      const Eigen::ArrayXXd dg_pre = dc * i * (1.0 - g * g);

      Eigen::MatrixXd d_gates(n, 4 * units);
      d_gates.middleCols(0, units) = di_pre.matrix();
      d_gates.middleCols(units, units) = df_pre.matrix();
      d_gates.middleCols(2 * units, units) = dg_pre.matrix();
      d_gates.middleCols(3 * units, units) = do_pre.matrix();

      g_kernel.noalias() += sc.input.transpose() * d_gates;
      g_recurrent_kernel.noalias() += sc.h_prev.transpose() * d_gates;
      g_bias += d_gates.colwise().sum();

      d_inputs[t] = d_gates * kernel.transpose();
      dh_next = d_gates * recurrent_kernel.transpose();
      dc_next = (dc * f).matrix();
      continue;
    }

    const Eigen::ArrayXXd z = sc.z.array();
    const Eigen::ArrayXXd r = sc.r.array();
    const Eigen::ArrayXXd h_cand = sc.h_cand.array();
    const Eigen::ArrayXXd dz_pre =
        dh.array() * (sc.h_prev.array() - h_cand) * z * (1.0 - z);
    const Eigen::ArrayXXd dcand_pre = dh.array() * (1.0 - z) * (1.0 - h_cand * h_cand);
    Eigen::ArrayXXd dh_prev = dh.array() * z;

    g_kernel.middleCols(2 * units, units).noalias() += sc.input.transpose() * dcand_pre.matrix();
    g_recurrent_kernel.middleCols(2 * units, units).noalias() +=
        sc.r_h.transpose() * dcand_pre.matrix();
    g_bias.segment(2 * units, units) += dcand_pre.matrix().colwise().sum();

    const Eigen::MatrixXd d_rh =
        dcand_pre.matrix() * recurrent_kernel.middleCols(2 * units, units).transpose();
    const Eigen::ArrayXXd dr_pre = d_rh.array() * sc.h_prev.array() * r * (1.0 - r);
    dh_prev += d_rh.array() * r;

    Eigen::MatrixXd d_gates(n, 2 * units);
    d_gates.middleCols(0, units) = dz_pre.matrix();
    d_gates.middleCols(units, units) = dr_pre.matrix();

    g_kernel.leftCols(2 * units).noalias() += sc.input.transpose() * d_gates;
    g_recurrent_kernel.leftCols(2 * units).noalias() += sc.h_prev.transpose() * d_gates;
    g_bias.head(2 * units) += d_gates.colwise().sum();

    dh_prev += (d_gates * recurrent_kernel.leftCols(2 * units).transpose()).array();
    d_inputs[t] = d_gates * kernel.leftCols(2 * units).transpose() +
                  dcand_pre.matrix() * kernel.middleCols(2 * units, units).transpose();
    dh_next = dh_prev.matrix();
  }
  return d_inputs;
}

MaeResult mae_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) {
  if (pred.size() == 0) {
    raise(Errc::empty_batch, "MAE of an empty batch");
  }
  if (pred.size() != target.size()) {
    raise(Errc::shape_mismatch, "MAE operands differ in length");
  }
  const long n = pred.size();
  MaeResult result;
  result.grad.resize(n);
  double total = 0.0;
  for (long i = 0; i < n; ++i) {
    const double e = pred(i) - target(i);
    total += std::abs(e);
    result.grad(i) = (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)) / static_cast<double>(n);
  }
  result.loss = total / static_cast<double>(n);
  return result;
}

namespace {

double penalty_block(const double* values, double* grads, std::ptrdiff_t size, const RegSpec& spec,
                     bool accumulate) {
  double penalty = 0.0;
  for (std::ptrdiff_t i = 0; i < size; ++i) {
    const double w = values[i];
    penalty += spec.l1 * std::abs(w) + spec.l2 * w * w;
    if (accumulate) {
      const double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
      grads[i] += spec.l1 * sign + 2.0 * spec.l2 * w;
    }
  }
  return penalty;
}

}  // namespace

double reg_penalty(RecurrentLayer& layer, const RegSpec& spec, bool accumulate_grads) {
  double penalty = 0.0;
  penalty += penalty_block(layer.kernel.data(), layer.g_kernel.data(), layer.kernel.size(), spec,
                           accumulate_grads);
  penalty += penalty_block(layer.recurrent_kernel.data(), layer.g_recurrent_kernel.data(),
                           layer.recurrent_kernel.size(), spec, accumulate_grads);
  penalty += penalty_block(layer.bias.data(), layer.g_bias.data(), layer.bias.size(), spec,
                           accumulate_grads);
  return penalty;
}

double reg_penalty_value(const RecurrentLayer& layer, const RegSpec& spec) {
  double penalty = 0.0;
  penalty += penalty_block(layer.kernel.data(), nullptr, layer.kernel.size(), spec, false);
  penalty += penalty_block(layer.recurrent_kernel.data(), nullptr, layer.recurrent_kernel.size(),
                           spec, false);
  penalty += penalty_block(layer.bias.data(), nullptr, layer.bias.size(), spec, false);
  return penalty;
}

void nadam_update(std::span<double> value, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, long t, const NadamConfig& config) {
  if (value.size() != grad.size() || value.size() != m.size() || value.size() != v.size()) {
    raise(Errc::shape_mismatch, "optimizer state does not match parameter size");
  }
  const double b1t = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double b2t = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = m[i] / b1t;
    const double v_hat = v[i] / b2t;
    const double direction = config.beta1 * m_hat + (1.0 - config.beta1) * g / b1t;
    value[i] -= config.lr * direction / (std::sqrt(v_hat) + config.eps);
  }
}

void Nadam::step(std::span<ParamRef> params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      m_[p].assign(static_cast<std::size_t>(params[p].size), 0.0);
      v_[p].assign(static_cast<std::size_t>(params[p].size), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    raise(Errc::shape_mismatch, "optimizer was initialized with a different parameter set");
  }
  ++t_;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p];
    if (m_[p].size() != static_cast<std::size_t>(param.size)) {
      raise(Errc::shape_mismatch, "optimizer state size mismatch for '" + param.name + "'");
    }
    nadam_update({param.value, static_cast<std::size_t>(param.size)},
                 {param.grad, static_cast<std::size_t>(param.size)}, m_[p], v_[p], t_, config_);
  }
}

GradCheckReport grad_check(std::span<ParamRef> params, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, double eps) {
  compute_grads();
  std::vector<std::vector<double>> analytic(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    analytic[p].assign(params[p].grad, params[p].grad + params[p].size);
  }
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p];
    for (std::ptrdiff_t i = 0; i < param.size; ++i) {
      const double saved = param.value[i];
      param.value[i] = saved + eps;
      const double up = loss();
      param.value[i] = saved - eps;
      const double down = loss();
      param.value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p][static_cast<std::size_t>(i)];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = param.name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace floodcast::nn
