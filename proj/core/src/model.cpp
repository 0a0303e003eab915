#include "floodcast/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "floodcast/error.hpp"
#include "internal_json.hpp"

namespace floodcast::model {

namespace {

using json = nlohmann::ordered_json;

const std::vector<std::vector<int>>& admissible_heads() {
  static const std::vector<std::vector<int>> heads = {
      {64, 64, 1}, {32, 32, 1}, {32, 16, 1}, {64, 64, 16, 1}, {64, 32, 32, 1}};
  return heads;
}

bool branch_activation(nn::Activation act) {
  return act == nn::Activation::relu || act == nn::Activation::selu ||
         act == nn::Activation::linear;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) {
      data.push_back(m(r, c));
    }
  }
  return json{{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

json vector_to_json(const Eigen::RowVectorXd& v) {
  json data = json::array();
  for (long i = 0; i < v.size(); ++i) {
    data.push_back(v(i));
  }
  return json{{"shape", {v.size()}}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const json& doc, const std::string& what) {
  const auto& shape = doc.at("shape");
  if (shape.size() != 2) {
    raise(Errc::schema_mismatch, what + ": expected a 2-d shape");
  }
  const long rows = shape[0].get<long>();
  const long cols = shape[1].get<long>();
  const auto& data = doc.at("data");
  if (static_cast<long>(data.size()) != rows * cols) {
    raise(Errc::schema_mismatch, what + ": data length does not match shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t at = 0;
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      m(r, c) = data[at++].get<double>();
    }
  }
  return m;
}

Eigen::RowVectorXd vector_from_json(const json& doc, const std::string& what) {
  const auto& shape = doc.at("shape");
  if (shape.size() != 1) {
    raise(Errc::schema_mismatch, what + ": expected a 1-d shape");
  }
  const long size = shape[0].get<long>();
  const auto& data = doc.at("data");
  if (static_cast<long>(data.size()) != size) {
    raise(Errc::schema_mismatch, what + ": data length does not match shape");
  }
  Eigen::RowVectorXd v(size);
  for (long i = 0; i < size; ++i) {
    v(i) = data[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

}  // namespace

void ArchConfig::validate() const {
  const auto fail = [](const std::string& what) { raise(Errc::invalid_config, what); };
  if (rnn_layers < 1 || rnn_layers > 3) fail("rnn_layers must be 1, 2 or 3");
  if (rnn_units != 12 && rnn_units != 20) fail("rnn_units must be 12 or 20");
  if (spatial_layers != 2 && spatial_layers != 3) fail("spatial_layers must be 2 or 3");
  if (spatial_units != 4 && spatial_units != 8) fail("spatial_units must be 4 or 8");
  if (!branch_activation(spatial_act)) fail("spatial_act must be relu, selu or linear");
  const auto& heads = admissible_heads();
  if (std::find(heads.begin(), heads.end(), head_units) == heads.end()) {
    fail("head_units must be one of the admissible shapes");
  }
  if (head_units.back() != 1) fail("final head width must be 1");
  if (head_acts.size() != head_units.size()) {
    fail("head_acts must list one activation per head layer");
  }
  for (const auto act : head_acts) {
    if (!branch_activation(act)) fail("head activations must be relu, selu or linear");
  }
  if (look_back != 1 && look_back != 4) fail("look_back must be 1 or 4");
}

std::string ArchConfig::slug() const {
  std::string s = nn::cell_name(rnn_type);
  s += "-r" + std::to_string(rnn_layers) + "x" + std::to_string(rnn_units);
  s += "-s" + std::to_string(spatial_layers) + "x" + std::to_string(spatial_units);
  s += "-";
  s += nn::activation_name(spatial_act);
  s += "-h";
  for (std::size_t i = 0; i < head_units.size(); ++i) {
    if (i > 0) s += ".";
    s += std::to_string(head_units[i]);
  }
  s += "-";
  const bool uniform = std::all_of(head_acts.begin(), head_acts.end(),
                                   [&](nn::Activation a) { return a == head_acts.front(); });
  if (uniform) {
    s += nn::activation_name(head_acts.front());
  } else {
    for (std::size_t i = 0; i < head_acts.size(); ++i) {
      if (i > 0) s += ".";
      s += nn::activation_name(head_acts[i]);
    }
  }
  s += "-lb" + std::to_string(look_back);
  s += include_max15 ? "-m1" : "-m0";
  return s;
}

ArchConfig ArchConfig::champion() { return ArchConfig{}; }

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) ||
      !(eps > 0.0)) {
    raise(Errc::invalid_config, "optimizer hyperparameters out of range");
  }
  if (batch_size < 1 || max_epochs < 1 || patience < 1) {
    raise(Errc::invalid_config, "batch_size, max_epochs and patience must be positive");
  }
  if (patience >= max_epochs) {
    raise(Errc::invalid_config, "patience must be smaller than max_epochs");
  }
}

TwoBranchModel::TwoBranchModel(const ArchConfig& config, std::uint64_t init_seed)
    : config_(config) {
  config_.validate();
  Rng rng(derive_seed(init_seed, "init"));
  int in = config_.n_temporal();
  for (int k = 0; k < config_.rnn_layers; ++k) {
    rnn_.emplace_back("temporal" + std::to_string(k), config_.rnn_type, in, config_.rnn_units,
                      rng);
    in = config_.rnn_units;
  }
  in = 3;
  for (int k = 0; k < config_.spatial_layers; ++k) {
    spatial_.emplace_back("spatial" + std::to_string(k), in, config_.spatial_units,
                          config_.spatial_act, rng);
    in = config_.spatial_units;
  }
  in = config_.rnn_units + config_.spatial_units;
  for (std::size_t k = 0; k < config_.head_units.size(); ++k) {
    head_.emplace_back("head" + std::to_string(k), in, config_.head_units[k],
                       config_.head_acts[k], rng);
    in = config_.head_units[k];
  }
}

void TwoBranchModel::check_batch(const windowing::SampleBatch& batch) const {
  if (batch.empty()) {
    raise(Errc::empty_batch, "model invoked on an empty batch");
  }
  if (batch.look_back != config_.look_back ||
      static_cast<int>(batch.temporal.size()) != config_.look_back) {
    raise(Errc::shape_mismatch, "batch look_back " + std::to_string(batch.look_back) +
                                    " does not match model look_back " +
                                    std::to_string(config_.look_back));
  }
  if (batch.temporal.front().cols() != config_.n_temporal()) {
    raise(Errc::shape_mismatch,
          "batch carries " + std::to_string(batch.temporal.front().cols()) +
              " temporal features, model expects " + std::to_string(config_.n_temporal()));
  }
  if (batch.spatial.cols() != 3) {
    raise(Errc::shape_mismatch, "spatial input must have 3 columns");
  }
}

Eigen::VectorXd TwoBranchModel::forward(const windowing::SampleBatch& batch) const {
  check_batch(batch);
  std::vector<Eigen::MatrixXd> sequence = rnn_.front().forward(batch.temporal);
  for (std::size_t k = 1; k < rnn_.size(); ++k) {
    sequence = rnn_[k].forward(sequence);
  }
  Eigen::MatrixXd spatial_out = batch.spatial;
  for (const auto& layer : spatial_) {
    spatial_out = layer.forward(spatial_out);
  }
  const auto& temporal_out = sequence.back();
  Eigen::MatrixXd joint(temporal_out.rows(), temporal_out.cols() + spatial_out.cols());
  joint.leftCols(temporal_out.cols()) = temporal_out;
  joint.rightCols(spatial_out.cols()) = spatial_out;
  for (const auto& layer : head_) {
    joint = layer.forward(joint);
  }
  return joint.col(0);
}

LossBreakdown TwoBranchModel::loss_and_grad(const windowing::SampleBatch& batch,
                                            const nn::RegSpec& reg) {
  check_batch(batch);
  zero_grads();
  const long n = batch.size();

  std::vector<nn::RecurrentLayer::Cache> rnn_caches(rnn_.size());
  std::vector<std::vector<Eigen::MatrixXd>> sequences(rnn_.size());
  sequences[0] = rnn_[0].forward(batch.temporal, &rnn_caches[0]);
  for (std::size_t k = 1; k < rnn_.size(); ++k) {
    sequences[k] = rnn_[k].forward(sequences[k - 1], &rnn_caches[k]);
  }
  std::vector<nn::DenseLayer::Cache> spatial_caches(spatial_.size());
  Eigen::MatrixXd spatial_out = batch.spatial;
  for (std::size_t k = 0; k < spatial_.size(); ++k) {
    spatial_out = spatial_[k].forward(spatial_out, &spatial_caches[k]);
  }
  const Eigen::MatrixXd& temporal_out = sequences.back().back();
  Eigen::MatrixXd joint(n, temporal_out.cols() + spatial_out.cols());
  joint.leftCols(temporal_out.cols()) = temporal_out;
  joint.rightCols(spatial_out.cols()) = spatial_out;
  std::vector<nn::DenseLayer::Cache> head_caches(head_.size());
  Eigen::MatrixXd head_out = joint;
  for (std::size_t k = 0; k < head_.size(); ++k) {
    head_out = head_[k].forward(head_out, &head_caches[k]);
  }

  const auto mae = nn::mae_loss(head_out.col(0), batch.targets);

  Eigen::MatrixXd d = mae.grad;
  for (std::size_t k = head_.size(); k-- > 0;) {
    d = head_[k].backward(head_caches[k], d);
  }
  Eigen::MatrixXd d_spatial = d.rightCols(spatial_out.cols());
  for (std::size_t k = spatial_.size(); k-- > 0;) {
    d_spatial = spatial_[k].backward(spatial_caches[k], d_spatial);
  }
  std::vector<Eigen::MatrixXd> d_hidden(static_cast<std::size_t>(config_.look_back),
                                        Eigen::MatrixXd::Zero(n, config_.rnn_units));
  d_hidden.back() = d.leftCols(temporal_out.cols());
  for (std::size_t k = rnn_.size(); k-- > 0;) {
    d_hidden = rnn_[k].backward(rnn_caches[k], d_hidden);
  }

  double penalty = 0.0;
  for (auto& layer : rnn_) {
    penalty += nn::reg_penalty(layer, reg, true);
  }
  return {mae.loss, penalty};
}

LossBreakdown TwoBranchModel::loss(const windowing::SampleBatch& batch,
                                   const nn::RegSpec& reg) const {
  const auto pred = forward(batch);
  const auto mae = nn::mae_loss(pred, batch.targets);
  double penalty = 0.0;
  for (const auto& layer : rnn_) {
    penalty += nn::reg_penalty_value(layer, reg);
  }
  return {mae.loss, penalty};
}

std::vector<nn::ParamRef> TwoBranchModel::params() {
  std::vector<nn::ParamRef> refs;
  for (auto& layer : rnn_) {
    refs.push_back({layer.name + "/kernel", layer.kernel.data(), layer.g_kernel.data(),
                    layer.kernel.size()});
    refs.push_back({layer.name + "/recurrent_kernel", layer.recurrent_kernel.data(),
                    layer.g_recurrent_kernel.data(), layer.recurrent_kernel.size()});
    refs.push_back({layer.name + "/bias", layer.bias.data(), layer.g_bias.data(),
                    layer.bias.size()});
  }
  const auto dense_refs = [&refs](std::vector<nn::DenseLayer>& layers) {
    for (auto& layer : layers) {
      refs.push_back({layer.name + "/kernel", layer.kernel.data(), layer.g_kernel.data(),
                      layer.kernel.size()});
      refs.push_back({layer.name + "/bias", layer.bias.data(), layer.g_bias.data(),
                      layer.bias.size()});
    }
  };
  dense_refs(spatial_);
  dense_refs(head_);
  return refs;
}

long TwoBranchModel::param_count() const {
  long total = 0;
  for (const auto& layer : rnn_) total += layer.param_count();
  for (const auto& layer : spatial_) total += layer.param_count();
  for (const auto& layer : head_) total += layer.param_count();
  return total;
}

void TwoBranchModel::zero_grads() {
  for (auto& layer : rnn_) layer.zero_grads();
  for (auto& layer : spatial_) layer.zero_grads();
  for (auto& layer : head_) layer.zero_grads();
}

long expected_param_count(const ArchConfig& config) {
  const long gates = config.rnn_type == nn::CellType::lstm ? 4 : 3;
  long total = 0;
  long in = config.n_temporal();
  for (int k = 0; k < config.rnn_layers; ++k) {
    const long u = config.rnn_units;
    total += gates * (in * u + u * u + u);
    in = u;
  }
  in = 3;
  for (int k = 0; k < config.spatial_layers; ++k) {
    total += in * config.spatial_units + config.spatial_units;
    in = config.spatial_units;
  }
  in = config.rnn_units + config.spatial_units;
  for (const int out : config.head_units) {
    total += in * out + out;
    in = out;
  }
  return total;
}

TrainedModel train(TwoBranchModel net, const windowing::SampleBatch& train_batch,
                   const windowing::SampleBatch& val_batch, const TrainConfig& config,
                   const features::Scaler& scaler) {
  config.validate();
  if (train_batch.empty() || val_batch.empty()) {
    raise(Errc::empty_batch, "training requires non-empty train and validation batches");
  }
  const nn::RegSpec reg{};
  nn::Nadam optimizer({config.lr, config.beta1, config.beta2, config.eps});
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  const long n = train_batch.size();
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);

  auto params = net.params();
  TrainHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  TwoBranchModel best = net;
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double mae_weighted = 0.0;
    for (long at = 0; at < n; at += config.batch_size) {
      const long len = std::min<long>(config.batch_size, n - at);
      const auto minibatch =
          train_batch.gather({order.data() + at, static_cast<std::size_t>(len)});
      const auto breakdown = net.loss_and_grad(minibatch, reg);
      if (!std::isfinite(breakdown.total())) {
        raise(Errc::non_finite_loss,
              "loss diverged at epoch " + std::to_string(epoch) + ", sample offset " +
                  std::to_string(at) + " (mae=" + std::to_string(breakdown.mae) +
                  ", penalty=" + std::to_string(breakdown.penalty) + ")");
      }
      optimizer.step(params);
      mae_weighted += breakdown.mae * static_cast<double>(len);
    }
    history.train_mae.push_back(mae_weighted / static_cast<double>(n));
    const double val_mae = nn::mae_loss(net.forward(val_batch), val_batch.targets).loss;
    if (!std::isfinite(val_mae)) {
      raise(Errc::non_finite_loss, "validation MAE diverged at epoch " + std::to_string(epoch));
    }
    history.val_mae.push_back(val_mae);
    if (val_mae < best_val) {
      best_val = val_mae;
      best = net;
      history.best_epoch = epoch;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= config.patience) {
      break;
    }
  }
  return {std::move(best), scaler, std::move(history)};
}

Eigen::VectorXd predict(const TrainedModel& trained, const windowing::SampleBatch& batch,
                        bool clamp_reporting) {
  if (batch.empty()) {
    raise(Errc::empty_batch, "predict invoked on an empty batch");
  }
  if (batch.scaler_fingerprint != trained.scaler.fingerprint()) {
    raise(Errc::scaler_mismatch,
          "batch was scaled with a different scaler than the model was trained with");
  }
  Eigen::VectorXd out = trained.net.forward(batch);
  if (clamp_reporting) {
    out = out.cwiseMax(0.0);
  }
  return out;
}

json arch_to_json(const ArchConfig& config) {
  json head_act;
  const bool uniform = std::all_of(config.head_acts.begin(), config.head_acts.end(),
                                   [&](nn::Activation a) { return a == config.head_acts.front(); });
  if (uniform) {
    head_act = nn::activation_name(config.head_acts.front());
  } else {
    head_act = json::array();
    for (const auto act : config.head_acts) {
      head_act.push_back(nn::activation_name(act));
    }
  }
  return json{{"rnn_type", nn::cell_name(config.rnn_type)},
              {"rnn_layers", config.rnn_layers},
              {"rnn_units", config.rnn_units},
              {"spatial_layers", config.spatial_layers},
              {"spatial_units", config.spatial_units},
              {"spatial_act", nn::activation_name(config.spatial_act)},
              {"head_units", config.head_units},
              {"head_act", std::move(head_act)},
              {"look_back", config.look_back},
              {"include_max15", config.include_max15}};
}

ArchConfig arch_from_json(const nlohmann::json& doc) {
  ArchConfig config;
  try {
    config.rnn_type = nn::parse_cell(doc.at("rnn_type").get<std::string>());
    config.rnn_layers = doc.at("rnn_layers").get<int>();
    config.rnn_units = doc.at("rnn_units").get<int>();
    config.spatial_layers = doc.at("spatial_layers").get<int>();
    config.spatial_units = doc.at("spatial_units").get<int>();
    config.spatial_act = nn::parse_activation(doc.at("spatial_act").get<std::string>());
    config.head_units = doc.at("head_units").get<std::vector<int>>();
    const auto& head_act = doc.at("head_act");
    config.head_acts.clear();
    if (head_act.is_string()) {
      config.head_acts.assign(config.head_units.size(),
                              nn::parse_activation(head_act.get<std::string>()));
    } else {
      for (const auto& entry : head_act) {
        config.head_acts.push_back(nn::parse_activation(entry.get<std::string>()));
      }
    }
    config.look_back = doc.at("look_back").get<int>();
    config.include_max15 = doc.at("include_max15").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::invalid_config, std::string("malformed architecture JSON: ") + e.what());
  }
  config.validate();
  return config;
}

json scaler_to_json(const features::Scaler& scaler) {
  json doc = json::object();
  for (std::size_t i = 0; i < scaler.feature_names.size(); ++i) {
    doc[scaler.feature_names[i]] = {{"mean", scaler.mean[i]}, {"std", scaler.std_dev[i]}};
  }
  return doc;
}

features::Scaler scaler_from_json(const nlohmann::json& doc) {
  features::Scaler scaler;
  for (const auto& [name, entry] : doc.items()) {
    scaler.feature_names.push_back(name);
    scaler.mean.push_back(entry.at("mean").get<double>());
    scaler.std_dev.push_back(entry.at("std").get<double>());
  }
  return scaler;
}

void save_arch_json(const std::filesystem::path& path, const ArchConfig& config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    raise(Errc::io_failure, "cannot write '" + path.string() + "'");
  }
  out << arch_to_json(config).dump(2) << "\n";
  if (!out) {
    raise(Errc::io_failure, "write failed for '" + path.string() + "'");
  }
}

ArchConfig load_arch_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::invalid_config, path.string() + ": " + e.what());
  }
  return arch_from_json(doc);
}

void save_trained_model(const std::filesystem::path& path, const TrainedModel& trained) {
  json layers = json::array();
  for (const auto& layer : trained.net.rnn_stack()) {
    layers.push_back(json{{"name", layer.name},
                          {"kind", "recurrent"},
                          {"cell", nn::cell_name(layer.cell)},
                          {"input_dim", layer.input_dim},
                          {"units", layer.units},
                          {"kernel", matrix_to_json(layer.kernel)},
                          {"recurrent_kernel", matrix_to_json(layer.recurrent_kernel)},
                          {"bias", vector_to_json(layer.bias)}});
  }
  const auto dense_json = [&layers](const std::vector<nn::DenseLayer>& stack) {
    for (const auto& layer : stack) {
      layers.push_back(json{{"name", layer.name},
                            {"kind", "dense"},
                            {"activation", nn::activation_name(layer.activation)},
                            {"kernel", matrix_to_json(layer.kernel)},
                            {"bias", vector_to_json(layer.bias)}});
    }
  };
  dense_json(trained.net.spatial_stack());
  dense_json(trained.net.head_stack());

  json doc{{"version", std::string(k_model_format_version)},
           {"arch", arch_to_json(trained.net.config())},
           {"layers", std::move(layers)},
           {"scaler", scaler_to_json(trained.scaler)},
           {"history",
            json{{"train_mae", trained.history.train_mae},
                 {"val_mae", trained.history.val_mae},
                 {"best_epoch", trained.history.best_epoch}}}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    raise(Errc::io_failure, "cannot write '" + path.string() + "'");
  }
  out << doc.dump() << "\n";
  if (!out) {
    raise(Errc::io_failure, "write failed for '" + path.string() + "'");
  }
}

TrainedModel load_trained_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::schema_mismatch, path.string() + ": " + e.what());
  }
  if (doc.value("version", "") != k_model_format_version) {
    raise(Errc::schema_mismatch, path.string() + ": unsupported model format version '" +
                                     doc.value("version", "") + "'");
  }
  const ArchConfig config = arch_from_json(doc.at("arch"));
  TwoBranchModel net(config, 0);
  std::size_t at = 0;
  const auto& layers = doc.at("layers");
  for (auto& layer : net.rnn_stack()) {
    const auto& entry = layers.at(at++);
    layer.kernel = matrix_from_json(entry.at("kernel"), layer.name);
    layer.recurrent_kernel = matrix_from_json(entry.at("recurrent_kernel"), layer.name);
    layer.bias = vector_from_json(entry.at("bias"), layer.name);
    if (layer.kernel.rows() != layer.input_dim ||
        layer.kernel.cols() != layer.gates() * layer.units) {
      raise(Errc::schema_mismatch, path.string() + ": kernel shape mismatch in " + layer.name);
    }
  }
  const auto load_dense = [&](std::vector<nn::DenseLayer>& stack) {
    for (auto& layer : stack) {
      const auto& entry = layers.at(at++);
      const auto kernel = matrix_from_json(entry.at("kernel"), layer.name);
      if (kernel.rows() != layer.kernel.rows() || kernel.cols() != layer.kernel.cols()) {
        raise(Errc::schema_mismatch, path.string() + ": kernel shape mismatch in " + layer.name);
      }
      layer.kernel = kernel;
      layer.bias = vector_from_json(entry.at("bias"), layer.name);
    }
  };
  load_dense(net.spatial_stack());
  load_dense(net.head_stack());

  TrainHistory history;
  if (doc.contains("history")) {
    history.train_mae = doc.at("history").value("train_mae", std::vector<double>{});
    history.val_mae = doc.at("history").value("val_mae", std::vector<double>{});
    history.best_epoch = doc.at("history").value("best_epoch", -1);
  }
  return {std::move(net), scaler_from_json(doc.at("scaler")), std::move(history)};
}

}  // namespace floodcast::model
