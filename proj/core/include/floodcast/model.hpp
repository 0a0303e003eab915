#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "floodcast/features.hpp"
#include "floodcast/neuralnet.hpp"
#include "floodcast/windowing.hpp"

namespace floodcast::model {

// One point of the architecture grid. Domains are enforced by validate():
// rnn_layers 1-3, rnn_units {12,20}, spatial_layers {2,3}, spatial_units
// {4,8}, five admissible head shapes ending in width 1, look_back {1,4}.
struct ArchConfig {
  nn::CellType rnn_type = nn::CellType::gru;
  int rnn_layers = 1;
  int rnn_units = 20;
  int spatial_layers = 2;
  int spatial_units = 4;
  nn::Activation spatial_act = nn::Activation::selu;
  std::vector<int> head_units = {64, 64, 16, 1};
  // One activation per head layer; a uniform choice is expanded to a list.
  std::vector<nn::Activation> head_acts = {nn::Activation::linear, nn::Activation::selu,
                                           nn::Activation::selu, nn::Activation::selu};
  int look_back = 4;
  bool include_max15 = false;

  int n_temporal() const { return include_max15 ? 5 : 4; }
  void validate() const;
  // Filename-safe identifier, unique per config.
  std::string slug() const;

  // The search winner: GRU 1x20, spatial 2x4 selu, head 64-64-16-1 with
  // linear/selu/selu/selu, 4-hour look-back, no max15.
  static ArchConfig champion();

  bool operator==(const ArchConfig&) const = default;
};

void save_arch_json(const std::filesystem::path& path, const ArchConfig& config);
ArchConfig load_arch_json(const std::filesystem::path& path);

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
  int batch_size = 512;
  int max_epochs = 100;
  int patience = 10;  // early stopping on validation MAE
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossBreakdown {
  double mae = 0.0;
  double penalty = 0.0;
  double total() const { return mae + penalty; }
};

// Temporal branch of stacked recurrent layers feeding its last-step hidden
// vector into a concatenation with the spatial dense branch; dense head on
// top ending in one output unit.
class TwoBranchModel {
 public:
  TwoBranchModel(const ArchConfig& config, std::uint64_t init_seed);

  const ArchConfig& config() const { return config_; }

  Eigen::VectorXd forward(const windowing::SampleBatch& batch) const;

  // Zeroes gradients, runs forward/backward over the batch and accumulates
  // parameter gradients of MAE + regularization.
  LossBreakdown loss_and_grad(const windowing::SampleBatch& batch, const nn::RegSpec& reg);
  LossBreakdown loss(const windowing::SampleBatch& batch, const nn::RegSpec& reg) const;

  std::vector<nn::ParamRef> params();
  long param_count() const;
  void zero_grads();

  std::vector<nn::RecurrentLayer>& rnn_stack() { return rnn_; }
  std::vector<nn::DenseLayer>& spatial_stack() { return spatial_; }
  std::vector<nn::DenseLayer>& head_stack() { return head_; }
  const std::vector<nn::RecurrentLayer>& rnn_stack() const { return rnn_; }
  const std::vector<nn::DenseLayer>& spatial_stack() const { return spatial_; }
  const std::vector<nn::DenseLayer>& head_stack() const { return head_; }

 private:
  void check_batch(const windowing::SampleBatch& batch) const;

  ArchConfig config_;
  std::vector<nn::RecurrentLayer> rnn_;
  std::vector<nn::DenseLayer> spatial_;
  std::vector<nn::DenseLayer> head_;
};

// Closed-form parameter count: 4(in*u + u^2 + u) per LSTM layer,
// 3(in*u + u^2 + u) per GRU layer, in*out + out per dense layer.
long expected_param_count(const ArchConfig& config);

struct TrainHistory {
  std::vector<double> train_mae;
  std::vector<double> val_mae;
  int best_epoch = -1;  // 0-based epoch whose parameters were kept

  bool operator==(const TrainHistory&) const = default;
};

struct TrainedModel {
  TwoBranchModel net;
  features::Scaler scaler;
  TrainHistory history;
};

// Minibatch Nadam on MAE + regularization, deterministic for a given
// TrainConfig::seed; returns the parameters of the best-validation epoch.
TrainedModel train(TwoBranchModel net, const windowing::SampleBatch& train_batch,
                   const windowing::SampleBatch& val_batch, const TrainConfig& config,
                   const features::Scaler& scaler);

// Raw regression outputs by default (metric mode); clamp_reporting floors
// them at zero for physical reporting.
Eigen::VectorXd predict(const TrainedModel& trained, const windowing::SampleBatch& batch,
                        bool clamp_reporting = false);

inline constexpr std::string_view k_model_format_version = "floodcast-model-v1";

void save_trained_model(const std::filesystem::path& path, const TrainedModel& trained);
TrainedModel load_trained_model(const std::filesystem::path& path);

}  // namespace floodcast::model
