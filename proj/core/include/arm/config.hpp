#pragma once

#include <cstdint>
#include <string>

#include "arm/armmodel.hpp"
#include "arm/awbc.hpp"
#include "arm/simenv.hpp"

namespace arm::cfg {

struct DataConfig {
  // Reward-model training set, held-out evaluation set, policy dataset.
  sim::DatasetSpec train{100, 30, 30, 24, 16, 0};
  sim::DatasetSpec heldout{4, 4, 4, 12, 4, 0};
  sim::DatasetSpec policy{120, 20, 40, 20, 0, 0};
  double theta_stag = 0.005;
  std::uint64_t seed = 7;
};

struct ArmSection {
  model::ArmConfig model;
  model::TrainOptions train;
  double pseudo_tau = 0.9;
  bool use_pseudo_labels = false;
};

struct ReconstructConfig {
  double tau_succ = 0.5;
  int batch = 0;  // windows per forward pass, 0 = whole episode
};

struct AwbcSection {
  awbc::PolicyConfig policy;
  int eval_episodes = 200;
  std::uint64_t eval_seed = 777;
};

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int lease_seconds = 120;
  std::string ordering = "round_robin";  // or "sequential"
  std::string split = "train";
  std::string static_dir = "annoui/dist";
  int pair_gap = 0;  // 0 = arm.k
};

struct RunConfig {
  sim::SimConfig sim;
  DataConfig data;
  ArmSection arm;
  ReconstructConfig reconstruct;
  AwbcSection awbc;
  ServeConfig serve;

  // Copies sim dimensions into the model config and derives per-stage
  // seeds from data.seed.
  void resolve();
  // ConfigError naming the offending key.
  void validate() const;
};

// Missing keys keep their defaults; unknown keys and wrong types raise
// ConfigError. The result is resolved and validated.
RunConfig config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);
// Every field, fixed key order.
std::string config_to_json(const RunConfig& config);
// FNV-1a of the resolved JSON.
std::string config_hash(const RunConfig& config);

// Reruns resolve() with a new data.seed.
void apply_seed(RunConfig& config, std::uint64_t seed);

}  // namespace arm::cfg
