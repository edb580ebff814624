#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "arm/config.hpp"

namespace arm::pipe {

// A run directory <out>/run-<config hash> holding every artifact of one
// resolved config.
class Run {
 public:
  Run(cfg::RunConfig config, const std::filesystem::path& out_root);

  const cfg::RunConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path(const std::string& rel) const { return dir_ / rel; }
  // Appends to run.log and echoes to stderr unless quiet.
  void log(const std::string& stage, const std::string& message) const;
  bool quiet = false;

 private:
  cfg::RunConfig config_;
  std::filesystem::path dir_;
};

std::string split_dir(const std::string& split);  // data/<split>
std::string policy_name(awbc::Mode mode, const std::string& curves);

void gen_data(const Run& run);
void label_oracle(const Run& run);
void train_arm(const Run& run);
void pseudo_label(const Run& run, const std::string& split);
void reconstruct(const Run& run);
void eval_reward(const Run& run);
// curves: "arm" or "oracle".
void weights(const Run& run, const std::string& curves);
void train_policy(const Run& run, awbc::Mode mode, const std::string& curves);
void eval_policy(const Run& run, const std::string& name);
void bench_mimo(const Run& run, int frames, int repeats);
void report(const Run& run);
// Blocks until the process is interrupted.
void serve(const Run& run);

}  // namespace arm::pipe
