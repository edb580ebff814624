#include <cstdint>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "arm/config.hpp"
#include "pipeline.hpp"

using namespace arm;

int main(int argc, char** argv) {
  CLI::App app{"Advantage reward modeling pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "run config JSON (defaults when omitted)");
  app.add_option("--out", out, "root directory for run directories");
  app.add_option("--seed", seed, "overrides data.seed");

  std::string curves = "arm";
  std::string mode = "statistical";
  std::string policy = "awbc-arm";
  std::string split = "heldout";
  int frames = 400;
  int repeats = 5;

  auto* gen = app.add_subcommand("gen-data", "generate train, held-out and policy datasets");
  auto* lab = app.add_subcommand("label-oracle", "oracle tri-state labels for the train split");
  auto* srv = app.add_subcommand("serve", "run the annotation service");
  auto* tra = app.add_subcommand("train-arm", "train the reward model");
  auto* pse = app.add_subcommand("pseudo-label", "model labels above the confidence threshold");
  pse->add_option("--split", split, "train, heldout or policy");
  auto* rec = app.add_subcommand("reconstruct", "progress curves for held-out and policy data");
  auto* evr = app.add_subcommand("eval-reward", "held-out MSE, interval and SE/FE accuracy");
  auto* wts = app.add_subcommand("weights", "export chunk gains and weights");
  wts->add_option("--curves", curves, "arm or oracle");
  auto* trp = app.add_subcommand("train-policy", "train a BC or AW-BC policy");
  trp->add_option("--mode", mode, "none, statistical or threshold");
  trp->add_option("--curves", curves, "arm or oracle");
  auto* evp = app.add_subcommand("eval-policy", "closed-loop evaluation");
  evp->add_option("--policy", policy, "bc, awbc-arm, awbc-oracle, thr-arm, thr-oracle");
  auto* ben = app.add_subcommand("bench-mimo", "MIMO vs MISO forward passes and wall-clock");
  ben->add_option("--frames", frames, "episode length");
  ben->add_option("--repeats", repeats, "timed repetitions");
  auto* rep = app.add_subcommand("report", "Markdown report from the run's metrics");

  CLI11_PARSE(app, argc, argv);

  try {
    auto config = config_path.empty() ? cfg::config_from_json("{}")
                                      : cfg::load_run_config(config_path);
    if (seed) cfg::apply_seed(config, *seed);
    pipe::Run run(config, out);
    if (gen->parsed()) pipe::gen_data(run);
    if (lab->parsed()) pipe::label_oracle(run);
    if (srv->parsed()) pipe::serve(run);
    if (tra->parsed()) pipe::train_arm(run);
    if (pse->parsed()) pipe::pseudo_label(run, split);
    if (rec->parsed()) pipe::reconstruct(run);
    if (evr->parsed()) pipe::eval_reward(run);
    if (wts->parsed()) pipe::weights(run, curves);
    if (trp->parsed()) pipe::train_policy(run, awbc::mode_from_string(mode), curves);
    if (evp->parsed()) pipe::eval_policy(run, policy);
    if (ben->parsed()) pipe::bench_mimo(run, frames, repeats);
    if (rep->parsed()) pipe::report(run);
    std::cout << run.dir().string() << "\n";
  } catch (const Error& e) {
    std::cerr << "error (" << e.category() << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
