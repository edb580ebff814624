#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arm/armmodel.hpp"
#include "arm/simenv.hpp"

namespace arm::recon {

struct ProgressCurve {
  std::string episode_id;
  int stride = 1;
  std::vector<double> P;         // per subsampled frame, in [0, 1]
  bool anchored = false;
  std::optional<int> anchor_index;
  std::vector<int> raw_cumsum;   // raw_cumsum[t] = sum of deltas before t
};

// Earliest index with prob >= tau, if any.
std::optional<int> find_anchor(std::span<const float> completion, double tau);
std::optional<int> find_anchor(std::span<const double> completion, double tau);

// Anchored: P = clamp(cumsum / cumsum[anchor], 0, 1), InconsistentLabelsError
// when cumsum[anchor] <= 0. Anchor-free: P = clamp(p_start + delta_bar *
// cumsum, 0, 1).
ProgressCurve reconstruct(std::span<const int> deltas, std::optional<int> anchor,
                          double delta_bar, double p_start = 0.0);

// Mean of 1 / cumsum[anchor] over anchored curves; ValidationError if none.
double estimate_delta_bar(const std::vector<ProgressCurve>& anchored);

// Mean squared error against gt at the subsampled frames.
double eval_mse(const ProgressCurve& curve, const sim::Episode& ep);

// Full-frame-rate curve by linear interpolation between subsampled frames;
// frames after the last subsampled one hold its value.
std::vector<double> upsample(const ProgressCurve& curve, int length);

// Oracle tri-state deltas at stride k and the gt completion anchor.
std::vector<int> oracle_deltas(const sim::Episode& ep, int k, double theta_stag);
std::optional<int> gt_anchor(const sim::Episode& ep, int k, double eps);

// Oracle deltas accumulated against the gt anchor. Episodes without one use
// delta_bar and start at their first gt value.
ProgressCurve oracle_curve(const sim::Episode& ep, int k, double theta_stag, double eps,
                           double delta_bar);
// delta_bar over the episodes that reach the gt anchor; ValidationError if none do.
double oracle_delta_bar(const std::vector<sim::Episode>& episodes, int k, double theta_stag,
                        double eps);

struct SuccessId {
  int se_total = 0;
  int se_correct = 0;
  int fe_total = 0;
  int fe_correct = 0;
  double se_accuracy() const { return se_total ? double(se_correct) / se_total : 0.0; }
  double fe_accuracy() const { return fe_total ? double(fe_correct) / fe_total : 0.0; }
};

// An episode is predicted successful iff any completion prob >= tau.
SuccessId eval_success_id(const std::vector<std::vector<float>>& completion,
                          const std::vector<sim::Outcome>& outcomes, double tau);

// frame,P_pred,P_gt,completion_prob at full frame rate; blank gt when absent.
std::string curve_csv(const ProgressCurve& curve, const sim::Episode& ep,
                      std::span<const float> completion);

// Accumulates a model's per-episode scores. An anchor whose cumulative sum
// is not positive is treated as absent, so the episode falls back to the
// anchor-free form.
ProgressCurve curve_from_scores(const model::EpisodeScores& scores, const std::string& episode_id,
                                int stride, double tau_succ, double delta_bar,
                                double p_start = 0.0);

}  // namespace arm::recon
