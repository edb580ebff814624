#include "arm/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "arm/labeling.hpp"

namespace arm::recon {

namespace {
template <typename V>
std::optional<int> first_at_least(std::span<const V> probs, double tau) {
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (static_cast<double>(probs[i]) >= tau) return static_cast<int>(i);
  }
  return std::nullopt;
}
}  // namespace

std::optional<int> find_anchor(std::span<const float> completion, double tau) {
  return first_at_least(completion, tau);
}

std::optional<int> find_anchor(std::span<const double> completion, double tau) {
  return first_at_least(completion, tau);
}

ProgressCurve reconstruct(std::span<const int> deltas, std::optional<int> anchor,
                          double delta_bar, double p_start) {
  ProgressCurve c;
  c.raw_cumsum.assign(deltas.size() + 1, 0);
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const int d = deltas[i];
    if (d < -1 || d > 1) throw ValidationError("delta outside {-1, 0, 1}");
    c.raw_cumsum[i + 1] = c.raw_cumsum[i] + d;
  }
  c.P.resize(c.raw_cumsum.size());
  if (anchor) {
    if (*anchor < 0 || static_cast<std::size_t>(*anchor) >= c.raw_cumsum.size()) {
      throw ValidationError("anchor index out of range");
    }
    const int denom = c.raw_cumsum[static_cast<std::size_t>(*anchor)];
    if (denom <= 0) {
      throw InconsistentLabelsError("cumulative progress at the anchor is " +
                                    std::to_string(denom) + ", expected > 0");
    }
    c.anchored = true;
    c.anchor_index = anchor;
    for (std::size_t t = 0; t < c.P.size(); ++t) {
      c.P[t] = std::clamp(static_cast<double>(c.raw_cumsum[t]) / denom, 0.0, 1.0);
    }
  } else {
    for (std::size_t t = 0; t < c.P.size(); ++t) {
      c.P[t] = std::clamp(p_start + delta_bar * c.raw_cumsum[t], 0.0, 1.0);
    }
  }
  return c;
}

double estimate_delta_bar(const std::vector<ProgressCurve>& curves) {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : curves) {
    if (!c.anchored) continue;
    sum += 1.0 / c.raw_cumsum[static_cast<std::size_t>(*c.anchor_index)];
    ++n;
  }
  if (n == 0) throw ValidationError("no anchored curves to estimate delta_bar from");
  return sum / n;
}

double eval_mse(const ProgressCurve& curve, const sim::Episode& ep) {
  const int k = curve.stride;
  if (curve.P.size() != static_cast<std::size_t>((ep.length() - 1) / k + 1)) {
    throw ValidationError("curve length does not match episode '" + ep.id + "'");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < curve.P.size(); ++i) {
    const auto& gt = ep.frames[i * static_cast<std::size_t>(k)].gt_progress;
    if (!gt) throw ValidationError("episode '" + ep.id + "' lacks gt progress");
    const double e = curve.P[i] - std::clamp(*gt, 0.0, 1.0);
    s += e * e;
  }
  return s / static_cast<double>(curve.P.size());
}

std::vector<double> upsample(const ProgressCurve& curve, int length) {
  const int k = curve.stride;
  std::vector<double> out(static_cast<std::size_t>(length));
  const int last = static_cast<int>(curve.P.size()) - 1;
  for (int t = 0; t < length; ++t) {
    const int i = t / k;
    if (i >= last) {
      out[static_cast<std::size_t>(t)] = curve.P[static_cast<std::size_t>(last)];
      continue;
    }
    const double frac = static_cast<double>(t - i * k) / k;
    const double a = curve.P[static_cast<std::size_t>(i)];
    const double b = curve.P[static_cast<std::size_t>(i + 1)];
    out[static_cast<std::size_t>(t)] = a + (b - a) * frac;
  }
  return out;
}

std::vector<int> oracle_deltas(const sim::Episode& ep, int k, double theta_stag) {
  std::vector<int> out;
  for (const auto& l : lab::label_episode_oracle(ep, k, theta_stag)) out.push_back(l.y);
  return out;
}

std::optional<int> gt_anchor(const sim::Episode& ep, int k, double eps) {
  for (int t = 0, i = 0; t < ep.length(); t += k, ++i) {
    const auto& gt = ep.frames[static_cast<std::size_t>(t)].gt_progress;
    if (gt && *gt >= 1.0 - eps) return i;
  }
  return std::nullopt;
}

ProgressCurve oracle_curve(const sim::Episode& ep, int k, double theta_stag, double eps,
                           double delta_bar) {
  const auto anchor = gt_anchor(ep, k, eps);
  const auto& g0 = ep.frames.at(0).gt_progress;
  if (!g0) throw ValidationError("episode '" + ep.id + "' lacks gt progress");
  auto c = reconstruct(oracle_deltas(ep, k, theta_stag), anchor, delta_bar,
                       anchor ? 0.0 : std::clamp(*g0, 0.0, 1.0));
  c.episode_id = ep.id;
  c.stride = k;
  return c;
}

double oracle_delta_bar(const std::vector<sim::Episode>& episodes, int k, double theta_stag,
                        double eps) {
  std::vector<ProgressCurve> anchored;
  for (const auto& ep : episodes) {
    if (gt_anchor(ep, k, eps)) anchored.push_back(oracle_curve(ep, k, theta_stag, eps, 0.0));
  }
  return estimate_delta_bar(anchored);
}

SuccessId eval_success_id(const std::vector<std::vector<float>>& completion,
                          const std::vector<sim::Outcome>& outcomes, double tau) {
  if (completion.size() != outcomes.size()) {
    throw ValidationError("eval_success_id: completion and outcome counts differ");
  }
  SuccessId r;
  for (std::size_t e = 0; e < completion.size(); ++e) {
    const bool predicted = find_anchor(std::span<const float>(completion[e]), tau).has_value();
    if (outcomes[e] == sim::Outcome::success) {
      ++r.se_total;
      r.se_correct += predicted ? 1 : 0;
    } else if (outcomes[e] == sim::Outcome::failure) {
      ++r.fe_total;
      r.fe_correct += predicted ? 0 : 1;
    }
  }
  return r;
}

std::string curve_csv(const ProgressCurve& curve, const sim::Episode& ep,
                      std::span<const float> completion) {
  const auto full = upsample(curve, ep.length());
  std::ostringstream out;
  out.precision(9);
  out << "frame,P_pred,P_gt,completion_prob\n";
  for (int t = 0; t < ep.length(); ++t) {
    out << t << ',' << full[static_cast<std::size_t>(t)] << ',';
    const auto& gt = ep.frames[static_cast<std::size_t>(t)].gt_progress;
    if (gt) out << *gt;
    out << ',';
    if (t % curve.stride == 0) {
      const auto i = static_cast<std::size_t>(t / curve.stride);
      if (i < completion.size()) out << completion[i];
    }
    out << '\n';
  }
  return out.str();
}

ProgressCurve curve_from_scores(const model::EpisodeScores& scores, const std::string& episode_id,
                                int stride, double tau_succ, double delta_bar, double p_start) {
  auto anchor = find_anchor(std::span<const float>(scores.completion), tau_succ);
  if (anchor) {
    int cum = 0;
    for (int i = 0; i < *anchor; ++i) cum += scores.deltas[static_cast<std::size_t>(i)];
    if (cum <= 0) anchor.reset();
  }
  auto curve = reconstruct(scores.deltas, anchor, delta_bar, p_start);
  curve.episode_id = episode_id;
  curve.stride = stride;
  return curve;
}

}  // namespace arm::recon
