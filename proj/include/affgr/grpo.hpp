#pragma once

// Group-relative policy optimization arithmetic. Everything here works on
// sequence-level log-probabilities; token sequences are summed beforehand.

#include <affgr/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace affgr {

struct GrpoConfig {
  double epsilon = 0.2;
  double beta = 0.04;
  double std_floor = 1e-8;
  int group_size = 8;
};

struct RolloutRecord {
  std::string group_id;
  std::string rollout_id;
  double reward = 0.0;
  double logprob_current = 0.0;
  double logprob_old = 0.0;
  double logprob_ref = 0.0;
};

struct RolloutDiagnostics {
  double advantage = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double kl = 0.0;
  double term = 0.0;  // min(s1*A, s2*A)
};

struct GrpoResult {
  double objective = 0.0;
  double mean_surrogate = 0.0;
  double mean_kl = 0.0;
  std::vector<RolloutDiagnostics> rollouts;
};

/// (R_i - mean) / max(std, floor) with the population standard deviation.
inline std::vector<double> group_advantages(std::span<const double> rewards,
                                            const GrpoConfig& cfg = {}) {
  if (rewards.empty()) throw Error(ErrorCode::EmptyGroup, "no rewards in group");
  const double n = static_cast<double>(rewards.size());
  std::vector<double> out(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    return out;
  }
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  // second pass corrects the rounding error of the first
  double correction = 0.0;
  for (double r : rewards) correction += r - mean;
  mean += correction / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double denom = std::max(std::sqrt(var), cfg.std_floor);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / denom;
  return out;
}

/// rho - log(rho) - 1 with rho = pi_ref / pi_current, evaluated as
/// expm1(delta) - delta for accuracy near rho = 1.
inline double kl_penalty(double logprob_current, double logprob_ref) {
  const double delta = logprob_ref - logprob_current;
  if (!std::isfinite(delta)) throw Error(ErrorCode::Overflow, "non-finite log-probability ratio");
  if (delta > std::log(std::numeric_limits<double>::max())) {
    throw Error(ErrorCode::Overflow, "reference/current probability ratio overflows");
  }
  return std::max(0.0, std::expm1(delta) - delta);
}

inline double clip_ratio(double s1, double epsilon) {
  return std::clamp(s1, 1.0 - epsilon, 1.0 + epsilon);
}

inline double clipped_term(double s1, double advantage, const GrpoConfig& cfg = {}) {
  const double s2 = clip_ratio(s1, cfg.epsilon);
  return std::min(s1 * advantage, s2 * advantage);
}

inline GrpoResult grpo_objective(std::span<const RolloutRecord> group, const GrpoConfig& cfg = {}) {
  if (group.empty()) throw Error(ErrorCode::EmptyGroup, "no rollouts in group");
  for (const auto& r : group) {
    if (r.group_id != group.front().group_id) {
      throw Error(ErrorCode::MismatchedGroup,
                  "group '" + group.front().group_id + "' contains '" + r.group_id + "'");
    }
  }
  std::vector<double> rewards;
  rewards.reserve(group.size());
  for (const auto& r : group) rewards.push_back(r.reward);
  const auto adv = group_advantages(rewards, cfg);

  GrpoResult out;
  out.rollouts.reserve(group.size());
  double surrogate = 0.0, kl = 0.0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    RolloutDiagnostics d;
    d.advantage = adv[i];
    d.s1 = std::exp(group[i].logprob_current - group[i].logprob_old);
    d.s2 = clip_ratio(d.s1, cfg.epsilon);
    d.term = std::min(d.s1 * d.advantage, d.s2 * d.advantage);
    d.kl = kl_penalty(group[i].logprob_current, group[i].logprob_ref);
    surrogate += d.term;
    kl += d.kl;
    out.rollouts.push_back(d);
  }
  const double g = static_cast<double>(group.size());
  out.mean_surrogate = surrogate / g;
  out.mean_kl = kl / g;
  out.objective = out.mean_surrogate - cfg.beta * out.mean_kl;
  return out;
}

struct TokenSequenceLikelihood {
  std::vector<double> reasoning_logprobs;
  std::vector<double> answer_logprobs;
};

/// Negative log-likelihood of reasoning followed by answer tokens.
inline double sft_nll(const TokenSequenceLikelihood& seq) {
  double sum = 0.0;
  for (const auto* part : {&seq.reasoning_logprobs, &seq.answer_logprobs}) {
    for (double lp : *part) {
      if (!(lp <= 0.0)) {
        throw Error(ErrorCode::PositiveLogProb, "log-probability " + std::to_string(lp) + " > 0");
      }
      sum += lp;
    }
  }
  return -sum;
}

/// Frozen base weight plus a rank-r additive update up * down^T.
struct LowRankAdapter {
  Eigen::MatrixXd base;       // d x k
  Eigen::MatrixXd up;         // d x r
  Eigen::MatrixXd down;       // k x r

  Eigen::Index rank() const { return up.cols(); }
};

inline void check_adapter(const LowRankAdapter& a) {
  if (a.up.rows() != a.base.rows() || a.down.rows() != a.base.cols() ||
      a.up.cols() != a.down.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "adapter shapes are not conformable");
  }
}

/// h = W0 x + up (down^T x), never materializing the d x k update.
inline Eigen::VectorXd lowrank_apply(const LowRankAdapter& a, const Eigen::VectorXd& x) {
  check_adapter(a);
  if (x.size() != a.base.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "input has " + std::to_string(x.size()) +
                                                  " entries, expected " +
                                                  std::to_string(a.base.cols()));
  }
  return a.base * x + a.up * (a.down.transpose() * x);
}

/// Column-wise application to a k x n batch.
inline Eigen::MatrixXd lowrank_apply(const LowRankAdapter& a, const Eigen::MatrixXd& xs) {
  check_adapter(a);
  if (xs.rows() != a.base.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "input batch has wrong row count");
  }
  return a.base * xs + a.up * (a.down.transpose() * xs);
}

}  // namespace affgr
