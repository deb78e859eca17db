#include "lfp/rewards.hpp"

#include <algorithm>
#include <cmath>

namespace lfp {

std::string reward_name(RewardKind kind) {
  switch (kind) {
    case RewardKind::kHitSign: return "hit_sign";
    case RewardKind::kFalsePositivePenalty: return "false_positive";
    case RewardKind::kSoftmaxCe: return "softmax_ce";
    case RewardKind::kSigmoidCe: return "sigmoid_ce";
    case RewardKind::kRegressionLinear: return "reg_linear";
    case RewardKind::kRegressionCubic: return "reg_cubic";
    case RewardKind::kSnnRate: return "snn_rate";
  }
  return "softmax_ce";
}

RewardKind reward_from_name(const std::string& name) {
  if (name == "hit_sign") return RewardKind::kHitSign;
  if (name == "false_positive") return RewardKind::kFalsePositivePenalty;
  if (name == "softmax_ce") return RewardKind::kSoftmaxCe;
  if (name == "sigmoid_ce") return RewardKind::kSigmoidCe;
  if (name == "reg_linear") return RewardKind::kRegressionLinear;
  if (name == "reg_cubic") return RewardKind::kRegressionCubic;
  if (name == "snn_rate") return RewardKind::kSnnRate;
  throw std::runtime_error("unknown reward kind: " + name);
}

bool reward_is_unbounded(RewardKind kind) {
  return kind == RewardKind::kHitSign || kind == RewardKind::kFalsePositivePenalty;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor softmax_rows(const Tensor& o) {
  check(o.rank() == 2, "softmax: expected [batch x classes]");
  int b = o.dim(0), c = o.dim(1);
  Tensor sm = Tensor::zeros(o.shape);
  for (int i = 0; i < b; ++i) {
    double mx = o.at2(i, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, o.at2(i, j));
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      double e = std::exp(o.at2(i, j) - mx);
      sm.at2(i, j) = e;
      denom += e;
    }
    for (int j = 0; j < c; ++j) sm.at2(i, j) /= denom;
  }
  return sm;
}

namespace {

void require_one_hot(const Tensor& y) {
  check(y.rank() == 2, "rewards: targets must be [batch x classes]");
  for (int i = 0; i < y.dim(0); ++i) {
    int ones = 0;
    for (int j = 0; j < y.dim(1); ++j) {
      double v = y.at2(i, j);
      check(v == 0.0 || v == 1.0, "rewards: targets must be one-hot");
      if (v == 1.0) ++ones;
    }
    check(ones == 1, "rewards: targets must be one-hot");
  }
}

}  // namespace

Tensor initial_reward(RewardKind kind, const Tensor& outputs, const Tensor& targets) {
  check(outputs.rank() == 2, "initial_reward: outputs must be [batch x classes]");
  check(outputs.same_shape(targets), "initial_reward: shape mismatch");
  require_one_hot(targets);
  int b = outputs.dim(0), c = outputs.dim(1);
  Tensor r = Tensor::zeros(outputs.shape);
  switch (kind) {
    case RewardKind::kHitSign:
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < c; ++j)
          r.at2(i, j) = targets.at2(i, j) == 1.0 ? sign_of(outputs.at2(i, j)) : 0.0;
      break;
    case RewardKind::kFalsePositivePenalty: {
      check(c >= 2, "false_positive reward needs at least two classes");
      for (int i = 0; i < b; ++i) {
        double true_logit = 0.0;
        for (int j = 0; j < c; ++j)
          if (targets.at2(i, j) == 1.0) true_logit = outputs.at2(i, j);
        for (int j = 0; j < c; ++j) {
          bool false_positive = outputs.at2(i, j) > true_logit;
          r.at2(i, j) = false_positive ? -sign_of(outputs.at2(i, j)) : 0.0;
        }
      }
      break;
    }
    case RewardKind::kSoftmaxCe: {
      Tensor sm = softmax_rows(outputs);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < c; ++j)
          r.at2(i, j) = outputs.at2(i, j) * (targets.at2(i, j) - sm.at2(i, j));
      break;
    }
    case RewardKind::kSigmoidCe:
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < c; ++j)
          r.at2(i, j) =
              outputs.at2(i, j) * (targets.at2(i, j) - sigmoid(outputs.at2(i, j)));
      break;
    default:
      throw std::runtime_error("initial_reward: not a classification reward");
  }
  ensure_finite(r, "initial_reward");
  return r;
}

Tensor reward_from_loss(const Tensor& loss_grad, const Tensor& outputs) {
  check(loss_grad.same_shape(outputs), "reward_from_loss: shape mismatch");
  Tensor r = Tensor::zeros(outputs.shape);
  for (std::int64_t i = 0; i < outputs.numel(); ++i)
    r[i] = outputs[i] * (-loss_grad[i]);
  return r;
}

Tensor regression_reward(RewardKind kind, const Tensor& outputs, const Tensor& targets) {
  check(outputs.same_shape(targets), "regression_reward: shape mismatch");
  check(kind == RewardKind::kRegressionLinear || kind == RewardKind::kRegressionCubic,
        "regression_reward: wrong kind");
  Tensor r = Tensor::zeros(outputs.shape);
  for (std::int64_t i = 0; i < outputs.numel(); ++i) {
    double diff = targets[i] - outputs[i];
    if (kind == RewardKind::kRegressionCubic) diff = diff * diff * diff;
    r[i] = diff * sign_of(outputs[i]);
  }
  return r;
}

Tensor snn_reward(const Tensor& spikes, int true_class, int n) {
  check(spikes.rank() == 2, "snn_reward: spikes must be [n x classes]");
  check(spikes.dim(0) == n, "snn_reward: step count mismatch");
  int c = spikes.dim(1);
  check(true_class >= 0 && true_class < c, "snn_reward: class out of range");
  for (double v : spikes.data)
    check(v == 0.0 || v == 1.0, "snn_reward: spikes must be binary");

  Tensor r = Tensor::zeros(spikes.shape);
  for (int j = 0; j < c; ++j) {
    double count = 0.0;
    for (int t = 0; t < n; ++t) count += spikes.at2(t, j);
    double value;
    if (j == true_class)
      value = 1.0 - sigmoid(count - n / 2.0);
    else
      value = sigmoid((n - count) - n / 2.0) - 1.0;  // sum_i |o - 1| = n - count
    for (int t = 0; t < n; ++t) r.at2(t, j) = value;
  }
  return r;
}

Tensor snn_reward_batch(const Tensor& spikes, const std::vector<int>& labels) {
  check(spikes.rank() == 3, "snn_reward_batch: spikes must be [n x batch x classes]");
  int n = spikes.dim(0), b = spikes.dim(1), c = spikes.dim(2);
  check(static_cast<int>(labels.size()) == b, "snn_reward_batch: label count mismatch");
  Tensor r = Tensor::zeros(spikes.shape);
  for (int i = 0; i < b; ++i) {
    Tensor per = Tensor::zeros({n, c});
    for (int t = 0; t < n; ++t)
      for (int j = 0; j < c; ++j)
        per.at2(t, j) = spikes.data[(static_cast<size_t>(t) * b + i) * c + j];
    Tensor ri = snn_reward(per, labels[static_cast<size_t>(i)], n);
    for (int t = 0; t < n; ++t)
      for (int j = 0; j < c; ++j)
        r.data[(static_cast<size_t>(t) * b + i) * c + j] = ri.at2(t, j);
  }
  return r;
}

}  // namespace lfp
