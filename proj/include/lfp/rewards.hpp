#pragma once

#include <string>
#include <vector>

#include "lfp/tensor.hpp"

namespace lfp {

// Initial per-output-neuron reward functions. The first four are the
// multiclass catalog; sign(0) = 1 throughout.
enum class RewardKind {
  kHitSign,               // sign(o_c) * 1(y_c = 1)
  kFalsePositivePenalty,  // -1(exists c'. y_c'=1 and o_c > o_c') * sign(o_c)
  kSoftmaxCe,             // o_c * (y_c - softmax(o)_c)
  kSigmoidCe,             // o_c * (y_c - sigmoid(o_c))
  kRegressionLinear,      // (y - o) * sign(o)
  kRegressionCubic,       // (y - o)^3 * sign(o)
  kSnnRate,               // spike-count reward matrix, see snn_reward
};

std::string reward_name(RewardKind kind);
RewardKind reward_from_name(const std::string& name);

// true when the kind lacks a convergence mechanism (trains but does not
// settle; the CLI warns on selection)
bool reward_is_unbounded(RewardKind kind);

inline double sign_of(double x) { return x < 0.0 ? -1.0 : 1.0; }

double sigmoid(double x);

// Row-wise softmax with max-shift, [B x C].
Tensor softmax_rows(const Tensor& o);

// Classification rewards, one value per output neuron per sample.
// outputs [B x C], targets one-hot [B x C].
Tensor initial_reward(RewardKind kind, const Tensor& outputs, const Tensor& targets);

// r_c = o_c * (-dL/do_c); with a matching loss this reproduces the
// catalog rewards bitwise.
Tensor reward_from_loss(const Tensor& loss_grad, const Tensor& outputs);

// Regression rewards over arbitrary output width.
Tensor regression_reward(RewardKind kind, const Tensor& outputs, const Tensor& targets);

// Per-step spike-train reward for one sample. spikes [n x C] binary,
// 0 <= true_class < C. Rows are constant within a class column:
//   r_{c,i} = 1 - sigmoid(sum_i o_{c,i} - n/2)        for c = true_class
//   r_{c,i} = sigmoid(sum_i |o_{c,i} - 1| - n/2) - 1   otherwise
Tensor snn_reward(const Tensor& spikes, int true_class, int n);

// Batched variant: spikes [n x B x C], one label per sample -> [n x B x C].
Tensor snn_reward_batch(const Tensor& spikes, const std::vector<int>& labels);

}  // namespace lfp
