#pragma once

#include <cstdint>
#include <vector>

#include "lfp/data.hpp"
#include "lfp/network.hpp"
#include "lfp/rewards.hpp"

namespace lfp {

// Propagation rule. Zero is the unstabilized form and refuses denominators
// near zero; Epsilon adds the stabilizer with the denominator's sign.
enum class LfpRule { kZero, kEpsilon };

struct LfpConfig {
  LfpRule rule = LfpRule::kEpsilon;
  double epsilon = 1e-6;
  double lr = 0.01;
  double momentum = 0.0;        // alpha in [0,1]
  double max_norm_clip = 0.0;   // 0 disables clipping
  bool normalize_between_layers = false;
};

// Per-layer neuron rewards produced by the backward pass. neuron_rewards[l]
// is the reward arriving at the input of layer l; the reward at the network
// output is the caller's r_out.
struct RewardTape {
  std::vector<Tensor> neuron_rewards;
  double discarded = 0.0;  // reward share dropped at LIF history branches
};

// Denominator with stabilizer; sign(0) = 1. Throws for rule Zero when the
// denominator is smaller than 1e-12 in magnitude.
double stabilize(double z, LfpRule rule, double epsilon);

struct DenseRuleResult {
  Tensor r_in;  // [B x in]
  Tensor d_w;   // summed over the batch
  Tensor d_b;
};

// r_ij = z_ij / (z_j + sign(z_j) eps) * r_j ; d_w = |w| a_i / (...) * r_j ;
// the bias acts as a connection with constant input 1.
DenseRuleResult dense_rule(const Tensor& w, const Tensor& b, const Tensor& a_in,
                           const Tensor& z, const Tensor& r_out, LfpRule rule,
                           double epsilon);

struct ConvRuleResult {
  Tensor r_in;
  Tensor d_k;
  Tensor d_b;
};

// Dense rule applied per sliding-window position under weight sharing;
// kernel deltas sum over all positions.
ConvRuleResult conv_rule(const Tensor& kernels, const Tensor& bias,
                         const Tensor& a_in, const Tensor& z, const Tensor& r_out,
                         int stride, int pad, LfpRule rule, double epsilon);

struct BatchNormRuleResult {
  Tensor r_in;
  Tensor d_gamma;
  Tensor d_beta;
};

// Approximative rule through batch normalization; a zero mean is assumed
// for the backward pass while d_gamma uses the true normalized input.
BatchNormRuleResult batchnorm_rule(const Tensor& gamma, const Tensor& beta,
                                   const Tensor& a_in, const Tensor& a_norm,
                                   const Tensor& a_out, const Tensor& var,
                                   double bn_eps, const Tensor& r_out,
                                   LfpRule rule, double epsilon);

// Proportional split of the reward across the two summed paths.
std::pair<Tensor, Tensor> skip_sum_rule(const Tensor& a_main, const Tensor& a_branch,
                                        const Tensor& a_out, const Tensor& r_out,
                                        LfpRule rule, double epsilon);

// Walks the tape in reverse, decomposing r_out into neuron rewards and
// per-parameter deltas (mean over the batch).
std::pair<ParamDelta, RewardTape> lfp_backward(const Network& net,
                                               const ForwardTape& tape,
                                               const Tensor& r_out,
                                               const LfpConfig& cfg);

// Accumulating variant: adds batch-summed deltas into `acc` and returns the
// batch size, so callers can average once over several calls.
int lfp_backward_acc(const Network& net, const ForwardTape& tape,
                     const Tensor& r_out, const LfpConfig& cfg, ParamDelta& acc,
                     RewardTape* reward_tape);

// d = alpha d_old + (1-alpha) d_lfp ; w <- w + lr * d (reward ascent).
// Momentum buffers are replaced by the blended d; the optional global-norm
// clip scales the applied step only.
void apply_update(Network& net, const ParamDelta& d_lfp, ParamDelta& momentum,
                  const LfpConfig& cfg);

struct EpochMetrics {
  double accuracy = 0.0;
  double weighted_accuracy = 0.0;
  double criterion = 0.0;  // mean initial reward (or mean loss for gradient runs)
  double dead_fraction = 0.0;
};

// One pass over the dataset: forward(train) -> initial_reward ->
// lfp_backward -> apply_update per batch. Momentum buffers persist across
// epochs inside the trainer.
class LfpTrainer {
 public:
  LfpTrainer(LfpConfig cfg, RewardKind reward, double noise_std = 0.0);

  EpochMetrics train_epoch(Network& net, const Dataset& data, int batch_size,
                           std::uint64_t epoch_seed);

  const LfpConfig& config() const { return cfg_; }

 private:
  LfpConfig cfg_;
  RewardKind reward_;
  double noise_std_;
  ParamDelta momentum_;
  bool momentum_ready_ = false;
};

struct EvalMetrics {
  double accuracy = 0.0;
  double weighted_accuracy = 0.0;
};

EvalMetrics evaluate(Network& net, const Dataset& data, int batch_size = 256);

}  // namespace lfp
