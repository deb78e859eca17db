#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfp/data.hpp"
#include "lfp/lfp.hpp"
#include "lfp/network.hpp"

namespace lfp {

enum class LossKind { kSoftmaxCe, kSigmoidCe, kMse };

std::string loss_name(LossKind kind);
LossKind loss_from_name(const std::string& name);

using GradDelta = ParamDelta;

// Returns (batch-mean loss, per-sample dL/do).
std::pair<double, Tensor> loss_and_grad(LossKind kind, const Tensor& outputs,
                                        const Tensor& targets);

// Smooth stand-ins for the Heaviside derivative, used only by the gradient
// baseline; the reward path never needs them.
enum class SurrogateKind { kFastSigmoid, kArctanShift };

// fast_sigmoid: d/dx [x / (1 + 25|x|)] = 1 / (1 + 25|x|)^2
// arctan_shift: 1 / (1 + (pi x)^2)
double surrogate_derivative(SurrogateKind kind, double x);

struct BackwardOptions {
  const SurrogateKind* surrogate = nullptr;  // null: Heaviside derivative is 0
  // dL/dU carries per LIF layer for backprop through time; updated in place.
  std::vector<Tensor>* lif_carry = nullptr;
  // When set, records dL/d(input) of every layer.
  std::vector<Tensor>* activation_grads = nullptr;
};

// Exact chain-rule gradients for every supported layer; batch-summed into
// `acc`, returns the batch size.
int grad_backward_acc(const Network& net, const ForwardTape& tape,
                      const Tensor& dL_dout, GradDelta& acc,
                      const BackwardOptions& opts = {});

// Convenience wrapper returning batch-mean gradients.
GradDelta grad_backward(const Network& net, const ForwardTape& tape,
                        const Tensor& dL_dout,
                        const BackwardOptions& opts = {});

// Descent step mirroring the reward update's momentum blend, subtracting:
// d = alpha d_old + (1-alpha) grad ; w <- w - lr * d.
void sgd_update(Network& net, const GradDelta& grad, GradDelta& momentum,
                double lr, double alpha, double max_norm_clip = 0.0);

struct Theorem1Report {
  bool pass = false;
  double max_rel_err = 0.0;         // delta identity d_lfp = -|w| dL/dw
  double hidden_max_rel_err = 0.0;  // hidden-layer reward identity
  std::vector<std::string> notes;
};

// Dual-path check: LFP-0 with reward o*(-dL/do) against -|w|*dL/dw, plus the
// hidden-layer identity r_j = a_j sum_c (do_c/da_j)(r_c/o_c) obtained from
// per-output backward passes. Requires ReLU/Linear activations, linear
// output, no BatchNorm.
Theorem1Report theorem1_check(Network& net, const Tensor& x, const Tensor& y,
                              LossKind loss, double tolerance);

// Gradient-descent twin of LfpTrainer.
class GradTrainer {
 public:
  GradTrainer(LossKind loss, double lr, double momentum, double noise_std = 0.0,
              double max_norm_clip = 0.0);

  EpochMetrics train_epoch(Network& net, const Dataset& data, int batch_size,
                           std::uint64_t epoch_seed);

 private:
  LossKind loss_;
  double lr_, momentum_alpha_, noise_std_, clip_;
  GradDelta momentum_;
  bool momentum_ready_ = false;
};

}  // namespace lfp
