#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lfp/tensor.hpp"

namespace lfp {

enum class ActKind {
  kLinear,
  kRelu,
  kLeakyRelu,
  kSilu,
  kElu,
  kTanh,
  kSigmoid,
  kHeaviside,
};

// Every kind except Sigmoid is sign-preserving (x>0 => phi(x)>=0,
// x<0 => phi(x)<=0), which the reward decomposition relies on.
struct Activation {
  ActKind kind = ActKind::kLinear;
  double param = 0.0;  // LeakyReLU slope or ELU alpha
};

Tensor apply_activation(const Activation& act, const Tensor& z);
double activation_value(const Activation& act, double z);
std::string activation_name(ActKind kind);
ActKind activation_from_name(const std::string& name);

enum class LayerKind {
  kDense,
  kConv2d,
  kMaxPool2d,
  kBatchNorm,
  kDropout,
  kFlatten,
  kActivation,
  kResidualSum,
  kLif,
};

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  int in = 0, out = 0;
  bool bias = true;
  int c_in = 0, c_out = 0, k = 0, stride = 1, pad = 0;
  int features = 0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  double drop_p = 0.0;
  Activation act;
  double lif_beta = 0.9, lif_theta = 1.0;
  std::vector<LayerSpec> branch;  // residual-sum side path

  static LayerSpec dense(int in, int out, bool bias = true);
  static LayerSpec conv2d(int c_in, int c_out, int k, int stride, int pad,
                          bool bias = true);
  static LayerSpec maxpool2d(int k, int stride);
  static LayerSpec batchnorm(int features, double eps = 1e-5,
                             double momentum = 0.1);
  static LayerSpec dropout(double p);
  static LayerSpec flatten();
  static LayerSpec activation(ActKind kind, double param = 0.0);
  static LayerSpec residual_sum(std::vector<LayerSpec> branch);
  static LayerSpec lif(double beta, double theta);
};

struct LayerParams {
  Tensor w, b;                       // dense / conv
  Tensor gamma, beta;                // batchnorm scale / shift
  Tensor running_mean, running_var;  // batchnorm eval statistics
  std::vector<LayerParams> branch;
};

struct Network {
  std::vector<LayerSpec> layers;
  std::vector<LayerParams> params;  // index-aligned with layers
};

Network make_network(std::vector<LayerSpec> layers);

// Weights uniform in +-sqrt(6/fan_in), biases zero, gamma=1, beta=0;
// bit-identical for equal seeds.
void init_params(Network& net, std::uint64_t seed);

// Mirrors the parameter tensors of a Network; used for update deltas,
// momentum buffers and gradients alike.
struct LayerDelta {
  Tensor w, b, gamma, beta;
  std::vector<LayerDelta> branch;
};

struct ParamDelta {
  std::vector<LayerDelta> layers;
};

ParamDelta zero_delta_like(const Network& net);

// Fixed-order traversal over (param tensor, delta tensor) pairs.
void visit_params(Network& net, ParamDelta& delta,
                  const std::function<void(Tensor&, Tensor&)>& fn);
void visit_delta(ParamDelta& delta, const std::function<void(Tensor&)>& fn);
void visit_delta_pair(ParamDelta& a, const ParamDelta& b,
                      const std::function<void(Tensor&, const Tensor&)>& fn);

// Per-layer record of everything the modified backward passes need.
struct LayerTape {
  Tensor input;         // a^[l]
  Tensor pre_act;       // z^[l+1] (dense/conv); drive WX[t] for LIF
  Tensor output;        // a^[l+1] as consumed by the next layer
  Tensor dropout_mask;  // 0/1 entries
  std::vector<PoolIndex> pool;  // one per sample
  Tensor bn_mean, bn_var;       // statistics used in this pass
  Tensor bn_norm;               // normalized input (a tilde)
  Tensor noise;                 // realized activation noise
  double dead_fraction = -1.0;  // batch-dead neurons at activation layers
  Tensor lif_history;           // beta*U[t-1] - theta*spike[t-1]
  Tensor lif_potential;         // U[t]
  std::vector<LayerTape> branch;
  Tensor branch_out;
};

struct ForwardTape {
  std::vector<LayerTape> layers;
  Tensor output;
  bool train = false;
};

enum class Mode { kTrain, kEval };

struct ForwardOptions {
  Mode mode = Mode::kEval;
  double noise_std = 0.0;  // zero-mean Gaussian on hidden post-activations
  std::uint64_t rng_seed = 0;
};

// Membrane state carried across SNN steps; entries used at kLif layers only.
struct LifLayerState {
  Tensor membrane;
  Tensor last_spike;
};

// Applies each layer in order on a batch (leading dim = samples). In train
// mode dropout uses inverted 1/(1-p) scaling and hidden post-activations
// receive additive Gaussian noise; eval mode applies neither. LIF layers
// step from zero state unless lif_state is supplied.
std::pair<Tensor, ForwardTape> forward(
    Network& net, const Tensor& x, const ForwardOptions& opts,
    std::vector<LifLayerState>* lif_state = nullptr);

}  // namespace lfp
