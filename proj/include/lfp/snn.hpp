#pragma once

#include <cstdint>
#include <vector>

#include "lfp/gradbase.hpp"
#include "lfp/lfp.hpp"
#include "lfp/network.hpp"

namespace lfp {

struct LifConfig {
  double beta = 0.9;   // membrane decay in (0,1]
  double theta = 1.0;  // firing threshold
};

// Membrane potentials and last spikes per layer, index-aligned with the
// network; entries are populated at LIF layers only.
struct LifState {
  std::vector<LifLayerState> layers;
};

LifState make_lif_state(const Network& net);

// One membrane update on a single layer's state:
// U[t] = beta U[t-1] + drive - theta H(U[t-1] - theta); spike = H(U[t] - theta).
Tensor lif_step(const LifConfig& cfg, LifLayerState& state, const Tensor& drive);

// Static input repeated n times: [n x sample shape...].
Tensor constant_encode(const Tensor& x, int n);

struct SnnForwardResult {
  Tensor spikes;                   // [n x B x C]
  std::vector<ForwardTape> tapes;  // one instantaneous graph per step
};

// Steps the network n times from zero state, carrying membranes across
// steps. encoded is [n x B x sample shape].
SnnForwardResult snn_forward(Network& net, const Tensor& encoded, int n);

// argmax of per-class spike counts; ties go to the lowest class index.
int snn_predict(const Tensor& spikes_nc);
std::vector<int> snn_predict_batch(const Tensor& spikes_nbc);

// Per-step reward decomposition: each step's instantaneous graph is walked
// with the step's reward row; the share assigned to the membrane history
// branch is discarded. Deltas are summed over steps, averaged over the batch.
ParamDelta snn_lfp_step(const Network& net, const std::vector<ForwardTape>& tapes,
                        const Tensor& rewards_nbc, const LfpConfig& cfg,
                        double* discarded = nullptr);

// Surrogate-gradient baseline: backprop through time across all n steps with
// the surrogate standing in for the spike derivative. dL_dspikes is the
// per-step output gradient [n x B x C]; returns batch-mean gradients.
GradDelta snn_surrogate_backward(const Network& net,
                                 const std::vector<ForwardTape>& tapes,
                                 const Tensor& dL_dspikes, SurrogateKind surrogate);

}  // namespace lfp
