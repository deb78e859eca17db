#include "lfp/snn.hpp"

#include <cmath>
#include <cstring>

namespace lfp {

LifState make_lif_state(const Network& net) {
  LifState s;
  s.layers.resize(net.layers.size());
  return s;
}

Tensor lif_step(const LifConfig& cfg, LifLayerState& state, const Tensor& drive) {
  check(cfg.beta > 0.0 && cfg.beta <= 1.0, "lif_step: decay must be in (0,1]");
  Tensor membrane_prev = state.membrane.numel() > 0 ? state.membrane
                                                    : Tensor::zeros(drive.shape);
  check(membrane_prev.same_shape(drive), "lif_step: state shape mismatch");
  Tensor potential = Tensor::zeros(drive.shape);
  Tensor spike = Tensor::zeros(drive.shape);
  for (std::int64_t i = 0; i < drive.numel(); ++i) {
    double reset = membrane_prev[i] > cfg.theta ? cfg.theta : 0.0;
    potential[i] = cfg.beta * membrane_prev[i] + drive[i] - reset;
    spike[i] = potential[i] > cfg.theta ? 1.0 : 0.0;
  }
  state.membrane = potential;
  state.last_spike = spike;
  return spike;
}

Tensor constant_encode(const Tensor& x, int n) {
  check(n >= 1, "constant_encode: n must be >= 1");
  std::vector<int> shape;
  shape.push_back(n);
  for (int d : x.shape) shape.push_back(d);
  Tensor out = Tensor::zeros(shape);
  for (int t = 0; t < n; ++t)
    std::memcpy(out.data.data() + static_cast<size_t>(t) * x.numel(),
                x.data.data(), static_cast<size_t>(x.numel()) * sizeof(double));
  return out;
}

namespace {

Tensor frame(const Tensor& encoded, int t) {
  std::vector<int> shape(encoded.shape.begin() + 1, encoded.shape.end());
  std::int64_t n = Tensor::numel_of(shape);
  Tensor out = Tensor::zeros(shape);
  std::memcpy(out.data.data(), encoded.data.data() + static_cast<size_t>(t) * n,
              static_cast<size_t>(n) * sizeof(double));
  return out;
}

}  // namespace

SnnForwardResult snn_forward(Network& net, const Tensor& encoded, int n) {
  check(encoded.rank() >= 3, "snn_forward: encoded input must be [n x B x ...]");
  check(encoded.dim(0) == n, "snn_forward: step count mismatch");
  SnnForwardResult res;
  res.tapes.reserve(static_cast<size_t>(n));
  std::vector<LifLayerState> state(net.layers.size());
  ForwardOptions opts;
  opts.mode = Mode::kEval;
  Tensor out;
  for (int t = 0; t < n; ++t) {
    auto [o, tape] = forward(net, frame(encoded, t), opts, &state);
    if (t == 0) {
      std::vector<int> shape;
      shape.push_back(n);
      for (int d : o.shape) shape.push_back(d);
      res.spikes = Tensor::zeros(shape);
    }
    std::memcpy(res.spikes.data.data() + static_cast<size_t>(t) * o.numel(),
                o.data.data(), static_cast<size_t>(o.numel()) * sizeof(double));
    res.tapes.push_back(std::move(tape));
    out = std::move(o);
  }
  return res;
}

int snn_predict(const Tensor& spikes_nc) {
  check(spikes_nc.rank() == 2, "snn_predict: spikes must be [n x classes]");
  int n = spikes_nc.dim(0), c = spikes_nc.dim(1);
  int best = 0;
  double best_count = -1.0;
  for (int j = 0; j < c; ++j) {
    double count = 0.0;
    for (int t = 0; t < n; ++t) count += spikes_nc.at2(t, j);
    if (count > best_count) {
      best_count = count;
      best = j;
    }
  }
  return best;
}

std::vector<int> snn_predict_batch(const Tensor& spikes_nbc) {
  check(spikes_nbc.rank() == 3, "snn_predict_batch: spikes must be [n x B x C]");
  int n = spikes_nbc.dim(0), b = spikes_nbc.dim(1), c = spikes_nbc.dim(2);
  std::vector<int> preds(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    int best = 0;
    double best_count = -1.0;
    for (int j = 0; j < c; ++j) {
      double count = 0.0;
      for (int t = 0; t < n; ++t)
        count += spikes_nbc.data[(static_cast<size_t>(t) * b + i) * c + j];
      if (count > best_count) {
        best_count = count;
        best = j;
      }
    }
    preds[static_cast<size_t>(i)] = best;
  }
  return preds;
}

namespace {

Tensor reward_frame(const Tensor& rewards_nbc, int t) {
  std::vector<int> shape(rewards_nbc.shape.begin() + 1, rewards_nbc.shape.end());
  std::int64_t n = Tensor::numel_of(shape);
  Tensor out = Tensor::zeros(shape);
  std::memcpy(out.data.data(),
              rewards_nbc.data.data() + static_cast<size_t>(t) * n,
              static_cast<size_t>(n) * sizeof(double));
  return out;
}

}  // namespace

ParamDelta snn_lfp_step(const Network& net, const std::vector<ForwardTape>& tapes,
                        const Tensor& rewards_nbc, const LfpConfig& cfg,
                        double* discarded) {
  check(rewards_nbc.rank() == 3, "snn_lfp_step: rewards must be [n x B x C]");
  int n = static_cast<int>(tapes.size());
  check(rewards_nbc.dim(0) == n, "snn_lfp_step: reward/tape step mismatch");
  ParamDelta acc = zero_delta_like(net);
  double dropped = 0.0;
  int batch = 0;
  for (int t = 0; t < n; ++t) {
    RewardTape rt;
    batch = lfp_backward_acc(net, tapes[static_cast<size_t>(t)], reward_frame(rewards_nbc, t),
                             cfg, acc, &rt);
    dropped += rt.discarded;
  }
  check(batch > 0, "snn_lfp_step: empty batch");
  double inv = 1.0 / batch;
  visit_delta(acc, [inv](Tensor& t) {
    for (double& v : t.data) v *= inv;
  });
  if (discarded != nullptr) *discarded = dropped;
  return acc;
}

GradDelta snn_surrogate_backward(const Network& net,
                                 const std::vector<ForwardTape>& tapes,
                                 const Tensor& dL_dspikes, SurrogateKind surrogate) {
  check(dL_dspikes.rank() == 3, "snn_surrogate_backward: gradient must be [n x B x C]");
  int n = static_cast<int>(tapes.size());
  check(dL_dspikes.dim(0) == n, "snn_surrogate_backward: step mismatch");
  GradDelta acc = zero_delta_like(net);
  std::vector<Tensor> carry(net.layers.size());
  BackwardOptions opts;
  opts.surrogate = &surrogate;
  opts.lif_carry = &carry;
  int batch = 0;
  for (int t = n; t-- > 0;)
    batch = grad_backward_acc(net, tapes[static_cast<size_t>(t)],
                              reward_frame(dL_dspikes, t), acc, opts);
  check(batch > 0, "snn_surrogate_backward: empty batch");
  double inv = 1.0 / batch;
  visit_delta(acc, [inv](Tensor& t) {
    for (double& v : t.data) v *= inv;
  });
  return acc;
}

}  // namespace lfp
