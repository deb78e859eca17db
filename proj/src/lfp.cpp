#include "lfp/lfp.hpp"

#include <cmath>

#include "lfp/rng.hpp"

namespace lfp {

double stabilize(double z, LfpRule rule, double epsilon) {
  if (rule == LfpRule::kZero) {
    if (std::fabs(z) < 1e-12)
      throw std::runtime_error(
          "lfp: rule Zero hit a near-zero denominator; use the epsilon rule");
    return z;
  }
  return z + (z < 0.0 ? -epsilon : epsilon);  // sign(0) = 1
}

DenseRuleResult dense_rule(const Tensor& w, const Tensor& b, const Tensor& a_in,
                           const Tensor& z, const Tensor& r_out, LfpRule rule,
                           double epsilon) {
  check(w.rank() == 2, "dense_rule: weights must be [in x out]");
  check(a_in.rank() == 2 && z.rank() == 2 && r_out.rank() == 2,
        "dense_rule: batched activations expected");
  check(z.same_shape(r_out), "dense_rule: reward shape mismatch");
  int batch = a_in.dim(0), out = z.dim(1);

  // s_j = r_j / (z_j + sign(z_j) eps); everything else factors through it.
  Tensor s = Tensor::zeros(z.shape);
  for (std::int64_t i = 0; i < z.numel(); ++i)
    s[i] = r_out[i] / stabilize(z[i], rule, epsilon);

  DenseRuleResult res;
  res.r_in = matmul_nt(s, w);  // [B x in]
  for (std::int64_t i = 0; i < res.r_in.numel(); ++i) res.r_in[i] *= a_in[i];

  res.d_w = matmul_tn(a_in, s);  // [in x out], summed over batch
  for (std::int64_t i = 0; i < res.d_w.numel(); ++i) res.d_w[i] *= std::fabs(w[i]);

  if (b.numel() > 0) {
    res.d_b = Tensor::zeros(b.shape);
    for (int i = 0; i < batch; ++i)
      for (int j = 0; j < out; ++j) res.d_b[j] += std::fabs(b[j]) * s.at2(i, j);
  }
  return res;
}

ConvRuleResult conv_rule(const Tensor& kernels, const Tensor& bias,
                         const Tensor& a_in, const Tensor& z, const Tensor& r_out,
                         int stride, int pad, LfpRule rule, double epsilon) {
  check(a_in.rank() == 4 && z.rank() == 4, "conv_rule: batched 4-d tensors expected");
  check(z.same_shape(r_out), "conv_rule: reward shape mismatch");
  int batch = a_in.dim(0), c_in = a_in.dim(1), h = a_in.dim(2), w = a_in.dim(3);
  int c_out = z.dim(1), h_out = z.dim(2), w_out = z.dim(3);
  int k = kernels.dim(2);

  ConvRuleResult res;
  res.r_in = Tensor::zeros(a_in.shape);
  res.d_k = Tensor::zeros(kernels.shape);
  if (bias.numel() > 0) res.d_b = Tensor::zeros(bias.shape);

  const double* ker = kernels.data.data();
  for (int n = 0; n < batch; ++n) {
    const double* a = a_in.data.data() + static_cast<size_t>(n) * c_in * h * w;
    double* ri = res.r_in.data.data() + static_cast<size_t>(n) * c_in * h * w;
    for (int co = 0; co < c_out; ++co) {
      for (int oy = 0; oy < h_out; ++oy) {
        for (int ox = 0; ox < w_out; ++ox) {
          size_t zi = ((static_cast<size_t>(n) * c_out + co) * h_out + oy) * w_out + ox;
          double s = r_out[static_cast<std::int64_t>(zi)] /
                     stabilize(z[static_cast<std::int64_t>(zi)], rule, epsilon);
          if (bias.numel() > 0) res.d_b[co] += std::fabs(bias[co]) * s;
          if (s == 0.0) continue;
          int iy0 = oy * stride - pad;
          int ix0 = ox * stride - pad;
          for (int ci = 0; ci < c_in; ++ci) {
            const double* a_plane = a + static_cast<size_t>(ci) * h * w;
            double* r_plane = ri + static_cast<size_t>(ci) * h * w;
            const double* k_plane = ker + ((static_cast<size_t>(co) * c_in + ci) * k) * k;
            double* dk_plane =
                res.d_k.data.data() + ((static_cast<size_t>(co) * c_in + ci) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
              int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                int ix = ix0 + kx;
                if (ix < 0 || ix >= w) continue;
                double wv = k_plane[static_cast<size_t>(ky) * k + kx];
                double av = a_plane[static_cast<size_t>(iy) * w + ix];
                r_plane[static_cast<size_t>(iy) * w + ix] += wv * av * s;
                dk_plane[static_cast<size_t>(ky) * k + kx] += std::fabs(wv) * av * s;
              }
            }
          }
        }
      }
    }
  }
  return res;
}

BatchNormRuleResult batchnorm_rule(const Tensor& gamma, const Tensor& beta,
                                   const Tensor& a_in, const Tensor& a_norm,
                                   const Tensor& a_out, const Tensor& var,
                                   double bn_eps, const Tensor& r_out,
                                   LfpRule rule, double epsilon) {
  check(a_in.same_shape(a_out) && a_in.same_shape(r_out),
        "batchnorm_rule: shape mismatch");
  int features = gamma.dim(0);
  for (int f = 0; f < features; ++f)
    check(var[f] > 0.0, "batchnorm_rule: variance must be positive");

  int batch = a_in.dim(0);
  int inner = 1;
  for (int i = 2; i < a_in.rank(); ++i) inner *= a_in.dim(i);

  BatchNormRuleResult res;
  res.r_in = Tensor::zeros(a_in.shape);
  res.d_gamma = Tensor::zeros(gamma.shape);
  res.d_beta = Tensor::zeros(beta.shape);
  for (int b = 0; b < batch; ++b) {
    for (int f = 0; f < features; ++f) {
      double inv = 1.0 / std::sqrt(var[f] + bn_eps);
      size_t off = (static_cast<size_t>(b) * features + f) * inner;
      for (int q = 0; q < inner; ++q) {
        double denom = stabilize(a_out.data[off + q], rule, epsilon);
        double r = r_out.data[off + q];
        res.r_in.data[off + q] = gamma[f] * (a_in.data[off + q] * inv) / denom * r;
        res.d_gamma[f] += std::fabs(gamma[f]) * a_norm.data[off + q] / denom * r;
        res.d_beta[f] += std::fabs(beta[f]) / denom * r;
      }
    }
  }
  return res;
}

std::pair<Tensor, Tensor> skip_sum_rule(const Tensor& a_main, const Tensor& a_branch,
                                        const Tensor& a_out, const Tensor& r_out,
                                        LfpRule rule, double epsilon) {
  check(a_main.same_shape(a_branch) && a_main.same_shape(a_out) &&
            a_main.same_shape(r_out),
        "skip_sum_rule: shape mismatch");
  Tensor r_main = Tensor::zeros(a_main.shape);
  Tensor r_branch = Tensor::zeros(a_main.shape);
  for (std::int64_t i = 0; i < a_out.numel(); ++i) {
    double denom = stabilize(a_out[i], rule, epsilon);
    r_main[i] = a_main[i] / denom * r_out[i];
    r_branch[i] = a_branch[i] / denom * r_out[i];
  }
  return {r_main, r_branch};
}

namespace {

void add_scaled(Tensor& dst, const Tensor& src, double scale) {
  check(dst.same_shape(src), "add_scaled: shape mismatch");
  for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += scale * src[i];
}

void normalize_max_abs(Tensor& r) {
  double mx = 0.0;
  for (double v : r.data) mx = std::max(mx, std::fabs(v));
  if (mx > 0.0)
    for (double& v : r.data) v /= mx;
}

// Reverse walk over one layer list. Returns the reward at the input of the
// first layer; accumulates batch-summed deltas.
Tensor backward_walk(const std::vector<LayerSpec>& specs,
                     const std::vector<LayerParams>& params,
                     const std::vector<LayerTape>& tapes, Tensor r,
                     const LfpConfig& cfg, std::vector<LayerDelta>& deltas,
                     std::vector<Tensor>* rewards, double& discarded) {
  check(specs.size() == tapes.size(), "lfp_backward: tape does not match network");
  if (rewards != nullptr) rewards->resize(specs.size());
  for (size_t li = specs.size(); li-- > 0;) {
    const LayerSpec& spec = specs[li];
    const LayerParams& p = params[li];
    const LayerTape& t = tapes[li];
    check(t.output.same_shape(r), "lfp_backward: reward shape mismatch");
    switch (spec.kind) {
      case LayerKind::kDense: {
        DenseRuleResult res =
            dense_rule(p.w, p.b, t.input, t.pre_act, r, cfg.rule, cfg.epsilon);
        add_scaled(deltas[li].w, res.d_w, 1.0);
        if (res.d_b.numel() > 0) add_scaled(deltas[li].b, res.d_b, 1.0);
        r = std::move(res.r_in);
        break;
      }
      case LayerKind::kConv2d: {
        ConvRuleResult res = conv_rule(p.w, p.b, t.input, t.pre_act, r, spec.stride,
                                       spec.pad, cfg.rule, cfg.epsilon);
        add_scaled(deltas[li].w, res.d_k, 1.0);
        if (res.d_b.numel() > 0) add_scaled(deltas[li].b, res.d_b, 1.0);
        r = std::move(res.r_in);
        break;
      }
      case LayerKind::kMaxPool2d: {
        // winner-take-all routing to the recorded argmax
        Tensor r_in = Tensor::zeros(t.input.shape);
        int batch = t.input.dim(0), c = t.input.dim(1);
        int plane = t.input.dim(2) * t.input.dim(3);
        int out_plane = r.dim(2) * r.dim(3);
        for (int n = 0; n < batch; ++n) {
          const PoolIndex& idx = t.pool[static_cast<size_t>(n)];
          for (int ci = 0; ci < c; ++ci) {
            size_t in_base = (static_cast<size_t>(n) * c + ci) * plane;
            size_t out_base = (static_cast<size_t>(n) * c + ci) * out_plane;
            for (int q = 0; q < out_plane; ++q)
              r_in.data[in_base + idx.index[static_cast<size_t>(ci) * out_plane + q]] +=
                  r.data[out_base + q];
          }
        }
        r = std::move(r_in);
        break;
      }
      case LayerKind::kBatchNorm: {
        BatchNormRuleResult res =
            batchnorm_rule(p.gamma, p.beta, t.input, t.bn_norm, t.output, t.bn_var,
                           spec.bn_eps, r, cfg.rule, cfg.epsilon);
        add_scaled(deltas[li].gamma, res.d_gamma, 1.0);
        add_scaled(deltas[li].beta, res.d_beta, 1.0);
        r = std::move(res.r_in);
        break;
      }
      case LayerKind::kDropout: {
        if (t.dropout_mask.numel() > 0)
          for (std::int64_t i = 0; i < r.numel(); ++i) r[i] *= t.dropout_mask[i];
        break;
      }
      case LayerKind::kFlatten: {
        r = r.reshaped(t.input.shape);
        break;
      }
      case LayerKind::kActivation:
        break;  // rewards pass through activations unchanged
      case LayerKind::kResidualSum: {
        auto [r_main, r_branch] =
            skip_sum_rule(t.input, t.branch_out, t.output, r, cfg.rule, cfg.epsilon);
        Tensor r_from_branch =
            backward_walk(spec.branch, p.branch, t.branch, std::move(r_branch), cfg,
                          deltas[li].branch, nullptr, discarded);
        r = std::move(r_main);
        for (std::int64_t i = 0; i < r.numel(); ++i) r[i] += r_from_branch[i];
        break;
      }
      case LayerKind::kLif: {
        // U = drive + history; the history share has no parameters behind it
        // and is dropped. discarded tracks everything not passed down.
        Tensor r_drive = Tensor::zeros(r.shape);
        for (std::int64_t i = 0; i < r.numel(); ++i) {
          double denom = stabilize(t.lif_potential[i], cfg.rule, cfg.epsilon);
          r_drive[i] = t.pre_act[i] / denom * r[i];
          discarded += r[i] - r_drive[i];
        }
        r = std::move(r_drive);
        break;
      }
    }
    ensure_finite(r, "lfp_backward");
    if (cfg.normalize_between_layers) normalize_max_abs(r);
    if (rewards != nullptr) (*rewards)[li] = r;
  }
  return r;
}

}  // namespace

int lfp_backward_acc(const Network& net, const ForwardTape& tape,
                     const Tensor& r_out, const LfpConfig& cfg, ParamDelta& acc,
                     RewardTape* reward_tape) {
  check(net.layers.size() == tape.layers.size(),
        "lfp_backward: tape does not match network");
  check(r_out.same_shape(tape.output), "lfp_backward: r_out shape mismatch");
  ensure_finite(r_out, "lfp_backward: r_out");
  double discarded = 0.0;
  std::vector<Tensor>* rewards = nullptr;
  if (reward_tape != nullptr) rewards = &reward_tape->neuron_rewards;
  backward_walk(net.layers, net.params, tape.layers, r_out, cfg, acc.layers,
                rewards, discarded);
  if (reward_tape != nullptr) reward_tape->discarded = discarded;
  return r_out.dim(0);
}

std::pair<ParamDelta, RewardTape> lfp_backward(const Network& net,
                                               const ForwardTape& tape,
                                               const Tensor& r_out,
                                               const LfpConfig& cfg) {
  ParamDelta delta = zero_delta_like(net);
  RewardTape rewards;
  int batch = lfp_backward_acc(net, tape, r_out, cfg, delta, &rewards);
  double inv = 1.0 / batch;
  visit_delta(delta, [inv](Tensor& t) {
    for (double& v : t.data) v *= inv;
  });
  return {std::move(delta), std::move(rewards)};
}

void apply_update(Network& net, const ParamDelta& d_lfp, ParamDelta& momentum,
                  const LfpConfig& cfg) {
  if (momentum.layers.empty()) momentum = zero_delta_like(net);
  double alpha = cfg.momentum;
  check(alpha >= 0.0 && alpha <= 1.0, "apply_update: momentum must be in [0,1]");

  visit_delta_pair(momentum, d_lfp, [alpha](Tensor& mom, const Tensor& d) {
    for (std::int64_t i = 0; i < mom.numel(); ++i)
      mom[i] = alpha * mom[i] + (1.0 - alpha) * d[i];
  });

  double scale = 1.0;
  if (cfg.max_norm_clip > 0.0) {
    double sq = 0.0;
    visit_delta(momentum, [&sq](Tensor& t) {
      for (double v : t.data) sq += v * v;
    });
    double norm = std::sqrt(sq);
    if (norm > cfg.max_norm_clip) scale = cfg.max_norm_clip / norm;
  }

  double step = cfg.lr * scale;
  ParamDelta& mom = momentum;
  visit_params(net, mom, [step](Tensor& param, Tensor& d) {
    for (std::int64_t i = 0; i < param.numel(); ++i) param[i] += step * d[i];
  });
}

LfpTrainer::LfpTrainer(LfpConfig cfg, RewardKind reward, double noise_std)
    : cfg_(cfg), reward_(reward), noise_std_(noise_std) {
  check(cfg.lr >= 0.0, "trainer: lr must be >= 0");
  check(cfg.rule != LfpRule::kEpsilon || cfg.epsilon > 0.0,
        "trainer: epsilon must be positive");
}

namespace {

int last_activation_layer(const Network& net) {
  for (size_t i = net.layers.size(); i-- > 0;)
    if (net.layers[i].kind == LayerKind::kActivation) return static_cast<int>(i);
  return -1;
}

}  // namespace

EpochMetrics LfpTrainer::train_epoch(Network& net, const Dataset& data,
                                     int batch_size, std::uint64_t epoch_seed) {
  if (!momentum_ready_) {
    momentum_ = zero_delta_like(net);
    momentum_ready_ = true;
  }
  Batches batches(data, batch_size, mix_seed(epoch_seed, 0));
  Batch batch;
  int act_layer = last_activation_layer(net);
  EpochMetrics m;
  std::int64_t correct = 0, total = 0;
  double reward_sum = 0.0, dead_sum = 0.0;
  int batch_count = 0;
  std::vector<std::int64_t> class_total, class_correct;
  std::uint64_t batch_idx = 0;
  while (batches.next(batch)) {
    ForwardOptions opts;
    opts.mode = Mode::kTrain;
    opts.noise_std = noise_std_;
    opts.rng_seed = mix_seed(epoch_seed, 1 + batch_idx);
    auto [out, tape] = forward(net, batch.x, opts);

    Tensor r = initial_reward(reward_, out, batch.y);
    auto backward = lfp_backward(net, tape, r, cfg_);
    apply_update(net, backward.first, momentum_, cfg_);

    int b = out.dim(0), c = out.dim(1);
    if (class_total.empty()) {
      class_total.assign(static_cast<size_t>(c), 0);
      class_correct.assign(static_cast<size_t>(c), 0);
    }
    for (int i = 0; i < b; ++i) {
      int pred = 0;
      for (int j = 1; j < c; ++j)
        if (out.at2(i, j) > out.at2(i, pred)) pred = j;
      int truth = batch.labels[static_cast<size_t>(i)];
      ++class_total[static_cast<size_t>(truth)];
      if (pred == truth) {
        ++correct;
        ++class_correct[static_cast<size_t>(truth)];
      }
      for (int j = 0; j < c; ++j) reward_sum += r.at2(i, j);
    }
    total += b;
    if (act_layer >= 0)
      dead_sum += tape.layers[static_cast<size_t>(act_layer)].dead_fraction;
    ++batch_count;
    ++batch_idx;
  }
  m.accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
  m.criterion = total > 0 ? reward_sum / total : 0.0;
  m.dead_fraction = batch_count > 0 ? dead_sum / batch_count : 0.0;
  double wacc = 0.0;
  int present = 0;
  for (size_t j = 0; j < class_total.size(); ++j)
    if (class_total[j] > 0) {
      wacc += static_cast<double>(class_correct[j]) / class_total[j];
      ++present;
    }
  m.weighted_accuracy = present > 0 ? wacc / present : 0.0;
  return m;
}

EvalMetrics evaluate(Network& net, const Dataset& data, int batch_size) {
  Batches batches(data, batch_size, 0);  // order does not matter in eval
  Batch batch;
  std::int64_t correct = 0, total = 0;
  std::vector<std::int64_t> class_total(static_cast<size_t>(data.class_count), 0);
  std::vector<std::int64_t> class_correct(static_cast<size_t>(data.class_count), 0);
  ForwardOptions opts;
  opts.mode = Mode::kEval;
  while (batches.next(batch)) {
    auto [out, tape] = forward(net, batch.x, opts);
    int b = out.dim(0), c = out.dim(1);
    for (int i = 0; i < b; ++i) {
      int pred = 0;
      for (int j = 1; j < c; ++j)
        if (out.at2(i, j) > out.at2(i, pred)) pred = j;
      int truth = batch.labels[static_cast<size_t>(i)];
      ++class_total[static_cast<size_t>(truth)];
      if (pred == truth) {
        ++correct;
        ++class_correct[static_cast<size_t>(truth)];
      }
    }
    total += b;
  }
  EvalMetrics m;
  m.accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
  double wacc = 0.0;
  int present = 0;
  for (size_t j = 0; j < class_total.size(); ++j)
    if (class_total[j] > 0) {
      wacc += static_cast<double>(class_correct[j]) / class_total[j];
      ++present;
    }
  m.weighted_accuracy = present > 0 ? wacc / present : 0.0;
  return m;
}

}  // namespace lfp
