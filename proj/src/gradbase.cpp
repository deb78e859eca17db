#include "lfp/gradbase.hpp"

#include <cmath>

#include "lfp/rng.hpp"

namespace lfp {

std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::kSoftmaxCe: return "softmax_ce";
    case LossKind::kSigmoidCe: return "sigmoid_ce";
    case LossKind::kMse: return "mse";
  }
  return "softmax_ce";
}

LossKind loss_from_name(const std::string& name) {
  if (name == "softmax_ce") return LossKind::kSoftmaxCe;
  if (name == "sigmoid_ce") return LossKind::kSigmoidCe;
  if (name == "mse") return LossKind::kMse;
  throw std::runtime_error("unknown loss kind: " + name);
}

std::pair<double, Tensor> loss_and_grad(LossKind kind, const Tensor& outputs,
                                        const Tensor& targets) {
  check(outputs.same_shape(targets), "loss_and_grad: shape mismatch");
  check(outputs.rank() == 2, "loss_and_grad: expected [batch x classes]");
  int b = outputs.dim(0), c = outputs.dim(1);
  Tensor grad = Tensor::zeros(outputs.shape);
  double loss = 0.0;
  switch (kind) {
    case LossKind::kSoftmaxCe: {
      Tensor sm = softmax_rows(outputs);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < c; ++j) {
          grad.at2(i, j) = sm.at2(i, j) - targets.at2(i, j);
          if (targets.at2(i, j) == 1.0)
            loss -= std::log(std::max(sm.at2(i, j), 1e-300));
        }
      break;
    }
    case LossKind::kSigmoidCe: {
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < c; ++j) {
          double o = outputs.at2(i, j), y = targets.at2(i, j);
          double s = sigmoid(o);
          grad.at2(i, j) = s - y;
          // log(1+e^x) written to avoid overflow
          double softplus = o > 0.0 ? o + std::log1p(std::exp(-o)) : std::log1p(std::exp(o));
          loss += softplus - o * y;
        }
      break;
    }
    case LossKind::kMse: {
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < c; ++j) {
          double d = outputs.at2(i, j) - targets.at2(i, j);
          grad.at2(i, j) = 2.0 * d / c;
          loss += d * d / c;
        }
      break;
    }
  }
  return {loss / b, grad};
}

double surrogate_derivative(SurrogateKind kind, double x) {
  switch (kind) {
    case SurrogateKind::kFastSigmoid: {
      double d = 1.0 + 25.0 * std::fabs(x);
      return 1.0 / (d * d);
    }
    case SurrogateKind::kArctanShift: {
      double p = M_PI * x;
      return 1.0 / (1.0 + p * p);
    }
  }
  return 0.0;
}

namespace {

double activation_derivative(const Activation& act, double z,
                             const SurrogateKind* surrogate) {
  switch (act.kind) {
    case ActKind::kLinear:
      return 1.0;
    case ActKind::kRelu:
      return z > 0.0 ? 1.0 : 0.0;
    case ActKind::kLeakyRelu:
      return z > 0.0 ? 1.0 : act.param;
    case ActKind::kSilu: {
      double s = sigmoid(z);
      return s * (1.0 + z * (1.0 - s));
    }
    case ActKind::kElu:
      return z > 0.0 ? 1.0 : act.param * std::exp(z);
    case ActKind::kTanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case ActKind::kSigmoid: {
      double s = sigmoid(z);
      return s * (1.0 - s);
    }
    case ActKind::kHeaviside:
      return surrogate != nullptr ? surrogate_derivative(*surrogate, z) : 0.0;
  }
  return 0.0;
}

struct GradWalkContext {
  const BackwardOptions* opts;
  bool train_tape;
};

Tensor grad_walk(const std::vector<LayerSpec>& specs,
                 const std::vector<LayerParams>& params,
                 const std::vector<LayerTape>& tapes, Tensor g,
                 std::vector<LayerDelta>& deltas, GradWalkContext& ctx,
                 bool outermost) {
  check(specs.size() == tapes.size(), "grad_backward: tape does not match network");
  std::vector<Tensor>* record = outermost ? ctx.opts->activation_grads : nullptr;
  if (record != nullptr) record->resize(specs.size());
  for (size_t li = specs.size(); li-- > 0;) {
    const LayerSpec& spec = specs[li];
    const LayerParams& p = params[li];
    const LayerTape& t = tapes[li];
    check(t.output.same_shape(g), "grad_backward: gradient shape mismatch");
    switch (spec.kind) {
      case LayerKind::kDense: {
        Tensor dw = matmul_tn(t.input, g);
        for (std::int64_t i = 0; i < dw.numel(); ++i) deltas[li].w[i] += dw[i];
        if (p.b.numel() > 0)
          for (int i = 0; i < g.dim(0); ++i)
            for (int j = 0; j < g.dim(1); ++j) deltas[li].b[j] += g.at2(i, j);
        g = matmul_nt(g, p.w);
        break;
      }
      case LayerKind::kConv2d: {
        int batch = t.input.dim(0), c_in = t.input.dim(1);
        int h = t.input.dim(2), w = t.input.dim(3);
        int c_out = g.dim(1), h_out = g.dim(2), w_out = g.dim(3);
        int k = spec.k;
        Tensor g_in = Tensor::zeros(t.input.shape);
        const double* ker = p.w.data.data();
        for (int n = 0; n < batch; ++n) {
          const double* a = t.input.data.data() + static_cast<size_t>(n) * c_in * h * w;
          double* gi = g_in.data.data() + static_cast<size_t>(n) * c_in * h * w;
          for (int co = 0; co < c_out; ++co) {
            for (int oy = 0; oy < h_out; ++oy) {
              for (int ox = 0; ox < w_out; ++ox) {
                double gv = g[((static_cast<std::int64_t>(n) * c_out + co) * h_out + oy) *
                                  w_out +
                              ox];
                if (p.b.numel() > 0) deltas[li].b[co] += gv;
                if (gv == 0.0) continue;
                int iy0 = oy * spec.stride - spec.pad;
                int ix0 = ox * spec.stride - spec.pad;
                for (int ci = 0; ci < c_in; ++ci) {
                  const double* a_plane = a + static_cast<size_t>(ci) * h * w;
                  double* gi_plane = gi + static_cast<size_t>(ci) * h * w;
                  const double* k_plane =
                      ker + ((static_cast<size_t>(co) * c_in + ci) * k) * k;
                  double* dk_plane = deltas[li].w.data.data() +
                                     ((static_cast<size_t>(co) * c_in + ci) * k) * k;
                  for (int ky = 0; ky < k; ++ky) {
                    int iy = iy0 + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                      int ix = ix0 + kx;
                      if (ix < 0 || ix >= w) continue;
                      dk_plane[static_cast<size_t>(ky) * k + kx] +=
                          a_plane[static_cast<size_t>(iy) * w + ix] * gv;
                      gi_plane[static_cast<size_t>(iy) * w + ix] +=
                          k_plane[static_cast<size_t>(ky) * k + kx] * gv;
                    }
                  }
                }
              }
            }
          }
        }
        g = std::move(g_in);
        break;
      }
      case LayerKind::kMaxPool2d: {
        Tensor g_in = Tensor::zeros(t.input.shape);
        int batch = t.input.dim(0), c = t.input.dim(1);
        int plane = t.input.dim(2) * t.input.dim(3);
        int out_plane = g.dim(2) * g.dim(3);
        for (int n = 0; n < batch; ++n) {
          const PoolIndex& idx = t.pool[static_cast<size_t>(n)];
          for (int ci = 0; ci < c; ++ci) {
            size_t in_base = (static_cast<size_t>(n) * c + ci) * plane;
            size_t out_base = (static_cast<size_t>(n) * c + ci) * out_plane;
            for (int q = 0; q < out_plane; ++q)
              g_in.data[in_base + idx.index[static_cast<size_t>(ci) * out_plane + q]] +=
                  g.data[out_base + q];
          }
        }
        g = std::move(g_in);
        break;
      }
      case LayerKind::kBatchNorm: {
        int features = spec.features;
        int batch = t.input.dim(0);
        int inner = 1;
        for (int i = 2; i < t.input.rank(); ++i) inner *= t.input.dim(i);
        double n = static_cast<double>(batch) * inner;
        Tensor g_in = Tensor::zeros(t.input.shape);
        for (int f = 0; f < features; ++f) {
          double inv = 1.0 / std::sqrt(t.bn_var[f] + spec.bn_eps);
          double sum_g = 0.0, sum_gn = 0.0;
          for (int b = 0; b < batch; ++b) {
            size_t off = (static_cast<size_t>(b) * features + f) * inner;
            for (int q = 0; q < inner; ++q) {
              double gv = g.data[off + q];
              deltas[li].gamma[f] += gv * t.bn_norm.data[off + q];
              deltas[li].beta[f] += gv;
              double gn = gv * p.gamma[f];
              sum_g += gn;
              sum_gn += gn * t.bn_norm.data[off + q];
            }
          }
          for (int b = 0; b < batch; ++b) {
            size_t off = (static_cast<size_t>(b) * features + f) * inner;
            for (int q = 0; q < inner; ++q) {
              double gn = g.data[off + q] * p.gamma[f];
              if (ctx.train_tape) {
                // full gradient through the batch statistics
                g_in.data[off + q] =
                    inv / n * (n * gn - sum_g - t.bn_norm.data[off + q] * sum_gn);
              } else {
                g_in.data[off + q] = gn * inv;
              }
            }
          }
        }
        g = std::move(g_in);
        break;
      }
      case LayerKind::kDropout: {
        if (t.dropout_mask.numel() > 0) {
          double keep = 1.0 - spec.drop_p;
          for (std::int64_t i = 0; i < g.numel(); ++i)
            g[i] *= t.dropout_mask[i] / keep;
        }
        break;
      }
      case LayerKind::kFlatten:
        g = g.reshaped(t.input.shape);
        break;
      case LayerKind::kActivation: {
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g[i] *= activation_derivative(spec.act, t.input[i], ctx.opts->surrogate);
        break;
      }
      case LayerKind::kResidualSum: {
        Tensor g_branch =
            grad_walk(spec.branch, p.branch, t.branch, g, deltas[li].branch, ctx, false);
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += g_branch[i];
        break;
      }
      case LayerKind::kLif: {
        // spike = H(U - theta): zero derivative unless a surrogate stands in;
        // the recurrence carry adds dL/dU from the following time step.
        Tensor g_u = Tensor::zeros(g.shape);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
          double d = ctx.opts->surrogate != nullptr
                         ? surrogate_derivative(*ctx.opts->surrogate,
                                                t.lif_potential[i] - spec.lif_theta)
                         : 0.0;
          g_u[i] = g[i] * d;
        }
        if (outermost && ctx.opts->lif_carry != nullptr) {
          Tensor& carry = (*ctx.opts->lif_carry)[li];
          if (carry.numel() > 0)
            for (std::int64_t i = 0; i < g_u.numel(); ++i) g_u[i] += carry[i];
          // reset term is treated as constant, matching the reference
          // surrogate-training behavior
          carry = Tensor::zeros(g_u.shape);
          for (std::int64_t i = 0; i < g_u.numel(); ++i)
            carry[i] = spec.lif_beta * g_u[i];
        }
        g = std::move(g_u);
        break;
      }
    }
    if (record != nullptr) (*record)[li] = g;
  }
  return g;
}

}  // namespace

int grad_backward_acc(const Network& net, const ForwardTape& tape,
                      const Tensor& dL_dout, GradDelta& acc,
                      const BackwardOptions& opts) {
  check(net.layers.size() == tape.layers.size(),
        "grad_backward: tape does not match network");
  check(dL_dout.same_shape(tape.output), "grad_backward: gradient shape mismatch");
  GradWalkContext ctx{&opts, tape.train};
  grad_walk(net.layers, net.params, tape.layers, dL_dout, acc.layers, ctx, true);
  return dL_dout.dim(0);
}

GradDelta grad_backward(const Network& net, const ForwardTape& tape,
                        const Tensor& dL_dout, const BackwardOptions& opts) {
  GradDelta acc = zero_delta_like(net);
  int batch = grad_backward_acc(net, tape, dL_dout, acc, opts);
  double inv = 1.0 / batch;
  visit_delta(acc, [inv](Tensor& t) {
    for (double& v : t.data) v *= inv;
  });
  return acc;
}

void sgd_update(Network& net, const GradDelta& grad, GradDelta& momentum,
                double lr, double alpha, double max_norm_clip) {
  if (momentum.layers.empty()) momentum = zero_delta_like(net);
  check(alpha >= 0.0 && alpha <= 1.0, "sgd_update: momentum must be in [0,1]");
  visit_delta_pair(momentum, grad, [alpha](Tensor& mom, const Tensor& d) {
    for (std::int64_t i = 0; i < mom.numel(); ++i)
      mom[i] = alpha * mom[i] + (1.0 - alpha) * d[i];
  });
  double scale = 1.0;
  if (max_norm_clip > 0.0) {
    double sq = 0.0;
    visit_delta(momentum, [&sq](Tensor& t) {
      for (double v : t.data) sq += v * v;
    });
    double norm = std::sqrt(sq);
    if (norm > max_norm_clip) scale = max_norm_clip / norm;
  }
  double step = lr * scale;
  visit_params(net, momentum, [step](Tensor& param, Tensor& d) {
    for (std::int64_t i = 0; i < param.numel(); ++i) param[i] -= step * d[i];
  });
}

namespace {

double guarded_rel_err(double a, double b) {
  double denom = std::max(std::fabs(a), std::fabs(b));
  if (denom == 0.0) return 0.0;
  return std::fabs(a - b) / (denom + 1e-12);
}

}  // namespace

Theorem1Report theorem1_check(Network& net, const Tensor& x, const Tensor& y,
                              LossKind loss, double tolerance) {
  for (const LayerSpec& spec : net.layers) {
    bool ok = spec.kind == LayerKind::kDense || spec.kind == LayerKind::kFlatten ||
              (spec.kind == LayerKind::kActivation &&
               (spec.act.kind == ActKind::kRelu || spec.act.kind == ActKind::kLinear));
    check(ok, "theorem1_check: network must be ReLU/Linear dense layers only");
  }
  Theorem1Report report;
  ForwardOptions opts;
  opts.mode = Mode::kEval;
  auto [out, tape] = forward(net, x, opts);
  auto [loss_value, g] = loss_and_grad(loss, out, y);
  (void)loss_value;

  Tensor r_out = reward_from_loss(g, out);
  LfpConfig cfg;
  cfg.rule = LfpRule::kZero;
  auto [d_lfp, reward_tape] = lfp_backward(net, tape, r_out, cfg);

  GradDelta grad = grad_backward(net, tape, g);

  // d_lfp = -|w| dL/dw, elementwise over weights and biases
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const LayerParams& p = net.params[li];
    const LayerDelta& dl = d_lfp.layers[li];
    const LayerDelta& dg = grad.layers[li];
    for (std::int64_t i = 0; i < p.w.numel(); ++i) {
      double expected = -std::fabs(p.w[i]) * dg.w[i];
      report.max_rel_err = std::max(report.max_rel_err, guarded_rel_err(dl.w[i], expected));
    }
    for (std::int64_t i = 0; i < p.b.numel(); ++i) {
      double expected = -std::fabs(p.b[i]) * dg.b[i];
      report.max_rel_err = std::max(report.max_rel_err, guarded_rel_err(dl.b[i], expected));
    }
  }

  // hidden-layer identity r_j = a_j sum_c (do_c/da_j)(r_c/o_c), with the
  // Jacobian rows do_c/da obtained by one backward pass per output
  int batch = out.dim(0), classes = out.dim(1);
  std::vector<std::vector<Tensor>> per_class_grads(static_cast<size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    Tensor seed = Tensor::zeros(out.shape);
    for (int i = 0; i < batch; ++i) seed.at2(i, c) = 1.0;
    GradDelta scratch = zero_delta_like(net);
    BackwardOptions bo;
    bo.activation_grads = &per_class_grads[static_cast<size_t>(c)];
    grad_backward_acc(net, tape, seed, scratch, bo);
  }
  for (size_t li = 0; li < net.layers.size(); ++li) {
    if (net.layers[li].kind != LayerKind::kDense || li == 0) continue;
    const Tensor& a = tape.layers[li].input;  // hidden activations
    const Tensor& r = reward_tape.neuron_rewards[li];
    for (int i = 0; i < a.dim(0); ++i) {
      for (int j = 0; j < a.dim(1); ++j) {
        double total = 0.0;
        for (int c = 0; c < classes; ++c) {
          double ratio = out.at2(i, c) != 0.0
                             ? r_out.at2(i, c) / out.at2(i, c)
                             : -g.at2(i, c);
          total += per_class_grads[static_cast<size_t>(c)][li].at2(i, j) * ratio;
        }
        double expected = a.at2(i, j) * total;
        report.hidden_max_rel_err =
            std::max(report.hidden_max_rel_err, guarded_rel_err(r.at2(i, j), expected));
      }
    }
  }

  report.pass = report.max_rel_err <= tolerance && report.hidden_max_rel_err <= tolerance;
  if (!report.pass)
    report.notes.push_back("max_rel_err=" + std::to_string(report.max_rel_err) +
                           " hidden=" + std::to_string(report.hidden_max_rel_err));
  return report;
}

GradTrainer::GradTrainer(LossKind loss, double lr, double momentum,
                         double noise_std, double max_norm_clip)
    : loss_(loss), lr_(lr), momentum_alpha_(momentum), noise_std_(noise_std),
      clip_(max_norm_clip) {}

EpochMetrics GradTrainer::train_epoch(Network& net, const Dataset& data,
                                      int batch_size, std::uint64_t epoch_seed) {
  if (!momentum_ready_) {
    momentum_ = zero_delta_like(net);
    momentum_ready_ = true;
  }
  Batches batches(data, batch_size, mix_seed(epoch_seed, 0));
  Batch batch;
  EpochMetrics m;
  std::int64_t correct = 0, total = 0;
  double loss_sum = 0.0, dead_sum = 0.0;
  int batch_count = 0;
  int act_layer = -1;
  for (size_t i = net.layers.size(); i-- > 0;)
    if (net.layers[i].kind == LayerKind::kActivation) {
      act_layer = static_cast<int>(i);
      break;
    }
  std::vector<std::int64_t> class_total, class_correct;
  std::uint64_t batch_idx = 0;
  while (batches.next(batch)) {
    ForwardOptions opts;
    opts.mode = Mode::kTrain;
    opts.noise_std = noise_std_;
    opts.rng_seed = mix_seed(epoch_seed, 1 + batch_idx);
    auto [out, tape] = forward(net, batch.x, opts);
    auto [loss_value, g] = loss_and_grad(loss_, out, batch.y);
    GradDelta grad = grad_backward(net, tape, g);
    sgd_update(net, grad, momentum_, lr_, momentum_alpha_, clip_);

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
    }
    loss_sum += loss_value * b;
    total += b;
    if (act_layer >= 0)
      dead_sum += tape.layers[static_cast<size_t>(act_layer)].dead_fraction;
    ++batch_count;
    ++batch_idx;
  }
  m.accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
  m.criterion = total > 0 ? loss_sum / total : 0.0;
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

}  // namespace lfp
