#include "lfp/network.hpp"

#include <cmath>
#include <cstring>

#include "lfp/rng.hpp"

namespace lfp {

LayerSpec LayerSpec::dense(int in, int out, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.in = in;
  s.out = out;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::conv2d(int c_in, int c_out, int k, int stride, int pad,
                            bool bias) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.c_in = c_in;
  s.c_out = c_out;
  s.k = k;
  s.stride = stride;
  s.pad = pad;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::maxpool2d(int k, int stride) {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool2d;
  s.k = k;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::batchnorm(int features, double eps, double momentum) {
  LayerSpec s;
  s.kind = LayerKind::kBatchNorm;
  s.features = features;
  s.bn_eps = eps;
  s.bn_momentum = momentum;
  return s;
}

LayerSpec LayerSpec::dropout(double p) {
  check(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  LayerSpec s;
  s.kind = LayerKind::kDropout;
  s.drop_p = p;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::kFlatten;
  return s;
}

LayerSpec LayerSpec::activation(ActKind kind, double param) {
  LayerSpec s;
  s.kind = LayerKind::kActivation;
  s.act.kind = kind;
  if (param == 0.0) {
    if (kind == ActKind::kLeakyRelu) param = 0.01;
    if (kind == ActKind::kElu) param = 1.0;
  }
  s.act.param = param;
  return s;
}

LayerSpec LayerSpec::residual_sum(std::vector<LayerSpec> branch) {
  LayerSpec s;
  s.kind = LayerKind::kResidualSum;
  s.branch = std::move(branch);
  return s;
}

LayerSpec LayerSpec::lif(double beta, double theta) {
  check(beta > 0.0 && beta <= 1.0, "lif: decay must be in (0,1]");
  LayerSpec s;
  s.kind = LayerKind::kLif;
  s.lif_beta = beta;
  s.lif_theta = theta;
  return s;
}

double activation_value(const Activation& act, double z) {
  switch (act.kind) {
    case ActKind::kLinear:
      return z;
    case ActKind::kRelu:
      return z > 0.0 ? z : 0.0;
    case ActKind::kLeakyRelu:
      return z > 0.0 ? z : act.param * z;
    case ActKind::kSilu:
      return z / (1.0 + std::exp(-z));
    case ActKind::kElu:
      return z > 0.0 ? z : act.param * (std::exp(z) - 1.0);
    case ActKind::kTanh:
      return std::tanh(z);
    case ActKind::kSigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case ActKind::kHeaviside:
      return z > 0.0 ? 1.0 : 0.0;
  }
  return z;
}

Tensor apply_activation(const Activation& act, const Tensor& z) {
  Tensor out = z;
  for (double& v : out.data) v = activation_value(act, v);
  return out;
}

std::string activation_name(ActKind kind) {
  switch (kind) {
    case ActKind::kLinear: return "linear";
    case ActKind::kRelu: return "relu";
    case ActKind::kLeakyRelu: return "leaky_relu";
    case ActKind::kSilu: return "silu";
    case ActKind::kElu: return "elu";
    case ActKind::kTanh: return "tanh";
    case ActKind::kSigmoid: return "sigmoid";
    case ActKind::kHeaviside: return "heaviside";
  }
  return "linear";
}

ActKind activation_from_name(const std::string& name) {
  if (name == "linear") return ActKind::kLinear;
  if (name == "relu") return ActKind::kRelu;
  if (name == "leaky_relu") return ActKind::kLeakyRelu;
  if (name == "silu") return ActKind::kSilu;
  if (name == "elu") return ActKind::kElu;
  if (name == "tanh") return ActKind::kTanh;
  if (name == "sigmoid") return ActKind::kSigmoid;
  if (name == "heaviside") return ActKind::kHeaviside;
  throw std::runtime_error("unknown activation: " + name);
}

namespace {

LayerParams alloc_params(const LayerSpec& spec) {
  LayerParams p;
  switch (spec.kind) {
    case LayerKind::kDense:
      check(spec.in > 0 && spec.out > 0, "dense: dimensions must be positive");
      p.w = Tensor::zeros({spec.in, spec.out});
      if (spec.bias) p.b = Tensor::zeros({spec.out});
      break;
    case LayerKind::kConv2d:
      check(spec.c_in > 0 && spec.c_out > 0 && spec.k > 0,
            "conv2d: dimensions must be positive");
      p.w = Tensor::zeros({spec.c_out, spec.c_in, spec.k, spec.k});
      if (spec.bias) p.b = Tensor::zeros({spec.c_out});
      break;
    case LayerKind::kBatchNorm:
      check(spec.features > 0, "batchnorm: features must be positive");
      p.gamma = Tensor::full({spec.features}, 1.0);
      p.beta = Tensor::zeros({spec.features});
      p.running_mean = Tensor::zeros({spec.features});
      p.running_var = Tensor::full({spec.features}, 1.0);
      break;
    case LayerKind::kResidualSum:
      for (const LayerSpec& bs : spec.branch) p.branch.push_back(alloc_params(bs));
      break;
    default:
      break;
  }
  return p;
}

void init_layer(const LayerSpec& spec, LayerParams& p, Rng& rng) {
  auto fill_uniform = [&rng](Tensor& t, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.data) v = dist(rng);
  };
  switch (spec.kind) {
    case LayerKind::kDense:
      fill_uniform(p.w, std::sqrt(6.0 / spec.in));
      break;
    case LayerKind::kConv2d:
      fill_uniform(p.w, std::sqrt(6.0 / (static_cast<double>(spec.c_in) * spec.k * spec.k)));
      break;
    case LayerKind::kResidualSum:
      for (size_t i = 0; i < spec.branch.size(); ++i)
        init_layer(spec.branch[i], p.branch[i], rng);
      break;
    default:
      break;
  }
}

LayerDelta alloc_delta(const LayerSpec& spec, const LayerParams& p) {
  LayerDelta d;
  if (p.w.numel() > 0) d.w = Tensor::zeros(p.w.shape);
  if (p.b.numel() > 0) d.b = Tensor::zeros(p.b.shape);
  if (p.gamma.numel() > 0) d.gamma = Tensor::zeros(p.gamma.shape);
  if (p.beta.numel() > 0) d.beta = Tensor::zeros(p.beta.shape);
  for (size_t i = 0; i < spec.branch.size(); ++i)
    d.branch.push_back(alloc_delta(spec.branch[i], p.branch[i]));
  return d;
}

void visit_layer(LayerParams& p, LayerDelta& d,
                 const std::function<void(Tensor&, Tensor&)>& fn) {
  if (p.w.numel() > 0) fn(p.w, d.w);
  if (p.b.numel() > 0) fn(p.b, d.b);
  if (p.gamma.numel() > 0) fn(p.gamma, d.gamma);
  if (p.beta.numel() > 0) fn(p.beta, d.beta);
  for (size_t i = 0; i < p.branch.size(); ++i)
    visit_layer(p.branch[i], d.branch[i], fn);
}

void visit_layer_delta(LayerDelta& d, const std::function<void(Tensor&)>& fn) {
  if (d.w.numel() > 0) fn(d.w);
  if (d.b.numel() > 0) fn(d.b);
  if (d.gamma.numel() > 0) fn(d.gamma);
  if (d.beta.numel() > 0) fn(d.beta);
  for (LayerDelta& bd : d.branch) visit_layer_delta(bd, fn);
}

void visit_layer_delta_pair(LayerDelta& a, const LayerDelta& b,
                            const std::function<void(Tensor&, const Tensor&)>& fn) {
  if (a.w.numel() > 0) fn(a.w, b.w);
  if (a.b.numel() > 0) fn(a.b, b.b);
  if (a.gamma.numel() > 0) fn(a.gamma, b.gamma);
  if (a.beta.numel() > 0) fn(a.beta, b.beta);
  for (size_t i = 0; i < a.branch.size(); ++i)
    visit_layer_delta_pair(a.branch[i], b.branch[i], fn);
}

}  // namespace

Network make_network(std::vector<LayerSpec> layers) {
  Network net;
  net.layers = std::move(layers);
  net.params.reserve(net.layers.size());
  for (const LayerSpec& spec : net.layers) net.params.push_back(alloc_params(spec));
  return net;
}

void init_params(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (size_t i = 0; i < net.layers.size(); ++i)
    init_layer(net.layers[i], net.params[i], rng);
}

ParamDelta zero_delta_like(const Network& net) {
  ParamDelta d;
  d.layers.reserve(net.layers.size());
  for (size_t i = 0; i < net.layers.size(); ++i)
    d.layers.push_back(alloc_delta(net.layers[i], net.params[i]));
  return d;
}

void visit_params(Network& net, ParamDelta& delta,
                  const std::function<void(Tensor&, Tensor&)>& fn) {
  check(net.params.size() == delta.layers.size(), "visit_params: layout mismatch");
  for (size_t i = 0; i < net.params.size(); ++i)
    visit_layer(net.params[i], delta.layers[i], fn);
}

void visit_delta(ParamDelta& delta, const std::function<void(Tensor&)>& fn) {
  for (LayerDelta& d : delta.layers) visit_layer_delta(d, fn);
}

void visit_delta_pair(ParamDelta& a, const ParamDelta& b,
                      const std::function<void(Tensor&, const Tensor&)>& fn) {
  check(a.layers.size() == b.layers.size(), "visit_delta_pair: layout mismatch");
  for (size_t i = 0; i < a.layers.size(); ++i)
    visit_layer_delta_pair(a.layers[i], b.layers[i], fn);
}

namespace {

Tensor slice_sample(const Tensor& batched, int i) {
  check(batched.rank() >= 2, "slice_sample: need batch dimension");
  std::vector<int> s(batched.shape.begin() + 1, batched.shape.end());
  std::int64_t n = Tensor::numel_of(s);
  Tensor out = Tensor::zeros(s);
  std::memcpy(out.data.data(), batched.data.data() + static_cast<size_t>(i) * n,
              static_cast<size_t>(n) * sizeof(double));
  return out;
}

void put_sample(Tensor& batched, int i, const Tensor& v) {
  std::int64_t n = v.numel();
  std::memcpy(batched.data.data() + static_cast<size_t>(i) * n, v.data.data(),
              static_cast<size_t>(n) * sizeof(double));
}

struct FeatureDims {
  int batch;     // samples
  int features;  // normalized axis (dim 1)
  int inner;     // spatial extent per feature (1 for 2-d input)
};

FeatureDims feature_dims(const Tensor& x) {
  check(x.rank() >= 2, "batchnorm: input must have a batch dimension");
  FeatureDims d;
  d.batch = x.dim(0);
  d.features = x.dim(1);
  d.inner = 1;
  for (int i = 2; i < x.rank(); ++i) d.inner *= x.dim(i);
  return d;
}

struct WalkContext {
  Mode mode;
  double noise_std;
  Rng* rng;
  std::vector<LifLayerState>* lif_state;
};

Tensor walk_layers(const std::vector<LayerSpec>& specs,
                   std::vector<LayerParams>& params, const Tensor& x0,
                   std::vector<LayerTape>& tapes, WalkContext& ctx,
                   bool outermost);

Tensor run_layer(const LayerSpec& spec, LayerParams& p, const Tensor& x,
                 LayerTape& t, WalkContext& ctx, bool is_network_output,
                 LifLayerState* lif) {
  const bool train = ctx.mode == Mode::kTrain;
  t.input = x;
  switch (spec.kind) {
    case LayerKind::kDense: {
      check(x.rank() == 2, "dense: expected [batch x features] input");
      check(x.dim(1) == spec.in, "dense: input width mismatch");
      Tensor z = matmul(x, p.w);
      if (spec.bias)
        for (int i = 0; i < z.dim(0); ++i)
          for (int j = 0; j < z.dim(1); ++j) z.at2(i, j) += p.b[j];
      t.pre_act = z;
      t.output = z;
      return z;
    }
    case LayerKind::kConv2d: {
      check(x.rank() == 4, "conv2d: expected [batch x C x H x W] input");
      check(x.dim(1) == spec.c_in, "conv2d: channel mismatch");
      int batch = x.dim(0);
      Tensor z;
      for (int i = 0; i < batch; ++i) {
        Tensor zi = conv2d(slice_sample(x, i), p.w, spec.stride, spec.pad);
        if (i == 0) {
          std::vector<int> s = zi.shape;
          s.insert(s.begin(), batch);
          z = Tensor::zeros(s);
        }
        if (spec.bias) {
          int plane = zi.dim(1) * zi.dim(2);
          for (int c = 0; c < zi.dim(0); ++c)
            for (int q = 0; q < plane; ++q) zi[static_cast<std::int64_t>(c) * plane + q] += p.b[c];
        }
        put_sample(z, i, zi);
      }
      t.pre_act = z;
      t.output = z;
      return z;
    }
    case LayerKind::kMaxPool2d: {
      check(x.rank() == 4, "maxpool2d: expected [batch x C x H x W] input");
      int batch = x.dim(0);
      Tensor out;
      t.pool.resize(static_cast<size_t>(batch));
      for (int i = 0; i < batch; ++i) {
        auto [oi, idx] = maxpool2d(slice_sample(x, i), spec.k, spec.stride);
        if (i == 0) {
          std::vector<int> s = oi.shape;
          s.insert(s.begin(), batch);
          out = Tensor::zeros(s);
        }
        put_sample(out, i, oi);
        t.pool[static_cast<size_t>(i)] = std::move(idx);
      }
      t.output = out;
      return out;
    }
    case LayerKind::kBatchNorm: {
      FeatureDims fd = feature_dims(x);
      check(fd.features == spec.features, "batchnorm: feature count mismatch");
      Tensor mean = Tensor::zeros({fd.features});
      Tensor var = Tensor::zeros({fd.features});
      double n = static_cast<double>(fd.batch) * fd.inner;
      if (train) {
        for (int b = 0; b < fd.batch; ++b)
          for (int f = 0; f < fd.features; ++f) {
            const double* base = x.data.data() +
                                 (static_cast<size_t>(b) * fd.features + f) * fd.inner;
            for (int q = 0; q < fd.inner; ++q) mean[f] += base[q];
          }
        for (int f = 0; f < fd.features; ++f) mean[f] /= n;
        for (int b = 0; b < fd.batch; ++b)
          for (int f = 0; f < fd.features; ++f) {
            const double* base = x.data.data() +
                                 (static_cast<size_t>(b) * fd.features + f) * fd.inner;
            for (int q = 0; q < fd.inner; ++q) {
              double d = base[q] - mean[f];
              var[f] += d * d;
            }
          }
        for (int f = 0; f < fd.features; ++f) var[f] /= n;
        // biased variance normalizes the batch; the running estimate keeps
        // the unbiased version
        double m = spec.bn_momentum;
        for (int f = 0; f < fd.features; ++f) {
          double unbiased = n > 1.0 ? var[f] * n / (n - 1.0) : var[f];
          p.running_mean[f] = (1.0 - m) * p.running_mean[f] + m * mean[f];
          p.running_var[f] = (1.0 - m) * p.running_var[f] + m * unbiased;
        }
      } else {
        mean = p.running_mean;
        var = p.running_var;
        for (int f = 0; f < fd.features; ++f)
          check(var[f] > 0.0, "batchnorm: running variance must be positive");
      }
      Tensor norm = Tensor::zeros(x.shape);
      Tensor out = Tensor::zeros(x.shape);
      for (int b = 0; b < fd.batch; ++b)
        for (int f = 0; f < fd.features; ++f) {
          double inv = 1.0 / std::sqrt(var[f] + spec.bn_eps);
          size_t off = (static_cast<size_t>(b) * fd.features + f) * fd.inner;
          for (int q = 0; q < fd.inner; ++q) {
            double nv = (x.data[off + q] - mean[f]) * inv;
            norm.data[off + q] = nv;
            out.data[off + q] = p.gamma[f] * nv + p.beta[f];
          }
        }
      t.bn_mean = mean;
      t.bn_var = var;
      t.bn_norm = norm;
      t.output = out;
      return out;
    }
    case LayerKind::kDropout: {
      if (!train || spec.drop_p == 0.0) {
        t.output = x;
        return x;
      }
      double keep = 1.0 - spec.drop_p;
      std::uniform_real_distribution<double> u(0.0, 1.0);
      Tensor mask = Tensor::zeros(x.shape);
      Tensor out = Tensor::zeros(x.shape);
      for (std::int64_t i = 0; i < x.numel(); ++i) {
        double kept = u(*ctx.rng) < keep ? 1.0 : 0.0;
        mask[i] = kept;
        out[i] = x[i] * kept / keep;
      }
      t.dropout_mask = mask;
      t.output = out;
      return out;
    }
    case LayerKind::kFlatten: {
      check(x.rank() >= 2, "flatten: need batch dimension");
      int rest = 1;
      for (int i = 1; i < x.rank(); ++i) rest *= x.dim(i);
      Tensor out = x.reshaped({x.dim(0), rest});
      t.output = out;
      return out;
    }
    case LayerKind::kActivation: {
      Tensor out = apply_activation(spec.act, x);
      // batch-dead fraction: features that stay exactly zero for every sample
      {
        FeatureDims fd = feature_dims(out);
        std::int64_t per_sample = static_cast<std::int64_t>(fd.features) * fd.inner;
        std::int64_t dead = 0;
        for (std::int64_t j = 0; j < per_sample; ++j) {
          bool all_zero = true;
          for (int b = 0; b < fd.batch && all_zero; ++b)
            all_zero = out.data[static_cast<size_t>(b) * per_sample + j] == 0.0;
          if (all_zero) ++dead;
        }
        t.dead_fraction = per_sample > 0 ? static_cast<double>(dead) / per_sample : 0.0;
      }
      if (train && ctx.noise_std > 0.0 && !is_network_output) {
        std::normal_distribution<double> g(0.0, ctx.noise_std);
        Tensor noise = Tensor::zeros(out.shape);
        for (std::int64_t i = 0; i < out.numel(); ++i) {
          noise[i] = g(*ctx.rng);
          out[i] += noise[i];
        }
        t.noise = noise;
      }
      t.output = out;
      return out;
    }
    case LayerKind::kResidualSum: {
      Tensor branch_out = walk_layers(spec.branch, p.branch, x, t.branch, ctx, false);
      check(branch_out.same_shape(x), "residual_sum: branch shape mismatch");
      Tensor out = x;
      for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += branch_out[i];
      t.branch_out = branch_out;
      t.output = out;
      return out;
    }
    case LayerKind::kLif: {
      // U[t] = beta*U[t-1] + WX[t] - theta*H(U[t-1]-theta); spike H(U[t]-theta)
      Tensor membrane_prev;
      if (lif != nullptr && lif->membrane.numel() > 0) {
        membrane_prev = lif->membrane;
        check(membrane_prev.same_shape(x), "lif: state shape mismatch");
      } else {
        membrane_prev = Tensor::zeros(x.shape);
      }
      Tensor history = Tensor::zeros(x.shape);
      Tensor potential = Tensor::zeros(x.shape);
      Tensor spike = Tensor::zeros(x.shape);
      for (std::int64_t i = 0; i < x.numel(); ++i) {
        double reset = membrane_prev[i] > spec.lif_theta ? spec.lif_theta : 0.0;
        history[i] = spec.lif_beta * membrane_prev[i] - reset;
        potential[i] = history[i] + x[i];
        spike[i] = potential[i] > spec.lif_theta ? 1.0 : 0.0;
      }
      if (lif != nullptr) {
        lif->membrane = potential;
        lif->last_spike = spike;
      }
      t.pre_act = x;  // drive
      t.lif_history = history;
      t.lif_potential = potential;
      t.output = spike;
      return spike;
    }
  }
  throw std::runtime_error("forward: unhandled layer kind");
}

Tensor walk_layers(const std::vector<LayerSpec>& specs,
                   std::vector<LayerParams>& params, const Tensor& x0,
                   std::vector<LayerTape>& tapes, WalkContext& ctx,
                   bool outermost) {
  Tensor x = x0;
  tapes.resize(specs.size());
  for (size_t i = 0; i < specs.size(); ++i) {
    bool is_output = outermost && i + 1 == specs.size();
    LifLayerState* lif = nullptr;
    if (outermost && ctx.lif_state != nullptr && specs[i].kind == LayerKind::kLif)
      lif = &(*ctx.lif_state)[i];
    x = run_layer(specs[i], params[i], x, tapes[i], ctx, is_output, lif);
  }
  return x;
}

}  // namespace

std::pair<Tensor, ForwardTape> forward(Network& net, const Tensor& x,
                                       const ForwardOptions& opts,
                                       std::vector<LifLayerState>* lif_state) {
  check(!net.layers.empty(), "forward: empty network");
  check(x.rank() >= 2, "forward: input must carry a batch dimension");
  check(opts.noise_std >= 0.0, "forward: noise_std must be >= 0");
  if (lif_state != nullptr)
    check(lif_state->size() == net.layers.size(), "forward: lif state layout mismatch");

  Rng rng(opts.rng_seed);
  WalkContext ctx{opts.mode, opts.noise_std, &rng, lif_state};
  ForwardTape tape;
  tape.train = opts.mode == Mode::kTrain;
  Tensor out = walk_layers(net.layers, net.params, x, tape.layers, ctx, true);
  ensure_finite(out, "forward");
  tape.output = out;
  return {out, tape};
}

}  // namespace lfp
