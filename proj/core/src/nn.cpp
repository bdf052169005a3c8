#include "fat/nn.hpp"

#include <algorithm>
#include <cmath>

#include "fat/rng.hpp"

namespace fat {

namespace {

double act_forward(Activation a, double slope, double z) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::LeakyRelu: return z > 0.0 ? z : slope * z;
  }
  return z;
}

double act_deriv(Activation a, double slope, double z) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::LeakyRelu: return z > 0.0 ? 1.0 : slope;
  }
  return 1.0;
}

void check_cache(const MlpModel& model, const ForwardCache& cache) {
  bool ok = cache.layers.size() == model.layers.size() &&
            cache.dims.size() == model.layers.size() + 1;
  if (ok) {
    for (std::size_t l = 0; l < model.layers.size(); ++l)
      ok = ok && cache.dims[l] == model.layers[l].fan_in();
    ok = ok && cache.dims.back() == model.layers.back().fan_out();
  }
  if (!ok)
    throw ShapeError("backprop: cache does not match model (stale or mismatched)");
}

}  // namespace

ModelGrads zero_grads(const MlpModel& model) {
  ModelGrads g;
  g.layers.reserve(model.layers.size());
  for (const Layer& layer : model.layers) {
    LayerGrads lg;
    lg.weight = DenseMatrix(layer.fan_in(), layer.fan_out());
    lg.bias.assign(layer.fan_out(), 0.0);
    if (layer.norm) {
      lg.gamma.assign(layer.fan_out(), 0.0);
      lg.beta.assign(layer.fan_out(), 0.0);
    }
    g.layers.push_back(std::move(lg));
  }
  return g;
}

void accumulate(ModelGrads& into, const ModelGrads& g, double scale) {
  check_shape(into.layers.size() == g.layers.size(), "accumulate: layer count");
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    LayerGrads& a = into.layers[l];
    const LayerGrads& b = g.layers[l];
    check_shape(a.weight.same_shape(b.weight), "accumulate: weight shape");
    for (std::size_t i = 0; i < a.weight.data.size(); ++i)
      a.weight.data[i] += scale * b.weight.data[i];
    for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += scale * b.bias[i];
    for (std::size_t i = 0; i < a.gamma.size(); ++i)
      a.gamma[i] += scale * b.gamma[i];
    for (std::size_t i = 0; i < a.beta.size(); ++i) a.beta[i] += scale * b.beta[i];
  }
}

ForwardResult forward(MlpModel& model, const DenseMatrix& batch, Mode mode) {
  check_shape(batch.cols == model.input_dim(),
              "forward: batch width does not match model input dim");
  const std::size_t n = batch.rows;

  ForwardResult out;
  out.cache.mode = mode;
  out.cache.batch_size = n;
  out.cache.layers.resize(model.layers.size());
  for (const Layer& layer : model.layers)
    out.cache.dims.push_back(layer.fan_in());
  out.cache.dims.push_back(model.layers.back().fan_out());

  DenseMatrix x = batch;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Layer& layer = model.layers[l];
    LayerCache& lc = out.cache.layers[l];
    lc.input = x;

    DenseMatrix u = matmul(x, layer.weight);
    const std::size_t m = layer.fan_out();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) u(i, j) += layer.bias[j];
    lc.lin = u;

    if (layer.norm) {
      BatchNorm& bn = *layer.norm;
      lc.batch_mean.assign(m, 0.0);
      lc.batch_inv_std.assign(m, 0.0);
      std::vector<double> var(m, 0.0);
      if (mode == Mode::Train) {
        for (std::size_t j = 0; j < m; ++j) {
          double mean = 0.0;
          for (std::size_t i = 0; i < n; ++i) mean += u(i, j);
          mean /= static_cast<double>(n);
          double v = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double d = u(i, j) - mean;
            v += d * d;
          }
          v /= static_cast<double>(n);
          lc.batch_mean[j] = mean;
          var[j] = v;
          bn.running_mean[j] = bn.momentum * bn.running_mean[j] + (1.0 - bn.momentum) * mean;
          bn.running_var[j] = bn.momentum * bn.running_var[j] + (1.0 - bn.momentum) * v;
        }
      } else {
        lc.batch_mean = bn.running_mean;
        var = bn.running_var;
      }
      for (std::size_t j = 0; j < m; ++j)
        lc.batch_inv_std[j] = 1.0 / std::sqrt(var[j] + bn.eps);

      lc.norm_hat = DenseMatrix(n, m);
      DenseMatrix z(n, m);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double hat = (u(i, j) - lc.batch_mean[j]) * lc.batch_inv_std[j];
          lc.norm_hat(i, j) = hat;
          z(i, j) = bn.gamma[j] * hat + bn.beta[j];
        }
      lc.pre_act = std::move(z);
    } else {
      lc.pre_act = u;
    }

    DenseMatrix y(n, m);
    for (std::size_t i = 0; i < n * m; ++i)
      y.data[i] = act_forward(layer.act, layer.leaky_slope, lc.pre_act.data[i]);
    x = std::move(y);
  }

  if (!x.all_finite())
    throw DivergenceError("forward: non-finite logits");
  out.logits = std::move(x);
  return out;
}

ForwardResult forward_eval(const MlpModel& model, const DenseMatrix& batch) {
  // Eval mode never mutates the model.
  return forward(const_cast<MlpModel&>(model), batch, Mode::Eval);
}

BackpropResult backprop(const MlpModel& model, const ForwardCache& cache,
                        const DenseMatrix& loss_grad_at_logits) {
  check_cache(model, cache);
  check_shape(loss_grad_at_logits.rows == cache.batch_size &&
                  loss_grad_at_logits.cols == model.output_dim(),
              "backprop: loss gradient shape");

  const std::size_t n = cache.batch_size;
  BackpropResult out;
  out.param_grads = zero_grads(model);

  DenseMatrix da = loss_grad_at_logits;  // dL/d(activation output)
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const Layer& layer = model.layers[li];
    const LayerCache& lc = cache.layers[li];
    LayerGrads& lg = out.param_grads.layers[li];
    const std::size_t m = layer.fan_out();

    // Through the activation.
    DenseMatrix dz(n, m);
    for (std::size_t i = 0; i < n * m; ++i)
      dz.data[i] = da.data[i] * act_deriv(layer.act, layer.leaky_slope, lc.pre_act.data[i]);

    // Through the normalization (if any) back to the linear output.
    DenseMatrix du;
    if (layer.norm) {
      const BatchNorm& bn = *layer.norm;
      lg.gamma.assign(m, 0.0);
      lg.beta.assign(m, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          lg.gamma[j] += dz(i, j) * lc.norm_hat(i, j);
          lg.beta[j] += dz(i, j);
        }
      du = DenseMatrix(n, m);
      if (cache.mode == Mode::Train) {
        for (std::size_t j = 0; j < m; ++j) {
          double sum_dhat = 0.0, sum_dhat_hat = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double dhat = dz(i, j) * bn.gamma[j];
            sum_dhat += dhat;
            sum_dhat_hat += dhat * lc.norm_hat(i, j);
          }
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i) {
            const double dhat = dz(i, j) * bn.gamma[j];
            du(i, j) = lc.batch_inv_std[j] *
                       (dhat - inv_n * sum_dhat - inv_n * lc.norm_hat(i, j) * sum_dhat_hat);
          }
        }
      } else {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j)
            du(i, j) = dz(i, j) * bn.gamma[j] * lc.batch_inv_std[j];
      }
    } else {
      du = std::move(dz);
    }

    lg.weight = matmul_tn(lc.input, du);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) lg.bias[j] += du(i, j);

    da = matmul_nt(du, layer.weight);  // dL/d(input of this layer)
  }

  out.input_grads = std::move(da);
  return out;
}

MlpModel he_init(const std::vector<std::size_t>& layer_dims, Activation act,
                 std::uint64_t seed, bool with_norm) {
  if (layer_dims.size() < 2)
    throw ConfigError("he_init: need at least input and output dims");
  for (std::size_t d : layer_dims)
    if (d < 1) throw ConfigError("he_init: all dims must be >= 1");

  Rng rng(derive_seed(seed, 0x1417));
  MlpModel model;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    Layer layer;
    const std::size_t fin = layer_dims[l], fout = layer_dims[l + 1];
    layer.weight = DenseMatrix(fin, fout);
    const double sd = std::sqrt(2.0 / static_cast<double>(fin));
    for (double& w : layer.weight.data) w = sd * rng.normal();
    layer.bias.assign(fout, 0.0);
    const bool last = (l + 2 == layer_dims.size());
    layer.act = last ? Activation::Identity : act;
    if (with_norm && !last) {
      BatchNorm bn;
      bn.gamma.assign(fout, 1.0);
      bn.beta.assign(fout, 0.0);
      bn.running_mean.assign(fout, 0.0);
      bn.running_var.assign(fout, 1.0);
      layer.norm = std::move(bn);
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    denom += p[i];
  }
  for (double& v : p) v /= denom;
  return p;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> lp(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v - mx);
  const double lse = mx + std::log(denom);
  for (std::size_t i = 0; i < logits.size(); ++i) lp[i] = logits[i] - lse;
  return lp;
}

DenseMatrix softmax_rows(const DenseMatrix& logits) {
  DenseMatrix p(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    auto pi = softmax(logits.row(i));
    std::copy(pi.begin(), pi.end(), p.row(i).begin());
  }
  return p;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace fat
