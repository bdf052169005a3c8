#include "fat/adam.hpp"

#include <cmath>
#include <span>

namespace fat {

namespace {

void update_span(std::span<double> param, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, const AdamState& s,
                 double corr1, double corr2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * grad[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / corr1;
    const double vhat = v[i] / corr2;
    param[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    if (!std::isfinite(param[i]))
      throw DivergenceError("adam_step: non-finite parameter");
  }
}

}  // namespace

AdamState init_adam(const MlpModel& model, double lr, double beta1, double beta2,
                    double eps) {
  AdamState s;
  s.m = zero_grads(model);
  s.v = zero_grads(model);
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void adam_step(MlpModel& model, const ModelGrads& grads, AdamState& state) {
  check_shape(grads.layers.size() == model.layers.size(), "adam_step: layer count");
  state.step += 1;
  const double corr1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Layer& layer = model.layers[l];
    const LayerGrads& g = grads.layers[l];
    LayerGrads& m = state.m.layers[l];
    LayerGrads& v = state.v.layers[l];
    check_shape(g.weight.same_shape(layer.weight), "adam_step: weight grad shape");
    check_shape(g.bias.size() == layer.bias.size(), "adam_step: bias grad shape");

    update_span(layer.weight.data, g.weight.data, m.weight.data, v.weight.data,
                state, corr1, corr2);
    update_span(layer.bias, g.bias, m.bias, v.bias, state, corr1, corr2);
    if (layer.norm) {
      check_shape(g.gamma.size() == layer.norm->gamma.size(),
                  "adam_step: norm grad shape");
      update_span(layer.norm->gamma, g.gamma, m.gamma, v.gamma, state, corr1, corr2);
      update_span(layer.norm->beta, g.beta, m.beta, v.beta, state, corr1, corr2);
    }
  }
}

}  // namespace fat
