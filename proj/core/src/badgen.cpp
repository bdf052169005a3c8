#include "fat/badgen.hpp"

#include <algorithm>
#include <cmath>

namespace fat {

namespace {

void check_hyper(const BadGenHyper& h) {
  if (h.capital_c <= 0.0) throw ConfigError("badgen: capital_c must be > 0");
  if (h.alpha <= 0.0 || h.alpha > 1.0)
    throw ConfigError("badgen: alpha must be in (0, 1]");
}

// log(1 + sum_k exp(g_k)), i.e. log-sum-exp over g with an implicit 0 logit.
double lse_with_zero(std::span<const double> g) {
  double mx = 0.0;
  for (double v : g) mx = std::max(mx, v);
  double s = std::exp(-mx);
  for (double v : g) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace

std::vector<BadSample> generate_bad_samples(const MlpModel& snapshot,
                                            const DenseMatrix& x,
                                            const VatHyper& vat_hyper,
                                            const BadGenHyper& hyper,
                                            std::uint64_t seed) {
  check_hyper(hyper);
  const std::size_t n = x.rows, d = x.cols;
  const AdvBatch adv = adversarial_directions(snapshot, x, vat_hyper, seed);

  DenseMatrix points = x;
  for (std::size_t i = 0; i < n * d; ++i)
    points.data[i] += hyper.capital_c * adv.directions.data[i];
  const DenseMatrix probs = softmax_rows(forward_eval(snapshot, points).logits);

  std::vector<BadSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    BadSample& b = out[i];
    b.origin.assign(x.row(i).begin(), x.row(i).end());
    b.point.assign(points.row(i).begin(), points.row(i).end());
    b.degenerate = adv.degenerate[i] != 0;
    auto pi = probs.row(i);
    b.confidence = *std::max_element(pi.begin(), pi.end());
    b.kept = !b.degenerate && b.confidence <= 1.0 - hyper.alpha;
  }
  return out;
}

BadSample generate_bad_sample(const MlpModel& snapshot, std::span<const double> x,
                              const VatHyper& vat_hyper, const BadGenHyper& hyper,
                              std::uint64_t seed) {
  DenseMatrix xm(1, x.size());
  std::copy(x.begin(), x.end(), xm.data.begin());
  return generate_bad_samples(snapshot, xm, vat_hyper, hyper, seed)[0];
}

ScalarGrad l_true(std::span<const double> g) {
  const std::size_t K = g.size();
  const double s = lse_with_zero(g);

  // q_k = exp(g_k - s); t_k = log q_k = g_k - s.
  std::vector<double> q(K), t(K);
  double ent = 0.0, q_sum = 0.0, qt_sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    t[k] = g[k] - s;
    q[k] = std::exp(t[k]);
    ent -= q[k] * t[k];
    q_sum += q[k];
    qt_sum += q[k] * t[k];
  }

  ScalarGrad out;
  out.value = ent;
  out.grad.resize(K);
  // dL/dg_j = -q_j * (t_j - sum_k q_k t_k + 1 - sum_k q_k)
  for (std::size_t j = 0; j < K; ++j)
    out.grad[j] = -q[j] * (t[j] - qt_sum + 1.0 - q_sum);
  return out;
}

ScalarGrad l_fake(std::span<const double> g) {
  const std::size_t K = g.size();
  const double s = lse_with_zero(g);
  ScalarGrad out;
  out.value = s;
  out.grad.resize(K);
  for (std::size_t j = 0; j < K; ++j) out.grad[j] = std::exp(g[j] - s);
  return out;
}

}  // namespace fat
