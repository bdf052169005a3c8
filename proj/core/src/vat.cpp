#include "fat/vat.hpp"

#include <cmath>

#include "fat/rng.hpp"

namespace fat {

namespace {

constexpr double kDegenerateNorm = 1e-12;

// Per-row KL between reference probabilities and softmax of perturbed logits.
double row_kl(std::span<const double> p_ref, std::span<const double> logits) {
  const auto lq = log_softmax(logits);
  double kl = 0.0;
  for (std::size_t k = 0; k < p_ref.size(); ++k) {
    if (p_ref[k] > 0.0) kl += p_ref[k] * (std::log(p_ref[k]) - lq[k]);
  }
  return kl < 0.0 ? 0.0 : kl;  // clamp tiny negative rounding
}

DenseMatrix shifted(const DenseMatrix& x, const DenseMatrix& dir, double scale) {
  DenseMatrix y = x;
  for (std::size_t i = 0; i < y.data.size(); ++i)
    y.data[i] += scale * dir.data[i];
  return y;
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (q[k] <= 0.0) throw DomainError("kl_divergence: q entry <= 0");
    if (p[k] > 0.0) kl += p[k] * std::log(p[k] / q[k]);
  }
  return kl < 0.0 ? 0.0 : kl;
}

AdvBatch adversarial_directions(const MlpModel& snapshot, const DenseMatrix& x,
                                const VatHyper& hyper, std::uint64_t seed) {
  if (hyper.epsilon <= 0.0 || hyper.xi <= 0.0 || hyper.power_iters < 1)
    throw ConfigError("adversarial_directions: invalid hyperparameters");
  const std::size_t n = x.rows, d = x.cols;
  const std::size_t K = snapshot.output_dim();

  // Reference distributions p(.|x; snapshot), constant during the search.
  const DenseMatrix p_ref = softmax_rows(forward_eval(snapshot, x).logits);

  AdvBatch out;
  out.directions = DenseMatrix(n, d);
  out.kl_values.assign(n, 0.0);
  out.degenerate.assign(n, 0);
  out.iterations_used = hyper.power_iters;

  // Random unit start per row.
  Rng rng(derive_seed(seed, 0xadd1));
  for (std::size_t i = 0; i < n; ++i) {
    auto di = out.directions.row(i);
    for (double& v : di) v = rng.normal();
    const double nrm = norm2(di);
    for (double& v : di) v /= nrm;
  }

  for (int it = 0; it < hyper.power_iters; ++it) {
    const DenseMatrix probe = shifted(x, out.directions, hyper.xi);
    ForwardResult fr = forward_eval(snapshot, probe);
    const DenseMatrix q = softmax_rows(fr.logits);

    // d KL(p_ref || softmax(g)) / d g = q - p_ref, rowwise.
    DenseMatrix dlogits(n, K);
    for (std::size_t i = 0; i < n * K; ++i)
      dlogits.data[i] = q.data[i] - p_ref.data[i];
    const DenseMatrix grad = backprop(snapshot, fr.cache, dlogits).input_grads;

    for (std::size_t i = 0; i < n; ++i) {
      const double nrm = norm2(grad.row(i));
      auto di = out.directions.row(i);
      if (nrm < kDegenerateNorm) {
        out.degenerate[i] = 1;
        for (double& v : di) v = 0.0;
      } else {
        for (std::size_t j = 0; j < d; ++j) di[j] = grad(i, j) / nrm;
      }
    }
  }

  // Sign correction: keep whichever of +/-v achieves the larger KL at radius
  // epsilon (ties keep +v).
  const DenseMatrix q_pos =
      softmax_rows(forward_eval(snapshot, shifted(x, out.directions, hyper.epsilon)).logits);
  const DenseMatrix q_neg =
      softmax_rows(forward_eval(snapshot, shifted(x, out.directions, -hyper.epsilon)).logits);
  for (std::size_t i = 0; i < n; ++i) {
    if (out.degenerate[i]) continue;
    const double kl_pos = kl_divergence(p_ref.row(i), q_pos.row(i));
    const double kl_neg = kl_divergence(p_ref.row(i), q_neg.row(i));
    if (kl_neg > kl_pos) {
      for (double& v : out.directions.row(i)) v = -v;
      out.kl_values[i] = kl_neg;
    } else {
      out.kl_values[i] = kl_pos;
    }
  }
  return out;
}

AdvDirection adversarial_direction(const MlpModel& snapshot,
                                   std::span<const double> x,
                                   const VatHyper& hyper, std::uint64_t seed) {
  if (snapshot.output_dim() < 2)
    throw ConfigError("adversarial_direction: model output dim must be >= 2");
  DenseMatrix xm(1, x.size());
  std::copy(x.begin(), x.end(), xm.data.begin());
  AdvBatch b = adversarial_directions(snapshot, xm, hyper, seed);
  AdvDirection out;
  out.direction.assign(b.directions.row(0).begin(), b.directions.row(0).end());
  out.kl_value = b.kl_values[0];
  out.iterations_used = b.iterations_used;
  out.degenerate = b.degenerate[0] != 0;
  return out;
}

VatLossResult vat_loss(const MlpModel& snapshot, MlpModel& model,
                       std::span<const double> x, std::span<const double> r_adv) {
  if (x.size() != r_adv.size()) throw ShapeError("vat_loss: x and r_adv lengths differ");
  DenseMatrix xm(1, x.size());
  std::copy(x.begin(), x.end(), xm.data.begin());
  const auto p_ref = softmax(forward_eval(snapshot, xm).logits.row(0));

  DenseMatrix xp = xm;
  for (std::size_t j = 0; j < x.size(); ++j) xp(0, j) += r_adv[j];
  // Frozen statistics on the perturbed pass so the KL compares distributions,
  // not batch statistics.
  ForwardResult fr = forward_eval(model, xp);
  const auto q = softmax(fr.logits.row(0));

  VatLossResult out;
  out.loss = row_kl(p_ref, fr.logits.row(0));
  DenseMatrix dlogits(1, q.size());
  for (std::size_t k = 0; k < q.size(); ++k) dlogits(0, k) = q[k] - p_ref[k];
  out.grads = backprop(model, fr.cache, dlogits).param_grads;
  return out;
}

}  // namespace fat
