#include "fat/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "fat/rng.hpp"
#include "fat/vat.hpp"

namespace fat {

namespace {

DenseMatrix one_row(std::span<const double> x) {
  DenseMatrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.data.begin());
  return m;
}

std::vector<double> logits_at(const MlpModel& model, std::span<const double> x) {
  const auto r = forward_eval(model, one_row(x));
  return {r.logits.row(0).begin(), r.logits.row(0).end()};
}

// Margin of the class predicted at the ray origin versus the best other class.
double class_margin(const MlpModel& model, std::span<const double> x,
                    std::size_t c0) {
  const auto g = logits_at(model, x);
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.size(); ++k)
    if (k != c0) best_other = std::max(best_other, g[k]);
  return g[c0] - best_other;
}

}  // namespace

double boundary_distance_linear(const LinearLogistic& m,
                                std::span<const double> x) {
  const double wn = norm2(m.w);
  if (wn == 0.0) throw DomainError("boundary_distance_linear: w is all-zero");
  return std::abs(m.b + dot(m.w, x)) / wn;
}

std::vector<double> logistic_adv_direction_closed_form(const LinearLogistic& m,
                                                       std::span<const double> x,
                                                       double /*epsilon*/) {
  const double margin = m.b + dot(m.w, x);
  if (margin == 0.0)
    throw DomainError("logistic_adv_direction_closed_form: x on the boundary");
  const double wn = norm2(m.w);
  if (wn == 0.0) throw DomainError("logistic_adv_direction_closed_form: w zero");
  const double s = margin > 0.0 ? -1.0 : 1.0;
  std::vector<double> dir(m.w.size());
  for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = s * m.w[i] / wn;
  return dir;
}

MlpModel as_mlp(const LinearLogistic& m) {
  MlpModel model;
  Layer layer;
  layer.weight = DenseMatrix(m.w.size(), 2);
  for (std::size_t i = 0; i < m.w.size(); ++i) layer.weight(i, 1) = m.w[i];
  layer.bias = {0.0, m.b};
  layer.act = Activation::Identity;
  model.layers.push_back(std::move(layer));
  return model;
}

GridDirectionResult grid_direction_oracle(const MlpModel& model,
                                          std::span<const double> x,
                                          double epsilon, std::size_t n_grid) {
  if (x.size() != 2 || model.input_dim() != 2)
    throw ConfigError("grid_direction_oracle: 2D inputs only");
  const auto p_ref = softmax(logits_at(model, x));

  GridDirectionResult best;
  best.best_direction = {1.0, 0.0};
  best.best_kl = -1.0;
  std::vector<double> probe(2);
  for (std::size_t i = 0; i < n_grid; ++i) {
    const double t = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n_grid);
    const double u0 = std::cos(t), u1 = std::sin(t);
    probe[0] = x[0] + epsilon * u0;
    probe[1] = x[1] + epsilon * u1;
    const double kl = kl_divergence(p_ref, softmax(logits_at(model, probe)));
    if (kl > best.best_kl) {
      best.best_kl = kl;
      best.best_direction = {u0, u1};
    }
  }
  if (best.best_kl < 0.0) best.best_kl = 0.0;
  return best;
}

BoundaryReport prop2_check(const LinearLogistic& m, const DenseMatrix& samples,
                           double epsilon) {
  BoundaryReport r;
  std::size_t decreased = 0;
  for (std::size_t i = 0; i < samples.rows; ++i) {
    const auto x = samples.row(i);
    const double before = boundary_distance_linear(m, x);
    double after = before;
    if (epsilon > 0.0 && before > 0.0) {
      const auto dir = logistic_adv_direction_closed_form(m, x, epsilon);
      std::vector<double> x2(x.begin(), x.end());
      for (std::size_t j = 0; j < x2.size(); ++j) x2[j] += epsilon * dir[j];
      after = boundary_distance_linear(m, x2);
    }
    r.distance_before.push_back(before);
    r.distance_after.push_back(after);
    if (after < before) ++decreased;
  }
  r.fraction_decreased = samples.rows == 0
                             ? 0.0
                             : static_cast<double>(decreased) /
                                   static_cast<double>(samples.rows);
  return r;
}

RegionStatus normal_region_check(const MlpModel& model, std::span<const double> x,
                                 double max_ray, std::size_t n_steps) {
  const std::size_t K = model.output_dim();
  if (K > 2) throw ConfigError("normal_region_check: binary models only");

  // Decision function: g for scalar output, g1 - g0 for two logits.
  auto decision = [&](std::span<const double> pt) {
    const auto g = logits_at(model, pt);
    return K == 1 ? g[0] : g[1] - g[0];
  };

  ForwardResult fr = forward_eval(model, one_row(x));
  DenseMatrix dlogits(1, K);
  if (K == 1) {
    dlogits(0, 0) = 1.0;
  } else {
    dlogits(0, 0) = -1.0;
    dlogits(0, 1) = 1.0;
  }
  const DenseMatrix grad = backprop(model, fr.cache, dlogits).input_grads;
  const double gn = norm2(grad.row(0));
  if (gn < 1e-12) return RegionStatus::Indeterminate;

  const double f0 = decision(x);
  const double s = f0 > 0.0 ? 1.0 : -1.0;
  std::vector<double> pt(x.begin(), x.end());
  for (std::size_t step = 1; step <= n_steps; ++step) {
    const double t = max_ray * static_cast<double>(step) / static_cast<double>(n_steps);
    for (std::size_t j = 0; j < pt.size(); ++j)
      pt[j] = x[j] - t * s * grad(0, j) / gn;
    if (decision(pt) * f0 <= 0.0) return RegionStatus::Normal;
  }
  return RegionStatus::NotNormal;
}

double invariance_measure(const MlpModel& model, const DenseMatrix& samples,
                          double epsilon, std::size_t n_probe,
                          std::uint64_t seed) {
  if (n_probe < 1) throw ConfigError("invariance_measure: n_probe must be >= 1");
  const std::size_t d = samples.cols;
  Rng rng(derive_seed(seed, 0x1a5e));
  VatHyper vh;
  vh.epsilon = epsilon;
  vh.xi = 1e-6;

  std::size_t flipped = 0;
  std::vector<double> probe(d);
  for (std::size_t i = 0; i < samples.rows; ++i) {
    const auto x = samples.row(i);
    const std::size_t c0 = argmax(logits_at(model, x));
    bool flip = false;

    const AdvDirection adv =
        adversarial_direction(model, x, vh, derive_seed(seed, 0xf11b, i));
    if (!adv.degenerate) {
      for (std::size_t j = 0; j < d; ++j) probe[j] = x[j] + epsilon * adv.direction[j];
      flip = argmax(logits_at(model, probe)) != c0;
    }
    for (std::size_t p = 0; p < n_probe && !flip; ++p) {
      // Uniform in the epsilon-ball: unit direction times epsilon * u^(1/d).
      std::vector<double> u(d);
      for (double& v : u) v = rng.normal();
      const double un = norm2(u);
      const double rad =
          epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
      for (std::size_t j = 0; j < d; ++j) probe[j] = x[j] + rad * u[j] / un;
      flip = argmax(logits_at(model, probe)) != c0;
    }
    if (flip) ++flipped;
  }
  return samples.rows == 0 ? 0.0
                           : static_cast<double>(flipped) /
                                 static_cast<double>(samples.rows);
}

double boundary_crossing_along_ray(const MlpModel& model,
                                   std::span<const double> origin,
                                   std::span<const double> dir, double t_max,
                                   std::size_t n_steps) {
  const std::size_t c0 = argmax(logits_at(model, origin));
  auto margin_at = [&](double t) {
    std::vector<double> pt(origin.begin(), origin.end());
    for (std::size_t j = 0; j < pt.size(); ++j) pt[j] += t * dir[j];
    return class_margin(model, pt, c0);
  };

  double lo = 0.0, m_lo = margin_at(0.0);
  if (m_lo <= 0.0) return 0.0;
  double hi = -1.0;
  for (std::size_t step = 1; step <= n_steps; ++step) {
    const double t = t_max * static_cast<double>(step) / static_cast<double>(n_steps);
    const double m = margin_at(t);
    if (m <= 0.0) {
      hi = t;
      break;
    }
    lo = t;
  }
  if (hi < 0.0) return -1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (margin_at(mid) <= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

void write_boundary_report_csv(const std::string& path, const BoundaryReport& r) {
  std::ofstream os(path);
  if (!os) throw ParseError("boundary report: cannot open '" + path + "'");
  os << "distance_before,distance_after\n";
  char buf[80];
  for (std::size_t i = 0; i < r.distance_before.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", r.distance_before[i],
                  r.distance_after[i]);
    os << buf;
  }
}

}  // namespace fat
