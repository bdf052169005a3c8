#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fat/nn.hpp"

namespace fat {

struct VatHyper {
  double epsilon = 1.5;  // perturbation radius, input-space units
  double xi = 1e-6;      // finite-difference probe scale
  int power_iters = 1;
};

// Unit-norm perturbation maximizing the predictive-distribution KL at radius
// epsilon, found by power iteration with an explicit sign correction.
struct AdvDirection {
  std::vector<double> direction;
  double kl_value = 0.0;
  int iterations_used = 0;
  // Set when the input gradient vanished (locally constant classifier); the
  // direction is all-zero and callers are expected to skip the sample.
  bool degenerate = false;
};

struct AdvBatch {
  DenseMatrix directions;  // n x d, zero rows where degenerate
  std::vector<double> kl_values;
  std::vector<char> degenerate;
  int iterations_used = 0;
};

double kl_divergence(std::span<const double> p, std::span<const double> q);

AdvBatch adversarial_directions(const MlpModel& snapshot, const DenseMatrix& x,
                                const VatHyper& hyper, std::uint64_t seed);

AdvDirection adversarial_direction(const MlpModel& snapshot,
                                   std::span<const double> x,
                                   const VatHyper& hyper, std::uint64_t seed);

struct VatLossResult {
  double loss = 0.0;
  ModelGrads grads;  // gradient with respect to theta only
};

// D_KL(p(.|x; snapshot) || p(.|x + r_adv; model)). The snapshot side is a
// constant; gradients flow only through the second argument.
VatLossResult vat_loss(const MlpModel& snapshot, MlpModel& model,
                       std::span<const double> x, std::span<const double> r_adv);

}  // namespace fat
