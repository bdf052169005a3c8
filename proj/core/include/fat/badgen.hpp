#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fat/nn.hpp"
#include "fat/vat.hpp"

namespace fat {

struct BadGenHyper {
  double capital_c = 2.0;  // displacement radius along the adversarial ray
  double alpha = 0.01;     // confidence threshold; keep iff conf <= 1 - alpha
};

struct BadSample {
  std::vector<double> origin;
  std::vector<double> point;
  double confidence = 0.0;  // max_k p(k | point; snapshot)
  bool kept = false;
  bool degenerate = false;  // direction search failed; never kept
};

BadSample generate_bad_sample(const MlpModel& snapshot, std::span<const double> x,
                              const VatHyper& vat_hyper, const BadGenHyper& hyper,
                              std::uint64_t seed);

std::vector<BadSample> generate_bad_samples(const MlpModel& snapshot,
                                            const DenseMatrix& x,
                                            const VatHyper& vat_hyper,
                                            const BadGenHyper& hyper,
                                            std::uint64_t seed);

struct ScalarGrad {
  double value = 0.0;
  std::vector<double> grad;  // with respect to the pre-softmax vector g
};

// Entropy of the real-class probabilities under the (K+1)-softmax with the
// implicit fake logit fixed at zero.
ScalarGrad l_true(std::span<const double> g);

// Negative log-probability of the implicit fake class: log(1 + sum_k exp g_k).
ScalarGrad l_fake(std::span<const double> g);

}  // namespace fat
