#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fat/nn.hpp"

namespace fat {

// 2-class linear logistic model: p(y=1 | x) = sigmoid(b + w.x).
struct LinearLogistic {
  std::vector<double> w;
  double b = 0.0;
};

struct BoundaryReport {
  std::vector<double> distance_before;
  std::vector<double> distance_after;
  double fraction_decreased = 0.0;
  double fraction_normal = 0.0;  // ReLU-net region check, when run
};

double boundary_distance_linear(const LinearLogistic& m,
                                std::span<const double> x);

// The boundary-approaching unit direction -sign(w.x + b) * w / ||w||, which is
// the KL maximizer for sufficiently small epsilon. Throws DomainError on the
// boundary.
std::vector<double> logistic_adv_direction_closed_form(const LinearLogistic& m,
                                                       std::span<const double> x,
                                                       double epsilon);

// Builds the equivalent single-layer two-logit network (g1 - g0 = b + w.x).
MlpModel as_mlp(const LinearLogistic& m);

struct GridDirectionResult {
  std::vector<double> best_direction;
  double best_kl = 0.0;
};

// Brute-force KL maximization over n_grid evenly spaced 2D unit directions.
GridDirectionResult grid_direction_oracle(const MlpModel& model,
                                          std::span<const double> x,
                                          double epsilon, std::size_t n_grid);

// For each off-boundary sample, checks that stepping epsilon along the
// closed-form adversarial direction strictly decreases the boundary distance.
BoundaryReport prop2_check(const LinearLogistic& m, const DenseMatrix& samples,
                           double epsilon);

enum class RegionStatus { Normal, NotNormal, Indeterminate };

// Marches from x along -sign(g) * grad_x g up to max_ray; Normal iff the
// decision function changes sign along the ray.
RegionStatus normal_region_check(const MlpModel& model, std::span<const double> x,
                                 double max_ray, std::size_t n_steps);

// Fraction of samples for which some probed epsilon-ball perturbation
// (n_probe random points plus the adversarial direction) flips the argmax
// class. This is the existential form of the flip event.
double invariance_measure(const MlpModel& model, const DenseMatrix& samples,
                          double epsilon, std::size_t n_probe,
                          std::uint64_t seed);

// First t in [0, t_max] at which the predicted class along the ray
// origin + t * dir changes, found by scan plus bisection. Returns a negative
// value when no crossing is found.
double boundary_crossing_along_ray(const MlpModel& model,
                                   std::span<const double> origin,
                                   std::span<const double> dir, double t_max,
                                   std::size_t n_steps);

void write_boundary_report_csv(const std::string& path, const BoundaryReport& r);

}  // namespace fat
