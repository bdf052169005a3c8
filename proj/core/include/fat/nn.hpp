#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fat/matrix.hpp"

namespace fat {

enum class Activation { Identity, Relu, LeakyRelu };

enum class Mode { Train, Eval };

// Per-feature affine normalization with running statistics. Off by default;
// training-mode forward passes use batch statistics and update the running
// ones, eval-mode passes use the frozen running statistics.
struct BatchNorm {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;
  double eps = 1e-5;
};

struct Layer {
  DenseMatrix weight;  // fan_in x fan_out
  std::vector<double> bias;
  Activation act = Activation::Identity;
  double leaky_slope = 0.1;
  std::optional<BatchNorm> norm;

  std::size_t fan_in() const { return weight.rows; }
  std::size_t fan_out() const { return weight.cols; }
};

// Dense network computing the pre-softmax vector g(x; theta). The last layer
// activation is always Identity.
struct MlpModel {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().fan_in(); }
  std::size_t output_dim() const { return layers.back().fan_out(); }
};

struct LayerCache {
  DenseMatrix input;     // n x fan_in
  DenseMatrix lin;       // linear output before normalization
  DenseMatrix pre_act;   // input to the activation (post-norm when norm on)
  DenseMatrix norm_hat;  // normalized values (only when norm on)
  std::vector<double> batch_mean, batch_inv_std;  // stats used by this pass
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Mode mode = Mode::Eval;
  std::size_t batch_size = 0;
  std::vector<std::size_t> dims;  // fan_in per layer + final fan_out
};

struct ForwardResult {
  DenseMatrix logits;  // n x K
  ForwardCache cache;
};

// Per-layer gradient shapes mirror the model parameters exactly.
struct LayerGrads {
  DenseMatrix weight;
  std::vector<double> bias;
  std::vector<double> gamma, beta;  // empty when the layer has no norm
};

struct ModelGrads {
  std::vector<LayerGrads> layers;
};

ModelGrads zero_grads(const MlpModel& model);
void accumulate(ModelGrads& into, const ModelGrads& g, double scale = 1.0);

// Train-mode forward updates running normalization statistics (the only
// mutation in the engine); eval mode leaves the model untouched.
ForwardResult forward(MlpModel& model, const DenseMatrix& batch, Mode mode);
ForwardResult forward_eval(const MlpModel& model, const DenseMatrix& batch);

struct BackpropResult {
  ModelGrads param_grads;
  DenseMatrix input_grads;  // n x d
};

// Gradients of a scalar loss given its gradient at the logits. The cache must
// come from a matching forward call on the same model.
BackpropResult backprop(const MlpModel& model, const ForwardCache& cache,
                        const DenseMatrix& loss_grad_at_logits);

MlpModel he_init(const std::vector<std::size_t>& layer_dims, Activation act,
                 std::uint64_t seed, bool with_norm = false);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);
DenseMatrix softmax_rows(const DenseMatrix& logits);

// Argmax with lowest-index tie-breaking.
std::size_t argmax(std::span<const double> v);

}  // namespace fat
