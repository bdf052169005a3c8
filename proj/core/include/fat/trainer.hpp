#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fat/adam.hpp"
#include "fat/badgen.hpp"
#include "fat/data.hpp"
#include "fat/nn.hpp"
#include "fat/vat.hpp"

namespace fat {

enum class Method { Supervised, Vat, Fat };

struct OptimizerSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct FatConfig {
  VatHyper vat;
  BadGenHyper badgen;
  double lambda_max = 1.0;
  double lambda_step = 0.1;  // per epoch
  std::size_t epochs = 100;
  std::size_t labeled_batch = 32;
  std::size_t unlabeled_batch = 128;
  std::vector<std::size_t> hidden = {100, 100};
  OptimizerSettings opt;
  std::uint64_t seed = 1;
  Method method = Method::Fat;
  bool use_norm = false;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lambda = 0.0;
  double loss_ce = 0.0;
  double loss_vat = 0.0;
  double loss_true = 0.0;
  double loss_fake = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double bad_kept_frac = 0.0;
  double seconds = 0.0;
};

struct StepLosses {
  double ce = 0.0;
  double vat = 0.0;
  double l_true = 0.0;
  double l_fake = 0.0;
  std::size_t bad_kept = 0;
  std::size_t bad_total = 0;
};

double warmup_lambda(std::size_t epoch, const FatConfig& cfg);

// One optimizer step of the full objective: labeled cross-entropy, the VAT
// consistency term with directions from the start-of-step snapshot, and the
// lambda-weighted bad-sample terms. Supervised/Vat methods drop the unused
// terms but share the same code path and random streams.
StepLosses fat_step(MlpModel& model, AdamState& adam, const DenseMatrix& labeled_x,
                    const std::vector<int>& labeled_y, const DenseMatrix& unlabeled_x,
                    double lambda, const FatConfig& cfg, std::uint64_t step_seed);

struct TrainResult {
  MlpModel best_model;
  MlpModel last_model;
  std::vector<EpochMetrics> metrics;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
};

TrainResult train(const FatConfig& cfg, const SslDataset& data);

double evaluate(const MlpModel& model, const DenseMatrix& x,
                const std::vector<int>& y);

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& metrics);

}  // namespace fat
