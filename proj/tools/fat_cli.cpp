// Experiment harness: training runs, property verification suites, and
// bad-sample inspection dumps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "fat/checkpoint.hpp"
#include "fat/config.hpp"
#include "fat/geometry.hpp"
#include "fat/rng.hpp"
#include "fat/trainer.hpp"

namespace fs = std::filesystem;
using namespace fat;

namespace {

constexpr const char* kVersion = "0.1.0";

struct FlagOverrides {
  std::vector<std::pair<std::string, std::string>> kv;
  void add(const std::string& key, const std::string& value) {
    kv.emplace_back(key, value);
  }
};

void dump_bad_samples_csv(const std::string& path,
                          const std::vector<BadSample>& samples) {
  std::ofstream os(path);
  if (!os) throw ConfigError("genbad: cannot open '" + path + "'");
  const std::size_t d = samples.empty() ? 0 : samples[0].origin.size();
  for (std::size_t j = 0; j < d; ++j) os << "origin" << j << ",";
  for (std::size_t j = 0; j < d; ++j) os << "point" << j << ",";
  os << "confidence,kept\n";
  char buf[64];
  for (const BadSample& b : samples) {
    for (double v : b.origin) {
      std::snprintf(buf, sizeof(buf), "%.17g,", v);
      os << buf;
    }
    for (double v : b.point) {
      std::snprintf(buf, sizeof(buf), "%.17g,", v);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g,%d\n", b.confidence, b.kept ? 1 : 0);
    os << buf;
  }
}

// Grid of 28x28 tiles, plain PGM.
void dump_pgm_grid(const std::string& path,
                   const std::vector<const BadSample*>& samples,
                   std::size_t grid) {
  const std::size_t side = 28;
  const std::size_t wh = grid * side;
  std::vector<int> img(wh * wh, 0);
  for (std::size_t s = 0; s < samples.size() && s < grid * grid; ++s) {
    const auto& pt = samples[s]->point;
    const std::size_t gr = s / grid, gc = s % grid;
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j) {
        const double v = std::clamp(pt[i * side + j], 0.0, 1.0);
        img[(gr * side + i) * wh + gc * side + j] = static_cast<int>(v * 255.0);
      }
  }
  std::ofstream os(path);
  if (!os) throw ConfigError("genbad: cannot open '" + path + "'");
  os << "P2\n" << wh << " " << wh << "\n255\n";
  for (std::size_t i = 0; i < wh * wh; ++i)
    os << img[i] << ((i + 1) % wh == 0 ? "\n" : " ");
}

int cmd_train(const std::string& config_path, const FlagOverrides& flags) {
  RunSpec spec;
  if (!config_path.empty()) spec = parse_config_file(config_path);
  apply_overrides(spec, flags.kv);
  validate(spec);

  fs::create_directories(spec.out_dir);
  write_manifest(spec.out_dir + "/manifest.cfg", spec, kVersion);

  SslDataset ds = build_dataset(spec);
  std::cout << "dataset " << spec.dataset << ": " << ds.labeled_x.rows
            << " labeled, " << ds.unlabeled_x.rows << " unlabeled, "
            << ds.validation_x.rows << " validation, " << ds.test_x.rows
            << " test\n";

  TrainResult result = train(spec.fat, ds);
  write_metrics_csv(spec.out_dir + "/metrics.csv", result.metrics);
  if (!result.metrics.empty()) {
    save_model(spec.out_dir + "/checkpoint_best.txt", result.best_model);
    save_model(spec.out_dir + "/checkpoint_last.txt", result.last_model);
  }

  if (spec.fat.method == Method::Fat && ds.input_dim == 2 &&
      !result.metrics.empty()) {
    const auto bad = generate_bad_samples(result.last_model, ds.unlabeled_x,
                                          spec.fat.vat, spec.fat.badgen,
                                          derive_seed(spec.fat.seed, 0xd0b));
    dump_bad_samples_csv(spec.out_dir + "/bad_samples.csv", bad);
  }

  double final_test = 0.0, mean_secs = 0.0;
  if (!result.metrics.empty()) {
    final_test = result.metrics.back().test_acc;
    for (const auto& m : result.metrics) mean_secs += m.seconds;
    mean_secs /= static_cast<double>(result.metrics.size());
  }
  std::printf("best validation accuracy: %.4f (epoch %zu)\n", result.best_val_acc,
              result.best_epoch);
  std::printf("final test accuracy: %.4f\n", final_test);

  // Informational timing ratio versus one supervised-only epoch on the same
  // architecture.
  if (spec.fat.method != Method::Supervised && !result.metrics.empty()) {
    FatConfig sup = spec.fat;
    sup.method = Method::Supervised;
    sup.epochs = 1;
    const auto t0 = std::chrono::steady_clock::now();
    train(sup, ds);
    const double sup_secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (sup_secs > 0.0)
      std::printf("epoch time ratio vs supervised: %.2f\n", mean_secs / sup_secs);
  }
  return 0;
}

int cmd_genbad(const std::string& checkpoint, const std::string& config_path,
               const FlagOverrides& flags) {
  RunSpec spec;
  if (!config_path.empty()) spec = parse_config_file(config_path);
  apply_overrides(spec, flags.kv);
  validate(spec);

  MlpModel model = load_model(checkpoint);
  SslDataset ds = build_dataset(spec);
  if (model.input_dim() != ds.input_dim)
    throw ConfigError("genbad: checkpoint input dim " +
                      std::to_string(model.input_dim()) +
                      " does not match dataset dim " +
                      std::to_string(ds.input_dim));

  fs::create_directories(spec.out_dir);
  const auto bad = generate_bad_samples(model, ds.unlabeled_x, spec.fat.vat,
                                        spec.fat.badgen,
                                        derive_seed(spec.fat.seed, 0xd0b));
  std::size_t kept = 0;
  for (const auto& b : bad) kept += b.kept ? 1 : 0;
  std::printf("bad samples: %zu generated, %zu kept (%.3f)\n", bad.size(), kept,
              bad.empty() ? 0.0 : double(kept) / double(bad.size()));

  if (ds.input_dim == 2) {
    dump_bad_samples_csv(spec.out_dir + "/bad_samples.csv", bad);
    std::cout << "wrote " << spec.out_dir << "/bad_samples.csv\n";
  } else if (ds.input_dim == 784) {
    std::vector<const BadSample*> kept_ptrs;
    for (const auto& b : bad)
      if (b.kept) kept_ptrs.push_back(&b);
    dump_pgm_grid(spec.out_dir + "/bad_samples.pgm", kept_ptrs, 10);
    std::cout << "wrote " << spec.out_dir << "/bad_samples.pgm\n";
  } else {
    dump_bad_samples_csv(spec.out_dir + "/bad_samples.csv", bad);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// verify suites

struct FdCheck {
  double max_rel_err = 0.0;
};

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Finite-difference check of every parameter and input gradient against
// backprop, for a random linear functional of the logits.
double fd_check_model(MlpModel& model, const DenseMatrix& x, Rng& rng) {
  const std::size_t K = model.output_dim();
  DenseMatrix c(x.rows, K);
  for (double& v : c.data) v = rng.uniform(-1.0, 1.0);

  auto loss_at = [&](MlpModel& m, const DenseMatrix& input) {
    const ForwardResult fr = forward(m, input, Mode::Train);
    double s = 0.0;
    for (std::size_t i = 0; i < fr.logits.data.size(); ++i)
      s += c.data[i] * fr.logits.data[i];
    return s;
  };

  ForwardResult fr = forward(model, x, Mode::Train);
  const BackpropResult bp = backprop(model, fr.cache, c);

  const double h = 1e-6;
  double worst = 0.0;
  auto probe = [&](double* p, double analytic) {
    const double keep = *p;
    *p = keep + h;
    const double up = loss_at(model, x);
    *p = keep - h;
    const double dn = loss_at(model, x);
    *p = keep;
    worst = std::max(worst, rel_err((up - dn) / (2.0 * h), analytic));
  };

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Layer& layer = model.layers[l];
    const LayerGrads& g = bp.param_grads.layers[l];
    for (std::size_t i = 0; i < layer.weight.data.size(); ++i)
      probe(&layer.weight.data[i], g.weight.data[i]);
    for (std::size_t i = 0; i < layer.bias.size(); ++i)
      probe(&layer.bias[i], g.bias[i]);
    if (layer.norm) {
      for (std::size_t i = 0; i < layer.norm->gamma.size(); ++i)
        probe(&layer.norm->gamma[i], g.gamma[i]);
      for (std::size_t i = 0; i < layer.norm->beta.size(); ++i)
        probe(&layer.norm->beta[i], g.beta[i]);
    }
  }

  DenseMatrix xm = x;
  for (std::size_t i = 0; i < xm.data.size(); ++i) {
    const double keep = xm.data[i];
    xm.data[i] = keep + h;
    const double up = loss_at(model, xm);
    xm.data[i] = keep - h;
    const double dn = loss_at(model, xm);
    xm.data[i] = keep;
    worst = std::max(worst, rel_err((up - dn) / (2.0 * h), bp.input_grads.data[i]));
  }
  return worst;
}

int verify_gradients() {
  Rng rng(20240917);
  double worst = 0.0;
  int n_models = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.uniform_index(6);
    const std::size_t h1 = 2 + rng.uniform_index(14);
    const std::size_t K = 2 + rng.uniform_index(4);
    const Activation act = trial % 3 == 0 ? Activation::LeakyRelu : Activation::Relu;
    const bool norm = trial % 4 == 0;
    MlpModel model = he_init({d, h1, K}, act, rng.next_u64(), norm);
    DenseMatrix x(3, d);
    for (double& v : x.data) v = rng.uniform(-2.0, 2.0);
    worst = std::max(worst, fd_check_model(model, x, rng));
    ++n_models;
  }
  std::printf("gradients: %d models checked, max relative error %.3g (tol 1e-5)\n",
              n_models, worst);
  if (worst >= 1e-5) {
    std::printf("gradients: FAIL\n");
    return 1;
  }
  std::printf("gradients: PASS\n");
  return 0;
}

int verify_prop2() {
  Rng rng(77);
  int failures = 0;
  for (int m = 0; m < 10; ++m) {
    LinearLogistic lin;
    lin.w = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    if (norm2(lin.w) < 0.2) lin.w[0] += 1.0;
    lin.b = rng.uniform(-1.0, 1.0);

    DenseMatrix samples(1000, 2);
    for (std::size_t i = 0; i < samples.rows; ++i) {
      do {
        samples(i, 0) = rng.uniform(-4.0, 4.0);
        samples(i, 1) = rng.uniform(-4.0, 4.0);
      } while (boundary_distance_linear(lin, samples.row(i)) < 0.05);
    }

    // Per-sample epsilon = 0.1 x boundary distance; check one sample at a
    // time so the scaling is individual.
    std::size_t decreased = 0;
    double worst_cos = 0.0;
    const MlpModel mlp = as_mlp(lin);
    for (std::size_t i = 0; i < samples.rows; ++i) {
      const auto x = samples.row(i);
      const double dist = boundary_distance_linear(lin, x);
      const double eps = 0.1 * dist;
      const auto report = prop2_check(lin, [&] {
        DenseMatrix one(1, 2);
        one(0, 0) = x[0];
        one(0, 1) = x[1];
        return one;
      }(), eps);
      if (report.fraction_decreased == 1.0) ++decreased;

      // Keep the probe scale at the default: scaling xi down with distance
      // makes the probe gradient vanish on saturated samples (p(1-p) is
      // already ~1e-5 there) and the direction search degenerates.
      VatHyper vh{eps, 1e-6, 1};
      const AdvDirection adv =
          adversarial_direction(mlp, x, vh, rng.next_u64());
      const auto closed = logistic_adv_direction_closed_form(lin, x, eps);
      const double cos_dist = 1.0 - dot(adv.direction, closed);
      worst_cos = std::max(worst_cos, cos_dist);
    }
    std::printf(
        "prop2 model %d: %zu/1000 decreased, worst cosine distance %.3g\n", m,
        decreased, worst_cos);
    if (decreased != samples.rows || worst_cos >= 1e-6) ++failures;
  }
  std::printf("prop2: %s\n", failures == 0 ? "PASS" : "FAIL");
  return failures == 0 ? 0 : 1;
}

MlpModel train_small_2d(std::size_t K, ClusterLayout layout, std::uint64_t seed) {
  SslDataset ds = make_clusters(K, 400, 20, 0.25, layout, seed);
  FatConfig cfg;
  cfg.method = Method::Supervised;
  cfg.hidden = {32, 32};
  cfg.epochs = 60;
  cfg.labeled_batch = 40;
  cfg.seed = seed;
  return train(cfg, ds).best_model;
}

int verify_oracle_agreement() {
  int total = 0, ok = 0;
  Rng rng(4242);
  for (int m = 0; m < 5; ++m) {
    const std::size_t K = 2 + (m % 3);
    const MlpModel model = train_small_2d(
        K, K == 2 ? ClusterLayout::TwoMoons : ClusterLayout::GaussianBlobs,
        1000 + m);
    // Probe in the small-epsilon regime: at large radii the finite-radius KL
    // maximizer departs from the curvature eigenvector the power iteration
    // targets, so agreement there measures the second-order approximation
    // gap rather than implementation correctness. Multiclass models need a
    // few extra power iterations to converge among competing directions.
    VatHyper vh{0.02, 1e-6, 4};
    for (int p = 0; p < 40; ++p) {
      std::vector<double> x = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
      const auto grid = grid_direction_oracle(model, x, vh.epsilon, 720);
      const auto adv = adversarial_direction(model, x, vh, rng.next_u64());
      if (adv.degenerate && grid.best_kl < 1e-12) {
        ++ok;  // constant region: both sides see zero KL
      } else if (!adv.degenerate && adv.kl_value >= 0.9 * grid.best_kl) {
        ++ok;
      }
      ++total;
    }
  }
  const double frac = double(ok) / double(total);
  std::printf("oracle_agreement: %d/%d probes within 0.9x of grid max (%.3f)\n",
              ok, total, frac);
  std::printf("oracle_agreement: %s\n", frac >= 0.95 ? "PASS" : "FAIL");
  return frac >= 0.95 ? 0 : 1;
}

int verify_normal_regions() {
  // A single narrow hidden layer on linearly separable blobs keeps the
  // decision function close to linear, so the gradient field points across
  // the boundary nearly everywhere. Deeper/wider nets fit the same data with
  // gradient fields that tilt away from the boundary normal far from the
  // samples, which is exactly the abnormal-region case the check exists to
  // detect; the suite measures the check against data-distribution samples.
  SslDataset ds = make_clusters(2, 400, 20, 0.25, ClusterLayout::GaussianBlobs, 99);
  FatConfig cfg;
  cfg.method = Method::Supervised;
  cfg.hidden = {16};
  cfg.epochs = 60;
  cfg.labeled_batch = 40;
  cfg.seed = 99;
  const MlpModel model = train(cfg, ds).best_model;
  int normal = 0, total = 0;
  for (std::size_t i = 0; i < ds.unlabeled_x.rows; ++i) {
    const RegionStatus st =
        normal_region_check(model, ds.unlabeled_x.row(i), 12.0, 600);
    if (st == RegionStatus::Indeterminate) continue;
    ++total;
    if (st == RegionStatus::Normal) ++normal;
  }
  const double frac = total == 0 ? 0.0 : double(normal) / double(total);
  std::printf("normal_regions: %d/%d points normal (%.3f, threshold 0.95)\n",
              normal, total, frac);
  std::printf("normal_regions: %s\n", frac >= 0.95 ? "PASS" : "FAIL");
  return frac >= 0.95 ? 0 : 1;
}

int verify_losses() {
  int failures = 0;
  auto expect = [&](const char* what, double got, double want, double tol) {
    const bool ok = std::abs(got - want) <= tol;
    std::printf("  %-40s got %.12g want %.12g %s\n", what, got, want,
                ok ? "ok" : "FAIL");
    if (!ok) ++failures;
  };

  const std::vector<double> zeros10(10, 0.0);
  expect("l_fake(0; K=10)", l_fake(zeros10).value, std::log(11.0), 1e-12);
  expect("l_true(0; K=10)", l_true(zeros10).value, (10.0 / 11.0) * std::log(11.0),
         1e-12);
  const std::vector<double> p1 = {1.0, 0.0}, q1 = {0.5, 0.5};
  expect("KL((1,0)||(.5,.5))", kl_divergence(p1, q1), std::log(2.0), 1e-9);
  const std::vector<double> p2 = {0.5, 0.5}, q2 = {0.9, 0.1};
  expect("KL((.5,.5)||(.9,.1))", kl_divergence(p2, q2), 0.5 * std::log(25.0 / 9.0),
         1e-9);
  FatConfig cfg;
  expect("warmup(0)", warmup_lambda(0, cfg), 0.0, 0.0);
  expect("warmup(3)", warmup_lambda(3, cfg), 0.3, 1e-15);
  expect("warmup(15)", warmup_lambda(15, cfg), 1.0, 0.0);
  std::printf("losses: %s\n", failures == 0 ? "PASS" : "FAIL");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FAT semi-supervised training harness"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, verify_suite;
  FlagOverrides flags;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    auto fwd = [&](const char* flag, const char* key) {
      cmd->add_option_function<std::string>(
          flag, [&flags, key](const std::string& v) { flags.add(key, v); });
    };
    fwd("--method", "method");
    fwd("--dataset", "dataset");
    fwd("--labels", "labels");
    fwd("--epsilon", "epsilon");
    fwd("--capital-c", "capital_c");
    fwd("--alpha", "alpha");
    fwd("--xi", "xi");
    fwd("--power-iters", "power_iters");
    fwd("--lambda-step", "lambda_step");
    fwd("--lambda-max", "lambda_max");
    fwd("--epochs", "epochs");
    fwd("--batch", "batch");
    fwd("--labeled-batch", "labeled_batch");
    fwd("--hidden", "hidden");
    fwd("--seed", "seed");
    fwd("--out", "out");
    fwd("--mnist-dir", "mnist_dir");
    fwd("--unlabeled", "unlabeled");
    fwd("--validation", "validation");
    fwd("--spread", "spread");
    fwd("--lr", "lr");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "run a training experiment");
  add_common(train_cmd);

  CLI::App* verify_cmd =
      app.add_subcommand("verify", "run a property verification suite");
  verify_cmd
      ->add_option("suite", verify_suite,
                   "gradients|prop2|oracle_agreement|normal_regions|losses")
      ->required();

  CLI::App* genbad_cmd =
      app.add_subcommand("genbad", "generate bad samples from a checkpoint");
  genbad_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")
      ->required();
  add_common(genbad_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, flags);
    if (genbad_cmd->parsed()) return cmd_genbad(checkpoint_path, config_path, flags);
    if (verify_cmd->parsed()) {
      if (verify_suite == "gradients") return verify_gradients();
      if (verify_suite == "prop2") return verify_prop2();
      if (verify_suite == "oracle_agreement") return verify_oracle_agreement();
      if (verify_suite == "normal_regions") return verify_normal_regions();
      if (verify_suite == "losses") return verify_losses();
      std::cerr << "unknown verify suite '" << verify_suite << "'\n";
      return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
