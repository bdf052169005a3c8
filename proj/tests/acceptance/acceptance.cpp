// Acceptance suite: one pass/fail line per criterion. Run with no arguments
// to execute everything, or pass criterion numbers to run a subset, e.g.
// `fat_acceptance 1 4 9`. Exit status is the number of failed criteria.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fat/badgen.hpp"
#include "fat/checkpoint.hpp"
#include "fat/config.hpp"
#include "fat/geometry.hpp"
#include "fat/trainer.hpp"
#include "fat/vat.hpp"
#include "test_support.hpp"

using namespace fat;
using fat::test::fd_param_check;
using fat::test::random_matrix;
using fat::test::rel_err;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- criterion 1

bool crit1_gradient_soundness(std::string& detail) {
  Rng rng(101);
  double worst_param = 0.0, worst_input = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<std::size_t> dims;
    const std::size_t n_layers = 2 + rng.uniform_index(3);
    for (std::size_t l = 0; l <= n_layers; ++l)
      dims.push_back(2 + rng.uniform_index(15));  // <= 16
    const Activation act = t % 3 == 0 ? Activation::LeakyRelu : Activation::Relu;
    const bool with_norm = t % 4 == 3;
    MlpModel model = he_init(dims, act, 500 + t, with_norm);
    // Nudge the biases off zero: with zero biases a fully saturated ReLU
    // layer parks the next layer's pre-activations exactly on the kink,
    // where the loss is genuinely nondifferentiable and central differences
    // straddle the corner.
    for (Layer& layer : model.layers)
      for (double& b : layer.bias) b = rng.uniform(-0.1, 0.1);

    DenseMatrix x = random_matrix(4, dims.front(), rng);
    DenseMatrix c = random_matrix(4, dims.back(), rng, -1.0, 1.0);
    auto loss = [&](MlpModel& m) {
      MlpModel copy = m;  // train mode mutates running stats
      const ForwardResult fr = forward(copy, x, Mode::Train);
      double s = 0.0;
      for (std::size_t i = 0; i < fr.logits.data.size(); ++i)
        s += c.data[i] * fr.logits.data[i];
      return s;
    };

    MlpModel work = model;
    const ForwardResult fr = forward(work, x, Mode::Train);
    const BackpropResult bp = backprop(work, fr.cache, c);
    worst_param = std::max(worst_param, fd_param_check(model, bp.param_grads, loss));

    const double h = 1e-6;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      const double keep = x.data[i];
      x.data[i] = keep + h;
      const double up = loss(model);
      x.data[i] = keep - h;
      const double dn = loss(model);
      x.data[i] = keep;
      worst_input = std::max(
          worst_input, rel_err((up - dn) / (2.0 * h), bp.input_grads.data[i]));
    }
  }
  std::ostringstream os;
  os << "max rel err: params " << worst_param << ", inputs " << worst_input;
  detail = os.str();
  return worst_param < 1e-5 && worst_input < 1e-5;
}

// ---------------------------------------------------------------- criterion 2

bool crit2_prop2_suite(std::string& detail) {
  Rng rng(202);
  std::size_t decreased = 0, total = 0;
  double worst_cosine_dist = 0.0;
  for (int t = 0; t < 10; ++t) {
    LinearLogistic lin;
    do {
      lin.w = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    } while (std::hypot(lin.w[0], lin.w[1]) < 0.2);
    lin.b = rng.uniform(-1.0, 1.0);
    MlpModel net = as_mlp(lin);

    for (int s = 0; s < 1000; ++s) {
      std::vector<double> x(2);
      double dist;
      do {
        x[0] = rng.uniform(-3.0, 3.0);
        x[1] = rng.uniform(-3.0, 3.0);
        dist = boundary_distance_linear(lin, x);
      } while (dist < 1e-2);  // off-boundary
      const double eps = 0.1 * dist;

      const auto closed = logistic_adv_direction_closed_form(lin, x, eps);
      std::vector<double> stepped = {x[0] + eps * closed[0], x[1] + eps * closed[1]};
      ++total;
      if (boundary_distance_linear(lin, stepped) < dist) ++decreased;

      VatHyper hy;
      hy.epsilon = eps;
      const AdvDirection adv =
          adversarial_direction(net, x, hy, derive_seed(700, t, s));
      if (adv.degenerate) {
        worst_cosine_dist = 1.0;
        continue;
      }
      const double dot =
          closed[0] * adv.direction[0] + closed[1] * adv.direction[1];
      worst_cosine_dist = std::max(worst_cosine_dist, 1.0 - dot);
    }
  }
  std::ostringstream os;
  os << "decreased " << decreased << "/" << total << ", worst cosine distance "
     << worst_cosine_dist;
  detail = os.str();
  return decreased == total && worst_cosine_dist < 1e-6;
}

// ---------------------------------------------------------------- criterion 3

MlpModel train_small_2d(std::uint64_t seed) {
  SslDataset ds = make_clusters(2, 300, 4, 0.1, ClusterLayout::TwoMoons, seed);
  FatConfig cfg;
  cfg.method = Method::Vat;
  cfg.vat.epsilon = 0.3;
  cfg.hidden = {32};
  cfg.epochs = 30;
  cfg.labeled_batch = 8;
  cfg.unlabeled_batch = 64;
  cfg.seed = seed;
  return train(cfg, ds).last_model;
}

bool crit3_oracle_agreement(std::string& detail) {
  // Probe radius in the small-epsilon regime where the curvature eigenvector
  // is the KL maximizer; at large radii the finite-radius maximizer departs
  // from the second-order approximation the power iteration targets.
  std::size_t within = 0, total = 0;
  const double eps = 0.05;
  for (std::uint64_t m = 1; m <= 5; ++m) {
    const MlpModel model = train_small_2d(m);
    SslDataset ds = make_clusters(2, 300, 4, 0.1, ClusterLayout::TwoMoons, m);
    for (std::size_t i = 0; i < 40; ++i) {
      const auto x = ds.unlabeled_x.row(i);
      VatHyper hy;
      hy.epsilon = eps;
      const AdvDirection adv =
          adversarial_direction(model, x, hy, derive_seed(300, m, i));
      const GridDirectionResult oracle = grid_direction_oracle(model, x, eps, 720);
      ++total;
      if (adv.kl_value >= 0.9 * oracle.best_kl - 1e-12) ++within;
    }
  }
  const double frac = static_cast<double>(within) / static_cast<double>(total);
  std::ostringstream os;
  os << within << "/" << total << " probes within 0.9x of the grid maximum ("
     << frac << ")";
  detail = os.str();
  return frac >= 0.95;
}

// ---------------------------------------------------------------- criterion 4

bool crit4_loss_identities(std::string& detail) {
  bool ok = true;
  std::ostringstream os;

  const std::vector<double> z10(10, 0.0);
  const double f = l_fake(z10).value;
  const double t = l_true(z10).value;
  ok = ok && std::abs(f - std::log(11.0)) < 1e-12;
  ok = ok && std::abs(t - (10.0 / 11.0) * std::log(11.0)) < 1e-12;
  os << "l_fake(0)=" << f << " l_true(0)=" << t;

  const std::vector<double> u = {0.5, 0.5};
  ok = ok && std::abs(kl_divergence(u, u)) < 1e-9;
  const std::vector<double> p = {0.75, 0.25};
  const std::vector<double> q = {0.25, 0.75};
  const double kl_expect = 0.75 * std::log(3.0) - 0.25 * std::log(3.0);
  ok = ok && std::abs(kl_divergence(p, q) - kl_expect) < 1e-9;
  const std::vector<double> pz = {1.0, 0.0};
  ok = ok && std::abs(kl_divergence(pz, u) - std::log(2.0)) < 1e-9;

  FatConfig cfg;
  cfg.lambda_step = 0.1;
  cfg.lambda_max = 1.0;
  ok = ok && warmup_lambda(0, cfg) == 0.0;
  ok = ok && std::abs(warmup_lambda(3, cfg) - 0.3) < 1e-15;
  ok = ok && warmup_lambda(15, cfg) == 1.0;
  os << ", warmup(0/3/15)=" << warmup_lambda(0, cfg) << "/" << warmup_lambda(3, cfg)
     << "/" << warmup_lambda(15, cfg);
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------- criterion 5

bool crit5_lambda_zero_reduction(std::string& detail) {
  SslDataset ds = make_clusters(2, 128, 4, 0.1, ClusterLayout::TwoMoons, 17);
  FatConfig base;
  base.hidden = {16};
  base.epochs = 5;
  base.labeled_batch = 8;
  base.unlabeled_batch = 32;
  base.seed = 9;
  base.vat.epsilon = 0.3;

  FatConfig fat_cfg = base;
  fat_cfg.method = Method::Fat;
  fat_cfg.lambda_max = 0.0;  // lambda pinned at zero
  FatConfig vat_cfg = base;
  vat_cfg.method = Method::Vat;

  const TrainResult a = train(fat_cfg, ds);
  const TrainResult b = train(vat_cfg, ds);

  bool ok = a.metrics.size() == b.metrics.size();
  for (std::size_t e = 0; ok && e < a.metrics.size(); ++e)
    ok = a.metrics[e].loss_ce == b.metrics[e].loss_ce &&
         a.metrics[e].loss_vat == b.metrics[e].loss_vat &&
         a.metrics[e].val_acc == b.metrics[e].val_acc;
  for (std::size_t l = 0; ok && l < a.last_model.layers.size(); ++l)
    ok = a.last_model.layers[l].weight.data == b.last_model.layers[l].weight.data &&
         a.last_model.layers[l].bias == b.last_model.layers[l].bias;
  detail = ok ? "trajectories bit-identical over 5 epochs"
              : "trajectories differ";
  return ok;
}

// ------------------------------------------------------- criteria 6 and 7

FatConfig fig6_config(Method m, std::uint64_t seed) {
  FatConfig cfg;
  cfg.method = m;
  cfg.vat.epsilon = 0.3;
  cfg.badgen.capital_c = 1.0;
  cfg.badgen.alpha = 0.3;
  cfg.lambda_step = 0.3;
  cfg.hidden = {100, 100};
  cfg.epochs = 100;
  cfg.labeled_batch = 8;
  cfg.unlabeled_batch = 64;
  cfg.opt.lr = 3e-3;
  cfg.seed = seed;
  return cfg;
}

SslDataset fig6_dataset(std::uint64_t seed) {
  return make_clusters(2, 1000, 4, 0.08, ClusterLayout::TwoMoons, seed);
}

std::size_t epochs_to(const std::vector<EpochMetrics>& ms, double target) {
  for (const EpochMetrics& m : ms)
    if (m.test_acc >= target) return m.epoch + 1;
  return ms.size() + 1;  // never reached
}

bool crit6_fig6_analogue(std::string& detail) {
  std::vector<double> fat_final, fat_to95, vat_to95;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SslDataset ds = fig6_dataset(seed);
    const TrainResult fr = train(fig6_config(Method::Fat, seed), ds);
    const TrainResult vr = train(fig6_config(Method::Vat, seed), ds);
    fat_final.push_back(fr.metrics.back().test_acc);
    fat_to95.push_back(static_cast<double>(epochs_to(fr.metrics, 0.95)));
    vat_to95.push_back(static_cast<double>(epochs_to(vr.metrics, 0.95)));
  }
  const double med_final = median(fat_final);
  const double med_fat = median(fat_to95);
  const double med_vat = median(vat_to95);
  std::ostringstream os;
  os << "FAT median final unlabeled acc " << med_final
     << "; epochs to 0.95: FAT " << med_fat << " vs VAT " << med_vat;
  detail = os.str();
  return med_final >= 0.99 && med_fat <= med_vat;
}

bool crit7_bad_sample_placement(std::string& detail) {
  const std::uint64_t seed = 1;
  const SslDataset ds = fig6_dataset(seed);
  const FatConfig cfg = fig6_config(Method::Fat, seed);
  const MlpModel model = train(cfg, ds).last_model;

  const auto samples =
      generate_bad_samples(model, ds.unlabeled_x, cfg.vat, cfg.badgen, 4242);
  const double C = cfg.badgen.capital_c;
  std::size_t kept = 0, close = 0;
  for (const BadSample& s : samples) {
    if (!s.kept) continue;
    ++kept;
    std::vector<double> dir(2);
    double norm = 0.0;
    for (int k = 0; k < 2; ++k) {
      dir[k] = s.point[k] - s.origin[k];
      norm += dir[k] * dir[k];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) continue;
    for (double& v : dir) v /= norm;
    const std::vector<double> back = {-dir[0], -dir[1]};
    double dist = 1e30;
    const double fwd = boundary_crossing_along_ray(model, s.point, dir, 4.0 * C, 400);
    if (fwd >= 0.0) dist = std::min(dist, fwd);
    const double rev = boundary_crossing_along_ray(model, s.point, back, 4.0 * C, 400);
    if (rev >= 0.0) dist = std::min(dist, rev);
    if (dist <= C) ++close;
  }
  std::ostringstream os;
  const double frac = kept == 0 ? 0.0
                                : static_cast<double>(close) / static_cast<double>(kept);
  os << close << "/" << kept << " kept bad samples within C = " << C
     << " of the boundary (" << frac << ")";
  detail = os.str();
  return kept > 0 && frac >= 0.8;
}

// ---------------------------------------------------------------- criterion 8

std::string find_mnist_dir() {
  if (const char* env = std::getenv("FAT_DATA_DIR")) {
    const std::string d = std::string(env) + "/mnist";
    if (std::filesystem::exists(d + "/train-images-idx3-ubyte")) return d;
  }
  const std::string fallback = "/root/data/mnist";
  if (std::filesystem::exists(fallback + "/train-images-idx3-ubyte"))
    return fallback;
  return {};
}

double run_mnist(Method m, std::uint64_t seed, const std::string& dir) {
  RunSpec spec;
  spec.dataset = "mnist";
  spec.mnist_dir = dir;
  spec.labels = 100;
  spec.validation = 1000;
  spec.unlabeled = 10000;
  spec.fat.method = m;
  spec.fat.hidden = {256, 128};
  spec.fat.vat.epsilon = 1.5;
  spec.fat.badgen.capital_c = 2.0;
  spec.fat.badgen.alpha = 0.01;
  // Training-loop settings from a hyperparameter sweep (lr, epochs, batch
  // sizes and the lambda schedule are free; the network, epsilon, C and alpha
  // above are fixed by the criterion).
  spec.fat.epochs = m == Method::Supervised ? 200 : 45;
  spec.fat.labeled_batch = 50;
  spec.fat.unlabeled_batch = m == Method::Supervised ? 100 : 50;
  spec.fat.opt.lr = m == Method::Supervised ? 1e-3 : 2e-3;
  spec.fat.seed = seed;
  spec.data_seed = seed;
  const SslDataset ds = build_dataset(spec);
  const TrainResult r = train(spec.fat, ds);
  return evaluate(r.best_model, ds.test_x, ds.test_y);
}

bool crit8_reduced_mnist(std::string& detail) {
  const std::string dir = find_mnist_dir();
  if (dir.empty()) {
    detail = "mnist data not found (set FAT_DATA_DIR)";
    return false;
  }
  std::vector<double> fat_acc, sup_acc;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    fat_acc.push_back(run_mnist(Method::Fat, seed, dir));
    sup_acc.push_back(run_mnist(Method::Supervised, seed, dir));
  }
  const double mf = median(fat_acc);
  const double ms = median(sup_acc);
  std::ostringstream os;
  os << "median test acc: FAT " << mf << ", supervised " << ms << " (margin "
     << mf - ms << ")";
  detail = os.str();
  return mf >= 0.92 && mf - ms >= 0.05;
}

// ---------------------------------------------------------------- criterion 9

void push_be32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

bool crit9_idx_round_trip(std::string& detail) {
  const std::string images = tmp_path("fat_acc_images.idx");
  const std::string labels = tmp_path("fat_acc_labels.idx");
  const std::vector<unsigned char> pixels = {0, 51, 102, 255, 10, 20, 30, 40};
  std::vector<unsigned char> img;
  push_be32(img, 0x00000803);
  push_be32(img, 2);
  push_be32(img, 2);
  push_be32(img, 2);
  img.insert(img.end(), pixels.begin(), pixels.end());
  write_bytes(images, img);
  std::vector<unsigned char> lbl;
  push_be32(lbl, 0x00000801);
  push_be32(lbl, 2);
  lbl.push_back(7);
  lbl.push_back(1);
  write_bytes(labels, lbl);

  bool ok = true;
  try {
    const auto [x, y] = load_idx(images, labels);
    ok = ok && x.rows == 2 && x.cols == 4;
    for (std::size_t i = 0; ok && i < pixels.size(); ++i)
      ok = x.data[i] == static_cast<double>(pixels[i]) / 255.0;
    ok = ok && y.size() == 2 && y[0] == 7 && y[1] == 1;
  } catch (const std::exception&) {
    ok = false;
  }

  // Corrupted magic must be rejected up front, before any data is produced.
  std::vector<unsigned char> bad = img;
  bad[3] = 0x99;
  const std::string badp = tmp_path("fat_acc_badmagic.idx");
  write_bytes(badp, bad);
  bool rejected = false;
  try {
    load_idx(badp, labels);
  } catch (const ParseError&) {
    rejected = true;
  }
  detail = std::string(ok ? "fixture bytes exact" : "fixture mismatch") +
           (rejected ? ", bad magic rejected" : ", bad magic NOT rejected");
  return ok && rejected;
}

// --------------------------------------------------------------- criterion 10

// Strips the trailing wall-clock column; everything else must be bit-identical.
std::string strip_seconds(const std::string& csv_path) {
  std::ifstream is(csv_path);
  std::string out, line;
  while (std::getline(is, line)) {
    const auto comma = line.rfind(',');
    out += line.substr(0, comma);
    out += '\n';
  }
  return out;
}

bool crit10_manifest_reproducibility(std::string& detail) {
  bool all_ok = true;
  std::ostringstream os;
  int case_no = 0;
  for (const char* method : {"fat", "vat"}) {
    ++case_no;
    RunSpec spec;
    apply_overrides(spec, {{"method", method},
                           {"dataset", case_no == 1 ? "moons" : "ring"},
                           {"labels", "8"},
                           {"unlabeled", "128"},
                           {"epochs", "5"},
                           {"hidden", "16"},
                           {"batch", "32"},
                           {"labeled_batch", "8"},
                           {"epsilon", "0.3"},
                           {"seed", "7"}});
    const std::string manifest = tmp_path("fat_acc_manifest.cfg");
    write_manifest(manifest, spec, "acceptance");

    std::vector<std::string> csvs;
    for (int run = 0; run < 2; ++run) {
      const RunSpec replay = parse_config_file(manifest);
      validate(replay);
      const SslDataset ds = build_dataset(replay);
      const TrainResult r = train(replay.fat, ds);
      const std::string csv =
          tmp_path("fat_acc_metrics_" + std::to_string(case_no) + "_" +
                   std::to_string(run) + ".csv");
      write_metrics_csv(csv, r.metrics);
      csvs.push_back(csv);
    }
    const bool same = strip_seconds(csvs[0]) == strip_seconds(csvs[1]);
    all_ok = all_ok && same;
    os << method << ": " << (same ? "identical" : "DIFFER") << "  ";
  }
  detail = os.str() +
           "(all columns compared except the wall-clock seconds column)";
  return all_ok;
}

// -----------------------------------------------------------------------------

struct Criterion {
  int number;
  const char* name;
  bool (*fn)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "gradient soundness vs finite differences", crit1_gradient_soundness},
    {2, "linear-logistic boundary approach suite", crit2_prop2_suite},
    {3, "power iteration vs 720-point grid oracle", crit3_oracle_agreement},
    {4, "loss identities and warm-up schedule", crit4_loss_identities},
    {5, "lambda = 0 reduction to VAT", crit5_lambda_zero_reduction},
    {6, "synthetic 1000-point benchmark", crit6_fig6_analogue},
    {7, "bad-sample placement near the boundary", crit7_bad_sample_placement},
    {8, "reduced MNIST (100 labels)", crit8_reduced_mnist},
    {9, "IDX fixture round trip", crit9_idx_round_trip},
    {10, "manifest reproducibility", crit10_manifest_reproducibility},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (!wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), c.number) == wanted.end())
      continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << c.number << " ("
              << c.name << "): " << detail << "\n"
              << std::flush;
    if (!ok) ++failures;
  }
  return failures;
}
