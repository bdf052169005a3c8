#include "fat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fat/rng.hpp"

namespace fat {

namespace {

DenseMatrix gather_rows(const DenseMatrix& x, const std::vector<std::size_t>& idx) {
  DenseMatrix out(idx.size(), x.cols);
  for (std::size_t j = 0; j < idx.size(); ++j)
    std::copy(x.row(idx[j]).begin(), x.row(idx[j]).end(), out.row(j).begin());
  return out;
}

double row_kl_from_logits(std::span<const double> p_ref,
                          std::span<const double> logits) {
  const auto lq = log_softmax(logits);
  double kl = 0.0;
  for (std::size_t k = 0; k < p_ref.size(); ++k)
    if (p_ref[k] > 0.0) kl += p_ref[k] * (std::log(p_ref[k]) - lq[k]);
  return kl < 0.0 ? 0.0 : kl;
}

}  // namespace

double warmup_lambda(std::size_t epoch, const FatConfig& cfg) {
  return std::min(cfg.lambda_max, static_cast<double>(epoch) * cfg.lambda_step);
}

StepLosses fat_step(MlpModel& model, AdamState& adam, const DenseMatrix& labeled_x,
                    const std::vector<int>& labeled_y, const DenseMatrix& unlabeled_x,
                    double lambda, const FatConfig& cfg, std::uint64_t step_seed) {
  check_shape(labeled_x.rows == labeled_y.size(), "fat_step: labeled x/y mismatch");
  if (labeled_x.rows == 0) throw ConfigError("fat_step: empty labeled batch");

  // theta-hat: frozen parameter values for the whole step.
  const MlpModel snapshot = model;
  const std::size_t K = model.output_dim();

  StepLosses losses;
  ModelGrads total = zero_grads(model);

  // (a) labeled cross-entropy. The FAT (K+1)-softmax conditioned on the real
  // classes coincides with the K-class softmax, so all methods share this.
  {
    const std::size_t nl = labeled_x.rows;
    ForwardResult fr = forward(model, labeled_x, Mode::Train);
    DenseMatrix dlogits(nl, K);
    for (std::size_t i = 0; i < nl; ++i) {
      const auto lp = log_softmax(fr.logits.row(i));
      const auto y = static_cast<std::size_t>(labeled_y[i]);
      losses.ce -= lp[y];
      const auto p = softmax(fr.logits.row(i));
      for (std::size_t k = 0; k < K; ++k)
        dlogits(i, k) = (p[k] - (k == y ? 1.0 : 0.0)) / static_cast<double>(nl);
    }
    losses.ce /= static_cast<double>(nl);
    accumulate(total, backprop(model, fr.cache, dlogits).param_grads);
  }

  const bool want_vat = cfg.method != Method::Supervised && unlabeled_x.rows > 0;
  if (want_vat) {
    const std::size_t nu = unlabeled_x.rows;
    const AdvBatch adv = adversarial_directions(snapshot, unlabeled_x, cfg.vat,
                                                derive_seed(step_seed, 0xd1c7));
    const DenseMatrix p_ref =
        softmax_rows(forward_eval(snapshot, unlabeled_x).logits);

    // (b) VAT consistency term. The perturbed pass uses frozen normalization
    // statistics so the KL compares distributions, not batch statistics.
    {
      DenseMatrix xp = unlabeled_x;
      for (std::size_t i = 0; i < xp.data.size(); ++i)
        xp.data[i] += cfg.vat.epsilon * adv.directions.data[i];
      ForwardResult fr = forward_eval(model, xp);
      const DenseMatrix q = softmax_rows(fr.logits);
      DenseMatrix dlogits(nu, K);
      for (std::size_t i = 0; i < nu; ++i) {
        losses.vat += row_kl_from_logits(p_ref.row(i), fr.logits.row(i));
        for (std::size_t k = 0; k < K; ++k)
          dlogits(i, k) = (q(i, k) - p_ref(i, k)) / static_cast<double>(nu);
      }
      losses.vat /= static_cast<double>(nu);
      accumulate(total, backprop(model, fr.cache, dlogits).param_grads);
    }

    // (c) bad-sample terms, weighted by lambda.
    if (cfg.method == Method::Fat && lambda > 0.0) {
      {
        ForwardResult fr = forward(model, unlabeled_x, Mode::Train);
        DenseMatrix dlogits(nu, K);
        for (std::size_t i = 0; i < nu; ++i) {
          const ScalarGrad lt = l_true(fr.logits.row(i));
          losses.l_true += lt.value;
          for (std::size_t k = 0; k < K; ++k)
            dlogits(i, k) = lambda * lt.grad[k] / static_cast<double>(nu);
        }
        losses.l_true /= static_cast<double>(nu);
        accumulate(total, backprop(model, fr.cache, dlogits).param_grads);
      }

      // Bad samples reuse the directions already computed against the same
      // snapshot; the filter also reads the snapshot.
      std::vector<std::size_t> kept;
      DenseMatrix points = unlabeled_x;
      for (std::size_t i = 0; i < points.data.size(); ++i)
        points.data[i] += cfg.badgen.capital_c * adv.directions.data[i];
      const DenseMatrix probs = softmax_rows(forward_eval(snapshot, points).logits);
      for (std::size_t i = 0; i < nu; ++i) {
        if (adv.degenerate[i]) continue;
        const auto pi = probs.row(i);
        const double conf = *std::max_element(pi.begin(), pi.end());
        if (conf <= 1.0 - cfg.badgen.alpha) kept.push_back(i);
      }
      losses.bad_total = nu;
      losses.bad_kept = kept.size();
      if (!kept.empty()) {
        const DenseMatrix xb = gather_rows(points, kept);
        // Frozen normalization statistics: bad samples sit off the data
        // manifold by construction, so letting them update the running
        // mean/variance would corrupt the statistics used at evaluation.
        ForwardResult fr = forward_eval(model, xb);
        DenseMatrix dlogits(kept.size(), K);
        for (std::size_t i = 0; i < kept.size(); ++i) {
          const ScalarGrad lf = l_fake(fr.logits.row(i));
          losses.l_fake += lf.value;
          for (std::size_t k = 0; k < K; ++k)
            dlogits(i, k) = lambda * lf.grad[k] / static_cast<double>(kept.size());
        }
        losses.l_fake /= static_cast<double>(kept.size());
        accumulate(total, backprop(model, fr.cache, dlogits).param_grads);
      }
    }
  }

  if (!std::isfinite(losses.ce + losses.vat + losses.l_true + losses.l_fake))
    throw DivergenceError("fat_step: non-finite loss");
  adam_step(model, total, adam);
  return losses;
}

TrainResult train(const FatConfig& cfg, const SslDataset& data) {
  if (data.labeled_x.rows == 0) throw ConfigError("train: no labeled data");
  if (cfg.labeled_batch < 1 || cfg.unlabeled_batch < 1)
    throw ConfigError("train: batch sizes must be >= 1");

  std::vector<std::size_t> dims;
  dims.push_back(data.input_dim);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(data.class_count);
  MlpModel model =
      he_init(dims, Activation::Relu, derive_seed(cfg.seed, 0x1417), cfg.use_norm);
  AdamState adam = init_adam(model, cfg.opt.lr, cfg.opt.beta1, cfg.opt.beta2,
                             cfg.opt.eps);

  TrainResult result;
  result.best_model = model;
  result.best_val_acc = -1.0;

  const std::size_t nl = data.labeled_x.rows;
  const std::size_t nu = data.unlabeled_x.rows;
  const bool use_unlabeled = cfg.method != Method::Supervised && nu > 0;

  std::vector<std::size_t> labeled_order(nl);
  std::iota(labeled_order.begin(), labeled_order.end(), 0);
  std::size_t labeled_pos = nl;  // force reshuffle on first use
  std::uint64_t labeled_wraps = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lambda = cfg.method == Method::Fat ? warmup_lambda(epoch, cfg) : 0.0;

    std::vector<std::size_t> unlabeled_order(nu);
    std::iota(unlabeled_order.begin(), unlabeled_order.end(), 0);
    {
      Rng shuf(derive_seed(cfg.seed, 0x5f0f, epoch));
      shuf.shuffle(unlabeled_order);
    }

    const std::size_t n_steps =
        use_unlabeled ? (nu + cfg.unlabeled_batch - 1) / cfg.unlabeled_batch
                      : (nl + cfg.labeled_batch - 1) / cfg.labeled_batch;

    EpochMetrics em;
    em.epoch = epoch;
    em.lambda = lambda;
    std::size_t kept_sum = 0, bad_sum = 0;

    for (std::size_t step = 0; step < n_steps; ++step) {
      std::vector<std::size_t> lidx;
      for (std::size_t j = 0; j < cfg.labeled_batch; ++j) {
        if (labeled_pos == nl) {
          Rng shuf(derive_seed(cfg.seed, 0x1ab5, labeled_wraps++));
          shuf.shuffle(labeled_order);
          labeled_pos = 0;
        }
        lidx.push_back(labeled_order[labeled_pos++]);
      }
      DenseMatrix xl = gather_rows(data.labeled_x, lidx);
      std::vector<int> yl(lidx.size());
      for (std::size_t j = 0; j < lidx.size(); ++j) yl[j] = data.labeled_y[lidx[j]];

      DenseMatrix xu;
      if (use_unlabeled) {
        const std::size_t lo = step * cfg.unlabeled_batch;
        const std::size_t hi = std::min(nu, lo + cfg.unlabeled_batch);
        std::vector<std::size_t> uidx(unlabeled_order.begin() + lo,
                                      unlabeled_order.begin() + hi);
        xu = gather_rows(data.unlabeled_x, uidx);
      }

      StepLosses sl;
      try {
        sl = fat_step(model, adam, xl, yl, xu, lambda, cfg,
                      derive_seed(cfg.seed, epoch, step));
      } catch (const DivergenceError& e) {
        throw DivergenceError("train: diverged at epoch " + std::to_string(epoch) +
                              " step " + std::to_string(step) + ": " + e.what());
      }
      em.loss_ce += sl.ce;
      em.loss_vat += sl.vat;
      em.loss_true += sl.l_true;
      em.loss_fake += sl.l_fake;
      kept_sum += sl.bad_kept;
      bad_sum += sl.bad_total;
    }
    em.loss_ce /= static_cast<double>(n_steps);
    em.loss_vat /= static_cast<double>(n_steps);
    em.loss_true /= static_cast<double>(n_steps);
    em.loss_fake /= static_cast<double>(n_steps);
    em.bad_kept_frac =
        bad_sum == 0 ? 0.0
                     : static_cast<double>(kept_sum) / static_cast<double>(bad_sum);

    if (data.validation_x.rows > 0)
      em.val_acc = evaluate(model, data.validation_x, data.validation_y);
    if (data.test_x.rows > 0) em.test_acc = evaluate(model, data.test_x, data.test_y);
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                     .count();
    result.metrics.push_back(em);

    if (em.val_acc > result.best_val_acc) {
      result.best_val_acc = em.val_acc;
      result.best_model = model;
      result.best_epoch = epoch;
    }
  }

  result.last_model = std::move(model);
  if (result.best_val_acc < 0.0) {
    result.best_val_acc = 0.0;
    result.best_model = result.last_model;
  }
  return result;
}

double evaluate(const MlpModel& model, const DenseMatrix& x,
                const std::vector<int>& y) {
  check_shape(x.rows == y.size(), "evaluate: x/y length mismatch");
  if (x.rows == 0) throw DomainError("evaluate: empty evaluation set");
  const std::size_t chunk = 1000;
  std::size_t correct = 0;
  for (std::size_t lo = 0; lo < x.rows; lo += chunk) {
    const std::size_t hi = std::min(x.rows, lo + chunk);
    DenseMatrix xc(hi - lo, x.cols);
    std::copy(x.data.begin() + lo * x.cols, x.data.begin() + hi * x.cols,
              xc.data.begin());
    const ForwardResult fr = forward_eval(model, xc);
    for (std::size_t i = 0; i < hi - lo; ++i)
      if (argmax(fr.logits.row(i)) == static_cast<std::size_t>(y[lo + i]))
        ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x.rows);
}

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& metrics) {
  std::ofstream os(path);
  if (!os) throw ParseError("metrics: cannot open '" + path + "'");
  os << "epoch,lambda,loss_ce,loss_vat,loss_true,loss_fake,val_acc,test_acc,"
        "bad_kept_frac,seconds\n";
  char buf[512];
  for (const EpochMetrics& m : metrics) {
    std::snprintf(buf, sizeof(buf),
                  "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n",
                  m.epoch, m.lambda, m.loss_ce, m.loss_vat, m.loss_true,
                  m.loss_fake, m.val_acc, m.test_acc, m.bad_kept_frac, m.seconds);
    os << buf;
  }
}

}  // namespace fat
