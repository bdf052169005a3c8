#include "fat/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>

#include "fat/rng.hpp"

namespace fat {

namespace {

std::uint32_t read_be32(std::istream& is, const std::string& field) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ParseError("idx: truncated file while reading " + field);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

// One 2D point of class k per layout.
void sample_point(ClusterLayout layout, std::size_t K, int k, double spread,
                  Rng& rng, double* xy) {
  switch (layout) {
    case ClusterLayout::TwoMoons: {
      // Standard two interleaving half-circles of radius 1.
      const double t = M_PI * rng.uniform();
      if (k == 0) {
        xy[0] = std::cos(t);
        xy[1] = std::sin(t);
      } else {
        xy[0] = 1.0 - std::cos(t);
        xy[1] = 0.5 - std::sin(t);
      }
      xy[0] += spread * rng.normal();
      xy[1] += spread * rng.normal();
      break;
    }
    case ClusterLayout::GaussianRing: {
      // K concentric rings of radii 1, 2, ...
      const double r = static_cast<double>(k + 1) + spread * rng.normal();
      const double t = 2.0 * M_PI * rng.uniform();
      xy[0] = r * std::cos(t);
      xy[1] = r * std::sin(t);
      break;
    }
    case ClusterLayout::GaussianBlobs: {
      // K blobs on a circle of radius 2.
      const double t = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(K);
      xy[0] = 2.0 * std::cos(t) + spread * rng.normal();
      xy[1] = 2.0 * std::sin(t) + spread * rng.normal();
      break;
    }
  }
}

}  // namespace

SslDataset make_clusters(std::size_t K, std::size_t n_unlabeled,
                         std::size_t n_labeled_per_class, double spread,
                         ClusterLayout layout, std::uint64_t seed) {
  if (K < 2 || n_unlabeled == 0 || n_labeled_per_class == 0 || spread <= 0.0)
    throw ConfigError("make_clusters: parameters must be positive (K >= 2)");
  if (layout == ClusterLayout::TwoMoons && K != 2)
    throw ConfigError("make_clusters: two_moons layout requires K = 2");
  if (n_labeled_per_class * K > n_unlabeled)
    throw ConfigError("make_clusters: labeled count exceeds unlabeled pool");

  SslDataset ds;
  ds.class_count = K;
  ds.input_dim = 2;

  // Unlabeled pool; true labels go to the test split so the trace of
  // unlabeled accuracy is available.
  Rng rng(derive_seed(seed, 0xda7a));
  ds.unlabeled_x = DenseMatrix(n_unlabeled, 2);
  ds.test_y.resize(n_unlabeled);
  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t i = 0; i < n_unlabeled; ++i) {
    const int label = static_cast<int>(i % K);  // round-robin keeps classes balanced
    sample_point(layout, K, label, spread, rng, ds.unlabeled_x.row(i).data());
    ds.test_y[i] = label;
    by_class[label].push_back(i);
  }
  ds.test_x = ds.unlabeled_x;

  // Labeled points drawn per class from the pool.
  ds.labeled_x = DenseMatrix(n_labeled_per_class * K, 2);
  ds.labeled_y.resize(n_labeled_per_class * K);
  std::size_t li = 0;
  for (std::size_t k = 0; k < K; ++k) {
    auto& pool = by_class[k];
    if (pool.size() < n_labeled_per_class)
      throw ConfigError("make_clusters: class pool too small for labeled draw");
    rng.shuffle(pool);
    for (std::size_t j = 0; j < n_labeled_per_class; ++j, ++li) {
      const std::size_t src = pool[j];
      std::copy(ds.unlabeled_x.row(src).begin(), ds.unlabeled_x.row(src).end(),
                ds.labeled_x.row(li).begin());
      ds.labeled_y[li] = static_cast<int>(k);
    }
  }

  // Fresh validation draw.
  const std::size_t n_val = std::max<std::size_t>(100, n_unlabeled / 10);
  ds.validation_x = DenseMatrix(n_val, 2);
  ds.validation_y.resize(n_val);
  for (std::size_t i = 0; i < n_val; ++i) {
    const int label = static_cast<int>(i % K);
    sample_point(layout, K, label, spread, rng, ds.validation_x.row(i).data());
    ds.validation_y[i] = label;
  }
  return ds;
}

std::pair<DenseMatrix, std::vector<int>> load_idx(const std::string& images_path,
                                                  const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw ParseError("idx: cannot open images file '" + images_path + "'");
  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw ParseError("idx: cannot open labels file '" + labels_path + "'");

  const std::uint32_t img_magic = read_be32(imgs, "images magic");
  if (img_magic != 0x00000803)
    throw ParseError("idx: bad images magic (expected 0x00000803)");
  const std::uint32_t n_img = read_be32(imgs, "images count");
  const std::uint32_t rows = read_be32(imgs, "images rows");
  const std::uint32_t cols = read_be32(imgs, "images cols");

  const std::uint32_t lbl_magic = read_be32(lbls, "labels magic");
  if (lbl_magic != 0x00000801)
    throw ParseError("idx: bad labels magic (expected 0x00000801)");
  const std::uint32_t n_lbl = read_be32(lbls, "labels count");
  if (n_img != n_lbl)
    throw ParseError("idx: image count " + std::to_string(n_img) +
                     " != label count " + std::to_string(n_lbl));

  const std::size_t d = std::size_t(rows) * cols;
  std::vector<unsigned char> buf(std::size_t(n_img) * d);
  if (!imgs.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
    throw ParseError("idx: truncated file while reading pixel data");
  std::vector<unsigned char> lbuf(n_lbl);
  if (!lbls.read(reinterpret_cast<char*>(lbuf.data()), std::streamsize(lbuf.size())))
    throw ParseError("idx: truncated file while reading label data");

  DenseMatrix x(n_img, d);
  for (std::size_t i = 0; i < buf.size(); ++i)
    x.data[i] = static_cast<double>(buf[i]) / 255.0;
  std::vector<int> y(lbuf.begin(), lbuf.end());
  return {std::move(x), std::move(y)};
}

SslDataset ssl_split(const DenseMatrix& x, const std::vector<int>& y,
                     std::size_t n_labeled, std::size_t n_validation,
                     std::uint64_t seed) {
  check_shape(x.rows == y.size(), "ssl_split: x/y length mismatch");
  const std::size_t n = x.rows;
  if (n_labeled + n_validation > n)
    throw ConfigError("ssl_split: labeled + validation exceeds dataset size");
  const std::size_t K = static_cast<std::size_t>(
                            *std::max_element(y.begin(), y.end())) + 1;
  if (n_labeled % K != 0)
    throw ConfigError("ssl_split: n_labeled must be divisible by class count");
  const std::size_t per_class = n_labeled / K;

  Rng rng(derive_seed(seed, 0x5b17));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::vector<char> taken(n, 0);
  std::vector<std::size_t> labeled_idx;
  std::vector<std::size_t> picked_per_class(K, 0);
  for (std::size_t i : order) {
    const std::size_t k = static_cast<std::size_t>(y[i]);
    if (picked_per_class[k] < per_class) {
      picked_per_class[k]++;
      labeled_idx.push_back(i);
      taken[i] = 1;
    }
  }
  if (labeled_idx.size() != n_labeled)
    throw ConfigError("ssl_split: not enough samples for a balanced labeled draw");

  std::vector<std::size_t> val_idx;
  for (std::size_t i : order) {
    if (val_idx.size() == n_validation) break;
    if (!taken[i]) {
      val_idx.push_back(i);
      taken[i] = 1;
    }
  }
  if (val_idx.size() != n_validation)
    throw ConfigError("ssl_split: not enough samples for the validation split");

  SslDataset ds;
  ds.class_count = K;
  ds.input_dim = x.cols;
  ds.labeled_x = DenseMatrix(n_labeled, x.cols);
  ds.labeled_y.resize(n_labeled);
  for (std::size_t j = 0; j < labeled_idx.size(); ++j) {
    std::copy(x.row(labeled_idx[j]).begin(), x.row(labeled_idx[j]).end(),
              ds.labeled_x.row(j).begin());
    ds.labeled_y[j] = y[labeled_idx[j]];
  }
  ds.validation_x = DenseMatrix(n_validation, x.cols);
  ds.validation_y.resize(n_validation);
  for (std::size_t j = 0; j < val_idx.size(); ++j) {
    std::copy(x.row(val_idx[j]).begin(), x.row(val_idx[j]).end(),
              ds.validation_x.row(j).begin());
    ds.validation_y[j] = y[val_idx[j]];
  }

  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i)
    if (!taken[i]) rest.push_back(i);
  ds.unlabeled_x = DenseMatrix(rest.size(), x.cols);
  for (std::size_t j = 0; j < rest.size(); ++j)
    std::copy(x.row(rest[j]).begin(), x.row(rest[j]).end(),
              ds.unlabeled_x.row(j).begin());
  return ds;
}

void subsample_unlabeled(SslDataset& ds, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n >= ds.unlabeled_x.rows) return;
  Rng rng(derive_seed(seed, 0x50b5));
  std::vector<std::size_t> order(ds.unlabeled_x.rows);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  DenseMatrix keep(n, ds.unlabeled_x.cols);
  for (std::size_t j = 0; j < n; ++j)
    std::copy(ds.unlabeled_x.row(order[j]).begin(),
              ds.unlabeled_x.row(order[j]).end(), keep.row(j).begin());
  ds.unlabeled_x = std::move(keep);
}

void export_csv(const std::string& path, const SslDataset& ds) {
  std::ofstream os(path);
  if (!os) throw ParseError("export_csv: cannot open '" + path + "'");
  os << "x1,x2,label_or_-1\n";
  char buf[128];
  auto emit = [&](std::span<const double> row, int label) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", row[0], row[1], label);
    os << buf;
  };
  for (std::size_t i = 0; i < ds.labeled_x.rows; ++i)
    emit(ds.labeled_x.row(i), ds.labeled_y[i]);
  for (std::size_t i = 0; i < ds.unlabeled_x.rows; ++i)
    emit(ds.unlabeled_x.row(i), -1);
}

}  // namespace fat
