#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fat/matrix.hpp"

namespace fat {

enum class ClusterLayout { TwoMoons, GaussianRing, GaussianBlobs };

// Per-feature-uniform affine record: stored = (raw + shift) * scale.
struct NormRecord {
  double shift = 0.0;
  double scale = 1.0;
};

struct SslDataset {
  DenseMatrix labeled_x;
  std::vector<int> labeled_y;
  DenseMatrix unlabeled_x;
  DenseMatrix validation_x;
  std::vector<int> validation_y;
  DenseMatrix test_x;
  std::vector<int> test_y;
  std::size_t class_count = 0;
  std::size_t input_dim = 0;
  NormRecord norm;
};

// 2D synthetic datasets satisfying the cluster assumption. The labeled points
// are drawn class-balanced from the unlabeled pool (which keeps all its
// points); the test split carries the pool's true labels so accuracy on the
// unlabeled data can be traced. A fresh validation draw is held out.
SslDataset make_clusters(std::size_t K, std::size_t n_unlabeled,
                         std::size_t n_labeled_per_class, double spread,
                         ClusterLayout layout, std::uint64_t seed);

// IDX ingestion: images scaled to [0,1], labels as ints. Throws ParseError
// naming the offending field on bad magic / truncation / count mismatch.
std::pair<DenseMatrix, std::vector<int>> load_idx(const std::string& images_path,
                                                  const std::string& labels_path);

// Class-balanced labeled draw + held-out validation; the rest becomes the
// unlabeled set with labels discarded. Test split left empty for the caller.
SslDataset ssl_split(const DenseMatrix& x, const std::vector<int>& y,
                     std::size_t n_labeled, std::size_t n_validation,
                     std::uint64_t seed);

// Deterministically truncates the unlabeled set to n points (0 = keep all).
void subsample_unlabeled(SslDataset& ds, std::size_t n, std::uint64_t seed);

void export_csv(const std::string& path, const SslDataset& ds);

}  // namespace fat
