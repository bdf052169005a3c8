#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fat/checkpoint.hpp"
#include "fat/rng.hpp"

using namespace fat;

namespace {

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void check_identical(const MlpModel& a, const MlpModel& b) {
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const Layer& la = a.layers[l];
    const Layer& lb = b.layers[l];
    CHECK(la.weight.rows == lb.weight.rows);
    CHECK(la.weight.cols == lb.weight.cols);
    CHECK(la.weight.data == lb.weight.data);  // bit-exact
    CHECK(la.bias == lb.bias);
    CHECK(la.act == lb.act);
    CHECK(la.leaky_slope == lb.leaky_slope);
    CHECK(la.norm.has_value() == lb.norm.has_value());
    if (la.norm) {
      CHECK(la.norm->gamma == lb.norm->gamma);
      CHECK(la.norm->beta == lb.norm->beta);
      CHECK(la.norm->running_mean == lb.norm->running_mean);
      CHECK(la.norm->running_var == lb.norm->running_var);
    }
  }
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  MlpModel m = he_init({3, 7, 4}, Activation::Relu, 17);
  // Make the values awkward: denormals-adjacent magnitudes and negatives.
  m.layers[0].weight(0, 0) = 1e-300;
  m.layers[0].weight(0, 1) = -0.1;  // not exactly representable
  m.layers[1].bias[2] = 1.0 / 3.0;
  const std::string path = tmp("fat_test_ckpt.txt");
  save_model(path, m);
  check_identical(m, load_model(path));
}

TEST_CASE("checkpoint round trip with normalization layers") {
  MlpModel m = he_init({2, 6, 6, 2}, Activation::LeakyRelu, 23, true);
  // Perturb the running statistics so they are not the init defaults.
  Rng rng(4);
  for (Layer& l : m.layers)
    if (l.norm)
      for (double& v : l.norm->running_mean) v = rng.uniform(-1.0, 1.0);
  const std::string path = tmp("fat_test_ckpt_norm.txt");
  save_model(path, m);
  check_identical(m, load_model(path));
}

TEST_CASE("checkpoint loader rejects corrupt files") {
  const std::string bad = tmp("fat_test_ckpt_bad.txt");
  {
    std::ofstream os(bad);
    os << "notfatnet 1\n";
  }
  CHECK_THROWS_AS(load_model(bad), ParseError);

  // Truncated: valid header, then nothing.
  MlpModel m = he_init({2, 3, 2}, Activation::Relu, 5);
  const std::string full = tmp("fat_test_ckpt_full.txt");
  save_model(full, m);
  std::ifstream is(full);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  const std::string cut = tmp("fat_test_ckpt_cut.txt");
  {
    std::ofstream os(cut);
    os << text.substr(0, text.size() / 2);
  }
  CHECK_THROWS_AS(load_model(cut), ParseError);

  CHECK_THROWS_AS(load_model(tmp("fat_test_ckpt_missing.txt")), ParseError);
}

TEST_CASE("save then load then save produces identical files") {
  MlpModel m = he_init({4, 8, 3}, Activation::Relu, 31);
  const std::string p1 = tmp("fat_test_ckpt_a.txt");
  const std::string p2 = tmp("fat_test_ckpt_b.txt");
  save_model(p1, m);
  save_model(p2, load_model(p1));
  std::ifstream a(p1), b(p2);
  std::string sa((std::istreambuf_iterator<char>(a)),
                 std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)),
                 std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}
