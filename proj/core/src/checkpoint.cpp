#include "fat/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fat/errors.hpp"

namespace fat {

namespace {

constexpr const char* kMagic = "fatnet";
constexpr int kVersion = 1;

void write_values(std::ostream& os, const std::vector<double>& v) {
  char buf[64];
  for (double x : v) {
    std::snprintf(buf, sizeof(buf), "%a", x);
    os << buf << "\n";
  }
}

void read_values(std::istream& is, std::vector<double>& v, const char* what) {
  std::string tok;
  for (double& x : v) {
    if (!(is >> tok)) throw ParseError(std::string("checkpoint: truncated ") + what);
    char* end = nullptr;
    x = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str())
      throw ParseError(std::string("checkpoint: bad value in ") + what);
  }
}

const char* act_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
  }
  return "identity";
}

Activation act_from(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "leaky_relu") return Activation::LeakyRelu;
  throw ParseError("checkpoint: unknown activation '" + s + "'");
}

}  // namespace

void save_model(const std::string& path, const MlpModel& model) {
  std::ofstream os(path);
  if (!os) throw ParseError("checkpoint: cannot open '" + path + "' for writing");
  os << kMagic << " " << kVersion << "\n";
  os << model.layers.size() << "\n";
  for (const Layer& layer : model.layers) {
    os << "layer " << layer.fan_in() << " " << layer.fan_out() << " "
       << act_name(layer.act) << " ";
    {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%a", layer.leaky_slope);
      os << buf;
    }
    os << " " << (layer.norm ? 1 : 0) << "\n";
    write_values(os, layer.weight.data);
    write_values(os, layer.bias);
    if (layer.norm) {
      write_values(os, layer.norm->gamma);
      write_values(os, layer.norm->beta);
      write_values(os, layer.norm->running_mean);
      write_values(os, layer.norm->running_var);
    }
  }
  if (!os) throw ParseError("checkpoint: write to '" + path + "' failed");
}

MlpModel load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("checkpoint: cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic)
    throw ParseError("checkpoint: bad magic in '" + path + "'");
  if (version != kVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  std::size_t n_layers = 0;
  if (!(is >> n_layers) || n_layers == 0)
    throw ParseError("checkpoint: bad layer count");

  MlpModel model;
  for (std::size_t l = 0; l < n_layers; ++l) {
    std::string tag, act_s, slope_s;
    std::size_t fin = 0, fout = 0;
    int has_norm = 0;
    if (!(is >> tag >> fin >> fout >> act_s >> slope_s >> has_norm) || tag != "layer")
      throw ParseError("checkpoint: bad layer header");
    Layer layer;
    layer.weight = DenseMatrix(fin, fout);
    layer.bias.assign(fout, 0.0);
    layer.act = act_from(act_s);
    layer.leaky_slope = std::strtod(slope_s.c_str(), nullptr);
    read_values(is, layer.weight.data, "weights");
    read_values(is, layer.bias, "biases");
    if (has_norm) {
      BatchNorm bn;
      bn.gamma.assign(fout, 0.0);
      bn.beta.assign(fout, 0.0);
      bn.running_mean.assign(fout, 0.0);
      bn.running_var.assign(fout, 0.0);
      read_values(is, bn.gamma, "norm gamma");
      read_values(is, bn.beta, "norm beta");
      read_values(is, bn.running_mean, "norm running mean");
      read_values(is, bn.running_var, "norm running var");
      layer.norm = std::move(bn);
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

}  // namespace fat
