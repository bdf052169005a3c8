#include "fat/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fat {

namespace {

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  return x;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  return x;
}

std::vector<std::size_t> parse_dims(const std::string& key, const std::string& v) {
  std::vector<std::size_t> dims;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ','))
    dims.push_back(static_cast<std::size_t>(parse_uint(key, tok)));
  if (dims.empty()) throw ConfigError("config: key '" + key + "' is empty");
  return dims;
}

void apply_one(RunSpec& s, const std::string& key, const std::string& v) {
  if (key == "method") {
    if (v == "supervised") s.fat.method = Method::Supervised;
    else if (v == "vat") s.fat.method = Method::Vat;
    else if (v == "fat") s.fat.method = Method::Fat;
    else throw ConfigError("config: unknown method '" + v + "'");
  } else if (key == "dataset") {
    if (v != "moons" && v != "blobs3" && v != "blobs4" && v != "ring" && v != "mnist")
      throw ConfigError("config: unknown dataset '" + v + "'");
    s.dataset = v;
  } else if (key == "labels") s.labels = parse_uint(key, v);
  else if (key == "validation") s.validation = parse_uint(key, v);
  else if (key == "unlabeled") s.unlabeled = parse_uint(key, v);
  else if (key == "spread") s.spread = parse_double(key, v);
  else if (key == "epsilon") s.fat.vat.epsilon = parse_double(key, v);
  else if (key == "xi") s.fat.vat.xi = parse_double(key, v);
  else if (key == "power_iters")
    s.fat.vat.power_iters = static_cast<int>(parse_uint(key, v));
  else if (key == "capital_c") s.fat.badgen.capital_c = parse_double(key, v);
  else if (key == "alpha") s.fat.badgen.alpha = parse_double(key, v);
  else if (key == "lambda_max") s.fat.lambda_max = parse_double(key, v);
  else if (key == "lambda_step") s.fat.lambda_step = parse_double(key, v);
  else if (key == "epochs") s.fat.epochs = parse_uint(key, v);
  else if (key == "labeled_batch") s.fat.labeled_batch = parse_uint(key, v);
  else if (key == "batch") s.fat.unlabeled_batch = parse_uint(key, v);
  else if (key == "hidden") s.fat.hidden = parse_dims(key, v);
  else if (key == "lr") s.fat.opt.lr = parse_double(key, v);
  else if (key == "beta1") s.fat.opt.beta1 = parse_double(key, v);
  else if (key == "beta2") s.fat.opt.beta2 = parse_double(key, v);
  else if (key == "adam_eps") s.fat.opt.eps = parse_double(key, v);
  else if (key == "seed") s.fat.seed = parse_uint(key, v);
  else if (key == "data_seed") s.data_seed = parse_uint(key, v);
  else if (key == "norm") s.fat.use_norm = parse_uint(key, v) != 0;
  else if (key == "mnist_dir") s.mnist_dir = v;
  else if (key == "out") s.out_dir = v;
  else throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

RunSpec parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path + "'");
  RunSpec spec;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    const auto ke = key.find_last_not_of(" \t");
    key = key.substr(0, ke + 1);
    const auto vb = val.find_first_not_of(" \t");
    val = vb == std::string::npos ? "" : val.substr(vb);
    apply_one(spec, key, val);
  }
  return spec;
}

void apply_overrides(RunSpec& spec,
                     const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) apply_one(spec, k, v);
}

void validate(const RunSpec& spec) {
  const FatConfig& c = spec.fat;
  if (c.vat.epsilon <= 0.0) throw ConfigError("config: epsilon must be > 0");
  if (c.vat.xi <= 0.0) throw ConfigError("config: xi must be > 0");
  if (c.vat.power_iters < 1) throw ConfigError("config: power_iters must be >= 1");
  if (c.badgen.capital_c <= 0.0) throw ConfigError("config: capital_c must be > 0");
  if (c.badgen.alpha <= 0.0 || c.badgen.alpha > 1.0)
    throw ConfigError("config: alpha must be in (0, 1]");
  if (c.lambda_step < 0.0) throw ConfigError("config: lambda_step must be >= 0");
  if (c.lambda_max < 0.0) throw ConfigError("config: lambda_max must be >= 0");
  if (c.labeled_batch < 1 || c.unlabeled_batch < 1)
    throw ConfigError("config: batch sizes must be >= 1");
  if (spec.labels < 1) throw ConfigError("config: labels must be >= 1");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Supervised: return "supervised";
    case Method::Vat: return "vat";
    case Method::Fat: return "fat";
  }
  return "fat";
}

void write_manifest(const std::string& path, const RunSpec& s,
                    const std::string& version) {
  std::ofstream os(path);
  if (!os) throw ConfigError("manifest: cannot open '" + path + "'");
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  os << "# fat run manifest (version " << version << ")\n";
  os << "method=" << method_name(s.fat.method) << "\n";
  os << "dataset=" << s.dataset << "\n";
  os << "labels=" << s.labels << "\n";
  os << "validation=" << s.validation << "\n";
  os << "unlabeled=" << s.unlabeled << "\n";
  os << "spread=" << num(s.spread) << "\n";
  os << "epsilon=" << num(s.fat.vat.epsilon) << "\n";
  os << "xi=" << num(s.fat.vat.xi) << "\n";
  os << "power_iters=" << s.fat.vat.power_iters << "\n";
  os << "capital_c=" << num(s.fat.badgen.capital_c) << "\n";
  os << "alpha=" << num(s.fat.badgen.alpha) << "\n";
  os << "lambda_max=" << num(s.fat.lambda_max) << "\n";
  os << "lambda_step=" << num(s.fat.lambda_step) << "\n";
  os << "epochs=" << s.fat.epochs << "\n";
  os << "labeled_batch=" << s.fat.labeled_batch << "\n";
  os << "batch=" << s.fat.unlabeled_batch << "\n";
  os << "hidden=";
  for (std::size_t i = 0; i < s.fat.hidden.size(); ++i)
    os << (i ? "," : "") << s.fat.hidden[i];
  os << "\n";
  os << "lr=" << num(s.fat.opt.lr) << "\n";
  os << "beta1=" << num(s.fat.opt.beta1) << "\n";
  os << "beta2=" << num(s.fat.opt.beta2) << "\n";
  os << "adam_eps=" << num(s.fat.opt.eps) << "\n";
  os << "seed=" << s.fat.seed << "\n";
  os << "data_seed=" << s.data_seed << "\n";
  os << "norm=" << (s.fat.use_norm ? 1 : 0) << "\n";
  if (!s.mnist_dir.empty()) os << "mnist_dir=" << s.mnist_dir << "\n";
}

SslDataset build_dataset(const RunSpec& spec) {
  const std::uint64_t seed = spec.data_seed != 0 ? spec.data_seed : spec.fat.seed;
  if (spec.dataset == "mnist") {
    std::string dir = spec.mnist_dir;
    if (dir.empty()) {
      const char* env = std::getenv("FAT_DATA_DIR");
      if (env) dir = std::string(env) + "/mnist";
    }
    if (dir.empty())
      throw ConfigError("mnist: no directory given (set mnist_dir or FAT_DATA_DIR)");
    auto [train_x, train_y] = load_idx(dir + "/train-images-idx3-ubyte",
                                       dir + "/train-labels-idx1-ubyte");
    auto [test_x, test_y] = load_idx(dir + "/t10k-images-idx3-ubyte",
                                     dir + "/t10k-labels-idx1-ubyte");
    SslDataset ds = ssl_split(train_x, train_y, spec.labels, spec.validation, seed);
    subsample_unlabeled(ds, spec.unlabeled, seed);
    ds.test_x = std::move(test_x);
    ds.test_y = std::move(test_y);
    ds.norm = {0.0, 1.0 / 255.0};  // applied by load_idx, recorded here
    return ds;
  }

  std::size_t K = 2;
  ClusterLayout layout = ClusterLayout::TwoMoons;
  if (spec.dataset == "blobs3") { K = 3; layout = ClusterLayout::GaussianBlobs; }
  else if (spec.dataset == "blobs4") { K = 4; layout = ClusterLayout::GaussianBlobs; }
  else if (spec.dataset == "ring") { K = 2; layout = ClusterLayout::GaussianRing; }
  if (spec.labels % K != 0)
    throw ConfigError("config: labels must be divisible by the class count");
  const std::size_t n = spec.unlabeled == 0 ? 1000 : spec.unlabeled;
  return make_clusters(K, n, spec.labels / K, spec.spread, layout, seed);
}

}  // namespace fat
