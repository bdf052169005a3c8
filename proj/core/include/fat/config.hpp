#pragma once

#include <map>
#include <string>
#include <vector>

#include "fat/trainer.hpp"

namespace fat {

// Fully resolved experiment description: training config plus dataset spec.
struct RunSpec {
  FatConfig fat;
  std::string dataset = "moons";  // moons | blobs3 | blobs4 | ring | mnist
  std::size_t labels = 8;         // total labeled count
  std::size_t validation = 1000;  // mnist validation holdout
  std::size_t unlabeled = 0;      // unlabeled subset size, 0 = all
  double spread = 0.1;            // synthetic noise scale
  std::uint64_t data_seed = 0;    // 0 = follow fat.seed
  std::string mnist_dir;
  std::string out_dir = "run";
};

// One key=value pair per line, '#' comments. Unknown keys are rejected.
RunSpec parse_config_file(const std::string& path);

// Applies overrides (same key=value vocabulary) on top of a spec; flags from
// the command line funnel through here so precedence is uniform.
void apply_overrides(RunSpec& spec,
                     const std::vector<std::pair<std::string, std::string>>& kv);

void validate(const RunSpec& spec);

// The manifest is itself a parseable config file; re-running it reproduces
// the run.
void write_manifest(const std::string& path, const RunSpec& spec,
                    const std::string& version);

SslDataset build_dataset(const RunSpec& spec);

const char* method_name(Method m);

}  // namespace fat
