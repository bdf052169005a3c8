#pragma once

#include <string>

#include "fat/nn.hpp"

namespace fat {

// Versioned text checkpoint. Parameters are written as C99 hex floats so the
// round trip is bit-exact.
void save_model(const std::string& path, const MlpModel& model);
MlpModel load_model(const std::string& path);

}  // namespace fat
