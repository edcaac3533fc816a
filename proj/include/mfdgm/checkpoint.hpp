#pragma once

#include <cstdint>
#include <string>

#include "mfdgm/network.hpp"
#include "mfdgm/training.hpp"

namespace mfdgm {

inline constexpr int checkpoint_version = 1;

struct Checkpoint {
  int version = checkpoint_version;
  std::uint64_t config_hash = 0;
  NetworkSpec phi_spec;
  NetworkSpec rho_spec;
  TrainingState state;
};

/// Line-oriented text; every real with 17 significant digits so loading
/// restores each double exactly.  Written atomically.
std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const std::string& path, const Checkpoint& c);
/// Throws LoadError for a missing, corrupt or wrong-version file.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mfdgm
