#pragma once

#include <string>

#include "alphamaml/meta.hpp"

namespace alphamaml {

/// Binary state dump: "AMML1" magic, version, alpha, beta, iteration,
/// theta segments with shapes, then a canonical-JSON configuration blob
/// (the run configuration, which embeds every MetaConfig field). Round
/// trips bitwise.
void save_checkpoint(const std::string& path, const MetaState& state,
                     const std::string& config_json);

struct Checkpoint {
  MetaState state;
  std::string config_json;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace alphamaml
