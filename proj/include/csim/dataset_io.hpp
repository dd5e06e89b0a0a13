#pragma once

#include <cstdint>
#include <string>

#include "csim/types.hpp"

namespace csim {

// Formats a double with 17 significant digits, enough for an exact
// binary round-trip through text.
std::string format_double(double value);

// Writes `dir/manifest.json` and `dir/steps.csv`. The CSV columns are
// traj_id, t, policy_id, obs_*, action, trace_*, latent_*.
void save_dataset(const RCTDataset& dataset, const std::string& dir);

RCTDataset load_dataset(const std::string& dir);

// FNV-1a over manifest + steps bytes; used as the dataset fingerprint in
// checkpoints and reports.
std::uint64_t dataset_fingerprint(const std::string& dir);
std::uint64_t fingerprint_bytes(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace csim
