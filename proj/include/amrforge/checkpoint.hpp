#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "amrforge/model.hpp"
#include "amrforge/tokenizer.hpp"

namespace amrforge {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// On disk: the 8 bytes "AMRFCKPT", a little-endian u32 version, a u64
/// header length, a JSON header (spec, tokenizer, tensor table, metadata),
/// then every tensor as little-endian float64 in row-major order.
struct Checkpoint {
  ModelSpec spec;
  Tokenizer tokenizer;
  Parameters params;
  std::optional<AdapterState> adapters;
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

std::string checkpoint_bytes(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_bytes(const std::string& bytes);

}  // namespace amrforge
