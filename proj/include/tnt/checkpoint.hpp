#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "tnt/io.hpp"
#include "tnt/model.hpp"
#include "tnt/optim.hpp"

namespace tnt {

// Layout (little-endian):
//   "TNTC" | u32 version | u64 len | config JSON
//   u64 count | count x (u32 name_len | name | u32 rank | u64 extents | f64 data)
//   optional: "OPTS" | u64 len | JSON {hyper, step} | moment records (m then v)
// Loading is strict: every parameter the config implies must be present with
// its exact shape, and nothing else.
class CheckpointError : public FormatError {
 public:
  using FormatError::FormatError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::optional<OptimState> optim;
};

void save_checkpoint(const std::string& path, const Model& model, const OptimState* optim = nullptr);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tnt
