#pragma once

#include "fdnet/data.hpp"
#include "fdnet/model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace fdnet {

inline constexpr char checkpoint_magic[8] = {'F', 'D', 'N', 'E', 'T', 'C', 'K', '1'};
inline constexpr std::uint32_t checkpoint_version = 1;

struct CheckpointMeta {
  Index epoch = -1;
  Scalar best_val_mse = std::numeric_limits<Scalar>::quiet_NaN();
};

/// Everything needed to score or forecast a dataset with a trained model.
struct Checkpoint {
  ForecastModel model;
  Standardizer standardizer;
  std::vector<std::string> columns;  // in model variate order
  std::string target;
  CheckpointMeta meta;
};

// Little-endian layout: magic, u32 version, model config and focal plan,
// u64 parameter count, then per parameter a u32-length-prefixed UTF-8 name,
// u32 rank, i64 extents and raw f64 values; then the standardizer, column
// names, target name and training metadata.
void write_checkpoint(std::ostream& os, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fdnet
