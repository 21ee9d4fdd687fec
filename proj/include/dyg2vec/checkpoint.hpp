#pragma once

// Binary parameter container:
//   "DYGW" | u32 version | u32 entry count |
//   per entry: u32 name length, name bytes, u32 rank, u64 dims[rank],
//              u8 precision tag (0 = f32, 1 = f64), raw little-endian values.
// Values are written row-major. Loading into the stored precision is bit-exact.

#include <cstdint>
#include <string>

#include "dyg2vec/params.hpp"

namespace dyg {

inline constexpr char kCheckpointMagic[4] = {'D', 'Y', 'G', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class Precision : std::uint8_t { F32 = 0, F64 = 1 };

template <typename S>
void save_checkpoint(const ParamSet<S>& params, const std::string& path);

/// Reads every entry, converting to S when the stored precision differs.
template <typename S>
ParamSet<S> load_checkpoint(const std::string& path);

/// Precision of the first entry, or F32 for an empty file.
Precision checkpoint_precision(const std::string& path);

}  // namespace dyg
