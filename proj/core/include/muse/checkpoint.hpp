#pragma once

#include <iosfwd>
#include <string>

#include "muse/tensor.hpp"

namespace muse {

/// Binary checkpoint layout (all integers little-endian):
///
///   "MUSECKPT"  magic, 8 bytes
///   u32         format version (1)
///   u32         length of the embedded config text, then that many bytes
///   u32         parameter count
///   per parameter, in name order:
///     u32 name length, name bytes
///     u8  dtype (0 = float32, 1 = float64)
///     u32 rank, then rank x u64 dims
///     raw little-endian element data
///
/// Optimizer moments are not stored.
struct Checkpoint {
    std::string config_text;
    ParameterSet<float> params;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in, const std::string& source = "<checkpoint>");

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace muse
