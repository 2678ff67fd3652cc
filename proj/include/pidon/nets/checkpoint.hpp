#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pidon/diffcore/tape.hpp"

namespace pidon::nets {

/// On-disk snapshot of a network.
///
/// Layout: a text manifest of `key=value` lines ending with the line `end`,
/// followed by one record per tensor: a text header line `<name> <rows> <cols>`
/// and rows*cols little-endian IEEE-754 doubles in row-major order.
struct Checkpoint {
  std::map<std::string, std::string> manifest;
  ad::ParamSet tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace pidon::nets
