#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lrvq/toynet.hpp"

namespace lrvq {

/// Training-side snapshot of a toy net: every parameter at full double
/// precision in whatever mode each layer is in, plus free-form metadata
/// (dataset parameters, seed, stage, d).
struct Checkpoint {
  ToyNet net;
  std::map<std::string, std::string> metadata;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws Errc::format_error on malformed input.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws Errc::missing_checkpoint if the file is absent.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lrvq
