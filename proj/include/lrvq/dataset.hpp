#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lrvq/matrix.hpp"

namespace lrvq {

inline constexpr std::size_t kImageSide = 16;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

struct DatasetConfig {
  std::uint64_t seed = 1;
  std::size_t n_classes = 4;
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  double noise = 0.5;
  std::size_t motif = 4;  // side of the periodic per-class pattern
  double contrast = 1.0;  // template RMS

  bool operator==(const DatasetConfig&) const = default;
};

/// 16x16 single-channel images: a fixed per-class template (RMS = contrast)
/// plus N(0, noise^2)
/// pixel noise. Labels cycle through the classes, so every split is balanced.
struct SyntheticDataset {
  DatasetConfig config;
  Matrix templates;  // n_classes x 256
  Matrix train_x;    // n_train x 256
  std::vector<std::uint32_t> train_y;
  Matrix test_x;
  std::vector<std::uint32_t> test_y;

  static SyntheticDataset generate(const DatasetConfig& cfg);
};

}  // namespace lrvq
