#pragma once

#include <cstddef>
#include <string_view>

#include "lrvq/lowrank.hpp"

namespace lrvq {

/// Per-layer-kind (m, k, d) assignment.
struct CompressionRegime {
  std::size_t m_cv = 9;
  std::size_t m_pw = 4;
  std::size_t m_fc = 4;
  std::size_t k_cv = 256;
  std::size_t k_pw = 256;
  std::size_t k_fc = 2048;
  std::size_t d_cv = 9;
  std::size_t d_pw = 4;
  bool skip_first_conv = true;

  std::size_t m_for(LayerKind kind) const;
  std::size_t k_for(LayerKind kind) const;
  /// d for LRR layers; fc layers use plain VQ so d == m.
  std::size_t d_for(LayerKind kind) const;
  /// Throws Errc::incompatible_regime on d outside [1, m] or zero sizes.
  void validate() const;

  bool operator==(const CompressionRegime&) const = default;
};

enum class RegimePreset { small_blocks, large_blocks };

/// ResNet-18 / ResNet-50 regimes with k_cv = k_pw = 256.
CompressionRegime resnet_regime(std::string_view arch, RegimePreset preset);

/// Regime used by the toy pipeline: m_cv 9, m_pw 4, k 256, first conv quantized.
CompressionRegime toy_regime(std::size_t d_cv = 9, std::size_t d_pw = 4);

}  // namespace lrvq
