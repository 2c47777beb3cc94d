#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lrvq/lowrank.hpp"
#include "lrvq/regime.hpp"
#include "lrvq/toynet.hpp"

namespace lrvq {

/// IEEE binary16 bits, round-to-nearest-even (overflow -> inf, NaN kept quiet).
std::uint16_t to_half(double value) noexcept;
double from_half(std::uint16_t bits) noexcept;

struct ArchitectureSpec {
  std::string name;
  std::vector<LayerSpec> layers;

  std::size_t parameter_count() const noexcept;
  bool operator==(const ArchitectureSpec&) const = default;
};

ArchitectureSpec toy_architecture(std::size_t n_classes);
ArchitectureSpec resnet18_architecture();
ArchitectureSpec resnet50_architecture();
/// "toy", "resnet18" or "resnet50"; anything else throws Errc::unknown_arch.
ArchitectureSpec architecture_by_name(std::string_view name, std::size_t toy_classes = 4);

/// Layer table: one layer per line, `kind c_out c_in k_h k_w quantize`, where
/// kind is cv/pw/fc/conv and quantize is 0/1. Blank lines and '#' comments
/// are skipped. Throws Errc::format_error with the offending line number.
ArchitectureSpec parse_architecture(std::istream& in, std::string name);
void write_architecture(std::ostream& out, const ArchitectureSpec& arch);

/// Storage decision for one layer under a regime.
struct LayerPlan {
  bool quantized = false;
  std::size_t m = 0;
  std::size_t k = 0;           // clamped codebook size
  std::size_t code_width = 0;  // bits per code: 8 or 16
  std::size_t n_codes = 0;
};

/// Throws Errc::incompatible_regime when m does not divide the layer.
LayerPlan plan_layer(const ArchitectureSpec& arch, std::size_t index, const CompressionRegime& regime);

struct SizeBreakdown {
  std::size_t header_bytes = 0;    // file header and per-layer record headers
  std::size_t codebook_bytes = 0;  // fp16 centroids
  std::size_t code_bytes = 0;
  std::size_t leftover_bytes = 0;  // fp16 unquantized weights
  std::size_t original_bytes = 0;  // fp32 weights

  /// Bytes attributable to the weights themselves.
  std::size_t payload() const noexcept { return codebook_bytes + code_bytes + leftover_bytes; }
  /// Exact length of the serialized container.
  std::size_t total() const noexcept { return header_bytes + payload(); }
};

inline constexpr std::size_t kFileHeaderBytes = 50;
inline constexpr std::size_t kLayerHeaderBytes = 32;

SizeBreakdown compressed_size(const ArchitectureSpec& arch, const CompressionRegime& regime);
/// fp32 weight bytes over payload bytes.
double compression_ratio(const ArchitectureSpec& arch, const CompressionRegime& regime);

enum class StorageMode : std::uint8_t { raw = 0, quantized = 1 };

struct CompressedLayer {
  std::uint16_t id = 0;
  StorageMode mode = StorageMode::raw;
  LayerKind kind = LayerKind::conv;
  TensorShape shape;
  std::uint32_t m = 0;
  std::uint32_t k = 0;
  std::uint8_t code_width = 0;
  std::vector<std::uint16_t> codebook;  // k * m halves
  std::vector<std::uint32_t> codes;     // N / m entries
  std::vector<std::uint16_t> values;    // raw mode: N halves

  bool operator==(const CompressedLayer&) const = default;
};

struct CompressedModel {
  static constexpr std::uint16_t kVersion = 1;
  std::uint16_t version = kVersion;
  std::uint16_t flags = 0;
  CompressionRegime regime;
  std::vector<CompressedLayer> layers;

  bool operator==(const CompressedModel&) const = default;
};

/// Little-endian container:
///   0  magic "LR2VQ\0"      6 bytes
///   6  version              u16
///   8  flags                u16
///  10  m_cv m_pw m_fc k_cv k_pw k_fc d_cv d_pw   8 x u32
///  42  skip_first_conv      u8, then 3 zero bytes
///  46  layer count          u32
///  50  layer records
/// Layer record (32 bytes): id u16, mode u8, code width u8, kind u8,
/// 3 zero bytes, c_out c_in k_h k_w as u32, m u32, k u32.
/// Quantized payload is k*m fp16 centroids followed by the codes;
/// raw payload is N fp16 values.
std::vector<std::uint8_t> serialize(const CompressedModel& model);
/// Throws Errc::format_error on bad magic, version, truncation or trailing bytes.
CompressedModel deserialize(std::span<const std::uint8_t> bytes);

/// Builds the container from a toy net whose quantized layers are merged.
/// Throws Errc::unmerged_layer for a quantized layer still carrying B or for
/// a low-rank layer the regime wants quantized.
CompressedModel export_model(const ToyNet& net, const CompressionRegime& regime);
/// Inverse of export_model (weights come back through fp16).
ToyNet import_model(const CompressedModel& model);

void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes);
/// Throws Errc::missing_checkpoint if the file cannot be opened.
std::vector<std::uint8_t> read_bytes(const std::string& path);

}  // namespace lrvq
