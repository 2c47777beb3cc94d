#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "lrvq/lowrank.hpp"
#include "lrvq/regime.hpp"
#include "lrvq/rng.hpp"
#include "lrvq/tensor.hpp"
#include "lrvq/vq.hpp"

namespace lrvq {

enum class ParamMode { dense, lowrank, quantized };

std::string_view param_mode_name(ParamMode mode) noexcept;

/// One parameterised layer: dense filter, low-rank pair or quantized layer.
struct NetLayer {
  LayerSpec spec;
  std::size_t m = 1;
  std::variant<WeightTensor, LowRankPair, QuantizedLayer> params;

  ParamMode mode() const noexcept { return static_cast<ParamMode>(params.index()); }
  /// Filter values in (c_out, c_in, k_h, k_w) order, whatever the storage.
  std::vector<double> effective_weights() const;
  /// Effective weights as (N/m x m) subvectors.
  Matrix subvectors() const;
};

/// input 1x16x16 -> conv3x3(1->8) -> relu -> conv1x1(8->8) -> relu
///   -> conv3x3(8->16) -> relu -> global avg pool -> fc(16->n_classes)
/// Convolutions are stride 1 with zero padding that keeps 16x16 maps.
/// There are no biases.
struct ToyNet {
  static constexpr std::size_t kLayers = 4;

  std::size_t n_classes = 0;
  std::array<NetLayer, kLayers> layers;
};

/// Layer table of the toy network (fc is left unquantized).
std::vector<LayerSpec> toy_layer_specs(std::size_t n_classes);

/// He-initialised dense network.
ToyNet make_dense_net(Rng& rng, std::size_t n_classes);

/// Conv layers as low-rank pairs (m and d from the regime), fc dense.
ToyNet make_lowrank_net(Rng& rng, std::size_t n_classes, const CompressionRegime& regime,
                        VarianceMode mode = VarianceMode::paper);

/// Dense conv layers re-expressed exactly as A = W_r, B = I (d = m).
ToyNet identity_lowrank(const ToyNet& dense, const CompressionRegime& regime);

/// k-means on every low-rank layer marked for quantization; others unchanged.
ToyNet quantize_net(const ToyNet& lrr, Rng& rng, const CompressionRegime& regime,
                    const KMeansOptions& opts = {});

/// Folds B into every quantized layer's codebook.
ToyNet merge_net(const ToyNet& net);

enum class ParamRole { weight, a, b, codebook, transform };

struct ParamInfo {
  std::size_t layer = 0;
  ParamRole role = ParamRole::weight;
  std::size_t size = 0;
};

/// Trainable tensors in a fixed order (layer-major, then role).
std::vector<ParamInfo> parameter_info(const ToyNet& net);
std::vector<std::span<double>> parameters(ToyNet& net);

}  // namespace lrvq
