#include "lrvq/toynet.hpp"

#include <string>

#include "lrvq/error.hpp"

namespace lrvq {

std::string_view param_mode_name(ParamMode mode) noexcept {
  switch (mode) {
    case ParamMode::dense: return "dense";
    case ParamMode::lowrank: return "lowrank";
    case ParamMode::quantized: return "quantized";
  }
  return "?";
}

std::vector<double> NetLayer::effective_weights() const {
  return std::visit(
      [](const auto& p) -> std::vector<double> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, WeightTensor>) {
          return p.data;
        } else if constexpr (std::is_same_v<T, LowRankPair>) {
          return materialize(p).values();
        } else {
          return decoded_weights(p).values();
        }
      },
      params);
}

Matrix NetLayer::subvectors() const {
  std::vector<double> w = effective_weights();
  if (m == 0 || w.size() % m != 0) throw Error(Errc::non_divisible, "layer m does not divide N");
  const std::size_t rows = w.size() / m;
  return Matrix(rows, m, std::move(w));
}

std::vector<LayerSpec> toy_layer_specs(std::size_t n_classes) {
  return {
      LayerSpec{LayerKind::cv3x3, {8, 1, 3, 3}, true},
      LayerSpec{LayerKind::pw1x1, {8, 8, 1, 1}, true},
      LayerSpec{LayerKind::cv3x3, {16, 8, 3, 3}, true},
      LayerSpec{LayerKind::fc, {n_classes, 16, 1, 1}, false},
  };
}

namespace {

WeightTensor he_tensor(Rng& rng, const LayerSpec& spec) {
  const Matrix values = normal_matrix(rng, 1, spec.numel(), 0.0, spec.he_variance());
  return WeightTensor(spec.shape, values.values());
}

}  // namespace

ToyNet make_dense_net(Rng& rng, std::size_t n_classes) {
  ToyNet net;
  net.n_classes = n_classes;
  const auto specs = toy_layer_specs(n_classes);
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
    Rng layer_rng = rng.split(l);
    net.layers[l] = NetLayer{specs[l], specs[l].shape.c_in * specs[l].shape.k_h * specs[l].shape.k_w,
                             he_tensor(layer_rng, specs[l])};
  }
  return net;
}

ToyNet make_lowrank_net(Rng& rng, std::size_t n_classes, const CompressionRegime& regime,
                        VarianceMode mode) {
  regime.validate();
  ToyNet net;
  net.n_classes = n_classes;
  const auto specs = toy_layer_specs(n_classes);
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
    const LayerSpec& spec = specs[l];
    Rng layer_rng = rng.split(l);
    if (spec.kind == LayerKind::fc) {
      net.layers[l] = NetLayer{spec, spec.shape.c_in, he_tensor(layer_rng, spec)};
      continue;
    }
    const std::size_t m = regime.m_for(spec.kind);
    const std::size_t d = regime.d_for(spec.kind);
    net.layers[l] = NetLayer{spec, m, init_lowrank(layer_rng, spec, m, d, spec.he_variance(), mode)};
  }
  return net;
}

ToyNet identity_lowrank(const ToyNet& dense, const CompressionRegime& regime) {
  ToyNet net = dense;
  for (auto& layer : net.layers) {
    if (layer.mode() != ParamMode::dense || layer.spec.kind == LayerKind::fc) continue;
    const std::size_t m = regime.m_for(layer.spec.kind);
    Matrix w_r = reshape_to_subvectors(std::get<WeightTensor>(layer.params), m);
    layer.m = m;
    layer.params = LowRankPair{std::move(w_r), Matrix::identity(m), m, m};
  }
  return net;
}

ToyNet quantize_net(const ToyNet& lrr, Rng& rng, const CompressionRegime& regime,
                    const KMeansOptions& opts) {
  ToyNet net = lrr;
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
    NetLayer& layer = net.layers[l];
    if (!layer.spec.quantize || layer.mode() != ParamMode::lowrank) continue;
    Rng layer_rng = rng.split(l);
    const auto& pair = std::get<LowRankPair>(layer.params);
    layer.params = quantize_lowrank(layer_rng, pair, layer.spec, regime.k_for(layer.spec.kind), opts);
  }
  return net;
}

ToyNet merge_net(const ToyNet& net) {
  ToyNet out = net;
  for (auto& layer : out.layers) {
    if (layer.mode() != ParamMode::quantized) continue;
    auto& q = std::get<QuantizedLayer>(layer.params);
    if (!q.merged()) layer.params = merge_codebook(q);
  }
  return out;
}

std::vector<ParamInfo> parameter_info(const ToyNet& net) {
  std::vector<ParamInfo> out;
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
    const auto& layer = net.layers[l];
    switch (layer.mode()) {
      case ParamMode::dense:
        out.push_back({l, ParamRole::weight, layer.spec.numel()});
        break;
      case ParamMode::lowrank: {
        const auto& p = std::get<LowRankPair>(layer.params);
        out.push_back({l, ParamRole::a, p.a.size()});
        out.push_back({l, ParamRole::b, p.b.size()});
        break;
      }
      case ParamMode::quantized: {
        const auto& q = std::get<QuantizedLayer>(layer.params);
        out.push_back({l, ParamRole::codebook, q.codebook.centroids.size()});
        if (!q.merged()) out.push_back({l, ParamRole::transform, q.transform->size()});
        break;
      }
    }
  }
  return out;
}

std::vector<std::span<double>> parameters(ToyNet& net) {
  std::vector<std::span<double>> out;
  for (auto& layer : net.layers) {
    std::visit(
        [&](auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, WeightTensor>) {
            out.emplace_back(p.data);
          } else if constexpr (std::is_same_v<T, LowRankPair>) {
            out.push_back(p.a.data());
            out.push_back(p.b.data());
          } else {
            out.push_back(p.codebook.centroids.data());
            if (p.transform) out.push_back(p.transform->data());
          }
        },
        layer.params);
  }
  return out;
}

}  // namespace lrvq
