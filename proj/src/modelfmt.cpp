#include "lrvq/modelfmt.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "bytes.hpp"
#include "lrvq/error.hpp"
#include "lrvq/vq.hpp"

namespace lrvq {

namespace {

constexpr char kMagic[6] = {'L', 'R', '2', 'V', 'Q', '\0'};

}  // namespace

std::uint16_t to_half(double value) noexcept {
  std::uint16_t sign = std::signbit(value) ? 0x8000 : 0;
  const double mag = std::fabs(value);
  if (std::isnan(value)) return static_cast<std::uint16_t>(sign | 0x7e00);
  if (mag >= 65520.0) return static_cast<std::uint16_t>(sign | 0x7c00);
  if (mag == 0.0) return sign;
  int e2 = 0;
  std::frexp(mag, &e2);
  int exponent = e2 - 1;  // mag in [2^exponent, 2^(exponent+1))
  if (exponent < -14) {
    // subnormal: units of 2^-24; a carry into 1024 lands on the smallest normal
    const double q = std::nearbyint(std::ldexp(mag, 24));
    return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(q));
  }
  double q = std::nearbyint(std::ldexp(mag, 10 - exponent));
  if (q >= 2048.0) {
    q = 1024.0;
    ++exponent;
  }
  if (exponent > 15) return static_cast<std::uint16_t>(sign | 0x7c00);
  const auto biased = static_cast<std::uint16_t>(exponent + 15);
  return static_cast<std::uint16_t>(sign | (biased << 10) | (static_cast<std::uint16_t>(q) - 1024));
}

double from_half(std::uint16_t bits) noexcept {
  const double sign = (bits & 0x8000) ? -1.0 : 1.0;
  const int exponent = (bits >> 10) & 0x1f;
  const int mantissa = bits & 0x3ff;
  if (exponent == 0) return sign * std::ldexp(mantissa, -24);
  if (exponent == 31) {
    return mantissa ? std::numeric_limits<double>::quiet_NaN()
                    : sign * std::numeric_limits<double>::infinity();
  }
  return sign * std::ldexp(mantissa + 1024, exponent - 25);
}

std::size_t ArchitectureSpec::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.numel();
  return n;
}

ArchitectureSpec toy_architecture(std::size_t n_classes) {
  return {"toy", toy_layer_specs(n_classes)};
}

ArchitectureSpec resnet18_architecture() {
  ArchitectureSpec arch{"resnet18", {}};
  arch.layers.push_back({LayerKind::conv, {64, 3, 7, 7}, false});
  std::size_t c_in = 64;
  for (std::size_t width : {64u, 128u, 256u, 512u}) {
    for (int block = 0; block < 2; ++block) {
      arch.layers.push_back({LayerKind::cv3x3, {width, c_in, 3, 3}, true});
      arch.layers.push_back({LayerKind::cv3x3, {width, width, 3, 3}, true});
      if (block == 0 && c_in != width) arch.layers.push_back({LayerKind::pw1x1, {width, c_in, 1, 1}, true});
      c_in = width;
    }
  }
  arch.layers.push_back({LayerKind::fc, {1000, 512, 1, 1}, true});
  return arch;
}

ArchitectureSpec resnet50_architecture() {
  ArchitectureSpec arch{"resnet50", {}};
  arch.layers.push_back({LayerKind::conv, {64, 3, 7, 7}, false});
  std::size_t c_in = 64;
  const std::size_t widths[] = {64, 128, 256, 512};
  const int blocks[] = {3, 4, 6, 3};
  for (int s = 0; s < 4; ++s) {
    const std::size_t w = widths[s];
    for (int b = 0; b < blocks[s]; ++b) {
      arch.layers.push_back({LayerKind::pw1x1, {w, c_in, 1, 1}, true});
      arch.layers.push_back({LayerKind::cv3x3, {w, w, 3, 3}, true});
      arch.layers.push_back({LayerKind::pw1x1, {4 * w, w, 1, 1}, true});
      if (b == 0) arch.layers.push_back({LayerKind::pw1x1, {4 * w, c_in, 1, 1}, true});
      c_in = 4 * w;
    }
  }
  arch.layers.push_back({LayerKind::fc, {1000, 2048, 1, 1}, true});
  return arch;
}

ArchitectureSpec architecture_by_name(std::string_view name, std::size_t toy_classes) {
  if (name == "toy") return toy_architecture(toy_classes);
  if (name == "resnet18") return resnet18_architecture();
  if (name == "resnet50") return resnet50_architecture();
  throw Error(Errc::unknown_arch, "unknown architecture '" + std::string(name) + "'");
}

ArchitectureSpec parse_architecture(std::istream& in, std::string name) {
  ArchitectureSpec arch{std::move(name), {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string kind;
    if (!(fields >> kind)) continue;
    long long c_out = 0, c_in = 0, k_h = 0, k_w = 0;
    int quantize = -1;
    std::string extra;
    const auto where = " on line " + std::to_string(line_no);
    if (!(fields >> c_out >> c_in >> k_h >> k_w >> quantize) || (fields >> extra))
      throw Error(Errc::format_error, "expected 'kind c_out c_in k_h k_w quantize'" + where);
    if (c_out <= 0 || c_in <= 0 || k_h <= 0 || k_w <= 0 || (quantize != 0 && quantize != 1))
      throw Error(Errc::format_error, "non-positive shape or bad quantize flag" + where);
    LayerSpec spec;
    try {
      spec.kind = parse_layer_kind(kind);
      spec.shape = {static_cast<std::size_t>(c_out), static_cast<std::size_t>(c_in),
                    static_cast<std::size_t>(k_h), static_cast<std::size_t>(k_w)};
      spec.quantize = quantize == 1;
      spec.validate();
    } catch (const Error& e) {
      throw Error(Errc::format_error, std::string(e.what()) + where);
    }
    arch.layers.push_back(spec);
  }
  return arch;
}

void write_architecture(std::ostream& out, const ArchitectureSpec& arch) {
  out << "# " << arch.name << "\n";
  for (const auto& l : arch.layers) {
    out << layer_kind_name(l.kind) << ' ' << l.shape.c_out << ' ' << l.shape.c_in << ' ' << l.shape.k_h
        << ' ' << l.shape.k_w << ' ' << (l.quantize ? 1 : 0) << '\n';
  }
}

LayerPlan plan_layer(const ArchitectureSpec& arch, std::size_t index, const CompressionRegime& regime) {
  const LayerSpec& spec = arch.layers.at(index);
  bool first_conv = false;
  if (spec.kind != LayerKind::fc) {
    first_conv = true;
    for (std::size_t i = 0; i < index; ++i) {
      if (arch.layers[i].kind != LayerKind::fc) first_conv = false;
    }
  }
  LayerPlan plan;
  if (!spec.quantize || spec.kind == LayerKind::conv || (first_conv && regime.skip_first_conv))
    return plan;
  plan.quantized = true;
  plan.m = regime.m_for(spec.kind);
  if (spec.numel() % plan.m != 0) {
    throw Error(Errc::incompatible_regime, "layer " + std::to_string(index) + " has " +
                                               std::to_string(spec.numel()) +
                                               " weights, not a multiple of m=" + std::to_string(plan.m));
  }
  plan.n_codes = spec.numel() / plan.m;
  try {
    plan.k = clamp_k(regime.k_for(spec.kind), plan.n_codes);
  } catch (const Error& e) {
    throw Error(Errc::incompatible_regime, "layer " + std::to_string(index) + ": " + e.what());
  }
  plan.code_width = plan.k <= 256 ? 8 : 16;
  return plan;
}

SizeBreakdown compressed_size(const ArchitectureSpec& arch, const CompressionRegime& regime) {
  regime.validate();
  SizeBreakdown s;
  s.header_bytes = kFileHeaderBytes + kLayerHeaderBytes * arch.layers.size();
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const std::size_t n = arch.layers[i].numel();
    s.original_bytes += 4 * n;
    const LayerPlan p = plan_layer(arch, i, regime);
    if (p.quantized) {
      s.codebook_bytes += p.k * p.m * 2;
      s.code_bytes += p.n_codes * p.code_width / 8;
    } else {
      s.leftover_bytes += 2 * n;
    }
  }
  return s;
}

double compression_ratio(const ArchitectureSpec& arch, const CompressionRegime& regime) {
  const SizeBreakdown s = compressed_size(arch, regime);
  if (s.payload() == 0) throw Error(Errc::incompatible_regime, "architecture has no weights");
  return static_cast<double>(s.original_bytes) / static_cast<double>(s.payload());
}

std::vector<std::uint8_t> serialize(const CompressedModel& model) {
  detail::ByteWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.u16(model.version);
  w.u16(model.flags);
  const CompressionRegime& r = model.regime;
  for (std::size_t v : {r.m_cv, r.m_pw, r.m_fc, r.k_cv, r.k_pw, r.k_fc, r.d_cv, r.d_pw})
    w.u32(static_cast<std::uint32_t>(v));
  w.u8(r.skip_first_conv ? 1 : 0);
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    const bool quantized = l.mode == StorageMode::quantized;
    const std::size_t n = l.shape.numel();
    if (quantized) {
      if (l.m == 0 || n % l.m != 0 || l.codes.size() != n / l.m || l.codebook.size() != std::size_t{l.k} * l.m)
        throw Error(Errc::format_error, "layer " + std::to_string(l.id) + " payload sizes are inconsistent");
      if (l.code_width != 8 && l.code_width != 16)
        throw Error(Errc::format_error, "code width must be 8 or 16");
    } else if (l.values.size() != n) {
      throw Error(Errc::format_error, "layer " + std::to_string(l.id) + " raw size is inconsistent");
    }
    w.u16(l.id);
    w.u8(static_cast<std::uint8_t>(l.mode));
    w.u8(l.code_width);
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u8(0);
    w.u8(0);
    w.u8(0);
    for (std::size_t v : {l.shape.c_out, l.shape.c_in, l.shape.k_h, l.shape.k_w})
      w.u32(static_cast<std::uint32_t>(v));
    w.u32(l.m);
    w.u32(l.k);
    if (quantized) {
      for (std::uint16_t h : l.codebook) w.u16(h);
      for (std::uint32_t c : l.codes) {
        if (c >= l.k) throw Error(Errc::index_out_of_range, "code exceeds codebook size");
        if (l.code_width == 8) w.u8(static_cast<std::uint8_t>(c));
        else w.u16(static_cast<std::uint16_t>(c));
      }
    } else {
      for (std::uint16_t h : l.values) w.u16(h);
    }
  }
  return std::move(w.bytes());
}

CompressedModel deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader rd(bytes);
  char magic[6];
  rd.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error(Errc::format_error, "bad magic");
  CompressedModel model;
  model.version = rd.u16();
  if (model.version != CompressedModel::kVersion)
    throw Error(Errc::format_error, "unsupported version " + std::to_string(model.version));
  model.flags = rd.u16();
  CompressionRegime& r = model.regime;
  for (std::size_t* v : {&r.m_cv, &r.m_pw, &r.m_fc, &r.k_cv, &r.k_pw, &r.k_fc, &r.d_cv, &r.d_pw}) *v = rd.u32();
  r.skip_first_conv = rd.u8() != 0;
  for (int i = 0; i < 3; ++i) rd.u8();
  const std::uint32_t count = rd.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CompressedLayer l;
    l.id = rd.u16();
    const std::uint8_t mode = rd.u8();
    if (mode > 1) throw Error(Errc::format_error, "unknown storage mode");
    l.mode = static_cast<StorageMode>(mode);
    l.code_width = rd.u8();
    const std::uint8_t kind = rd.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::conv)) throw Error(Errc::format_error, "unknown layer kind");
    l.kind = static_cast<LayerKind>(kind);
    for (int j = 0; j < 3; ++j) rd.u8();
    l.shape.c_out = rd.u32();
    l.shape.c_in = rd.u32();
    l.shape.k_h = rd.u32();
    l.shape.k_w = rd.u32();
    l.m = rd.u32();
    l.k = rd.u32();
    const std::size_t n = l.shape.numel();
    if (l.mode == StorageMode::quantized) {
      if (l.m == 0 || n % l.m != 0 || (l.code_width != 8 && l.code_width != 16))
        throw Error(Errc::format_error, "bad quantized layer header");
      const std::size_t n_codes = n / l.m;
      rd.need(std::size_t{l.k} * l.m * 2 + n_codes * l.code_width / 8);
      l.codebook.resize(std::size_t{l.k} * l.m);
      for (auto& h : l.codebook) h = rd.u16();
      l.codes.resize(n_codes);
      for (auto& c : l.codes) {
        c = l.code_width == 8 ? rd.u8() : rd.u16();
        if (c >= l.k) throw Error(Errc::format_error, "code exceeds codebook size");
      }
    } else {
      rd.need(n * 2);
      l.values.resize(n);
      for (auto& h : l.values) h = rd.u16();
    }
    model.layers.push_back(std::move(l));
  }
  if (rd.remaining() != 0) throw Error(Errc::format_error, "trailing bytes after last layer");
  return model;
}

CompressedModel export_model(const ToyNet& net, const CompressionRegime& regime) {
  regime.validate();
  ArchitectureSpec arch{"toy", {}};
  for (const auto& l : net.layers) arch.layers.push_back(l.spec);
  CompressedModel model;
  model.regime = regime;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const NetLayer& layer = net.layers[i];
    const LayerPlan plan = plan_layer(arch, i, regime);
    CompressedLayer out;
    out.id = static_cast<std::uint16_t>(i);
    out.kind = layer.spec.kind;
    out.shape = layer.spec.shape;
    if (!plan.quantized) {
      out.mode = StorageMode::raw;
      for (double v : layer.effective_weights()) out.values.push_back(to_half(v));
      model.layers.push_back(std::move(out));
      continue;
    }
    const auto* q = std::get_if<QuantizedLayer>(&layer.params);
    if (q == nullptr || !q->merged())
      throw Error(Errc::unmerged_layer, "layer " + std::to_string(i) + " must be quantized and merged before export");
    const Matrix& c = q->codebook.centroids;
    if (q->m != plan.m || c.rows() != plan.k || c.cols() != plan.m)
      throw Error(Errc::incompatible_regime, "layer " + std::to_string(i) + " codebook does not match the regime");
    out.mode = StorageMode::quantized;
    out.m = static_cast<std::uint32_t>(plan.m);
    out.k = static_cast<std::uint32_t>(plan.k);
    out.code_width = static_cast<std::uint8_t>(plan.code_width);
    for (double v : c.values()) out.codebook.push_back(to_half(v));
    out.codes = q->codes.assignments;
    model.layers.push_back(std::move(out));
  }
  return model;
}

ToyNet import_model(const CompressedModel& model) {
  if (model.layers.size() != ToyNet::kLayers)
    throw Error(Errc::shape_mismatch, "toy model needs " + std::to_string(ToyNet::kLayers) + " layers");
  ToyNet net;
  net.n_classes = model.layers.back().shape.c_out;
  const auto specs = toy_layer_specs(net.n_classes);
  for (std::size_t i = 0; i < ToyNet::kLayers; ++i) {
    const CompressedLayer& l = model.layers[i];
    if (l.shape != specs[i].shape || l.kind != specs[i].kind)
      throw Error(Errc::shape_mismatch, "layer " + std::to_string(i) + " does not match the toy net");
    NetLayer& layer = net.layers[i];
    layer.spec = specs[i];
    if (l.mode == StorageMode::raw) {
      std::vector<double> values;
      values.reserve(l.values.size());
      for (std::uint16_t h : l.values) values.push_back(from_half(h));
      layer.m = l.shape.c_in * l.shape.k_h * l.shape.k_w;
      layer.params = WeightTensor(l.shape, std::move(values));
      continue;
    }
    QuantizedLayer q;
    q.spec = specs[i];
    q.m = l.m;
    q.codebook.centroids = Matrix(l.k, l.m);
    for (std::size_t j = 0; j < l.codebook.size(); ++j) q.codebook.centroids.data()[j] = from_half(l.codebook[j]);
    q.codes.assignments = l.codes;
    q.validate();
    layer.m = l.m;
    layer.params = std::move(q);
  }
  return net;
}

void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::invalid_argument, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::invalid_argument, "failed writing '" + path + "'");
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_checkpoint, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace lrvq
