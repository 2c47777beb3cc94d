#include "lrvq/checkpoint.hpp"

#include <cstring>

#include "bytes.hpp"
#include "lrvq/error.hpp"
#include "lrvq/modelfmt.hpp"

namespace lrvq {

namespace {

constexpr char kMagic[8] = {'L', 'R', 'V', 'Q', 'C', 'K', 'P', 'T'};
constexpr std::uint16_t kVersion = 1;

void put_matrix(detail::ByteWriter& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (double v : m.values()) w.f64(v);
}

Matrix get_matrix(detail::ByteReader& r) {
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  r.need(rows * cols * 8);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) m.data()[i] = r.f64();
  return m;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.net.n_classes));
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  for (const NetLayer& layer : ckpt.net.layers) {
    w.u8(static_cast<std::uint8_t>(layer.mode()));
    w.u32(static_cast<std::uint32_t>(layer.m));
    if (const auto* d = std::get_if<WeightTensor>(&layer.params)) {
      w.u32(static_cast<std::uint32_t>(d->data.size()));
      for (double v : d->data) w.f64(v);
    } else if (const auto* p = std::get_if<LowRankPair>(&layer.params)) {
      put_matrix(w, p->a);
      put_matrix(w, p->b);
    } else {
      const auto& q = std::get<QuantizedLayer>(layer.params);
      put_matrix(w, q.codebook.centroids);
      w.u32(static_cast<std::uint32_t>(q.codes.assignments.size()));
      for (std::uint32_t c : q.codes.assignments) w.u32(c);
      w.u8(q.transform ? 1 : 0);
      if (q.transform) put_matrix(w, *q.transform);
    }
  }
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error(Errc::format_error, "not a checkpoint");
  if (r.u16() != kVersion) throw Error(Errc::format_error, "unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.net.n_classes = r.u32();
  if (ckpt.net.n_classes == 0) throw Error(Errc::format_error, "checkpoint has no classes");
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ckpt.metadata[k] = r.str();
  }
  const auto specs = toy_layer_specs(ckpt.net.n_classes);
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
    NetLayer& layer = ckpt.net.layers[l];
    layer.spec = specs[l];
    const std::uint8_t mode = r.u8();
    layer.m = r.u32();
    if (layer.m == 0 || specs[l].numel() % layer.m != 0) throw Error(Errc::format_error, "bad subvector size");
    try {
      if (mode == static_cast<std::uint8_t>(ParamMode::dense)) {
        const std::size_t n = r.u32();
        if (n != specs[l].numel()) throw Error(Errc::format_error, "dense layer size mismatch");
        r.need(n * 8);
        std::vector<double> data(n);
        for (double& v : data) v = r.f64();
        layer.params = WeightTensor(specs[l].shape, std::move(data));
      } else if (mode == static_cast<std::uint8_t>(ParamMode::lowrank)) {
        LowRankPair p;
        p.a = get_matrix(r);
        p.b = get_matrix(r);
        p.m = layer.m;
        p.d_tilde = p.a.cols();
        p.validate();
        if (p.a.rows() * p.m != specs[l].numel()) throw Error(Errc::format_error, "low-rank layer size mismatch");
        layer.params = std::move(p);
      } else if (mode == static_cast<std::uint8_t>(ParamMode::quantized)) {
        QuantizedLayer q;
        q.spec = specs[l];
        q.m = layer.m;
        q.codebook.centroids = get_matrix(r);
        const std::size_t n = r.u32();
        r.need(n * 4);
        q.codes.assignments.resize(n);
        for (auto& c : q.codes.assignments) c = r.u32();
        if (r.u8() != 0) q.transform = get_matrix(r);
        q.validate();
        layer.params = std::move(q);
      } else {
        throw Error(Errc::format_error, "unknown layer mode");
      }
    } catch (const Error& e) {
      if (e.code() == Errc::format_error) throw;
      throw Error(Errc::format_error, "layer " + std::to_string(l) + ": " + e.what());
    }
  }
  if (r.remaining() != 0) throw Error(Errc::format_error, "trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  write_bytes(path, bytes);
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_bytes(path)); }

}  // namespace lrvq
