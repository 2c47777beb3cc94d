#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "lrvq/checkpoint.hpp"
#include "lrvq/error.hpp"
#include "lrvq/modelfmt.hpp"
#include "lrvq/trainer.hpp"

using namespace lrvq;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an lrvq::Error";
  return Errc::invalid_argument;
}

constexpr double kMiB = 1024.0 * 1024.0;

CompressedModel random_model(std::uint64_t seed) {
  Rng rng(seed);
  CompressedModel m;
  m.regime = toy_regime(3, 2);
  m.flags = 7;
  for (std::uint16_t id = 0; id < 5; ++id) {
    CompressedLayer l;
    l.id = id;
    l.kind = id % 2 ? LayerKind::pw1x1 : LayerKind::cv3x3;
    l.shape = id % 2 ? TensorShape{8, 16, 1, 1} : TensorShape{4, 8, 3, 3};
    if (id == 4) {
      l.mode = StorageMode::raw;
      for (std::size_t i = 0; i < l.shape.numel(); ++i) l.values.push_back(static_cast<std::uint16_t>(rng.next_u32()));
    } else {
      l.mode = StorageMode::quantized;
      l.m = id % 2 ? 4 : 9;
      l.k = id == 2 ? 300 : 7;
      l.code_width = l.k > 256 ? 16 : 8;
      for (std::size_t i = 0; i < std::size_t{l.k} * l.m; ++i)
        l.codebook.push_back(static_cast<std::uint16_t>(rng.next_u32()));
      for (std::size_t i = 0; i < l.shape.numel() / l.m; ++i)
        l.codes.push_back(static_cast<std::uint32_t>(rng.uniform_index(l.k)));
    }
    m.layers.push_back(l);
  }
  return m;
}

ToyNet merged_toy(std::uint64_t seed, std::size_t d_cv = 3) {
  Rng rng(seed);
  const CompressionRegime regime = toy_regime(d_cv, 4);
  const ToyNet lrr = make_lowrank_net(rng, 4, regime);
  Rng km = rng.split(9);
  return merge_net(quantize_net(lrr, km, regime));
}

}  // namespace

struct HalfCase {
  double value;
  std::uint16_t bits;
};

// Expected bits from an independent float64 -> float16 conversion.
TEST(Half, MatchesReferenceConversion) {
  const HalfCase cases[] = {
      {1.0, 0x3c00},        {-2.0, 0xc000},       {65504.0, 0x7bff},    {65519.99, 0x7bff},
      {65520.0, 0x7c00},    {1000000.0, 0x7c00},  {5.960464477539063e-08, 0x0001},
      {2.9802322387695312e-08, 0x0000},           {8.940696716308594e-08, 0x0002},
      {6.103515625e-05, 0x0400},                  {6.1005353927612305e-05, 0x0400},
      {1.00048828125, 0x3c00},                    {1.00146484375, 0x3c02},
      {0.1, 0x2e66},        {-0.3333333333333333, 0xb555},              {3.14159265358979, 0x4248},
      {6.1e-05, 0x03ff},    {-0.0, 0x8000},       {1e-09, 0x0000},      {8.940697312355042e-08, 0x0002},
  };
  for (const auto& c : cases) EXPECT_EQ(to_half(c.value), c.bits) << c.value;
}

TEST(Half, EveryFiniteHalfRoundTrips) {
  for (std::uint32_t b = 0; b < 0x10000; ++b) {
    const auto bits = static_cast<std::uint16_t>(b);
    const double v = from_half(bits);
    if (std::isnan(v)) {
      EXPECT_TRUE(std::isnan(from_half(to_half(v))));
      continue;
    }
    ASSERT_EQ(to_half(v), bits) << b;
  }
}

TEST(Half, RelativeErrorBoundForNormalValues) {
  Rng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const double v = std::ldexp(1.0 + rng.uniform(), static_cast<int>(rng.uniform_index(30)) - 14) *
                     (rng.uniform() < 0.5 ? -1 : 1);
    if (std::fabs(v) > 65504.0) continue;
    ASSERT_LE(std::fabs(from_half(to_half(v)) - v), std::ldexp(std::fabs(v), -11)) << v;
  }
}

TEST(Half, SpecialValues) {
  EXPECT_EQ(to_half(std::numeric_limits<double>::infinity()), 0x7c00);
  EXPECT_EQ(to_half(-std::numeric_limits<double>::infinity()), 0xfc00);
  EXPECT_TRUE(std::isnan(from_half(to_half(std::nan("")))));
  EXPECT_TRUE(std::isinf(from_half(0x7c00)));
}

TEST(Architecture, ToyTable) {
  const ArchitectureSpec a = toy_architecture(10);
  ASSERT_EQ(a.layers.size(), 4u);
  EXPECT_EQ(a.layers[0].shape, (TensorShape{8, 1, 3, 3}));
  EXPECT_EQ(a.layers[1].shape, (TensorShape{8, 8, 1, 1}));
  EXPECT_EQ(a.layers[2].shape, (TensorShape{16, 8, 3, 3}));
  EXPECT_EQ(a.layers[3].shape, (TensorShape{10, 16, 1, 1}));
  EXPECT_FALSE(a.layers[3].quantize);
}

TEST(Architecture, ResNetParameterCounts) {
  // conv + fc weights; 11.68M * 4 B matches the 44.59 MB fp32 baseline
  EXPECT_EQ(resnet18_architecture().parameter_count(), 11678912u);
  EXPECT_EQ(resnet50_architecture().parameter_count(), 25502912u);
  EXPECT_NEAR(4.0 * 11678912 / kMiB, 44.59, 0.05);
}

TEST(Architecture, ByName) {
  EXPECT_EQ(architecture_by_name("resnet18"), resnet18_architecture());
  EXPECT_EQ(architecture_by_name("toy", 6), toy_architecture(6));
  EXPECT_EQ(code_of([] { architecture_by_name("vgg16"); }), Errc::unknown_arch);
}

TEST(Architecture, TextTableRoundTrip) {
  for (const auto& arch : {toy_architecture(4), resnet18_architecture(), resnet50_architecture()}) {
    std::stringstream ss;
    write_architecture(ss, arch);
    EXPECT_EQ(parse_architecture(ss, arch.name), arch);
  }
}

TEST(Architecture, ParseErrorsNameTheLine) {
  std::istringstream bad("cv 8 1 3 3 1\n\n# comment\npw 8 8 3 3 1\n");
  try {
    parse_architecture(bad, "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::format_error);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
  std::istringstream short_line("cv 8 1 3\n");
  EXPECT_EQ(code_of([&] { parse_architecture(short_line, "x"); }), Errc::format_error);
  std::istringstream bad_kind("dw 8 1 3 3 1\n");
  EXPECT_EQ(code_of([&] { parse_architecture(bad_kind, "x"); }), Errc::format_error);
  std::istringstream bad_flag("cv 8 1 3 3 2\n");
  EXPECT_EQ(code_of([&] { parse_architecture(bad_flag, "x"); }), Errc::format_error);
}

TEST(CompressedSize, SingleConvHandArithmetic) {
  const ArchitectureSpec arch{"one", {{LayerKind::cv3x3, {64, 64, 3, 3}, true}}};
  CompressionRegime r;
  r.skip_first_conv = false;
  const SizeBreakdown s = compressed_size(arch, r);
  EXPECT_EQ(s.codebook_bytes, 4608u);
  EXPECT_EQ(s.code_bytes, 4096u);
  EXPECT_EQ(s.payload(), 8704u);
  EXPECT_EQ(s.leftover_bytes, 0u);
  EXPECT_EQ(s.total(), 8704u + kFileHeaderBytes + kLayerHeaderBytes);
  // fp16 dense storage of the same layer
  EXPECT_EQ(2 * arch.layers[0].numel(), 73728u);
}

TEST(CompressedSize, NothingQuantizedIsTwoX) {
  ArchitectureSpec arch = resnet18_architecture();
  for (auto& l : arch.layers) l.quantize = false;
  EXPECT_DOUBLE_EQ(compression_ratio(arch, resnet_regime("resnet18", RegimePreset::small_blocks)), 2.0);
}

TEST(CompressedSize, SkipFirstConvLeavesItInFp16) {
  const ArchitectureSpec arch{"two", {{LayerKind::cv3x3, {8, 4, 3, 3}, true}, {LayerKind::cv3x3, {8, 8, 3, 3}, true}}};
  CompressionRegime r;
  r.skip_first_conv = true;
  EXPECT_FALSE(plan_layer(arch, 0, r).quantized);
  EXPECT_TRUE(plan_layer(arch, 1, r).quantized);
  EXPECT_EQ(compressed_size(arch, r).leftover_bytes, 2u * 288u);
}

TEST(CompressedSize, SixteenBitCodesAboveK256) {
  const ArchitectureSpec arch{"fc", {{LayerKind::fc, {1000, 512, 1, 1}, true}}};
  CompressionRegime r;
  r.skip_first_conv = false;
  const LayerPlan p = plan_layer(arch, 0, r);
  EXPECT_EQ(p.k, 2048u);
  EXPECT_EQ(p.code_width, 16u);
  EXPECT_EQ(compressed_size(arch, r).code_bytes, 128000u * 2u);
}

TEST(CompressedSize, IncompatibleRegime) {
  const ArchitectureSpec arch{"odd", {{LayerKind::pw1x1, {3, 3, 1, 1}, true}}};
  CompressionRegime r;
  r.skip_first_conv = false;
  EXPECT_EQ(code_of([&] { compressed_size(arch, r); }), Errc::incompatible_regime);
  CompressionRegime bad;
  bad.d_cv = 10;
  EXPECT_EQ(code_of([&] { compressed_size(resnet18_architecture(), bad); }), Errc::incompatible_regime);
}

TEST(CompressedSize, CodeBytesMonotoneInMProperty) {
  const ArchitectureSpec arch = resnet50_architecture();
  for (std::size_t m_pw : {1u, 2u, 4u, 8u, 16u}) {
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (std::size_t m_cv : {1u, 3u, 9u, 18u, 36u}) {
      CompressionRegime r = resnet_regime("resnet50", RegimePreset::small_blocks);
      r.m_cv = r.d_cv = m_cv;
      r.m_pw = r.d_pw = m_pw;
      const std::size_t code = compressed_size(arch, r).code_bytes;
      EXPECT_LE(code, prev);
      prev = code;
    }
  }
}

struct TableCase {
  const char* arch;
  RegimePreset preset;
  double mib;
  double ratio;
};

class PublishedSizes : public ::testing::TestWithParam<TableCase> {};

TEST_P(PublishedSizes, WithinTenPercent) {
  const auto c = GetParam();
  const ArchitectureSpec arch = architecture_by_name(c.arch);
  const CompressionRegime r = resnet_regime(c.arch, c.preset);
  const double mib = static_cast<double>(compressed_size(arch, r).payload()) / kMiB;
  EXPECT_NEAR(mib / c.mib, 1.0, 0.10) << mib;
  EXPECT_NEAR(compression_ratio(arch, r) / c.ratio, 1.0, 0.10);
}

INSTANTIATE_TEST_SUITE_P(Table, PublishedSizes,
                         ::testing::Values(TableCase{"resnet18", RegimePreset::small_blocks, 1.54, 29},
                                           TableCase{"resnet18", RegimePreset::large_blocks, 1.03, 43},
                                           TableCase{"resnet50", RegimePreset::small_blocks, 5.09, 19},
                                           TableCase{"resnet50", RegimePreset::large_blocks, 3.19, 31}));

TEST(Serialize, EmptyModelIsHeaderOnly) {
  CompressedModel m;
  const auto bytes = serialize(m);
  EXPECT_EQ(bytes.size(), kFileHeaderBytes);
  EXPECT_EQ(std::memcmp(bytes.data(), "LR2VQ\0", 6), 0);
  EXPECT_EQ(deserialize(bytes), m);
}

TEST(Serialize, SingleLayerLength) {
  CompressedModel m;
  CompressedLayer l;
  l.mode = StorageMode::quantized;
  l.kind = LayerKind::cv3x3;
  l.shape = {64, 64, 3, 3};
  l.m = 9;
  l.k = 256;
  l.code_width = 8;
  l.codebook.assign(256 * 9, 0x3c00);
  l.codes.assign(4096, 255);
  m.layers.push_back(l);
  EXPECT_EQ(serialize(m).size(), kFileHeaderBytes + kLayerHeaderBytes + 4608 + 4096);
}

TEST(Serialize, RoundTripIsBitExactProperty) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const CompressedModel m = random_model(s);
    const auto bytes = serialize(m);
    const CompressedModel back = deserialize(bytes);
    EXPECT_EQ(back, m);
    EXPECT_EQ(serialize(back), bytes);
  }
}

TEST(Serialize, LittleEndianHeaderFields) {
  CompressedModel m;
  m.regime.k_fc = 0x01020304;
  const auto bytes = serialize(m);
  EXPECT_EQ(bytes[6], 1);  // version low byte
  EXPECT_EQ(bytes[7], 0);
  // k_fc is the sixth u32 after offset 10
  EXPECT_EQ(bytes[30], 0x04);
  EXPECT_EQ(bytes[33], 0x01);
}

TEST(Deserialize, RejectsCorruptStreams) {
  const auto good = serialize(random_model(1));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of([&] { deserialize(bad_magic); }), Errc::format_error);
  auto bad_version = good;
  bad_version[6] = 9;
  EXPECT_EQ(code_of([&] { deserialize(bad_version); }), Errc::format_error);
  const std::vector<std::uint8_t> truncated(good.begin(), good.end() - 1);
  EXPECT_EQ(code_of([&] { deserialize(truncated); }), Errc::format_error);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(code_of([&] { deserialize(trailing); }), Errc::format_error);
}

TEST(Export, RequiresMergedLayers) {
  Rng rng(1);
  const CompressionRegime regime = toy_regime(3, 4);
  const ToyNet lrr = make_lowrank_net(rng, 4, regime);
  EXPECT_EQ(code_of([&] { export_model(lrr, regime); }), Errc::unmerged_layer);
  const ToyNet q = quantize_net(lrr, rng, regime);
  EXPECT_EQ(code_of([&] { export_model(q, regime); }), Errc::unmerged_layer);
  EXPECT_NO_THROW(export_model(merge_net(q), regime));
}

TEST(Export, LengthMatchesSizeAccountingForToy) {
  for (std::size_t d = 1; d <= 9; ++d) {
    const ToyNet net = merged_toy(d, d);
    const CompressionRegime regime = toy_regime(d, 4);
    const auto bytes = serialize(export_model(net, regime));
    EXPECT_EQ(bytes.size(), compressed_size(toy_architecture(4), regime).total()) << d;
  }
}

TEST(Export, ImportRestoresFp16Weights) {
  const ToyNet net = merged_toy(4);
  const CompressionRegime regime = toy_regime(3, 4);
  const ToyNet back = import_model(deserialize(serialize(export_model(net, regime))));
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
    const auto a = net.layers[l].effective_weights();
    const auto b = back.layers[l].effective_weights();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], from_half(to_half(a[i])));
  }
  EXPECT_EQ(back.layers[0].mode(), ParamMode::quantized);
  EXPECT_EQ(back.layers[3].mode(), ParamMode::dense);
}

TEST(Export, ExportIsStable) {
  const ToyNet net = merged_toy(5);
  const CompressionRegime regime = toy_regime(3, 4);
  const CompressedModel m = export_model(net, regime);
  EXPECT_EQ(export_model(import_model(m), regime), m);
}

TEST(Checkpoint, RoundTripEveryMode) {
  Rng rng(2);
  const CompressionRegime regime = toy_regime(5, 2);
  const ToyNet dense = make_dense_net(rng, 3);
  const ToyNet lrr = make_lowrank_net(rng, 3, regime);
  const ToyNet q = quantize_net(lrr, rng, regime);
  for (const ToyNet* net : {&dense, &lrr, &q}) {
    Checkpoint c{*net, {{"stage", "x"}, {"d_cv", "5"}}};
    const auto bytes = encode_checkpoint(c);
    const Checkpoint back = decode_checkpoint(bytes);
    EXPECT_EQ(back.metadata, c.metadata);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
      EXPECT_EQ(back.net.layers[l].mode(), net->layers[l].mode());
      EXPECT_EQ(back.net.layers[l].effective_weights(), net->layers[l].effective_weights());
    }
  }
}

TEST(Checkpoint, MissingAndCorruptFiles) {
  EXPECT_EQ(code_of([] { load_checkpoint("/nonexistent/ckpt.bin"); }), Errc::missing_checkpoint);
  std::vector<std::uint8_t> junk{'n', 'o', 'p', 'e'};
  EXPECT_EQ(code_of([&] { decode_checkpoint(junk); }), Errc::format_error);
  Rng rng(1);
  auto bytes = encode_checkpoint({make_dense_net(rng, 2), {}});
  bytes.pop_back();
  EXPECT_EQ(code_of([&] { decode_checkpoint(bytes); }), Errc::format_error);
}
