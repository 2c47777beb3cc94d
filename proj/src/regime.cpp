#include "lrvq/regime.hpp"

#include <string>

#include "lrvq/error.hpp"

namespace lrvq {

std::size_t CompressionRegime::m_for(LayerKind kind) const {
  switch (kind) {
    case LayerKind::cv3x3: return m_cv;
    case LayerKind::pw1x1: return m_pw;
    case LayerKind::fc: return m_fc;
    case LayerKind::conv: break;
  }
  throw Error(Errc::incompatible_regime, "regime has no subvector size for generic convolutions");
}

std::size_t CompressionRegime::k_for(LayerKind kind) const {
  switch (kind) {
    case LayerKind::cv3x3: return k_cv;
    case LayerKind::pw1x1: return k_pw;
    case LayerKind::fc: return k_fc;
    case LayerKind::conv: break;
  }
  throw Error(Errc::incompatible_regime, "regime has no codebook size for generic convolutions");
}

std::size_t CompressionRegime::d_for(LayerKind kind) const {
  switch (kind) {
    case LayerKind::cv3x3: return d_cv;
    case LayerKind::pw1x1: return d_pw;
    case LayerKind::fc: return m_fc;
    case LayerKind::conv: break;
  }
  throw Error(Errc::incompatible_regime, "regime has no clustering dimensionality for generic convolutions");
}

void CompressionRegime::validate() const {
  if (m_cv == 0 || m_pw == 0 || m_fc == 0 || k_cv == 0 || k_pw == 0 || k_fc == 0)
    throw Error(Errc::incompatible_regime, "subvector and codebook sizes must be positive");
  if (d_cv < 1 || d_cv > m_cv) throw Error(Errc::incompatible_regime, "d_cv outside [1, m_cv]");
  if (d_pw < 1 || d_pw > m_pw) throw Error(Errc::incompatible_regime, "d_pw outside [1, m_pw]");
}

CompressionRegime resnet_regime(std::string_view arch, RegimePreset preset) {
  CompressionRegime r;
  r.k_cv = 256;
  r.k_pw = 256;
  r.m_fc = 4;
  r.skip_first_conv = true;
  const bool large = preset == RegimePreset::large_blocks;
  if (arch == "resnet18") {
    r.m_cv = large ? 18 : 9;
    r.m_pw = 4;
    r.k_fc = 2048;
  } else if (arch == "resnet50") {
    r.m_cv = large ? 18 : 9;
    r.m_pw = large ? 8 : 4;
    r.k_fc = 1024;
  } else {
    throw Error(Errc::unknown_arch, "no regime preset for '" + std::string(arch) + "'");
  }
  r.d_cv = r.m_cv;
  r.d_pw = r.m_pw;
  return r;
}

CompressionRegime toy_regime(std::size_t d_cv, std::size_t d_pw) {
  CompressionRegime r;
  r.m_cv = 9;
  r.m_pw = 4;
  r.m_fc = 4;
  r.k_cv = 256;
  r.k_pw = 256;
  r.k_fc = 256;
  r.d_cv = d_cv;
  r.d_pw = d_pw;
  r.skip_first_conv = false;
  r.validate();
  return r;
}

}  // namespace lrvq
