#include "lrvq/dataset.hpp"

#include <cmath>

#include "lrvq/error.hpp"
#include "lrvq/rng.hpp"

namespace lrvq {

namespace {

// Periodic texture: a random motif x motif tile repeated over the image,
// scaled to the requested RMS.
void fill_template(Rng& rng, std::size_t motif, double contrast, std::span<double> out) {
  std::vector<double> tile(motif * motif);
  for (double& v : tile) v = rng.normal();
  double mean = 0.0;
  for (double v : tile) mean += v;
  mean /= static_cast<double>(tile.size());
  double rms = 0.0;
  for (double& v : tile) {
    v -= mean;
    rms += v * v;
  }
  rms = std::sqrt(rms / static_cast<double>(tile.size()));
  for (std::size_t y = 0; y < kImageSide; ++y)
    for (std::size_t x = 0; x < kImageSide; ++x)
      out[y * kImageSide + x] = tile[(y % motif) * motif + (x % motif)] * (contrast / rms);
}

void fill_split(Rng& rng, const Matrix& templates, double noise, Matrix& x,
                std::vector<std::uint32_t>& y) {
  const std::size_t n_classes = templates.rows();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto label = static_cast<std::uint32_t>(i % n_classes);
    y[i] = label;
    auto row = x.row(i);
    const auto t = templates.row(label);
    for (std::size_t p = 0; p < kImagePixels; ++p) row[p] = t[p] + noise * rng.normal();
  }
}

}  // namespace

SyntheticDataset SyntheticDataset::generate(const DatasetConfig& cfg) {
  if (cfg.n_classes < 2) throw Error(Errc::invalid_argument, "need at least two classes");
  if (cfg.motif < 1 || cfg.motif > kImageSide)
    throw Error(Errc::invalid_argument, "motif size must lie in [1, 16]");
  if (!(cfg.contrast > 0.0) || !(cfg.noise >= 0.0))
    throw Error(Errc::invalid_argument, "contrast must be positive and noise non-negative");
  SyntheticDataset ds;
  ds.config = cfg;
  Rng root(cfg.seed);
  Rng template_rng = root.split(0);
  ds.templates = Matrix(cfg.n_classes, kImagePixels);
  for (std::size_t c = 0; c < cfg.n_classes; ++c) fill_template(template_rng, cfg.motif, cfg.contrast, ds.templates.row(c));

  ds.train_x = Matrix(cfg.n_train, kImagePixels);
  ds.train_y.resize(cfg.n_train);
  ds.test_x = Matrix(cfg.n_test, kImagePixels);
  ds.test_y.resize(cfg.n_test);
  Rng train_rng = root.split(1);
  Rng test_rng = root.split(2);
  fill_split(train_rng, ds.templates, cfg.noise, ds.train_x, ds.train_y);
  fill_split(test_rng, ds.templates, cfg.noise, ds.test_x, ds.test_y);
  return ds;
}

}  // namespace lrvq
