#include "lrvq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "lrvq/error.hpp"
#include "lrvq/parallel.hpp"

namespace lrvq {

namespace {

constexpr std::size_t kSide = kImageSide;
constexpr std::size_t kHw = kImagePixels;
constexpr std::size_t kC1 = 8;
constexpr std::size_t kC2 = 8;
constexpr std::size_t kC3 = 16;
constexpr std::size_t kPatch1 = 9;        // 1 * 3 * 3
constexpr std::size_t kPatch3 = kC2 * 9;  // 8 * 3 * 3
constexpr std::size_t kSampleChunk = 8;

struct Weights {
  std::array<std::vector<double>, ToyNet::kLayers> w;
  std::size_t n_classes = 0;
};

Weights effective(const ToyNet& net) {
  Weights out;
  out.n_classes = net.n_classes;
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) out.w[l] = net.layers[l].effective_weights();
  return out;
}

void check_architecture(const ToyNet& net) {
  const auto expected = toy_layer_specs(net.n_classes);
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
    if (net.layers[l].spec.shape != expected[l].shape)
      throw Error(Errc::shape_mismatch, "layer " + std::to_string(l) + " does not match the toy net");
  }
}

// 3x3, pad 1: cols[(ci*9 + kh*3 + kw) * 256 + y*16 + x]
void im2col3(const double* in, std::size_t channels, double* cols) {
  for (std::size_t ci = 0; ci < channels; ++ci) {
    for (std::size_t kh = 0; kh < 3; ++kh) {
      for (std::size_t kw = 0; kw < 3; ++kw) {
        double* dst = cols + ((ci * 3 + kh) * 3 + kw) * kHw;
        for (std::size_t y = 0; y < kSide; ++y) {
          const long sy = static_cast<long>(y + kh) - 1;
          for (std::size_t x = 0; x < kSide; ++x) {
            const long sx = static_cast<long>(x + kw) - 1;
            const bool inside = sy >= 0 && sy < static_cast<long>(kSide) && sx >= 0 &&
                                sx < static_cast<long>(kSide);
            dst[y * kSide + x] =
                inside ? in[ci * kHw + static_cast<std::size_t>(sy) * kSide + static_cast<std::size_t>(sx)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im3(const double* cols, std::size_t channels, double* out) {
  std::fill(out, out + channels * kHw, 0.0);
  for (std::size_t ci = 0; ci < channels; ++ci) {
    for (std::size_t kh = 0; kh < 3; ++kh) {
      for (std::size_t kw = 0; kw < 3; ++kw) {
        const double* src = cols + ((ci * 3 + kh) * 3 + kw) * kHw;
        for (std::size_t y = 0; y < kSide; ++y) {
          const long sy = static_cast<long>(y + kh) - 1;
          if (sy < 0 || sy >= static_cast<long>(kSide)) continue;
          for (std::size_t x = 0; x < kSide; ++x) {
            const long sx = static_cast<long>(x + kw) - 1;
            if (sx < 0 || sx >= static_cast<long>(kSide)) continue;
            out[ci * kHw + static_cast<std::size_t>(sy) * kSide + static_cast<std::size_t>(sx)] +=
                src[y * kSide + x];
          }
        }
      }
    }
  }
}

// out(rows x 256) = w(rows x k) * in(k x 256)
void conv_forward(const double* w, std::size_t rows, std::size_t k, const double* in, double* out) {
  std::fill(out, out + rows * kHw, 0.0);
  for (std::size_t o = 0; o < rows; ++o) {
    double* dst = out + o * kHw;
    for (std::size_t i = 0; i < k; ++i) {
      const double wi = w[o * k + i];
      const double* src = in + i * kHw;
      for (std::size_t n = 0; n < kHw; ++n) dst[n] += wi * src[n];
    }
  }
}

// grad_w(rows x k) += dz(rows x 256) * in(k x 256)^T
void conv_weight_grad(const double* dz, std::size_t rows, std::size_t k, const double* in,
                      double* grad_w) {
  for (std::size_t o = 0; o < rows; ++o) {
    const double* d = dz + o * kHw;
    for (std::size_t i = 0; i < k; ++i) {
      const double* src = in + i * kHw;
      // fixed lane split keeps the sum order independent of vector width
      double lanes[8] = {};
      for (std::size_t n = 0; n < kHw; n += 8) {
        for (std::size_t j = 0; j < 8; ++j) lanes[j] += d[n + j] * src[n + j];
      }
      grad_w[o * k + i] += ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
                           ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    }
  }
}

// din(k x 256) = w(rows x k)^T * dz(rows x 256)
void conv_input_grad(const double* w, std::size_t rows, std::size_t k, const double* dz, double* din) {
  std::fill(din, din + k * kHw, 0.0);
  for (std::size_t o = 0; o < rows; ++o) {
    const double* d = dz + o * kHw;
    for (std::size_t i = 0; i < k; ++i) {
      const double wi = w[o * k + i];
      double* dst = din + i * kHw;
      for (std::size_t n = 0; n < kHw; ++n) dst[n] += wi * d[n];
    }
  }
}

struct Workspace {
  std::vector<double> cols1 = std::vector<double>(kPatch1 * kHw);
  std::vector<double> z1 = std::vector<double>(kC1 * kHw);
  std::vector<double> a1 = std::vector<double>(kC1 * kHw);
  std::vector<double> z2 = std::vector<double>(kC2 * kHw);
  std::vector<double> a2 = std::vector<double>(kC2 * kHw);
  std::vector<double> cols3 = std::vector<double>(kPatch3 * kHw);
  std::vector<double> z3 = std::vector<double>(kC3 * kHw);
  std::vector<double> pooled = std::vector<double>(kC3);
  std::vector<double> logits;
  // backward scratch
  std::vector<double> dz3 = std::vector<double>(kC3 * kHw);
  std::vector<double> dcols3 = std::vector<double>(kPatch3 * kHw);
  std::vector<double> da2 = std::vector<double>(kC2 * kHw);
  std::vector<double> da1 = std::vector<double>(kC1 * kHw);
};

void relu(const std::vector<double>& z, std::vector<double>& a) {
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void sample_forward(const Weights& w, const double* image, Workspace& ws) {
  im2col3(image, 1, ws.cols1.data());
  conv_forward(w.w[0].data(), kC1, kPatch1, ws.cols1.data(), ws.z1.data());
  relu(ws.z1, ws.a1);
  conv_forward(w.w[1].data(), kC2, kC1, ws.a1.data(), ws.z2.data());
  relu(ws.z2, ws.a2);
  im2col3(ws.a2.data(), kC2, ws.cols3.data());
  conv_forward(w.w[2].data(), kC3, kPatch3, ws.cols3.data(), ws.z3.data());
  for (std::size_t c = 0; c < kC3; ++c) {
    double acc = 0.0;
    for (std::size_t n = 0; n < kHw; ++n) acc += std::max(ws.z3[c * kHw + n], 0.0);
    ws.pooled[c] = acc / static_cast<double>(kHw);
  }
  ws.logits.assign(w.n_classes, 0.0);
  const auto& fc = w.w[3];
  for (std::size_t j = 0; j < w.n_classes; ++j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < kC3; ++c) acc += fc[j * kC3 + c] * ws.pooled[c];
    ws.logits[j] = acc;
  }
}

double cross_entropy(const std::vector<double>& logits, std::uint32_t label,
                     std::vector<double>* probs) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  if (probs) {
    probs->resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) (*probs)[j] = std::exp(logits[j] - lse);
  }
  return lse - logits[label];
}

void sample_backward(const Weights& w, Workspace& ws, std::uint32_t label, double scale,
                     std::array<std::vector<double>, ToyNet::kLayers>& grad) {
  std::vector<double> g;
  cross_entropy(ws.logits, label, &g);
  g[label] -= 1.0;
  for (double& v : g) v *= scale;

  const auto& fc = w.w[3];
  std::array<double, kC3> dpool{};
  for (std::size_t j = 0; j < w.n_classes; ++j) {
    for (std::size_t c = 0; c < kC3; ++c) {
      grad[3][j * kC3 + c] += g[j] * ws.pooled[c];
      dpool[c] += fc[j * kC3 + c] * g[j];
    }
  }
  for (std::size_t c = 0; c < kC3; ++c) {
    const double v = dpool[c] / static_cast<double>(kHw);
    for (std::size_t n = 0; n < kHw; ++n) ws.dz3[c * kHw + n] = ws.z3[c * kHw + n] > 0.0 ? v : 0.0;
  }
  conv_weight_grad(ws.dz3.data(), kC3, kPatch3, ws.cols3.data(), grad[2].data());
  conv_input_grad(w.w[2].data(), kC3, kPatch3, ws.dz3.data(), ws.dcols3.data());
  col2im3(ws.dcols3.data(), kC2, ws.da2.data());
  for (std::size_t i = 0; i < ws.da2.size(); ++i)
    if (ws.z2[i] <= 0.0) ws.da2[i] = 0.0;
  conv_weight_grad(ws.da2.data(), kC2, kC1, ws.a1.data(), grad[1].data());
  conv_input_grad(w.w[1].data(), kC2, kC1, ws.da2.data(), ws.da1.data());
  for (std::size_t i = 0; i < ws.da1.size(); ++i)
    if (ws.z1[i] <= 0.0) ws.da1[i] = 0.0;
  conv_weight_grad(ws.da1.data(), kC1, kPatch1, ws.cols1.data(), grad[0].data());
}

void check_batch(const ToyNet& net, const Matrix& images, std::span<const std::uint32_t> labels) {
  check_architecture(net);
  if (images.cols() != kHw) throw Error(Errc::shape_mismatch, "images must have 256 pixels");
  if (labels.size() != images.rows()) throw Error(Errc::shape_mismatch, "label count differs from batch");
  for (auto y : labels)
    if (y >= net.n_classes) throw Error(Errc::shape_mismatch, "label exceeds class count");
}

std::size_t chunks_for(std::size_t n) { return (n + kSampleChunk - 1) / kSampleChunk; }

// Maps d(loss)/d(effective weights) onto the layer's own parameters.
void layer_param_grads(const NetLayer& layer, const std::vector<double>& gw,
                       std::vector<std::vector<double>>& out) {
  switch (layer.mode()) {
    case ParamMode::dense:
      out.push_back(gw);
      return;
    case ParamMode::lowrank: {
      const auto& p = std::get<LowRankPair>(layer.params);
      const Matrix g(p.a.rows(), p.m, gw);
      out.push_back(matmul_nt(g, p.b).values());
      out.push_back(matmul_tn(p.a, g).values());
      return;
    }
    case ParamMode::quantized: {
      const auto& q = std::get<QuantizedLayer>(layer.params);
      const Matrix g(q.n_subvectors(), q.m, gw);
      const Matrix g_sub = q.merged() ? g : matmul_nt(g, *q.transform);
      Matrix g_codebook(q.codebook.k(), q.codebook.dim());
      for (std::size_t p = 0; p < q.codes.size(); ++p) {
        auto dst = g_codebook.row(q.codes.assignments[p]);
        const auto src = g_sub.row(p);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
      out.push_back(g_codebook.values());
      if (!q.merged()) out.push_back(matmul_tn(decode(q.codebook, q.codes), g).values());
      return;
    }
  }
}

}  // namespace

ParamMode net_mode(const ToyNet& net) {
  ParamMode mode = ParamMode::dense;
  for (const auto& layer : net.layers)
    if (layer.spec.kind != LayerKind::fc && layer.mode() > mode) mode = layer.mode();
  return mode;
}

ForwardResult forward(const ToyNet& net, const Matrix& images, std::span<const std::uint32_t> labels) {
  check_batch(net, images, labels);
  const Weights w = effective(net);
  const std::size_t n = images.rows();
  ForwardResult out{Matrix(n, net.n_classes), 0.0};
  std::vector<double> losses(chunks_for(n), 0.0);
  parallel_for(losses.size(), [&](std::size_t chunk) {
    Workspace ws;
    const std::size_t end = std::min(n, (chunk + 1) * kSampleChunk);
    double acc = 0.0;
    for (std::size_t i = chunk * kSampleChunk; i < end; ++i) {
      sample_forward(w, images.row(i).data(), ws);
      std::copy(ws.logits.begin(), ws.logits.end(), out.logits.row(i).begin());
      acc += cross_entropy(ws.logits, labels[i], nullptr);
    }
    losses[chunk] = acc;
  });
  for (double l : losses) out.loss += l;
  if (n > 0) out.loss /= static_cast<double>(n);
  return out;
}

BackwardResult backward(const ToyNet& net, const Matrix& images,
                        std::span<const std::uint32_t> labels) {
  check_batch(net, images, labels);
  const Weights w = effective(net);
  const std::size_t n = images.rows();
  const double scale = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;

  const std::size_t chunks = chunks_for(n);
  std::vector<std::array<std::vector<double>, ToyNet::kLayers>> partial(chunks);
  std::vector<double> losses(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t chunk) {
    auto& grad = partial[chunk];
    for (std::size_t l = 0; l < ToyNet::kLayers; ++l) grad[l].assign(w.w[l].size(), 0.0);
    Workspace ws;
    const std::size_t end = std::min(n, (chunk + 1) * kSampleChunk);
    double acc = 0.0;
    for (std::size_t i = chunk * kSampleChunk; i < end; ++i) {
      sample_forward(w, images.row(i).data(), ws);
      acc += cross_entropy(ws.logits, labels[i], nullptr);
      sample_backward(w, ws, labels[i], scale, grad);
    }
    losses[chunk] = acc;
  });

  std::array<std::vector<double>, ToyNet::kLayers> total;
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) total[l].assign(w.w[l].size(), 0.0);
  BackwardResult out;
  for (std::size_t c = 0; c < chunks; ++c) {
    out.loss += losses[c];
    for (std::size_t l = 0; l < ToyNet::kLayers; ++l)
      for (std::size_t i = 0; i < total[l].size(); ++i) total[l][i] += partial[c][l][i];
  }
  out.loss *= scale;
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) layer_param_grads(net.layers[l], total[l], out.grads);
  return out;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error(Errc::invalid_argument, "learning rate must be positive");
  if (batch_size < 1) throw Error(Errc::invalid_argument, "batch size must be at least 1");
}

namespace {

struct OptimizerState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::size_t step = 0;
};

bool is_trainable(const ParamInfo& info, const TrainConfig& cfg) {
  switch (info.role) {
    case ParamRole::transform: return cfg.train_transform;
    case ParamRole::weight: return cfg.train_leftovers;
    default: return true;
  }
}

double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (cfg.schedule == LrSchedule::constant || total_steps == 0) return cfg.lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::acos(-1.0) * progress));
}

void apply_update(std::span<double> theta, const std::vector<double>& grad, std::vector<double>& m1,
                  std::vector<double>& m2, const TrainConfig& cfg, double lr, std::size_t t) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (cfg.optimizer == OptimizerKind::adam) {
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + cfg.weight_decay * theta[i];
      m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * g;
      m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * g * g;
      theta[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + kEps);
    }
  } else {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + cfg.weight_decay * theta[i];
      m1[i] = cfg.momentum * m1[i] + g;
      theta[i] -= lr * (cfg.nesterov ? g + cfg.momentum * m1[i] : m1[i]);
    }
  }
}

}  // namespace

TrainResult train(ToyNet net, const SyntheticDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  check_architecture(net);
  if (data.config.n_classes != net.n_classes)
    throw Error(Errc::shape_mismatch, "dataset and network class counts differ");

  const auto info = parameter_info(net);
  OptimizerState state;
  for (const auto& p : info) {
    state.first.emplace_back(p.size, 0.0);
    state.second.emplace_back(p.size, 0.0);
  }

  const std::size_t n = data.train_x.rows();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  const Rng shuffle_root(cfg.seed, 0x5348554646ull);

  TrainResult result;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = shuffle_root.split(epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);

    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t begin = s * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      Matrix images(end - begin, kHw);
      std::vector<std::uint32_t> labels(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const auto src = data.train_x.row(order[i]);
        std::copy(src.begin(), src.end(), images.row(i - begin).begin());
        labels[i - begin] = data.train_y[order[i]];
      }
      const BackwardResult br = backward(net, images, labels);
      if (!std::isfinite(br.loss)) {
        throw Error(Errc::diverged_loss, "non-finite loss in epoch " + std::to_string(epoch));
      }
      loss_sum += br.loss;

      const double lr = scheduled_lr(cfg, state.step, total_steps);
      ++state.step;
      auto params = parameters(net);
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (!is_trainable(info[p], cfg)) continue;
        apply_update(params[p], br.grads[p], state.first[p], state.second[p], cfg, lr, state.step);
      }
    }
    result.history.push_back({epoch, net_mode(net), loss_sum / static_cast<double>(steps_per_epoch),
                              evaluate(net, data, Split::test)});
  }
  result.net = std::move(net);
  return result;
}

double evaluate(const ToyNet& net, const SyntheticDataset& data, Split split) {
  const Matrix& x = split == Split::test ? data.test_x : data.train_x;
  const auto& y = split == Split::test ? data.test_y : data.train_y;
  if (x.rows() == 0) return 0.0;
  const ForwardResult fr = forward(net, x, y);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = fr.logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x.rows());
}

void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
  const auto old_precision = os.precision(10);
  os << "epoch,mode,loss,accuracy\n";
  for (const auto& r : history)
    os << r.epoch << ',' << param_mode_name(r.mode) << ',' << r.loss << ',' << r.accuracy << '\n';
  os.precision(old_precision);
}

LowRankPair fit_lowrank(const Matrix& w_r, std::size_t d_tilde, const ReconstructionConfig& cfg) {
  const std::size_t rows = w_r.rows();
  const std::size_t m = w_r.cols();
  if (d_tilde < 1 || d_tilde > m) throw Error(Errc::bad_dim, "d_tilde must lie in [1, m]");
  double var = 0.0;
  for (double v : w_r.data()) var += v * v;
  var = std::max(var / static_cast<double>(w_r.size()), 1e-12);

  Rng rng(cfg.seed, 0x4c52ull);
  Rng rng_a = rng.split(0);
  Rng rng_b = rng.split(1);
  LowRankPair p{normal_matrix(rng_a, rows, d_tilde, 0.0, var),
                normal_matrix(rng_b, d_tilde, m, 0.0, 1.0 / static_cast<double>(m)), m, d_tilde};

  TrainConfig opt;
  opt.optimizer = OptimizerKind::adam;
  opt.lr = cfg.lr;
  opt.schedule = LrSchedule::cosine;
  std::vector<double> m1a(p.a.size(), 0.0), m2a(p.a.size(), 0.0);
  std::vector<double> m1b(p.b.size(), 0.0), m2b(p.b.size(), 0.0);
  const double scale = 2.0 / static_cast<double>(rows);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Matrix residual = matmul(p.a, p.b) - w_r;
    const Matrix ga = scale * matmul_nt(residual, p.b);
    const Matrix gb = scale * matmul_tn(p.a, residual);
    const double lr = scheduled_lr(opt, step, cfg.steps);
    apply_update(p.a.data(), ga.values(), m1a, m2a, opt, lr, step + 1);
    apply_update(p.b.data(), gb.values(), m1b, m2b, opt, lr, step + 1);
  }
  return p;
}

}  // namespace lrvq
