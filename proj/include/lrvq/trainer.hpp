#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "lrvq/dataset.hpp"
#include "lrvq/lowrank.hpp"
#include "lrvq/matrix.hpp"
#include "lrvq/toynet.hpp"

namespace lrvq {

struct ForwardResult {
  Matrix logits;  // batch x n_classes
  double loss = 0.0;  // mean softmax cross-entropy
};

/// Images are rows of 256 pixels. Throws Errc::shape_mismatch on bad input.
ForwardResult forward(const ToyNet& net, const Matrix& images, std::span<const std::uint32_t> labels);

struct BackwardResult {
  double loss = 0.0;
  /// Aligned with parameters(net) / parameter_info(net).
  std::vector<std::vector<double>> grads;
};

/// Runs the forward pass and returns d(loss)/d(parameter) for every trainable
/// tensor. Codebook rows collect the gradients of every subvector slot that
/// points at them.
BackwardResult backward(const ToyNet& net, const Matrix& images,
                        std::span<const std::uint32_t> labels);

enum class OptimizerKind { sgd_momentum, adam };
enum class LrSchedule { constant, cosine };

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 0.01;
  LrSchedule schedule = LrSchedule::cosine;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool train_transform = true;  // B of unmerged quantized layers
  bool train_leftovers = true;  // dense (unquantized) layers

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  ParamMode mode = ParamMode::dense;
  double loss = 0.0;      // mean training batch loss
  double accuracy = 0.0;  // test accuracy after the epoch
};

struct TrainResult {
  ToyNet net;
  std::vector<EpochRecord> history;
};

/// Optimises every trainable tensor of the net in its current mode. Codes of
/// quantized layers are never touched. Throws Errc::diverged_loss on a
/// non-finite batch loss.
TrainResult train(ToyNet net, const SyntheticDataset& data, const TrainConfig& cfg);

enum class Split { train, test };

double evaluate(const ToyNet& net, const SyntheticDataset& data, Split split = Split::test);

/// Mode of the convolution layers (dense < lowrank < quantized, highest wins).
ParamMode net_mode(const ToyNet& net);

void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history);

struct ReconstructionConfig {
  std::size_t steps = 3000;
  double lr = 0.02;
  std::uint64_t seed = 0;
};

/// Learns (A, B) by Adam on ||W_r - A B||_F^2 / rows.
LowRankPair fit_lowrank(const Matrix& w_r, std::size_t d_tilde, const ReconstructionConfig& cfg = {});

}  // namespace lrvq
