// lrvq: command-line driver for the toy LR2VQ pipeline.
//
// Stages talk only through files in --out-dir:
//   dense.ckpt, lrr_d<d>.ckpt, quant_d<d>.ckpt, ft_d<d>.ckpt, model_d<d>.lr2vq
// plus history and report CSVs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lrvq/analysis.hpp"
#include "lrvq/checkpoint.hpp"
#include "lrvq/error.hpp"
#include "lrvq/modelfmt.hpp"
#include "lrvq/parallel.hpp"

namespace fs = std::filesystem;
using namespace lrvq;

namespace {

enum Exit { ok = 0, failure = 1, usage = 2, missing = 3, numerical = 4 };

struct Options {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::size_t threads = 0;
  // dataset
  std::size_t classes = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double noise = -1;
  std::size_t motif = 0;
  double contrast = 0;
  // training
  std::size_t epochs = 0;
  double lr = 0;
  std::size_t ft_epochs = 0;
  double ft_lr = 0;
  bool ft_train_transform = true;
  std::string variance = "paper";
  // compression
  std::size_t d_pw = 4;
  std::size_t k_cv = 256;
  std::size_t k_pw = 256;
  std::size_t kmeans_iters = 100;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Calibrated preset with any explicitly set knobs applied on top.
ToyPipeline pipeline_of(const Options& o) {
  ToyPipeline p = toy_pipeline(o.seed);
  if (o.classes) p.data.n_classes = o.classes;
  if (o.n_train) p.data.n_train = o.n_train;
  if (o.n_test) p.data.n_test = o.n_test;
  if (o.noise >= 0) p.data.noise = o.noise;
  if (o.motif) p.data.motif = o.motif;
  if (o.contrast > 0) p.data.contrast = o.contrast;
  if (o.epochs) p.sweep.dense_cfg.epochs = p.sweep.lrr_cfg.epochs = o.epochs;
  if (o.lr > 0) p.sweep.dense_cfg.lr = p.sweep.lrr_cfg.lr = o.lr;
  if (o.ft_epochs) p.sweep.finetune_cfg.epochs = o.ft_epochs;
  if (o.ft_lr > 0) p.sweep.finetune_cfg.lr = o.ft_lr;
  p.sweep.finetune_cfg.train_transform = o.ft_train_transform;
  p.sweep.variance = o.variance == "fanin" ? VarianceMode::fanin_dtilde : VarianceMode::paper;
  p.sweep.d_pw = o.d_pw;
  p.sweep.kmeans.iters = o.kmeans_iters;
  return p;
}

CompressionRegime toy_regime_of(const Options& o, std::size_t d) {
  CompressionRegime r = toy_regime(d, o.d_pw);
  r.k_cv = o.k_cv;
  r.k_pw = o.k_pw;
  return r;
}

void check_d(std::size_t d) {
  if (d < 1 || d > toy_regime().m_cv) throw UsageError("--d must lie in [1, 9], got " + std::to_string(d));
}

std::string path_in(const Options& o, const std::string& name) { return (fs::path(o.out_dir) / name).string(); }
std::string stage_file(const Options& o, const char* stage, std::size_t d) {
  return path_in(o, std::string(stage) + "_d" + std::to_string(d) + ".ckpt");
}

std::map<std::string, std::string> metadata(const Options& o, const char* stage, std::size_t d) {
  std::map<std::string, std::string> m{{"stage", stage}, {"seed", std::to_string(o.seed)}};
  if (d) {
    m["d_cv"] = std::to_string(d);
    m["d_pw"] = std::to_string(o.d_pw);
    m["k_cv"] = std::to_string(o.k_cv);
    m["k_pw"] = std::to_string(o.k_pw);
  }
  return m;
}

// Regime a checkpoint was produced under; falls back to the current flags.
CompressionRegime regime_of(const Checkpoint& c, const Options& o, std::size_t d) {
  CompressionRegime r = toy_regime_of(o, d);
  auto get = [&](const char* key, std::size_t& out) {
    if (auto it = c.metadata.find(key); it != c.metadata.end()) out = std::stoul(it->second);
  };
  get("d_cv", r.d_cv);
  get("d_pw", r.d_pw);
  get("k_cv", r.k_cv);
  get("k_pw", r.k_pw);
  return r;
}

template <class F>
void write_text(const std::string& path, F&& body) {
  std::ofstream os(path);
  if (!os) throw Error(Errc::missing_checkpoint, "cannot write " + path);
  body(os);
}

void save_history(const Options& o, const std::string& name, const std::vector<EpochRecord>& h) {
  write_text(path_in(o, name), [&](std::ostream& os) { write_history_csv(os, h); });
}

// --- stages -----------------------------------------------------------------

int cmd_train_dense(const Options& o) {
  const ToyPipeline p = pipeline_of(o);
  const auto data = SyntheticDataset::generate(p.data);
  Rng init = Rng(p.sweep.seed).split(SweepStreams::dense_init);
  const TrainResult r = train(make_dense_net(init, p.data.n_classes), data, p.sweep.dense_cfg);
  save_checkpoint(path_in(o, "dense.ckpt"), {r.net, metadata(o, "dense", 0)});
  save_history(o, "history_dense.csv", r.history);
  std::printf("dense accuracy %.4f\n", evaluate(r.net, data));
  return ok;
}

int cmd_train_lrr(const Options& o, const std::vector<std::size_t>& ds) {
  for (std::size_t d : ds) check_d(d);
  const ToyPipeline p = pipeline_of(o);
  const auto data = SyntheticDataset::generate(p.data);
  for (std::size_t d : ds) {
    std::vector<EpochRecord> history;
    const ToyNet net = train_lrr_stage(data, p.sweep, d, &history);
    save_checkpoint(stage_file(o, "lrr", d), {net, metadata(o, "lrr", d)});
    save_history(o, "history_lrr_d" + std::to_string(d) + ".csv", history);
    std::printf("d=%zu lrr accuracy %.4f\n", d, evaluate(net, data));
  }
  return ok;
}

int cmd_search_d(const Options& o, const std::vector<std::size_t>& ds) {
  for (std::size_t d : ds) check_d(d);
  std::vector<DimCandidate> cands;
  for (std::size_t d : ds) {
    const Checkpoint c = load_checkpoint(stage_file(o, "lrr", d));
    cands.push_back(score_network(c.net, regime_of(c, o, d)));
  }
  const SearchReport r = search_only_report(cands);
  std::printf("%8s %14s\n", "d_tilde", "score");
  for (const auto& c : cands) std::printf("%8zu %14.6f\n", c.d_tilde, c.score);
  std::printf("selected d_tilde %zu\n", r.predicted_best);
  write_text(path_in(o, "search.csv"), [&](std::ostream& os) { write_search_csv(os, r); });
  write_text(path_in(o, "candidates.csv"), [&](std::ostream& os) { write_candidates_csv(os, cands); });
  return ok;
}

int cmd_quantize(const Options& o, std::size_t d) {
  check_d(d);
  if (o.k_cv < 1 || o.k_pw < 1) throw UsageError("k must be positive");
  const ToyPipeline p = pipeline_of(o);
  const Checkpoint c = load_checkpoint(stage_file(o, "lrr", d));
  const CompressionRegime regime = toy_regime_of(o, d);
  const ToyNet q = quantize_stage(c.net, p.sweep, regime);
  std::printf("%6s %8s %6s %14s\n", "layer", "kind", "k", "clustering_err");
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
    const auto* ql = std::get_if<QuantizedLayer>(&q.layers[l].params);
    if (!ql) continue;
    const double err = clustering_error(c.net.layers[l].subvectors(), *ql);
    std::printf("%6zu %8s %6zu %14.6g\n", l, std::string(layer_kind_name(ql->spec.kind)).c_str(), ql->codebook.k(), err);
  }
  save_checkpoint(stage_file(o, "quant", d), {q, metadata(o, "quant", d)});
  return ok;
}

int cmd_finetune(const Options& o, std::size_t d) {
  check_d(d);
  const ToyPipeline p = pipeline_of(o);
  const Checkpoint c = load_checkpoint(stage_file(o, "quant", d));
  for (const auto& layer : c.net.layers)
    if (const auto* q = std::get_if<QuantizedLayer>(&layer.params); q && q->merged())
      throw Error(Errc::already_merged, "merged layers cannot be fine-tuned");
  const auto data = SyntheticDataset::generate(p.data);
  const double before = evaluate(c.net, data);
  const TrainResult r = train(c.net, data, p.sweep.finetune_cfg);
  save_checkpoint(stage_file(o, "ft", d), {r.net, metadata(o, "ft", d)});
  save_history(o, "history_ft_d" + std::to_string(d) + ".csv", r.history);
  std::printf("accuracy before %.4f after %.4f\n", before, evaluate(r.net, data));
  return ok;
}

int cmd_export(const Options& o, std::size_t d) {
  check_d(d);
  const Checkpoint c = load_checkpoint(stage_file(o, "ft", d));
  const CompressionRegime regime = regime_of(c, o, d);
  const auto bytes = serialize(export_model(merge_net(c.net), regime));
  const std::string out = path_in(o, "model_d" + std::to_string(d) + ".lr2vq");
  write_bytes(out, bytes);
  const ArchitectureSpec arch = toy_architecture(c.net.n_classes);
  const SizeBreakdown s = compressed_size(arch, regime);
  std::printf("wrote %s: %zu bytes (predicted %zu), ratio %.2fx\n", out.c_str(), bytes.size(), s.total(),
              compression_ratio(arch, regime));
  return ok;
}

int cmd_report_size(const Options& o, const std::string& arch_name, const std::string& preset, std::size_t d) {
  ArchitectureSpec arch;
  CompressionRegime regime;
  if (fs::exists(arch_name)) {
    std::ifstream is(arch_name);
    arch = parse_architecture(is, fs::path(arch_name).stem().string());
    regime = toy_regime_of(o, d);
    regime.skip_first_conv = true;
  } else if (arch_name == "toy") {
    arch = architecture_by_name("toy", o.classes ? o.classes : toy_pipeline().data.n_classes);
    regime = toy_regime_of(o, d);
  } else {
    arch = architecture_by_name(arch_name);
    regime = resnet_regime(arch_name, preset == "large" ? RegimePreset::large_blocks : RegimePreset::small_blocks);
  }
  const SizeBreakdown s = compressed_size(arch, regime);
  constexpr double mib = 1024.0 * 1024.0;
  std::printf("architecture   %s (%zu parameters)\n", arch.name.c_str(), arch.parameter_count());
  std::printf("codebooks      %zu B\n", s.codebook_bytes);
  std::printf("codes          %zu B\n", s.code_bytes);
  std::printf("fp16 leftovers %zu B\n", s.leftover_bytes);
  std::printf("headers        %zu B\n", s.header_bytes);
  std::printf("payload        %zu B (%.3f MB)\n", s.payload(), static_cast<double>(s.payload()) / mib);
  std::printf("file total     %zu B\n", s.total());
  std::printf("original fp32  %zu B (%.2f MB)\n", s.original_bytes, static_cast<double>(s.original_bytes) / mib);
  std::printf("ratio          %.2fx\n", compression_ratio(arch, regime));
  std::printf("note: codes are byte-aligned; 16-bit codes when k > 256\n");
  return ok;
}

int cmd_sweep(const Options& o, const std::vector<std::size_t>& ds) {
  for (std::size_t d : ds) check_d(d);
  ToyPipeline p = pipeline_of(o);
  p.sweep.d_range = ds;
  const auto data = SyntheticDataset::generate(p.data);
  std::printf("%3s %9s %9s %9s %7s %7s %7s %12s\n", "d", "e_a", "e_c", "e_r", "lrr", "quant", "ft", "score");
  const SweepResult r = sweep_dtilde(data, p.sweep, [](const TradeoffPoint& pt) {
    std::printf("%3zu %9.5f %9.5f %9.5f %7.4f %7.4f %7.4f\n", pt.d_tilde, pt.e_a, pt.e_c, pt.e_r, pt.lrr_accuracy,
                pt.quantized_accuracy, pt.finetuned_accuracy);
    std::fflush(stdout);
  });
  std::printf("dense accuracy %.4f\n", r.dense_accuracy);
  write_text(path_in(o, "tradeoff.csv"), [&](std::ostream& os) { write_tradeoff_csv(os, r.points); });
  write_text(path_in(o, "candidates.csv"), [&](std::ostream& os) { write_candidates_csv(os, r.candidates); });
  const auto pts = points_in_range(r.points, kSearchLo, kSearchHi);
  if (!pts.empty()) {
    const SearchReport s = validate_search(pts, candidates_in_range(r.candidates, kSearchLo, kSearchHi));
    write_text(path_in(o, "search.csv"), [&](std::ostream& os) { write_search_csv(os, s); });
    std::printf("search window [%zu, %zu]: predicted %zu, empirical %zu, within one: %s\n", kSearchLo, kSearchHi,
                s.predicted_best, *s.empirical_best, s.within_one ? "yes" : "no");
  }
  return ok;
}

int cmd_intrinsic(const Options& o, std::size_t d) {
  check_d(d);
  const Checkpoint dense = load_checkpoint(path_in(o, "dense.ckpt"));
  const Checkpoint lrr = load_checkpoint(stage_file(o, "lrr", d));
  const auto rows = intrinsic_dim_report(dense.net, lrr.net);
  std::printf("%6s %4s %13s %8s\n", "layer", "m", "standard_dim", "lrr_dim");
  for (const auto& r : rows) std::printf("%6zu %4zu %13zu %8zu\n", r.layer, r.m, r.standard_dim, r.lrr_dim);
  write_text(path_in(o, "intrinsic.csv"), [&](std::ostream& os) { write_intrinsic_csv(os, rows); });
  return ok;
}

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::missing_checkpoint:
    case Errc::format_error:
      return missing;
    case Errc::diverged_loss:
    case Errc::not_symmetric:
      return numerical;
    case Errc::unknown_arch:
    case Errc::bad_dim:
    case Errc::incompatible_regime:
    case Errc::invalid_argument:
    case Errc::already_merged:
      return usage;
    default:
      return failure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank representation vector quantization toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value file; flags override it");

  Options o;
  app.add_option("--seed", o.seed, "Pipeline seed");
  app.add_option("--out-dir", o.out_dir, "Directory for checkpoints and reports");
  app.add_option("--threads", o.threads, "Worker threads (0 = hardware)");
  app.add_option("--classes", o.classes, "Dataset classes");
  app.add_option("--n-train", o.n_train, "Training samples");
  app.add_option("--n-test", o.n_test, "Test samples");
  app.add_option("--noise", o.noise, "Pixel noise sigma")->check(CLI::NonNegativeNumber);
  app.add_option("--motif", o.motif, "Side of the class pattern tile");
  app.add_option("--contrast", o.contrast, "Class template RMS")->check(CLI::PositiveNumber);
  app.add_option("--epochs", o.epochs, "Dense and LRR training epochs");
  app.add_option("--lr", o.lr, "Dense and LRR learning rate")->check(CLI::PositiveNumber);
  app.add_option("--ft-epochs", o.ft_epochs, "Fine-tuning epochs");
  app.add_option("--ft-lr", o.ft_lr, "Fine-tuning learning rate")->check(CLI::PositiveNumber);
  app.add_option("--ft-train-transform", o.ft_train_transform, "Train B while fine-tuning");
  app.add_option("--variance", o.variance, "B init variance")->check(CLI::IsMember({"paper", "fanin"}));
  app.add_option("--d-pw", o.d_pw, "LRR width of pointwise layers")->check(CLI::Range(1, 4));
  app.add_option("--k-cv", o.k_cv, "Codebook size of 3x3 layers");
  app.add_option("--k-pw", o.k_pw, "Codebook size of pointwise layers");
  app.add_option("--kmeans-iters", o.kmeans_iters, "k-means iterations");

  std::vector<std::size_t> d_list;
  std::size_t d = 0;
  std::string arch_name, preset = "small";

  auto* dense = app.add_subcommand("train-dense", "Train the dense reference net");
  auto* lrr = app.add_subcommand("train-lrr", "Train one LRR net per d");
  lrr->add_option("--d", d_list, "Comma-separated d values")->delimiter(',')->required();
  auto* search = app.add_subcommand("search-d", "Score LRR checkpoints and pick d");
  search->add_option("--d", d_list, "Comma-separated d values")->delimiter(',')->required();
  auto* quant = app.add_subcommand("quantize", "Cluster the LRR of one checkpoint");
  quant->add_option("--d", d, "d of the LRR checkpoint")->required();
  auto* ft = app.add_subcommand("finetune", "Fine-tune codebooks with codes frozen");
  ft->add_option("--d", d, "d of the quantized checkpoint")->required();
  auto* exp = app.add_subcommand("export", "Merge B into codebooks and write the model file");
  exp->add_option("--d", d, "d of the fine-tuned checkpoint")->required();
  auto* size = app.add_subcommand("report-size", "Compressed size and ratio of an architecture");
  size->add_option("arch", arch_name, "toy, resnet18, resnet50 or a layer table file")->required();
  size->add_option("--regime", preset, "Block regime")->check(CLI::IsMember({"small", "large"}));
  size->add_option("--d", d, "d for the toy regime")->default_val(9);
  auto* sweep = app.add_subcommand("sweep", "Full trade-off sweep over d");
  sweep->add_option("--d", d_list, "Comma-separated d values")->delimiter(',')->default_str("1,2,3,4,5,6,7,8,9");
  auto* intr = app.add_subcommand("intrinsic-dim", "PCA intrinsic dimension, dense vs LRR");
  intr->add_option("--d", d, "d of the LRR checkpoint")->default_val(9);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : usage;
  }
  if (sweep->parsed() && d_list.empty()) d_list = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  try {
    if (o.threads) set_thread_count(o.threads);
    fs::create_directories(o.out_dir);
    if (dense->parsed()) return cmd_train_dense(o);
    if (lrr->parsed()) return cmd_train_lrr(o, d_list);
    if (search->parsed()) return cmd_search_d(o, d_list);
    if (quant->parsed()) return cmd_quantize(o, d);
    if (ft->parsed()) return cmd_finetune(o, d);
    if (exp->parsed()) return cmd_export(o, d);
    if (size->parsed()) return cmd_report_size(o, arch_name, preset, d);
    if (sweep->parsed()) return cmd_sweep(o, d_list);
    if (intr->parsed()) return cmd_intrinsic(o, d);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return usage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return failure;
  }
  return usage;
}
