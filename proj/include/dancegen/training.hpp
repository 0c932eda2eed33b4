#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dancegen/beat.hpp"
#include "dancegen/io.hpp"
#include "dancegen/model.hpp"
#include "dancegen/motion.hpp"

namespace dancegen::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainingConfig {
  std::size_t batch_size = 50;
  std::size_t seq_len = 150;
  std::size_t epochs = 10;
  AdamConfig adam;
  // Annealed Gaussian gradient noise: sigma^2 = sigma0^2 / (1 + k)^0.55 at
  // update k. Zero disables it.
  double grad_noise_sigma0 = 0.01;
  std::uint64_t seed = 0;
  bool use_contrastive = true;
  std::size_t batches_per_epoch = 0;  // 0: just enough to cover every track

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainingConfig& cfg);
void from_json(const nlohmann::json& j, TrainingConfig& cfg);

/// One training track: per-frame feature blocks, normalized motion, weak
/// labels from the raw motion, optional reference beats for evaluation.
struct Track {
  std::string name;
  Tensor features;  // [num_blocks, 1, bins, frames]
  motion::MotionSequence motion;
  std::vector<std::uint8_t> labels;  // labels[j] holds the label at frame j+2
  beat::BeatAnnotation beats;

  std::size_t num_blocks() const { return features.empty() ? 0 : features.dim(0); }
};

struct Dataset {
  std::vector<Track> tracks;
};

/// Reads a manifest and prepares tracks: clean features plus one augmented
/// copy per SNR (fresh white noise, seeded deterministically), normalized
/// motion, weak labels.
Dataset load_dataset(const std::filesystem::path& manifest_path, std::uint64_t seed);

struct Pick {
  std::size_t track;
  std::size_t offset;
};

/// Random (track, offset) picks grouped into batches. Every usable track
/// appears at least once per epoch; tracks shorter than the window are
/// skipped with a warning on stderr.
std::vector<std::vector<Pick>> make_batches(const Dataset& data,
                                            const TrainingConfig& cfg,
                                            std::mt19937_64& rng);

/// Gathers the aligned feature/motion/label slices for one batch of picks.
model::WindowBatch assemble_window(const Dataset& data, const std::vector<Pick>& picks,
                                   std::size_t seq_len);

/// Bias-corrected Adam with optional annealed gradient noise.
class AdamOptimizer {
 public:
  AdamOptimizer(AdamConfig cfg, double noise_sigma0);

  void step(const std::vector<std::pair<std::string, Param*>>& params,
            std::mt19937_64& rng);

  std::size_t steps_taken() const { return steps_; }
  const std::vector<Tensor>& moment1() const { return m_; }
  const std::vector<Tensor>& moment2() const { return v_; }
  void restore(std::size_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamConfig cfg_;
  double noise_sigma0_;
  std::size_t steps_ = 0;
  std::vector<Tensor> m_, v_;
};

struct EpochReport {
  std::size_t epoch = 0;
  double mean_mse = 0.0;
  double mean_contrastive = 0.0;
  double mean_combined = 0.0;
  std::size_t batches = 0;
  double wall_seconds = 0.0;
};

/// Owns the model and the optimization state; one train_epoch call per epoch.
class Trainer {
 public:
  Trainer(model::Seq2SeqModel model, TrainingConfig cfg);

  EpochReport train_epoch(const Dataset& data);

  model::Seq2SeqModel& model() { return model_; }
  const TrainingConfig& config() const { return cfg_; }
  std::size_t epochs_completed() const { return epoch_; }

  /// Called with every batch before the optimizer step; used for logging and
  /// loss-verification tests.
  using BatchObserver =
      std::function<void(const model::WindowBatch&, const model::WindowLoss&)>;
  void set_batch_observer(BatchObserver observer) { observer_ = std::move(observer); }

  /// Extra JSON merged into checkpoint metadata (e.g. a motion scaler).
  nlohmann::json extra_meta;

  void save_checkpoint(const std::filesystem::path& path);
  static Trainer load_checkpoint(const std::filesystem::path& path);

 private:
  model::Seq2SeqModel model_;
  TrainingConfig cfg_;
  AdamOptimizer adam_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
  BatchObserver observer_;
};

/// Loads just the model (and metadata) from a checkpoint, for generation.
struct LoadedModel {
  model::Seq2SeqModel model;
  nlohmann::json meta;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace dancegen::train
