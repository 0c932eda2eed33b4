#include "dancegen/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>
#include <unordered_map>

namespace dancegen::train {

void TrainingConfig::validate() const {
  if (batch_size == 0) throw InvalidInputError("training config: batch_size must be positive");
  if (seq_len < 2) throw InvalidInputError("training config: seq_len must be at least 2");
  if (epochs == 0) throw InvalidInputError("training config: epochs must be positive");
  if (adam.lr < 0.0) throw InvalidInputError("training config: learning rate must be non-negative");
  if (grad_noise_sigma0 < 0.0)
    throw InvalidInputError("training config: noise sigma must be non-negative");
}

void to_json(nlohmann::json& j, const TrainingConfig& cfg) {
  j = {{"batch_size", cfg.batch_size},
       {"seq_len", cfg.seq_len},
       {"epochs", cfg.epochs},
       {"lr", cfg.adam.lr},
       {"beta1", cfg.adam.beta1},
       {"beta2", cfg.adam.beta2},
       {"adam_eps", cfg.adam.eps},
       {"grad_noise_sigma0", cfg.grad_noise_sigma0},
       {"seed", cfg.seed},
       {"use_contrastive", cfg.use_contrastive},
       {"batches_per_epoch", cfg.batches_per_epoch}};
}

void from_json(const nlohmann::json& j, TrainingConfig& cfg) {
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seq_len = j.value("seq_len", cfg.seq_len);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.adam.lr = j.value("lr", cfg.adam.lr);
  cfg.adam.beta1 = j.value("beta1", cfg.adam.beta1);
  cfg.adam.beta2 = j.value("beta2", cfg.adam.beta2);
  cfg.adam.eps = j.value("adam_eps", cfg.adam.eps);
  cfg.grad_noise_sigma0 = j.value("grad_noise_sigma0", cfg.grad_noise_sigma0);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.use_contrastive = j.value("use_contrastive", cfg.use_contrastive);
  cfg.batches_per_epoch = j.value("batches_per_epoch", cfg.batches_per_epoch);
}

// ---------------------------------------------------------------------------
// Dataset loading

namespace {

Tensor features_to_tensor(const dsp::FeatureTrack& track) {
  const std::size_t n = track.blocks.size();
  const std::size_t bins = dsp::kBins;
  const std::size_t frames = dsp::kFramesPerSlice;
  Tensor out({n, 1, bins, frames});
  for (std::size_t t = 0; t < n; ++t)
    std::copy(track.blocks[t].power.begin(), track.blocks[t].power.end(),
              out.data() + t * bins * frames);
  return out;
}

Track make_track(const std::string& name, const dsp::FeatureTrack& features,
                 const motion::MotionSequence& raw_motion,
                 const beat::BeatAnnotation& beats) {
  Track track;
  track.name = name;
  track.features = features_to_tensor(features);
  // Labels come from the raw motion; normalization rescales components
  // unevenly, which would change the per-frame SD profile.
  track.labels = motion::weak_labels(raw_motion).labels;
  track.motion = motion::normalize_motion(raw_motion);
  track.beats = beats;
  return track;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& manifest_path, std::uint64_t seed) {
  const io::Manifest manifest = io::read_manifest(manifest_path);
  Dataset data;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const io::ManifestEntry& entry = manifest.entries[i];
    const dsp::AudioClip clip =
        io::read_wav(io::resolve_manifest_path(manifest_path, entry.audio));
    if (clip.sample_rate != dsp::kExpectedSampleRate)
      throw InvalidInputError("expected 16 kHz audio: " + entry.audio);

    const motion::MotionSequence raw_motion =
        io::read_motion_csv(io::resolve_manifest_path(manifest_path, entry.motion));
    if (raw_motion.dim() != motion::kMotionDim)
      throw InvalidInputError("expected 71 motion components: " + entry.motion);

    beat::BeatAnnotation beats;
    if (!entry.beats.empty())
      beats = io::read_beats(io::resolve_manifest_path(manifest_path, entry.beats));

    const std::string stem = std::filesystem::path(entry.audio).stem().string();
    data.tracks.push_back(
        make_track(stem, dsp::feature_pipeline(clip, manifest.fps), raw_motion, beats));

    for (std::size_t s = 0; s < manifest.snrs.size(); ++s) {
      const double snr = manifest.snrs[s];
      const std::uint64_t noise_seed = seed ^ (0x9e3779b97f4a7c15ULL * (i * 31 + s + 1));
      const dsp::AudioClip noise =
          dsp::white_noise(clip.samples.size(), clip.sample_rate, noise_seed);
      const dsp::AudioClip noisy = dsp::mix_noise(clip, noise, snr);
      std::ostringstream name;
      name << stem << ":snr" << snr;
      data.tracks.push_back(make_track(name.str(),
                                       dsp::feature_pipeline(noisy, manifest.fps),
                                       raw_motion, beats));
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Batching

namespace {

// Number of valid window offsets: the window needs features [o, o+L) and
// motion frames [o, o+L] inclusive.
std::size_t valid_offsets(const Track& track, std::size_t seq_len) {
  const std::size_t nf = track.num_blocks();
  const std::size_t nm = track.motion.size();
  if (nm < seq_len + 1 || nf < seq_len) return 0;
  const std::size_t limit = std::min(nf, nm - 1);
  return limit - seq_len + 1;
}

}  // namespace

std::vector<std::vector<Pick>> make_batches(const Dataset& data,
                                            const TrainingConfig& cfg,
                                            std::mt19937_64& rng) {
  cfg.validate();
  if (data.tracks.empty()) throw InvalidInputError("make_batches: empty dataset");

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < data.tracks.size(); ++i) {
    if (valid_offsets(data.tracks[i], cfg.seq_len) > 0) {
      usable.push_back(i);
    } else {
      std::cerr << "warning: track '" << data.tracks[i].name
                << "' is shorter than one training window, skipping\n";
    }
  }
  if (usable.empty())
    throw InvalidInputError("make_batches: no track is long enough for the window");

  std::size_t batches = cfg.batches_per_epoch;
  const std::size_t min_batches =
      (usable.size() + cfg.batch_size - 1) / cfg.batch_size;
  batches = std::max(batches, min_batches);

  // Ensure every usable track appears, then pad with uniform picks.
  std::vector<std::size_t> track_ids = usable;
  std::uniform_int_distribution<std::size_t> track_dist(0, usable.size() - 1);
  while (track_ids.size() < batches * cfg.batch_size)
    track_ids.push_back(usable[track_dist(rng)]);
  std::shuffle(track_ids.begin(), track_ids.end(), rng);

  std::vector<std::vector<Pick>> out(batches);
  std::size_t next = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    out[b].reserve(cfg.batch_size);
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      const std::size_t track = track_ids[next++];
      std::uniform_int_distribution<std::size_t> offset_dist(
          0, valid_offsets(data.tracks[track], cfg.seq_len) - 1);
      out[b].push_back({track, offset_dist(rng)});
    }
  }
  return out;
}

model::WindowBatch assemble_window(const Dataset& data, const std::vector<Pick>& picks,
                                   std::size_t seq_len) {
  if (picks.empty()) throw InvalidInputError("assemble_window: no picks");
  const std::size_t n = picks.size();
  const Track& first = data.tracks.at(picks[0].track);
  const std::size_t bins = first.features.dim(2);
  const std::size_t frames = first.features.dim(3);
  const std::size_t block_len = bins * frames;
  const std::size_t dim = first.motion.frames.at(0).size();

  model::WindowBatch batch;
  batch.initial_motion = Tensor({n, dim});
  batch.features.assign(seq_len, Tensor({n, 1, bins, frames}));
  batch.targets.assign(seq_len, Tensor({n, dim}));
  batch.labels.assign(seq_len - 1, std::vector<int>(n, -1));

  for (std::size_t b = 0; b < n; ++b) {
    const Track& track = data.tracks.at(picks[b].track);
    const std::size_t offset = picks[b].offset;
    std::copy(track.motion.frames[offset].begin(), track.motion.frames[offset].end(),
              batch.initial_motion.data() + b * dim);
    for (std::size_t t = 0; t < seq_len; ++t) {
      const double* src = track.features.data() + (offset + t) * block_len;
      std::copy(src, src + block_len, batch.features[t].data() + b * block_len);
      const motion::MotionFrame& target = track.motion.frames[offset + t + 1];
      std::copy(target.begin(), target.end(), batch.targets[t].data() + b * dim);
      if (t + 1 < seq_len) {
        // Transition (offset+t, offset+t+1) carries the label at frame
        // offset+t+1, stored at index offset+t-1.
        const std::size_t at = offset + t;
        if (at >= 1 && at - 1 < track.labels.size())
          batch.labels[t][b] = track.labels[at - 1];
      }
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Adam

AdamOptimizer::AdamOptimizer(AdamConfig cfg, double noise_sigma0)
    : cfg_(cfg), noise_sigma0_(noise_sigma0) {}

void AdamOptimizer::step(const std::vector<std::pair<std::string, Param*>>& params,
                         std::mt19937_64& rng) {
  if (m_.empty()) {
    for (const auto& [name, p] : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  } else if (m_.size() != params.size()) {
    throw StateError("adam: parameter count changed mid-training");
  }

  const double sigma =
      noise_sigma0_ > 0.0
          ? noise_sigma0_ / std::pow(1.0 + static_cast<double>(steps_), 0.275)
          : 0.0;
  std::normal_distribution<double> noise(0.0, 1.0);

  const double t = static_cast<double>(steps_ + 1);
  const double bias1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg_.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Param* p = params[i].second;
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p->size(); ++j) {
      double g = p->grad[j];
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in " + params[i].first);
      if (sigma > 0.0) g += sigma * noise(rng);
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      p->value[j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
  ++steps_;
}

void AdamOptimizer::restore(std::size_t steps, std::vector<Tensor> m,
                            std::vector<Tensor> v) {
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(model::Seq2SeqModel model, TrainingConfig cfg)
    : model_(std::move(model)),
      cfg_(cfg),
      adam_(cfg.adam, cfg.grad_noise_sigma0),
      rng_(cfg.seed) {
  cfg_.validate();
}

EpochReport Trainer::train_epoch(const Dataset& data) {
  const auto start = std::chrono::steady_clock::now();
  const auto batches = make_batches(data, cfg_, rng_);
  auto params = model_.trainable_params();

  EpochReport report;
  report.epoch = ++epoch_;
  report.batches = batches.size();
  for (const std::vector<Pick>& picks : batches) {
    const model::WindowBatch batch = assemble_window(data, picks, cfg_.seq_len);
    model_.zero_grads();
    const model::WindowLoss loss =
        model::train_window(model_, batch, cfg_.use_contrastive);
    if (!std::isfinite(loss.combined))
      throw NumericError("training diverged: non-finite loss in epoch " +
                         std::to_string(epoch_));
    if (observer_) observer_(batch, loss);
    adam_.step(params, rng_);
    report.mean_mse += loss.mse;
    report.mean_contrastive += loss.contrastive;
    report.mean_combined += loss.combined;
  }
  const double n = static_cast<double>(report.batches);
  report.mean_mse /= n;
  report.mean_contrastive /= n;
  report.mean_combined /= n;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["kind"] = "dancegen-checkpoint";
  meta["model_config"] = model_.config();
  meta["training_config"] = cfg_;
  meta["epoch"] = epoch_;
  meta["adam_steps"] = adam_.steps_taken();
  std::ostringstream rng_state;
  rng_state << rng_;
  meta["rng"] = rng_state.str();
  if (!extra_meta.is_null()) meta["extra"] = extra_meta;

  std::vector<io::NamedArray> arrays;
  for (const auto& nt : model_.named_tensors())
    arrays.push_back({nt.name, nt.value->shape(), nt.value->values()});
  const auto params = model_.trainable_params();
  if (!adam_.moment1().empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      arrays.push_back({"adam.m." + params[i].first, adam_.moment1()[i].shape(),
                        adam_.moment1()[i].values()});
      arrays.push_back({"adam.v." + params[i].first, adam_.moment2()[i].shape(),
                        adam_.moment2()[i].values()});
    }
  }
  io::write_checkpoint(path, meta, arrays);
}

namespace {

model::Seq2SeqModel model_from_checkpoint(const io::CheckpointData& data) {
  model::ModelConfig mcfg;
  try {
    mcfg = data.meta.at("model_config").get<model::ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw StateError(std::string("checkpoint missing model config: ") + e.what());
  }
  model::Seq2SeqModel model(mcfg);

  std::unordered_map<std::string, const io::NamedArray*> by_name;
  for (const io::NamedArray& a : data.arrays) by_name[a.name] = &a;

  for (auto& nt : model.named_tensors()) {
    auto it = by_name.find(nt.name);
    if (it == by_name.end())
      throw StateError("checkpoint missing tensor: " + nt.name);
    if (it->second->shape != nt.value->shape())
      throw ShapeError("checkpoint tensor shape mismatch for " + nt.name);
    nt.value->values() = it->second->data;
  }
  return model;
}

}  // namespace

Trainer Trainer::load_checkpoint(const std::filesystem::path& path) {
  const io::CheckpointData data = io::read_checkpoint(path);
  model::Seq2SeqModel model = model_from_checkpoint(data);

  TrainingConfig cfg;
  try {
    cfg = data.meta.at("training_config").get<TrainingConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw StateError(std::string("checkpoint missing training config: ") + e.what());
  }

  Trainer trainer(std::move(model), cfg);
  trainer.epoch_ = data.meta.value("epoch", 0);
  if (data.meta.contains("extra")) trainer.extra_meta = data.meta.at("extra");

  std::istringstream rng_state(data.meta.value("rng", std::string()));
  rng_state >> trainer.rng_;
  if (!rng_state && !data.meta.value("rng", std::string()).empty())
    throw StateError("checkpoint has a corrupt RNG state");

  const std::size_t adam_steps = data.meta.value("adam_steps", 0);
  if (adam_steps > 0) {
    std::unordered_map<std::string, const io::NamedArray*> by_name;
    for (const io::NamedArray& a : data.arrays) by_name[a.name] = &a;
    std::vector<Tensor> m, v;
    for (const auto& [name, p] : trainer.model_.trainable_params()) {
      auto im = by_name.find("adam.m." + name);
      auto iv = by_name.find("adam.v." + name);
      if (im == by_name.end() || iv == by_name.end())
        throw StateError("checkpoint missing optimizer state for " + name);
      m.emplace_back(p->value.shape(), im->second->data);
      v.emplace_back(p->value.shape(), iv->second->data);
    }
    trainer.adam_.restore(adam_steps, std::move(m), std::move(v));
  }
  return trainer;
}

LoadedModel load_model(const std::filesystem::path& path) {
  const io::CheckpointData data = io::read_checkpoint(path);
  return {model_from_checkpoint(data), data.meta};
}

}  // namespace dancegen::train
