// dancegen CLI: feature extraction, synthetic data, training, generation,
// evaluation and gradient self-checks.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "dancegen/gradcheck.hpp"
#include "dancegen/io.hpp"
#include "dancegen/synth.hpp"
#include "dancegen/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitState = 3;
constexpr int kExitNumeric = 4;

int worker_count() {
  const char* env = std::getenv("DANCEGEN_WORKERS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const int workers = std::min<int>(worker_count(), static_cast<int>(count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void write_effective_config(const fs::path& out_dir, const std::string& command,
                            const json& config) {
  std::ofstream out(out_dir / (command + "_effective_config.json"));
  out << config.dump(2) << "\n";
}

dancegen::dsp::AudioClip read_wav_16k(const fs::path& path) {
  dancegen::dsp::AudioClip clip = dancegen::io::read_wav(path);
  if (clip.sample_rate != dancegen::dsp::kExpectedSampleRate) {
    std::ostringstream msg;
    msg << path.string() << ": expected " << dancegen::dsp::kExpectedSampleRate
        << " Hz audio, got " << clip.sample_rate << " Hz (resampling not supported)";
    throw dancegen::InvalidInputError(msg.str());
  }
  return clip;
}

// --- features ---------------------------------------------------------------

struct FeaturesArgs {
  std::string audio;
  std::string out_dir;
  std::vector<double> snrs;
  int fps = dancegen::dsp::kDefaultFps;
  std::uint64_t seed = 0;
};

int run_features(const FeaturesArgs& args) {
  const dancegen::dsp::AudioClip clip = read_wav_16k(args.audio);
  fs::create_directories(args.out_dir);
  const std::string stem = fs::path(args.audio).stem().string();

  struct Variant {
    std::string name;
    double snr = 0.0;
    bool augmented = false;
  };
  std::vector<Variant> variants = {{stem + ".clean.feat"}};
  for (double snr : args.snrs) {
    std::ostringstream name;
    name << stem << ".snr" << snr << ".feat";
    variants.push_back({name.str(), snr, true});
  }

  parallel_for(variants.size(), [&](std::size_t i) {
    const Variant& v = variants[i];
    dancegen::dsp::AudioClip input = clip;
    if (v.augmented) {
      const dancegen::dsp::AudioClip noise = dancegen::dsp::white_noise(
          clip.samples.size(), clip.sample_rate, args.seed ^ (i * 0x9e3779b97f4a7c15ULL));
      input = dancegen::dsp::mix_noise(clip, noise, v.snr);
    }
    dancegen::dsp::FeatureTrack track = dancegen::dsp::feature_pipeline(input, args.fps);
    track.augmented = v.augmented;
    track.snr_db = v.snr;
    dancegen::io::write_features(fs::path(args.out_dir) / v.name, track);
    std::cout << v.name << ": " << track.blocks.size() << " blocks\n";
  });

  write_effective_config(args.out_dir, "features",
                         {{"audio", args.audio},
                          {"out", args.out_dir},
                          {"snrs", args.snrs},
                          {"fps", args.fps},
                          {"seed", args.seed}});
  return 0;
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  int tracks = 2;
  std::vector<double> bpms;
  double duration_s = 60.0;
  std::string pattern = "lateral_bounce";
  double noise_level = 0.01;
  std::uint64_t seed = 0;
  std::vector<double> snrs;
};

int run_synth(const SynthArgs& args) {
  std::vector<dancegen::synth::SynthSpec> specs;
  for (int i = 0; i < args.tracks; ++i) {
    dancegen::synth::SynthSpec spec;
    spec.bpm = args.bpms.empty() ? 92.0 + 11.0 * i
                                 : args.bpms[i % args.bpms.size()];
    spec.duration_s = args.duration_s;
    spec.pattern = dancegen::synth::pattern_from_string(args.pattern);
    spec.noise_level = args.noise_level;
    spec.seed = args.seed + static_cast<std::uint64_t>(i);
    specs.push_back(spec);
  }
  const fs::path manifest =
      dancegen::synth::gen_dataset(specs, args.out_dir, args.snrs);
  write_effective_config(args.out_dir, "synth",
                         {{"out", args.out_dir},
                          {"tracks", args.tracks},
                          {"bpms", args.bpms},
                          {"duration_s", args.duration_s},
                          {"pattern", args.pattern},
                          {"noise_level", args.noise_level},
                          {"seed", args.seed},
                          {"snrs", args.snrs}});
  std::cout << "manifest: " << manifest.string() << "\n";
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string out_dir;
  std::string config_file;
  dancegen::train::TrainingConfig cfg;
  std::size_t lstm_width = 500;
  std::size_t encoder_out = 65;
  std::vector<std::size_t> conv_channels = {16, 32, 64, 65};
  bool no_contrastive = false;
  bool teacher_forced = false;
};

int run_train(TrainArgs args, const CLI::App* cmd) {
  dancegen::model::ModelConfig mcfg;

  // Precedence: flags > config file > defaults.
  if (!args.config_file.empty()) {
    std::ifstream in(args.config_file);
    if (!in) throw dancegen::IoError("cannot open config file: " + args.config_file);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw dancegen::IoError(std::string("bad config file: ") + e.what());
    }
    if (j.contains("training")) args.cfg = j.at("training").get<dancegen::train::TrainingConfig>();
    if (j.contains("model")) mcfg = j.at("model").get<dancegen::model::ModelConfig>();
  }
  auto flag_given = [&](const std::string& name) { return cmd->count(name) > 0; };
  if (flag_given("--lstm-width") || args.config_file.empty())
    mcfg.lstm_width = args.lstm_width;
  if (flag_given("--enc-out") || args.config_file.empty())
    mcfg.encoder_out = args.encoder_out;
  if (flag_given("--conv-channels") || args.config_file.empty()) {
    mcfg.convs.clear();
    for (std::size_t ch : args.conv_channels) mcfg.convs.push_back({ch, 3, 2, 1});
  }
  if (args.no_contrastive) args.cfg.use_contrastive = false;
  if (args.teacher_forced) mcfg.teacher_forced = true;

  args.cfg.validate();
  mcfg.validate();

  const dancegen::train::Dataset data =
      dancegen::train::load_dataset(args.manifest, args.cfg.seed);

  dancegen::model::Seq2SeqModel model(mcfg);
  model.init_params(args.cfg.seed);
  dancegen::train::Trainer trainer(std::move(model), args.cfg);
  trainer.extra_meta = {{"scaler", data.tracks.front().motion.scaler},
                        {"fps", data.tracks.front().motion.fps}};

  fs::create_directories(args.out_dir);
  json effective = {{"manifest", args.manifest},
                    {"out", args.out_dir},
                    {"training", args.cfg},
                    {"model", mcfg}};
  write_effective_config(args.out_dir, "train", effective);

  std::ofstream log(fs::path(args.out_dir) / "training_log.jsonl");
  for (std::size_t epoch = 0; epoch < args.cfg.epochs; ++epoch) {
    const dancegen::train::EpochReport report = trainer.train_epoch(data);
    json line = {{"epoch", report.epoch},
                 {"mse", report.mean_mse},
                 {"contrastive", report.mean_contrastive},
                 {"combined", report.mean_combined},
                 {"batches", report.batches},
                 {"wall_seconds", report.wall_seconds}};
    log << line.dump() << "\n";
    log.flush();
    std::cout << line.dump() << "\n";

    std::ostringstream name;
    name << "checkpoint_epoch" << std::setfill('0') << std::setw(3) << report.epoch
         << ".ckpt";
    trainer.save_checkpoint(fs::path(args.out_dir) / name.str());
  }
  return 0;
}

// --- generate -----------------------------------------------------------------

struct GenerateArgs {
  std::string checkpoint;
  std::string audio;
  std::string out_motion;
  std::string latency_report;
};

int run_generate(const GenerateArgs& args) {
  dancegen::train::LoadedModel loaded = dancegen::train::load_model(args.checkpoint);
  const dancegen::dsp::AudioClip clip = read_wav_16k(args.audio);
  const dancegen::dsp::FeatureTrack features = dancegen::dsp::feature_pipeline(clip);

  const dancegen::model::ModelConfig& mcfg = loaded.model.config();
  if (mcfg.input_bins != dancegen::dsp::kBins ||
      mcfg.input_frames != dancegen::dsp::kFramesPerSlice)
    throw dancegen::StateError("checkpoint expects a different feature geometry");

  dancegen::model::GenerateStats stats;
  dancegen::motion::MotionSequence seq = loaded.model.generate(features.blocks, &stats);

  // Outputs live in normalized units; clamp only at export.
  for (dancegen::motion::MotionFrame& frame : seq.frames)
    for (double& v : frame)
      v = std::clamp(v, -dancegen::motion::kNormBound, dancegen::motion::kNormBound);
  if (loaded.meta.contains("extra") && loaded.meta["extra"].contains("scaler"))
    seq.scaler = loaded.meta["extra"]["scaler"].get<std::vector<double>>();

  dancegen::io::write_motion_csv(args.out_motion, seq);

  json report = {{"frames", stats.frames},
                 {"mean_ms_per_frame", stats.mean_ms},
                 {"max_ms_per_frame", stats.max_ms}};
  std::cout << report.dump() << "\n";
  const fs::path report_path = args.latency_report.empty()
                                   ? fs::path(args.out_motion).concat(".latency.json")
                                   : fs::path(args.latency_report);
  std::ofstream out(report_path);
  out << report.dump(2) << "\n";
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string motion;
  std::string beats;
  std::string reference;
  std::string out_report;
  double tolerance_s = dancegen::beat::kDefaultToleranceS;
};

int run_eval(const EvalArgs& args) {
  const dancegen::motion::MotionSequence raw =
      dancegen::io::read_motion_csv(args.motion);
  const dancegen::beat::BeatAnnotation reference_beats =
      dancegen::io::read_beats(args.beats);

  // Scale-normalize so files in raw units and in normalized units compare.
  const dancegen::motion::MotionSequence seq = dancegen::motion::normalize_motion(raw);
  const dancegen::beat::BeatAnnotation predicted =
      dancegen::beat::extract_motion_beats(seq);
  const dancegen::beat::MatchReport match =
      dancegen::beat::match_beats(predicted, reference_beats, args.tolerance_s);

  json report = {{"motion", args.motion},
                 {"beats", args.beats},
                 {"tolerance_s", args.tolerance_s},
                 {"predicted_beats", predicted.times.size()},
                 {"reference_beats", reference_beats.times.size()},
                 {"true_positives", match.true_positives},
                 {"false_positives", match.false_positives},
                 {"false_negatives", match.false_negatives},
                 {"f_score", match.f_score}};

  if (!args.reference.empty()) {
    const dancegen::motion::MotionSequence ref =
        dancegen::motion::normalize_motion(dancegen::io::read_motion_csv(args.reference));
    report["cross_entropy"] = dancegen::beat::cross_entropy(seq, ref);
  }

  std::cout << report.dump(2) << "\n";
  if (!args.out_report.empty()) {
    std::ofstream out(args.out_report);
    out << report.dump(2) << "\n";
  }
  return 0;
}

// --- gradcheck ----------------------------------------------------------------

int run_gradcheck(std::uint64_t seed) {
  const auto results = dancegen::gradcheck::run_gradient_checks(seed);
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name
              << ": max relative error " << r.max_rel_error << " (tolerance "
              << r.tolerance << ")\n";
  }
  return dancegen::gradcheck::all_passed(results) ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dancegen: audio power spectra in, basic dance steps out"};
  app.require_subcommand(1);

  FeaturesArgs features_args;
  CLI::App* features = app.add_subcommand("features", "Extract spectral feature files");
  features->add_option("--audio", features_args.audio, "Input WAV (mono, 16 kHz)")
      ->required();
  features->add_option("--out", features_args.out_dir, "Output directory")->required();
  features->add_option("--snr", features_args.snrs,
                       "Additional noise-augmented variants (dB)")
      ->delimiter(',');
  features->add_option("--fps", features_args.fps, "Motion frame rate");
  features->add_option("--seed", features_args.seed, "Noise seed");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--out", synth_args.out_dir, "Output directory")->required();
  synth->add_option("--tracks", synth_args.tracks, "Number of tracks")
      ->check(CLI::PositiveNumber);
  synth->add_option("--bpm", synth_args.bpms, "Tempo per track (cycled)")
      ->delimiter(',');
  synth->add_option("--duration", synth_args.duration_s, "Track length in seconds");
  synth->add_option("--pattern", synth_args.pattern,
                    "lateral_bounce | front_back | mixed");
  synth->add_option("--noise", synth_args.noise_level, "Motion jitter SD");
  synth->add_option("--seed", synth_args.seed, "Jitter seed");
  synth->add_option("--snr", synth_args.snrs, "Augmentation SNRs for the manifest")
      ->delimiter(',');

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model from a manifest");
  train->add_option("--manifest", train_args.manifest, "Training manifest")->required();
  train->add_option("--out", train_args.out_dir, "Output directory")->required();
  train->add_option("--config", train_args.config_file, "JSON config file");
  train->add_option("--epochs", train_args.cfg.epochs, "Training epochs");
  train->add_option("--batch", train_args.cfg.batch_size, "Windows per batch");
  train->add_option("--seq-len", train_args.cfg.seq_len, "Steps per window");
  train->add_option("--seed", train_args.cfg.seed, "Master seed");
  train->add_option("--lr", train_args.cfg.adam.lr, "Adam learning rate");
  train->add_option("--grad-noise", train_args.cfg.grad_noise_sigma0,
                    "Gradient noise sigma0 (0 disables)");
  train->add_option("--batches-per-epoch", train_args.cfg.batches_per_epoch,
                    "Batches per epoch (0 = auto)");
  train->add_option("--lstm-width", train_args.lstm_width, "LSTM units per layer");
  train->add_option("--enc-out", train_args.encoder_out, "Encoder output width");
  train->add_option("--conv-channels", train_args.conv_channels,
                    "Conv channels, e.g. 16,32,64,65")
      ->delimiter(',');
  train->add_flag("--no-contrastive", train_args.no_contrastive,
                  "Train the MSE-only baseline");
  train->add_flag("--teacher-forced", train_args.teacher_forced,
                  "Feed ground truth at every step (ablation)");

  GenerateArgs generate_args;
  CLI::App* generate = app.add_subcommand("generate", "Generate motion for audio");
  generate->add_option("--checkpoint", generate_args.checkpoint, "Model checkpoint")
      ->required();
  generate->add_option("--audio", generate_args.audio, "Input WAV (mono, 16 kHz)")
      ->required();
  generate->add_option("--out", generate_args.out_motion, "Output motion CSV")
      ->required();
  generate->add_option("--latency-report", generate_args.latency_report,
                       "Latency report path (default: <out>.latency.json)");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Score motion against beat annotations");
  eval->add_option("--motion", eval_args.motion, "Motion CSV to score")->required();
  eval->add_option("--beats", eval_args.beats, "Reference beat annotation")->required();
  eval->add_option("--reference", eval_args.reference,
                   "Reference motion CSV for cross entropy");
  eval->add_option("--out", eval_args.out_report, "Write the report JSON here");
  eval->add_option("--tolerance", eval_args.tolerance_s, "Match tolerance in seconds");

  std::uint64_t gradcheck_seed = 7;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Run gradient self-checks");
  gradcheck->add_option("--seed", gradcheck_seed, "Seed for the random fixtures");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (features->parsed()) return run_features(features_args);
    if (synth->parsed()) return run_synth(synth_args);
    if (train->parsed()) return run_train(train_args, train);
    if (generate->parsed()) return run_generate(generate_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (gradcheck->parsed()) return run_gradcheck(gradcheck_seed);
  } catch (const dancegen::StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitState;
  } catch (const dancegen::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const dancegen::InvalidInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const dancegen::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
