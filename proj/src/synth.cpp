#include "dancegen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "dancegen/io.hpp"

namespace dancegen::synth {

namespace {

constexpr int kSampleRate = dsp::kExpectedSampleRate;
constexpr int kFps = motion::kDefaultFps;

// Chord bed under the clicks.
constexpr double kBedFreqs[] = {220.0, 277.18, 329.63};
constexpr double kBedAmp = 0.08;
constexpr double kClickFreq = 2000.0;
constexpr double kClickAmp = 0.7;
constexpr double kClickDecayS = 0.008;
constexpr double kClickLengthS = 0.033;

// Oscillation layout: a vertical root bounce carries the SD swing that the
// weak labels read, the lateral/front-back travel carries the step.
constexpr double kBounceBase = 1.5;
constexpr double kBounceAmp = 0.5;
constexpr double kTravelAmp = 0.25;
constexpr double kArmBaseDeg = 25.0;
constexpr double kArmSwingDeg = 10.0;
constexpr int kMixedSegmentBeats = 8;

}  // namespace

StepPattern pattern_from_string(const std::string& name) {
  if (name == "lateral_bounce") return StepPattern::kLateralBounce;
  if (name == "front_back") return StepPattern::kFrontBack;
  if (name == "mixed") return StepPattern::kMixed;
  throw InvalidInputError("unknown step pattern: " + name);
}

std::string pattern_to_string(StepPattern pattern) {
  switch (pattern) {
    case StepPattern::kLateralBounce: return "lateral_bounce";
    case StepPattern::kFrontBack: return "front_back";
    case StepPattern::kMixed: return "mixed";
  }
  throw InvalidInputError("unknown step pattern value");
}

void SynthSpec::validate() const {
  if (!(bpm >= 60.0 && bpm <= 200.0))
    throw InvalidInputError("synth spec: bpm must be in [60, 200]");
  if (!(duration_s >= 10.0))
    throw InvalidInputError("synth spec: duration must be at least 10 s");
  if (noise_level < 0.0)
    throw InvalidInputError("synth spec: noise level must be non-negative");
}

std::vector<double> beat_times(double bpm, double duration_s) {
  if (bpm <= 0.0) throw InvalidInputError("beat_times: bpm must be positive");
  const double period = 60.0 / bpm;
  std::vector<double> times;
  for (double t = 0.0; t < duration_s; t += period) times.push_back(t);
  return times;
}

std::pair<dsp::AudioClip, beat::BeatAnnotation> gen_music(const SynthSpec& spec) {
  spec.validate();
  dsp::AudioClip clip;
  clip.sample_rate = kSampleRate;
  clip.samples.assign(static_cast<std::size_t>(std::llround(spec.duration_s * kSampleRate)),
                      0.0);

  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    double v = 0.0;
    for (double f : kBedFreqs) v += kBedAmp * std::sin(2.0 * M_PI * f * t);
    clip.samples[i] = v;
  }

  beat::BeatAnnotation beats;
  beats.times = beat_times(spec.bpm, spec.duration_s);
  const int click_len = static_cast<int>(kClickLengthS * kSampleRate);
  for (double beat_t : beats.times) {
    const std::size_t start = static_cast<std::size_t>(std::llround(beat_t * kSampleRate));
    for (int k = 0; k < click_len && start + k < clip.samples.size(); ++k) {
      const double tau = static_cast<double>(k) / kSampleRate;
      clip.samples[start + k] +=
          kClickAmp * std::sin(2.0 * M_PI * kClickFreq * tau) * std::exp(-tau / kClickDecayS);
    }
  }
  return {std::move(clip), std::move(beats)};
}

namespace {

// Piecewise-linear beat phase: multiples of pi at the beats.
double beat_phase(const std::vector<double>& beats, double t) {
  const std::size_t n = beats.size();
  if (t <= beats.front()) {
    const double rate = M_PI / (beats[1] - beats[0]);
    return (t - beats.front()) * rate;
  }
  if (t >= beats.back()) {
    const double rate = M_PI / (beats[n - 1] - beats[n - 2]);
    return M_PI * static_cast<double>(n - 1) + (t - beats.back()) * rate;
  }
  const auto it = std::upper_bound(beats.begin(), beats.end(), t);
  const std::size_t b = static_cast<std::size_t>(it - beats.begin()) - 1;
  const double frac = (t - beats[b]) / (beats[b + 1] - beats[b]);
  return M_PI * (static_cast<double>(b) + frac);
}

struct OscComponent {
  int index;
  double base;
  double amplitude;
};

void set_quat(motion::MotionFrame& frame, int begin, const motion::Quaternion& q) {
  frame[begin] = q.x;
  frame[begin + 1] = q.y;
  frame[begin + 2] = q.z;
  frame[begin + 3] = q.w;
}

int joint_index(const motion::SkeletonLayout& layout, const std::string& name) {
  for (const motion::JointEntry& e : layout.entries())
    if (e.name == name) return e.begin;
  throw StateError("unknown joint: " + name);
}

}  // namespace

motion::MotionSequence gen_dance(const beat::BeatAnnotation& beats,
                                 const SynthSpec& spec) {
  spec.validate();
  if (beats.times.size() < 2)
    throw InvalidInputError("gen_dance: need at least 2 beats");

  const motion::SkeletonLayout& layout = motion::SkeletonLayout::standard();
  const int root = joint_index(layout, "root");
  const int l_shoulder = joint_index(layout, "left_shoulder");
  const int r_shoulder = joint_index(layout, "right_shoulder");
  const int l_thigh = joint_index(layout, "left_thigh");
  const int r_thigh = joint_index(layout, "right_thigh");

  const std::size_t num_samples =
      static_cast<std::size_t>(std::llround(spec.duration_s * kSampleRate));
  const std::size_t frames = dsp::block_count(num_samples, kFps, kSampleRate);

  const double beat_period = beats.times[1] - beats.times[0];

  motion::MotionSequence seq;
  seq.fps = kFps;
  seq.frames.reserve(frames);

  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / kFps;
    const double c = std::cos(beat_phase(beats.times, t));

    // Pattern weights; "mixed" crossfades over one beat period at every
    // segment boundary so the motion stays continuous.
    double w_lateral = 1.0, w_front = 0.0;
    if (spec.pattern == StepPattern::kFrontBack) {
      w_lateral = 0.0;
      w_front = 1.0;
    } else if (spec.pattern == StepPattern::kMixed) {
      const double beats_elapsed = t / beat_period;
      const double seg = beats_elapsed / kMixedSegmentBeats;
      const std::size_t seg_index = static_cast<std::size_t>(seg);
      const double seg_frac = (seg - static_cast<double>(seg_index)) *
                              static_cast<double>(kMixedSegmentBeats);
      double w_new = seg_frac < 1.0 ? seg_frac : 1.0;  // ramp over first beat
      const bool front_active = seg_index % 2 == 1;
      w_front = front_active ? w_new : 1.0 - w_new;
      w_lateral = 1.0 - w_front;
    }

    motion::MotionFrame frame(motion::kMotionDim, 0.0);
    for (const motion::JointEntry& e : layout.entries())
      if (e.kind == motion::JointEntry::Kind::kRotation4)
        set_quat(frame, e.begin, motion::Quaternion{});

    frame[root + 1] = kBounceBase + kBounceAmp * c;  // vertical bounce
    frame[root + 0] = w_lateral * kTravelAmp * c;
    frame[root + 2] = w_front * kTravelAmp * c;

    const double arm_deg = kArmBaseDeg + kArmSwingDeg * c;
    set_quat(frame, l_shoulder,
             motion::quaternion_from_euler(0.0, 0.0, w_lateral * arm_deg));
    set_quat(frame, r_shoulder,
             motion::quaternion_from_euler(0.0, 0.0, -w_lateral * arm_deg));
    set_quat(frame, l_thigh, motion::quaternion_from_euler(w_front * arm_deg, 0.0, 0.0));
    set_quat(frame, r_thigh, motion::quaternion_from_euler(-w_front * arm_deg, 0.0, 0.0));

    seq.frames.push_back(std::move(frame));
  }

  if (spec.noise_level > 0.0) {
    // Jitter with SD noise_level in normalized units: scale by each
    // component's max-abs over the clean track.
    std::vector<double> max_abs(motion::kMotionDim, 0.0);
    for (const motion::MotionFrame& f : seq.frames)
      for (int c = 0; c < motion::kMotionDim; ++c)
        max_abs[c] = std::max(max_abs[c], std::abs(f[c]));

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> jitter(0.0, 1.0);
    for (motion::MotionFrame& f : seq.frames)
      for (int c = 0; c < motion::kMotionDim; ++c)
        if (max_abs[c] > 0.0)
          f[c] += spec.noise_level * max_abs[c] / motion::kNormBound * jitter(rng);
  }
  return seq;
}

std::filesystem::path gen_dataset(const std::vector<SynthSpec>& specs,
                                  const std::filesystem::path& out_dir,
                                  const std::vector<double>& snrs) {
  if (specs.empty()) throw InvalidInputError("gen_dataset: no specs");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " +
                        ec.message());

  io::Manifest manifest;
  manifest.snrs = snrs;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].validate();
    std::ostringstream stem;
    stem << "track" << i << "_" << pattern_to_string(specs[i].pattern);

    const auto [clip, beats] = gen_music(specs[i]);
    const motion::MotionSequence dance = gen_dance(beats, specs[i]);

    io::ManifestEntry entry;
    entry.audio = stem.str() + ".wav";
    entry.motion = stem.str() + ".motion.csv";
    entry.beats = stem.str() + ".beats.txt";
    try {
      io::write_wav(out_dir / entry.audio, clip);
      io::write_motion_csv(out_dir / entry.motion, dance);
      io::write_beats(out_dir / entry.beats, beats);
    } catch (const IoError& e) {
      throw IoError("gen_dataset: while writing track " + stem.str() + ": " + e.what());
    }
    manifest.entries.push_back(std::move(entry));
  }
  const std::filesystem::path manifest_path = out_dir / "manifest.json";
  io::write_manifest(manifest_path, manifest);
  return manifest_path;
}

}  // namespace dancegen::synth
