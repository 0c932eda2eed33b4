#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dancegen/beat.hpp"
#include "dancegen/dsp.hpp"
#include "dancegen/motion.hpp"

namespace dancegen::synth {

enum class StepPattern { kLateralBounce, kFrontBack, kMixed };

StepPattern pattern_from_string(const std::string& name);
std::string pattern_to_string(StepPattern pattern);

/// Recipe for one synthetic track: tempo, length, dance pattern, motion
/// jitter (SD in normalized units) and the seed driving the jitter.
struct SynthSpec {
  double bpm = 100.0;
  double duration_s = 30.0;
  StepPattern pattern = StepPattern::kLateralBounce;
  double noise_level = 0.01;
  std::uint64_t seed = 0;

  void validate() const;  // 60 <= bpm <= 200, duration >= 10 s
};

/// Beat grid: one beat every 60/bpm seconds starting at zero.
std::vector<double> beat_times(double bpm, double duration_s);

/// 16 kHz audio: a constant chord bed plus a decaying 2 kHz click at every
/// beat. Returns the clip and the exact beat annotation.
std::pair<dsp::AudioClip, beat::BeatAnnotation> gen_music(const SynthSpec& spec);

/// Raw 71-dim motion at 30 fps whose movement direction reverses exactly at
/// the beat times, plus Gaussian jitter of SD noise_level (normalized units).
/// Frame count matches the feature block count of the gen_music clip.
motion::MotionSequence gen_dance(const beat::BeatAnnotation& beats,
                                 const SynthSpec& spec);

/// Writes WAV + motion CSV + beat annotation per spec and a training
/// manifest. Returns the manifest path.
std::filesystem::path gen_dataset(const std::vector<SynthSpec>& specs,
                                  const std::filesystem::path& out_dir,
                                  const std::vector<double>& snrs = {});

}  // namespace dancegen::synth
