#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dancegen/common.hpp"

namespace dancegen::dsp {

// Front-end geometry: one motion frame maps to a 534-sample slice that is
// split into 5 Hann-windowed 160-point frames with an 80-sample shift, giving
// an 81x5 one-sided power matrix.
inline constexpr int kSliceSamples = 534;
inline constexpr int kStftFrameSamples = 160;
inline constexpr int kStftShiftSamples = 80;
inline constexpr int kBins = kStftFrameSamples / 2 + 1;  // 81
inline constexpr int kFramesPerSlice =
    (kSliceSamples - kStftFrameSamples) / kStftShiftSamples + 1;  // 5
inline constexpr int kDefaultFps = 30;
inline constexpr int kExpectedSampleRate = 16000;
inline constexpr double kNormBound = 0.9;

/// Mono PCM audio, samples nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kExpectedSampleRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Raw (unnormalized) one-sided power matrix for one motion frame.
struct PowerMatrix {
  std::vector<double> values;  // bins x frames, bin-major
  int bins = kBins;
  int frames = kFramesPerSlice;

  double& at(int bin, int frame) { return values[bin * frames + frame]; }
  double at(int bin, int frame) const { return values[bin * frames + frame]; }
};

/// Track-wide per-frequency-bin extrema used for normalization.
struct BinStats {
  std::vector<double> min_power;
  std::vector<double> max_power;
};

/// Normalized network input block: bins x frames, entries in [-0.9, 0.9].
struct SpectralBlock {
  std::vector<double> power;  // bin-major, bins x frames
  int frame_index = 0;
  int bins = kBins;
  int frames = kFramesPerSlice;

  double at(int bin, int frame) const { return power[bin * frames + frame]; }
};

/// A full track of blocks plus the stats that produced them.
struct FeatureTrack {
  std::vector<SpectralBlock> blocks;
  BinStats stats;
  int sample_rate = kExpectedSampleRate;
  int fps = kDefaultFps;
  double snr_db = 0.0;  // meaningful only when augmented
  bool augmented = false;
};

/// Mean squared amplitude.
double signal_power(std::span<const double> samples);

/// White Gaussian noise clip, unit variance scaled by `amplitude`.
AudioClip white_noise(std::size_t num_samples, int sample_rate, std::uint64_t seed,
                      double amplitude = 1.0);

/// Adds `noise` to `clip` scaled so the output signal-to-noise ratio equals
/// `snr_db`. Lengths must match; both signals must carry power.
AudioClip mix_noise(const AudioClip& clip, const AudioClip& noise, double snr_db);

/// The 534-sample window aligned to motion frame `t` (start rounded to the
/// nearest sample). Throws OutOfRangeError when the window overruns the clip.
std::vector<double> slice_for_motion_frame(const AudioClip& clip, std::size_t t,
                                           int fps = kDefaultFps);

/// Hann-windowed one-sided STFT power of one 534-sample slice.
PowerMatrix stft_power(std::span<const double> window);

/// Per-bin extrema over all frames of all blocks of one track.
BinStats compute_bin_stats(std::span<const PowerMatrix> blocks);

/// Linearly maps each bin so its track-wide min/max land on -0.9/+0.9.
/// Constant bins map to 0.
SpectralBlock normalize_power(const PowerMatrix& raw, const BinStats& stats,
                              int frame_index);

/// Number of complete motion-frame slices in a clip of `num_samples` samples.
std::size_t block_count(std::size_t num_samples, int fps, int sample_rate);

/// Full front end: slice, STFT, track-wide normalization.
FeatureTrack feature_pipeline(const AudioClip& clip, int fps = kDefaultFps);

}  // namespace dancegen::dsp
