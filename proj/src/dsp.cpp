#include "dancegen/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <limits>
#include <mutex>
#include <random>

namespace dancegen::dsp {

double signal_power(std::span<const double> samples) {
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
}

AudioClip white_noise(std::size_t num_samples, int sample_rate, std::uint64_t seed,
                      double amplitude) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(num_samples);
  for (double& s : clip.samples) s = amplitude * dist(rng);
  return clip;
}

AudioClip mix_noise(const AudioClip& clip, const AudioClip& noise, double snr_db) {
  if (noise.samples.size() != clip.samples.size())
    throw InvalidInputError("mix_noise: clip and noise lengths differ");
  const double p_clip = signal_power(clip.samples);
  const double p_noise = signal_power(noise.samples);
  if (p_clip <= 0.0) throw InvalidInputError("mix_noise: silent clip");
  if (p_noise <= 0.0) throw InvalidInputError("mix_noise: silent noise");

  const double alpha = std::sqrt(p_clip / (p_noise * std::pow(10.0, snr_db / 10.0)));
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.resize(clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    out.samples[i] = clip.samples[i] + alpha * noise.samples[i];
  return out;
}

std::vector<double> slice_for_motion_frame(const AudioClip& clip, std::size_t t,
                                           int fps) {
  if (fps <= 0) throw InvalidInputError("slice_for_motion_frame: fps must be positive");
  const double exact = static_cast<double>(t) * clip.sample_rate / fps;
  const std::size_t start = static_cast<std::size_t>(std::llround(exact));
  if (start + kSliceSamples > clip.samples.size())
    throw OutOfRangeError("slice_for_motion_frame: window overruns clip end");
  return std::vector<double>(clip.samples.begin() + start,
                             clip.samples.begin() + start + kSliceSamples);
}

namespace {

// One shared FFTW plan; new-array execution on per-call buffers is
// thread-safe, plan creation is not.
fftw_plan stft_plan() {
  static std::once_flag flag;
  static fftw_plan plan = nullptr;
  std::call_once(flag, [] {
    std::vector<double> in(kStftFrameSamples, 0.0);
    std::vector<fftw_complex> out(kBins);
    plan = fftw_plan_dft_r2c_1d(kStftFrameSamples, in.data(), out.data(),
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  });
  return plan;
}

const std::vector<double>& hann_window() {
  static const std::vector<double> window = [] {
    std::vector<double> w(kStftFrameSamples);
    for (int n = 0; n < kStftFrameSamples; ++n)
      w[n] = 0.5 * (1.0 - std::cos(2.0 * M_PI * n / kStftFrameSamples));
    return w;
  }();
  return window;
}

}  // namespace

PowerMatrix stft_power(std::span<const double> window) {
  if (window.size() != kSliceSamples)
    throw InvalidInputError("stft_power: input must be exactly one slice");

  PowerMatrix out;
  out.values.assign(static_cast<std::size_t>(kBins) * kFramesPerSlice, 0.0);

  const std::vector<double>& hann = hann_window();
  std::vector<double> frame(kStftFrameSamples);
  std::vector<fftw_complex> spectrum(kBins);
  fftw_plan plan = stft_plan();

  for (int f = 0; f < kFramesPerSlice; ++f) {
    const int start = f * kStftShiftSamples;
    for (int n = 0; n < kStftFrameSamples; ++n)
      frame[n] = window[start + n] * hann[n];
    fftw_execute_dft_r2c(plan, frame.data(), spectrum.data());
    for (int k = 0; k < kBins; ++k)
      out.at(k, f) = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
  }
  return out;
}

BinStats compute_bin_stats(std::span<const PowerMatrix> blocks) {
  BinStats stats;
  stats.min_power.assign(kBins, std::numeric_limits<double>::infinity());
  stats.max_power.assign(kBins, -std::numeric_limits<double>::infinity());
  for (const PowerMatrix& block : blocks) {
    for (int b = 0; b < kBins; ++b) {
      for (int f = 0; f < block.frames; ++f) {
        const double v = block.at(b, f);
        stats.min_power[b] = std::min(stats.min_power[b], v);
        stats.max_power[b] = std::max(stats.max_power[b], v);
      }
    }
  }
  return stats;
}

SpectralBlock normalize_power(const PowerMatrix& raw, const BinStats& stats,
                              int frame_index) {
  if (stats.min_power.size() != static_cast<std::size_t>(raw.bins) ||
      stats.max_power.size() != static_cast<std::size_t>(raw.bins))
    throw InvalidInputError("normalize_power: stats do not match bin count");

  SpectralBlock block;
  block.frame_index = frame_index;
  block.bins = raw.bins;
  block.frames = raw.frames;
  block.power.resize(raw.values.size());
  for (int b = 0; b < raw.bins; ++b) {
    const double lo = stats.min_power[b];
    const double hi = stats.max_power[b];
    const double range = hi - lo;
    for (int f = 0; f < raw.frames; ++f) {
      const std::size_t i = static_cast<std::size_t>(b) * raw.frames + f;
      // 0.9 * (2u - 1) with u in [0, 1] lands exactly on +-0.9 at the extrema.
      block.power[i] =
          range > 0.0 ? kNormBound * (2.0 * (raw.values[i] - lo) / range - 1.0) : 0.0;
    }
  }
  return block;
}

std::size_t block_count(std::size_t num_samples, int fps, int sample_rate) {
  if (num_samples < kSliceSamples) return 0;
  const auto usable = static_cast<double>(num_samples - kSliceSamples);
  return static_cast<std::size_t>(std::floor(usable * fps / sample_rate)) + 1;
}

FeatureTrack feature_pipeline(const AudioClip& clip, int fps) {
  if (clip.sample_rate <= 0)
    throw InvalidInputError("feature_pipeline: sample rate must be positive");
  for (double s : clip.samples)
    if (!std::isfinite(s)) throw InvalidInputError("feature_pipeline: non-finite sample");

  const std::size_t count = block_count(clip.samples.size(), fps, clip.sample_rate);
  if (count == 0)
    throw InvalidInputError("feature_pipeline: clip shorter than one slice");

  std::vector<PowerMatrix> raw;
  raw.reserve(count);
  for (std::size_t t = 0; t < count; ++t)
    raw.push_back(stft_power(slice_for_motion_frame(clip, t, fps)));

  FeatureTrack track;
  track.sample_rate = clip.sample_rate;
  track.fps = fps;
  track.stats = compute_bin_stats(raw);
  track.blocks.reserve(count);
  for (std::size_t t = 0; t < count; ++t)
    track.blocks.push_back(normalize_power(raw[t], track.stats, static_cast<int>(t)));
  return track;
}

}  // namespace dancegen::dsp
