#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dancegen/dsp.hpp"

using namespace dancegen;
using dsp::AudioClip;

namespace {

// Independent oracle: literal DFT over all bins with a Hann window.
std::vector<double> dft_power_frame(const std::vector<double>& slice, int frame) {
  std::vector<double> power(dsp::kBins);
  const int start = frame * dsp::kStftShiftSamples;
  for (int k = 0; k < dsp::kBins; ++k) {
    double re = 0.0, im = 0.0;
    for (int n = 0; n < dsp::kStftFrameSamples; ++n) {
      const double hann =
          0.5 * (1.0 - std::cos(2.0 * M_PI * n / dsp::kStftFrameSamples));
      const double v = slice[start + n] * hann;
      const double angle = -2.0 * M_PI * k * n / dsp::kStftFrameSamples;
      re += v * std::cos(angle);
      im += v * std::sin(angle);
    }
    power[k] = re * re + im * im;
  }
  return power;
}

AudioClip tone(double freq_hz, std::size_t samples, double amp = 0.5) {
  AudioClip clip;
  clip.samples.resize(samples);
  for (std::size_t i = 0; i < samples; ++i)
    clip.samples[i] = amp * std::sin(2.0 * M_PI * freq_hz * i / clip.sample_rate);
  return clip;
}

}  // namespace

TEST_CASE("mix_noise computes the power-matched scale") {
  AudioClip clip;
  clip.samples.assign(1000, 0.2);  // power 0.04
  AudioClip noise;
  noise.samples.assign(1000, 0.1);  // power 0.01

  SUBCASE("equal powers at 0 dB leave the noise unscaled") {
    AudioClip noise_eq;
    noise_eq.samples.assign(1000, -0.2);
    const AudioClip out = dsp::mix_noise(clip, noise_eq, 0.0);
    for (double s : out.samples) CHECK(s == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("10 dB case matches the closed form") {
    const AudioClip out = dsp::mix_noise(clip, noise, 10.0);
    const double alpha = (out.samples[0] - 0.2) / 0.1;
    CHECK(alpha == doctest::Approx(std::sqrt(0.4)).epsilon(1e-12));
    CHECK(alpha == doctest::Approx(0.6324555320336759).epsilon(1e-12));
  }

  SUBCASE("very large SNR leaves the clip almost unchanged") {
    const AudioClip out = dsp::mix_noise(clip, noise, 200.0);
    for (std::size_t i = 0; i < out.samples.size(); ++i)
      CHECK(std::abs(out.samples[i] - clip.samples[i]) < 1e-9);
  }

  SUBCASE("silent clip is rejected") {
    AudioClip silent;
    silent.samples.assign(1000, 0.0);
    CHECK_THROWS_AS(dsp::mix_noise(silent, noise, 0.0), InvalidInputError);
  }

  SUBCASE("length mismatch is rejected") {
    AudioClip longer;
    longer.samples.assign(1001, 0.1);
    CHECK_THROWS_AS(dsp::mix_noise(clip, longer, 0.0), InvalidInputError);
  }
}

TEST_CASE("mix_noise hits the requested SNR on random signals") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist(0.0, 0.3);
  for (double snr : {-5.0, 0.0, 5.0, 10.0, 20.0}) {
    AudioClip clip, noise;
    clip.samples.resize(4096);
    noise.samples.resize(4096);
    for (auto& s : clip.samples) s = dist(rng);
    for (auto& s : noise.samples) s = dist(rng);

    const AudioClip out = dsp::mix_noise(clip, noise, snr);
    std::vector<double> added(out.samples.size());
    for (std::size_t i = 0; i < added.size(); ++i)
      added[i] = out.samples[i] - clip.samples[i];
    const double measured =
        10.0 * std::log10(dsp::signal_power(clip.samples) / dsp::signal_power(added));
    CHECK(measured == doctest::Approx(snr).epsilon(1e-9));
  }
}

TEST_CASE("slice_for_motion_frame rounds the start to the nearest sample") {
  AudioClip clip;
  clip.samples.resize(20000);
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    clip.samples[i] = static_cast<double>(i);

  const auto first = dsp::slice_for_motion_frame(clip, 0);
  REQUIRE(first.size() == 534);
  CHECK(first[0] == 0.0);
  CHECK(first[533] == 533.0);

  // 16000/30 = 533.33, rounds down to 533.
  const auto second = dsp::slice_for_motion_frame(clip, 1);
  CHECK(second[0] == 533.0);

  // 2 * 533.33 rounds up to 1067.
  const auto third = dsp::slice_for_motion_frame(clip, 2);
  CHECK(third[0] == 1067.0);

  CHECK_THROWS_AS(dsp::slice_for_motion_frame(clip, 100000), OutOfRangeError);
}

TEST_CASE("stft_power matches the direct DFT oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> slice(dsp::kSliceSamples);
  for (auto& s : slice) s = dist(rng);

  const dsp::PowerMatrix out = dsp::stft_power(slice);
  REQUIRE(out.bins == 81);
  REQUIRE(out.frames == 5);
  double scale = 0.0;
  for (double v : out.values) scale = std::max(scale, v);
  for (int f = 0; f < dsp::kFramesPerSlice; ++f) {
    const std::vector<double> oracle = dft_power_frame(slice, f);
    for (int k = 0; k < dsp::kBins; ++k)
      CHECK(out.at(k, f) == doctest::Approx(oracle[k]).epsilon(1e-9).scale(scale));
  }
}

TEST_CASE("stft_power of a 1 kHz tone peaks at bin 10 in every frame") {
  const AudioClip clip = tone(1000.0, dsp::kSliceSamples);
  const dsp::PowerMatrix out = dsp::stft_power(clip.samples);
  for (int f = 0; f < dsp::kFramesPerSlice; ++f) {
    int argmax = 0;
    for (int k = 1; k < dsp::kBins; ++k)
      if (out.at(k, f) > out.at(argmax, f)) argmax = k;
    CHECK(argmax == 10);
  }
}

TEST_CASE("stft_power edge inputs") {
  SUBCASE("all zeros give an all-zero matrix") {
    std::vector<double> zeros(dsp::kSliceSamples, 0.0);
    const dsp::PowerMatrix out = dsp::stft_power(zeros);
    for (double v : out.values) CHECK(v == 0.0);
  }
  SUBCASE("a DC offset concentrates energy in bin 0") {
    std::vector<double> dc(dsp::kSliceSamples, 0.7);
    const dsp::PowerMatrix out = dsp::stft_power(dc);
    for (int f = 0; f < dsp::kFramesPerSlice; ++f) {
      int argmax = 0;
      for (int k = 1; k < dsp::kBins; ++k)
        if (out.at(k, f) > out.at(argmax, f)) argmax = k;
      CHECK(argmax == 0);
    }
  }
  SUBCASE("wrong length is rejected") {
    std::vector<double> bad(100, 0.0);
    CHECK_THROWS_AS(dsp::stft_power(bad), InvalidInputError);
  }
}

TEST_CASE("stft total power grows linearly with white-noise variance") {
  std::mt19937_64 rng(17);
  double total_low = 0.0, total_high = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::normal_distribution<double> low(0.0, 0.1), high(0.0, 0.2);
    std::vector<double> a(dsp::kSliceSamples), b(dsp::kSliceSamples);
    for (auto& s : a) s = low(rng);
    for (auto& s : b) s = high(rng);
    for (double v : dsp::stft_power(a).values) total_low += v;
    for (double v : dsp::stft_power(b).values) total_high += v;
  }
  CHECK(total_high / total_low == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("normalize_power maps the track extrema to +-0.9") {
  dsp::PowerMatrix raw;
  raw.bins = dsp::kBins;
  raw.frames = dsp::kFramesPerSlice;
  raw.values.assign(static_cast<std::size_t>(raw.bins) * raw.frames, 0.0);

  dsp::BinStats stats;
  stats.min_power.assign(dsp::kBins, 0.0);
  stats.max_power.assign(dsp::kBins, 4.0);
  stats.max_power[5] = 0.0;  // constant bin

  raw.at(0, 0) = 2.0;
  raw.at(0, 1) = 4.0;
  raw.at(1, 0) = 0.0;
  raw.at(5, 2) = 0.0;

  const dsp::SpectralBlock block = dsp::normalize_power(raw, stats, 0);
  CHECK(block.at(0, 0) == doctest::Approx(0.0));
  CHECK(block.at(0, 1) == doctest::Approx(0.9));
  CHECK(block.at(1, 0) == doctest::Approx(-0.9));
  CHECK(block.at(5, 2) == 0.0);
}

TEST_CASE("feature_pipeline normalization invariants") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> dist(-0.8, 0.8);
  AudioClip clip;
  clip.samples.resize(16000);
  for (auto& s : clip.samples) s = dist(rng);

  const dsp::FeatureTrack track = dsp::feature_pipeline(clip);
  CHECK(track.blocks.size() == 29);  // floor((16000-534)*30/16000)+1

  std::vector<double> bin_max(dsp::kBins, -1.0);
  std::vector<double> bin_min(dsp::kBins, 1.0);
  for (const dsp::SpectralBlock& block : track.blocks) {
    for (int b = 0; b < block.bins; ++b)
      for (int f = 0; f < block.frames; ++f) {
        const double v = block.at(b, f);
        CHECK(v >= -0.9);
        CHECK(v <= 0.9);
        bin_max[b] = std::max(bin_max[b], v);
        bin_min[b] = std::min(bin_min[b], v);
      }
  }
  for (int b = 0; b < dsp::kBins; ++b) {
    CHECK(bin_max[b] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(bin_min[b] == doctest::Approx(-0.9).epsilon(1e-12));
  }
}

TEST_CASE("feature_pipeline boundary lengths") {
  AudioClip minimal;
  minimal.samples.assign(534, 0.1);
  minimal.samples[0] = 0.5;
  CHECK(dsp::feature_pipeline(minimal).blocks.size() == 1);

  AudioClip short_clip;
  short_clip.samples.assign(533, 0.1);
  CHECK_THROWS_AS(dsp::feature_pipeline(short_clip), InvalidInputError);
}

TEST_CASE("block_count matches the closed form for random lengths") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> len_dist(534, 200000);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = len_dist(rng);
    const std::size_t closed =
        static_cast<std::size_t>(
            std::floor(static_cast<double>(len - 534) * 30.0 / 16000.0)) +
        1;
    CHECK(dsp::block_count(len, 30, 16000) == closed);

    // Brute-force enumeration of windows that fit under the rounding rule;
    // the closed form never overcounts and misses at most one final window.
    std::size_t fit = 0;
    while (true) {
      const auto start = static_cast<std::size_t>(
          std::llround(static_cast<double>(fit) * 16000.0 / 30.0));
      if (start + 534 > len) break;
      ++fit;
    }
    CHECK(fit >= closed);
    CHECK(fit - closed <= 1);
  }
}

TEST_CASE("white_noise is deterministic per seed") {
  const AudioClip a = dsp::white_noise(256, 16000, 99);
  const AudioClip b = dsp::white_noise(256, 16000, 99);
  const AudioClip c = dsp::white_noise(256, 16000, 100);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
}
