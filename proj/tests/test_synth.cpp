#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dancegen/motion.hpp"
#include "dancegen/synth.hpp"
#include "dancegen/training.hpp"

using namespace dancegen;
namespace fs = std::filesystem;

namespace {

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

synth::SynthSpec base_spec() {
  synth::SynthSpec spec;
  spec.bpm = 97.0;
  spec.duration_s = 20.0;
  spec.noise_level = 0.0;
  spec.seed = 1;
  return spec;
}

}  // namespace

TEST_CASE("beat_times period arithmetic") {
  const auto times = synth::beat_times(120.0, 2.0);
  REQUIRE(times.size() == 4);
  CHECK(times[0] == doctest::Approx(0.0));
  CHECK(times[1] == doctest::Approx(0.5));
  CHECK(times[2] == doctest::Approx(1.0));
  CHECK(times[3] == doctest::Approx(1.5));

  CHECK_THROWS_AS(synth::beat_times(0.0, 2.0), InvalidInputError);
}

TEST_CASE("synth spec validation") {
  synth::SynthSpec spec = base_spec();
  CHECK_NOTHROW(spec.validate());

  spec.bpm = 0.0;
  CHECK_THROWS_AS(spec.validate(), InvalidInputError);
  spec.bpm = 300.0;
  CHECK_THROWS_AS(spec.validate(), InvalidInputError);

  spec = base_spec();
  spec.duration_s = 5.0;
  CHECK_THROWS_AS(spec.validate(), InvalidInputError);

  CHECK_THROWS_AS(synth::pattern_from_string("waltz"), InvalidInputError);
  CHECK(synth::pattern_from_string("front_back") == synth::StepPattern::kFrontBack);
}

TEST_CASE("gen_music produces clicks at the annotated beats") {
  const auto [clip, beats] = synth::gen_music(base_spec());
  CHECK(clip.sample_rate == 16000);
  CHECK(clip.samples.size() == 320000);
  REQUIRE(beats.times.size() >= 30);

  // Energy-envelope oracle: short-window RMS peaks within +-5 ms of each beat.
  const int win = 80;  // 5 ms
  auto rms = [&](std::size_t center) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = center < win ? 0 : center - win;
         i < std::min(clip.samples.size(), center + win); ++i) {
      acc += clip.samples[i] * clip.samples[i];
      ++count;
    }
    return std::sqrt(acc / count);
  };

  for (std::size_t b = 1; b + 1 < beats.times.size(); ++b) {
    const auto beat_sample =
        static_cast<std::size_t>(std::llround(beats.times[b] * 16000));
    // Search for the local energy maximum within +-30 ms.
    double best_val = -1.0;
    long best_offset = 0;
    for (long off = -480; off <= 480; off += 16) {
      const double v = rms(beat_sample + off);
      if (v > best_val) {
        best_val = v;
        best_offset = off;
      }
    }
    CHECK(std::abs(best_offset) <= 80);  // within 5 ms
  }
}

TEST_CASE("gen_music is deterministic") {
  const auto [a, beats_a] = synth::gen_music(base_spec());
  const auto [b, beats_b] = synth::gen_music(base_spec());
  CHECK(a.samples == b.samples);
  CHECK(beats_a.times == beats_b.times);
}

TEST_CASE("gen_dance reverses direction exactly at the beats") {
  const synth::SynthSpec spec = base_spec();
  const auto [clip, beats] = synth::gen_music(spec);
  const motion::MotionSequence dance = synth::gen_dance(beats, spec);

  // Frame count aligns with the audio block count.
  const std::size_t blocks = dsp::block_count(clip.samples.size(), 30, 16000);
  CHECK(dance.frames.size() == blocks);
  CHECK(dance.dim() == 71);

  // Clean motion: extracted motion beats recover the annotation within one
  // frame (33 ms).
  const beat::BeatAnnotation recovered = beat::extract_motion_beats(dance);
  const beat::MatchReport report =
      beat::match_beats(recovered, beats, 1.0 / 30.0 + 1e-6);
  CHECK(report.f_score >= 0.95);

  SUBCASE("fewer than two beats is rejected") {
    beat::BeatAnnotation single{{0.0}};
    CHECK_THROWS_AS(synth::gen_dance(single, spec), InvalidInputError);
  }
}

TEST_CASE("weak labels on clean synthetic motion flip only near beats") {
  const synth::SynthSpec spec = base_spec();
  const auto [clip, beats] = synth::gen_music(spec);
  const motion::MotionSequence dance = synth::gen_dance(beats, spec);

  const motion::WeakLabelTrack track = motion::weak_labels(dance);
  // labels[j] belongs to frame j+2; a flip (0) must lie within 2 frames of a
  // beat, and every interior beat must have a flip nearby.
  const double fps = 30.0;
  std::vector<std::size_t> zero_frames;
  for (std::size_t j = 0; j < track.labels.size(); ++j)
    if (track.labels[j] == 0) zero_frames.push_back(j + 2);

  for (std::size_t frame : zero_frames) {
    double nearest = 1e9;
    for (double b : beats.times)
      nearest = std::min(nearest, std::abs(frame / fps - b));
    CHECK(nearest <= 2.5 / fps);
  }
  std::size_t matched_beats = 0;
  for (double b : beats.times) {
    if (b < 0.2 || b > (dance.frames.size() - 3) / fps) continue;
    bool found = false;
    for (std::size_t frame : zero_frames)
      if (std::abs(frame / fps - b) <= 2.5 / fps) found = true;
    matched_beats += found ? 1 : 0;
  }
  CHECK(matched_beats >= beats.times.size() - 4);
}

TEST_CASE("gen_dance jitter is seeded and bounded") {
  synth::SynthSpec spec = base_spec();
  spec.noise_level = 0.01;
  const auto [clip, beats] = synth::gen_music(spec);

  const motion::MotionSequence a = synth::gen_dance(beats, spec);
  const motion::MotionSequence b = synth::gen_dance(beats, spec);
  CHECK(a.frames == b.frames);

  spec.seed = 99;
  const motion::MotionSequence c = synth::gen_dance(beats, spec);
  CHECK(a.frames != c.frames);

  // Normalization keeps everything inside the bounds whatever the jitter.
  const motion::MotionSequence normalized = motion::normalize_motion(c);
  for (const auto& f : normalized.frames)
    for (double v : f) {
      CHECK(v >= -0.9);
      CHECK(v <= 0.9);
    }
}

TEST_CASE("front_back and mixed patterns also track the beat grid") {
  for (const auto pattern : {synth::StepPattern::kFrontBack, synth::StepPattern::kMixed}) {
    synth::SynthSpec spec = base_spec();
    spec.pattern = pattern;
    spec.duration_s = 30.0;
    const auto [clip, beats] = synth::gen_music(spec);
    const motion::MotionSequence dance = synth::gen_dance(beats, spec);
    const beat::BeatAnnotation recovered = beat::extract_motion_beats(dance);
    const beat::MatchReport report = beat::match_beats(recovered, beats, 0.070);
    CHECK(report.f_score >= 0.85);  // mixed loses a little at segment boundaries
  }
}

TEST_CASE("gen_dataset writes a loadable dataset") {
  const fs::path dir = fs::temp_directory_path() / "dancegen_synth_test";
  fs::remove_all(dir);

  synth::SynthSpec a = base_spec();
  synth::SynthSpec b = base_spec();
  b.bpm = 120.0;
  b.pattern = synth::StepPattern::kFrontBack;
  b.seed = 2;

  const fs::path manifest_path = synth::gen_dataset({a, b}, dir);
  CHECK(fs::exists(manifest_path));

  const io::Manifest manifest = io::read_manifest(manifest_path);
  REQUIRE(manifest.entries.size() == 2);
  for (const auto& entry : manifest.entries) {
    CHECK(fs::exists(io::resolve_manifest_path(manifest_path, entry.audio)));
    CHECK(fs::exists(io::resolve_manifest_path(manifest_path, entry.motion)));
    CHECK(fs::exists(io::resolve_manifest_path(manifest_path, entry.beats)));
  }

  SUBCASE("regeneration with the same seeds is byte-identical") {
    const std::string wav_before = file_bytes(dir / manifest.entries[0].audio);
    const std::string motion_before = file_bytes(dir / manifest.entries[0].motion);
    synth::gen_dataset({a, b}, dir);
    CHECK(file_bytes(dir / manifest.entries[0].audio) == wav_before);
    CHECK(file_bytes(dir / manifest.entries[0].motion) == motion_before);
  }

  SUBCASE("the training loader consumes the emitted files") {
    const train::Dataset data = train::load_dataset(manifest_path, 1);
    REQUIRE(data.tracks.size() == 2);
    for (const auto& track : data.tracks) {
      CHECK(track.num_blocks() > 0);
      const long diff = static_cast<long>(track.num_blocks()) -
                        static_cast<long>(track.motion.size());
      CHECK(std::abs(diff) <= 1);
      CHECK(track.labels.size() == track.motion.size() - 2);
      CHECK(!track.beats.times.empty());
      for (const auto& f : track.motion.frames)
        for (double v : f) {
          CHECK(v >= -0.9);
          CHECK(v <= 0.9);
        }
    }
  }
}
