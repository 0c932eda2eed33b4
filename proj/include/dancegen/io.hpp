#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dancegen/dsp.hpp"
#include "dancegen/motion.hpp"
#include "dancegen/beat.hpp"
#include "dancegen/tensor.hpp"

#include <json.hpp>

namespace dancegen::io {

// --- WAV ---------------------------------------------------------------

/// Reads a mono RIFF/WAVE file, PCM16 or IEEE float32.
dsp::AudioClip read_wav(const std::filesystem::path& path);

/// Writes a mono PCM16 WAV file; samples are clamped to [-1, 1].
void write_wav(const std::filesystem::path& path, const dsp::AudioClip& clip);

// --- Feature track -----------------------------------------------------

/// Binary container: magic, JSON header (rates, dims, per-bin stats), then
/// all blocks as little-endian float64.
void write_features(const std::filesystem::path& path, const dsp::FeatureTrack& track);
dsp::FeatureTrack read_features(const std::filesystem::path& path);

// --- Motion ------------------------------------------------------------

/// CSV with one header row naming the skeleton components and one row of 71
/// floats per frame. The scaler, when the sequence carries one, lands in a
/// sidecar file "<path>.scaler.json".
void write_motion_csv(const std::filesystem::path& path,
                      const motion::MotionSequence& seq);
motion::MotionSequence read_motion_csv(const std::filesystem::path& path);

// --- Beat annotations ----------------------------------------------------

/// Plain text, one timestamp in seconds per line.
void write_beats(const std::filesystem::path& path, const beat::BeatAnnotation& beats);
beat::BeatAnnotation read_beats(const std::filesystem::path& path);

// --- Checkpoint container ------------------------------------------------

/// One named little-endian float64 array.
struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

/// Binary checkpoint: magic, format version, JSON metadata, named arrays.
/// Values round-trip bitwise.
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const std::vector<NamedArray>& arrays);

struct CheckpointData {
  nlohmann::json meta;
  std::vector<NamedArray> arrays;
};
CheckpointData read_checkpoint(const std::filesystem::path& path);

// --- Training manifest -----------------------------------------------------

struct ManifestEntry {
  std::string audio;
  std::string motion;
  std::string beats;  // optional, empty when absent
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<double> snrs;  // augmentation SNRs in dB
  int fps = motion::kDefaultFps;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Paths inside a manifest are resolved relative to the manifest file.
std::filesystem::path resolve_manifest_path(const std::filesystem::path& manifest_path,
                                            const std::string& entry);

}  // namespace dancegen::io
