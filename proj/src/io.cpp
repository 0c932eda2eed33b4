#include "dancegen/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace dancegen::io {

namespace {

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError(std::string("truncated file while reading ") + what);
  return value;
}

void write_string(std::ostream& out, const std::string& s) {
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const char* what) {
  const auto len = read_raw<std::uint32_t>(in, what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw IoError(std::string("truncated file while reading ") + what);
  return s;
}

}  // namespace

// --- WAV -------------------------------------------------------------------

dsp::AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);

  char riff[4], wave[4];
  in.read(riff, 4);
  read_raw<std::uint32_t>(in, "riff size");
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::vector<char> data;
  bool got_fmt = false, got_data = false;

  while (in && !(got_fmt && got_data)) {
    char id[4];
    in.read(id, 4);
    if (!in) break;
    const auto size = read_raw<std::uint32_t>(in, "chunk size");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      std::vector<char> fmt(size);
      in.read(fmt.data(), size);
      if (!in || size < 16) throw IoError("bad fmt chunk: " + path.string());
      std::memcpy(&format, fmt.data(), 2);
      std::memcpy(&channels, fmt.data() + 2, 2);
      std::memcpy(&sample_rate, fmt.data() + 4, 4);
      std::memcpy(&bits, fmt.data() + 14, 2);
      got_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data.resize(size);
      in.read(data.data(), size);
      if (!in) throw IoError("truncated data chunk: " + path.string());
      got_data = true;
    } else {
      in.seekg(size + (size % 2), std::ios::cur);  // chunks are word-aligned
    }
  }
  if (!got_fmt || !got_data) throw IoError("missing WAV chunks: " + path.string());
  if (channels != 1)
    throw InvalidInputError("expected mono audio: " + path.string());

  dsp::AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  if (format == 1 && bits == 16) {
    const std::size_t n = data.size() / 2;
    clip.samples.resize(n);
    const auto* pcm = reinterpret_cast<const std::int16_t*>(data.data());
    for (std::size_t i = 0; i < n; ++i) clip.samples[i] = pcm[i] / 32768.0;
  } else if (format == 3 && bits == 32) {
    const std::size_t n = data.size() / 4;
    clip.samples.resize(n);
    const auto* f = reinterpret_cast<const float*>(data.data());
    for (std::size_t i = 0; i < n; ++i) clip.samples[i] = f[i];
  } else {
    throw InvalidInputError("unsupported WAV encoding (need PCM16 or float32): " +
                            path.string());
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const dsp::AudioClip& clip) {
  std::ofstream out = open_out(path, true);
  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * 2);

  out.write("RIFF", 4);
  write_raw<std::uint32_t>(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_raw<std::uint32_t>(out, 16);
  write_raw<std::uint16_t>(out, 1);  // PCM
  write_raw<std::uint16_t>(out, 1);  // mono
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate * 2));
  write_raw<std::uint16_t>(out, 2);
  write_raw<std::uint16_t>(out, 16);
  out.write("data", 4);
  write_raw<std::uint32_t>(out, data_size);
  for (double s : clip.samples) {
    const long quantized = std::lround(std::clamp(s, -1.0, 1.0) * 32768.0);
    write_raw<std::int16_t>(
        out, static_cast<std::int16_t>(std::clamp(quantized, -32768L, 32767L)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

// --- Feature track -----------------------------------------------------------

namespace {
constexpr char kFeatureMagic[4] = {'D', 'G', 'F', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr char kCheckpointMagic[4] = {'D', 'G', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void write_features(const std::filesystem::path& path, const dsp::FeatureTrack& track) {
  std::ofstream out = open_out(path, true);
  out.write(kFeatureMagic, 4);
  write_raw<std::uint32_t>(out, kFeatureVersion);

  nlohmann::json header = {
      {"sample_rate", track.sample_rate},
      {"fps", track.fps},
      {"bins", dsp::kBins},
      {"frames", dsp::kFramesPerSlice},
      {"count", track.blocks.size()},
      {"min_power", track.stats.min_power},
      {"max_power", track.stats.max_power},
      {"augmented", track.augmented},
      {"snr_db", track.snr_db},
  };
  write_string(out, header.dump());

  for (const dsp::SpectralBlock& block : track.blocks)
    out.write(reinterpret_cast<const char*>(block.power.data()),
              static_cast<std::streamsize>(block.power.size() * sizeof(double)));
  if (!out) throw IoError("failed writing " + path.string());
}

dsp::FeatureTrack read_features(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw IoError("not a feature file: " + path.string());
  if (read_raw<std::uint32_t>(in, "version") != kFeatureVersion)
    throw StateError("unsupported feature file version: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(read_string(in, "header"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad feature header in " + path.string() + ": " + e.what());
  }

  dsp::FeatureTrack track;
  track.sample_rate = header.at("sample_rate").get<int>();
  track.fps = header.at("fps").get<int>();
  track.stats.min_power = header.at("min_power").get<std::vector<double>>();
  track.stats.max_power = header.at("max_power").get<std::vector<double>>();
  track.augmented = header.value("augmented", false);
  track.snr_db = header.value("snr_db", 0.0);

  const auto count = header.at("count").get<std::size_t>();
  const int bins = header.at("bins").get<int>();
  const int frames = header.at("frames").get<int>();
  track.blocks.resize(count);
  for (std::size_t t = 0; t < count; ++t) {
    dsp::SpectralBlock& block = track.blocks[t];
    block.frame_index = static_cast<int>(t);
    block.bins = bins;
    block.frames = frames;
    block.power.resize(static_cast<std::size_t>(bins) * frames);
    in.read(reinterpret_cast<char*>(block.power.data()),
            static_cast<std::streamsize>(block.power.size() * sizeof(double)));
    if (!in) throw IoError("truncated feature data in " + path.string());
  }
  return track;
}

// --- Motion --------------------------------------------------------------

void write_motion_csv(const std::filesystem::path& path,
                      const motion::MotionSequence& seq) {
  std::ofstream out = open_out(path, false);
  const auto names = motion::SkeletonLayout::standard().component_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    out << (i ? "," : "") << names[i];
  out << "\n";
  out.precision(17);
  for (const motion::MotionFrame& frame : seq.frames) {
    for (std::size_t i = 0; i < frame.size(); ++i) out << (i ? "," : "") << frame[i];
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());

  if (!seq.scaler.empty()) {
    nlohmann::json sidecar = {{"fps", seq.fps}, {"scaler", seq.scaler}};
    std::ofstream sc = open_out(path.string() + ".scaler.json", false);
    sc << sidecar.dump(2) << "\n";
  }
}

motion::MotionSequence read_motion_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, false);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty motion file: " + path.string());

  motion::MotionSequence seq;
  std::size_t expected = std::count(line.begin(), line.end(), ',') + 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    motion::MotionFrame frame;
    frame.reserve(expected);
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      try {
        frame.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("bad number in motion file " + path.string() + ": " + cell);
      }
    }
    if (frame.size() != expected)
      throw IoError("ragged row in motion file: " + path.string());
    seq.frames.push_back(std::move(frame));
  }

  const std::filesystem::path sidecar = path.string() + ".scaler.json";
  if (std::filesystem::exists(sidecar)) {
    std::ifstream sc = open_in(sidecar, false);
    nlohmann::json j;
    try {
      sc >> j;
      seq.fps = j.value("fps", motion::kDefaultFps);
      seq.scaler = j.at("scaler").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad scaler sidecar " + sidecar.string() + ": " + e.what());
    }
  }
  return seq;
}

// --- Beat annotations ---------------------------------------------------------

void write_beats(const std::filesystem::path& path, const beat::BeatAnnotation& beats) {
  std::ofstream out = open_out(path, false);
  out.precision(17);
  for (double t : beats.times) out << t << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

beat::BeatAnnotation read_beats(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, false);
  beat::BeatAnnotation beats;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      beats.times.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw IoError("bad timestamp in " + path.string() + ": " + line);
    }
  }
  return beats;
}

// --- Checkpoint container ------------------------------------------------------

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const std::vector<NamedArray>& arrays) {
  std::ofstream out = open_out(path, true);
  out.write(kCheckpointMagic, 4);
  write_raw<std::uint32_t>(out, kCheckpointVersion);
  write_string(out, meta.dump());
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const NamedArray& a : arrays) {
    write_string(out, a.name);
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (std::size_t d : a.shape) write_raw<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw StateError("not a checkpoint file: " + path.string());
  if (read_raw<std::uint32_t>(in, "version") != kCheckpointVersion)
    throw StateError("unsupported checkpoint version: " + path.string());

  CheckpointData data;
  try {
    data.meta = nlohmann::json::parse(read_string(in, "metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw StateError("corrupt checkpoint metadata in " + path.string() + ": " + e.what());
  }
  const auto count = read_raw<std::uint32_t>(in, "array count");
  data.arrays.resize(count);
  for (auto& a : data.arrays) {
    a.name = read_string(in, "array name");
    const auto ndim = read_raw<std::uint32_t>(in, "array rank");
    a.shape.resize(ndim);
    std::size_t numel = 1;
    for (auto& d : a.shape) {
      d = static_cast<std::size_t>(read_raw<std::uint64_t>(in, "array dim"));
      numel *= d;
    }
    a.data.resize(numel);
    in.read(reinterpret_cast<char*>(a.data.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!in) throw StateError("truncated checkpoint: " + path.string());
  }
  return data;
}

// --- Training manifest -----------------------------------------------------------

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  nlohmann::json entries = nlohmann::json::array();
  for (const ManifestEntry& e : manifest.entries) {
    nlohmann::json entry = {{"audio", e.audio}, {"motion", e.motion}};
    if (!e.beats.empty()) entry["beats"] = e.beats;
    entries.push_back(entry);
  }
  nlohmann::json j = {{"version", 1},
                      {"fps", manifest.fps},
                      {"snrs", manifest.snrs},
                      {"entries", entries}};
  std::ofstream out = open_out(path, false);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, false);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest " + path.string() + ": " + e.what());
  }
  Manifest manifest;
  manifest.fps = j.value("fps", motion::kDefaultFps);
  if (j.contains("snrs")) manifest.snrs = j.at("snrs").get<std::vector<double>>();
  for (const auto& entry : j.at("entries")) {
    ManifestEntry e;
    e.audio = entry.at("audio").get<std::string>();
    e.motion = entry.at("motion").get<std::string>();
    e.beats = entry.value("beats", "");
    manifest.entries.push_back(std::move(e));
  }
  if (manifest.entries.empty())
    throw InvalidInputError("manifest has no entries: " + path.string());
  return manifest;
}

std::filesystem::path resolve_manifest_path(const std::filesystem::path& manifest_path,
                                            const std::string& entry) {
  const std::filesystem::path p(entry);
  return p.is_absolute() ? p : manifest_path.parent_path() / p;
}

}  // namespace dancegen::io
