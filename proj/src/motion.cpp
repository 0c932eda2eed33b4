#include "dancegen/motion.hpp"

#include <cmath>

namespace dancegen::motion {

namespace {

std::vector<JointEntry> standard_entries() {
  std::vector<JointEntry> e;
  int i = 0;
  auto translation = [&](const char* name) {
    e.push_back({name, JointEntry::Kind::kTranslation3, i, i + 3});
    i += 3;
  };
  auto rotation = [&](const char* name) {
    e.push_back({name, JointEntry::Kind::kRotation4, i, i + 4});
    i += 4;
  };
  translation("root");
  rotation("pelvis");
  rotation("head");
  rotation("neck");
  rotation("spine1");
  rotation("spine2");
  rotation("left_clavicle");
  rotation("left_shoulder");
  rotation("left_forearm");
  rotation("right_clavicle");
  rotation("right_shoulder");
  rotation("right_forearm");
  rotation("left_thigh");
  rotation("left_knee");
  rotation("left_foot");
  rotation("right_thigh");
  rotation("right_knee");
  rotation("right_foot");
  return e;
}

}  // namespace

SkeletonLayout::SkeletonLayout(std::vector<JointEntry> entries, int dim)
    : entries_(std::move(entries)), dim_(dim) {
  int expected = 0;
  for (const JointEntry& e : entries_) {
    if (e.begin != expected) throw StateError("skeleton layout has index gaps");
    expected = e.end;
  }
  if (expected != dim_) throw StateError("skeleton layout does not cover all components");
}

const SkeletonLayout& SkeletonLayout::standard() {
  static const SkeletonLayout layout(standard_entries(), kMotionDim);
  return layout;
}

std::vector<std::string> SkeletonLayout::component_names() const {
  static const char* kQuat[] = {"qx", "qy", "qz", "qw"};
  static const char* kTrans[] = {"tx", "ty", "tz"};
  std::vector<std::string> names;
  names.reserve(dim_);
  for (const JointEntry& e : entries_) {
    const bool rot = e.kind == JointEntry::Kind::kRotation4;
    for (int i = e.begin; i < e.end; ++i)
      names.push_back(e.name + "." + (rot ? kQuat[i - e.begin] : kTrans[i - e.begin]));
  }
  return names;
}

Quaternion quat_mul(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
          a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z};
}

double quat_norm(const Quaternion& q) {
  return std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z + q.w * q.w);
}

Quaternion quaternion_from_euler(double x_deg, double y_deg, double z_deg,
                                 const std::string& order) {
  if (order.size() != 3) throw InvalidInputError("rotation order must name three axes");
  auto axis_quat = [&](char axis) -> Quaternion {
    double deg = 0.0;
    switch (axis) {
      case 'x': deg = x_deg; break;
      case 'y': deg = y_deg; break;
      case 'z': deg = z_deg; break;
      default: throw InvalidInputError("rotation order axis must be x, y or z");
    }
    const double half = deg * M_PI / 180.0 / 2.0;
    const double s = std::sin(half);
    Quaternion q{0.0, 0.0, 0.0, std::cos(half)};
    if (axis == 'x') q.x = s;
    if (axis == 'y') q.y = s;
    if (axis == 'z') q.z = s;
    return q;
  };
  // Hamilton product applies the right operand first, so compose the axes in
  // reverse of the application order.
  Quaternion q = axis_quat(order[2]);
  q = quat_mul(q, axis_quat(order[1]));
  q = quat_mul(q, axis_quat(order[0]));
  return q;
}

MotionSequence normalize_motion(const MotionSequence& raw) {
  if (raw.frames.empty()) throw InvalidInputError("normalize_motion: empty sequence");
  const std::size_t dim = raw.frames[0].size();

  std::vector<double> max_abs(dim, 0.0);
  for (const MotionFrame& f : raw.frames) {
    if (f.size() != dim) throw InvalidInputError("normalize_motion: ragged frames");
    for (std::size_t c = 0; c < dim; ++c)
      max_abs[c] = std::max(max_abs[c], std::abs(f[c]));
  }

  MotionSequence out;
  out.fps = raw.fps;
  out.scaler.resize(dim);
  for (std::size_t c = 0; c < dim; ++c)
    out.scaler[c] = max_abs[c] > 0.0 ? max_abs[c] : 1.0;

  out.frames = raw.frames;
  // (v / max_abs) * 0.9 keeps |result| <= 0.9 exactly in floating point.
  for (MotionFrame& f : out.frames)
    for (std::size_t c = 0; c < dim; ++c)
      if (max_abs[c] > 0.0) f[c] = f[c] / max_abs[c] * kNormBound;
  return out;
}

MotionSequence denormalize_motion(const MotionSequence& seq,
                                  const std::vector<double>& scaler) {
  if (seq.frames.empty()) throw InvalidInputError("denormalize_motion: empty sequence");
  const std::size_t dim = seq.frames[0].size();
  if (scaler.size() != dim)
    throw InvalidInputError("denormalize_motion: scaler length mismatch");
  for (double s : scaler)
    if (!(s > 0.0)) throw InvalidInputError("denormalize_motion: scaler must be positive");

  MotionSequence out;
  out.fps = seq.fps;
  out.frames = seq.frames;
  for (MotionFrame& f : out.frames)
    for (std::size_t c = 0; c < dim; ++c) f[c] = f[c] * scaler[c] / kNormBound;
  return out;
}

double frame_sd(const MotionFrame& frame) {
  if (frame.empty()) throw InvalidInputError("frame_sd: empty frame");
  double mean = 0.0;
  for (double v : frame) mean += v;
  mean /= static_cast<double>(frame.size());
  double var = 0.0;
  for (double v : frame) var += (v - mean) * (v - mean);
  var /= static_cast<double>(frame.size());
  return std::sqrt(var);
}

WeakLabelTrack weak_labels(const MotionSequence& seq) {
  const std::size_t n = seq.frames.size();
  if (n < 3) throw InvalidInputError("weak_labels: need at least 3 frames");

  std::vector<double> sd(n);
  for (std::size_t t = 0; t < n; ++t) sd[t] = frame_sd(seq.frames[t]);

  auto sign = [](double v) { return v >= 0.0 ? 1 : -1; };

  WeakLabelTrack track;
  track.labels.reserve(n - 2);
  int prev = sign(sd[1] - sd[0]);
  for (std::size_t t = 2; t < n; ++t) {
    const int cur = sign(sd[t] - sd[t - 1]);
    track.labels.push_back(cur == prev ? 1 : 0);
    prev = cur;
  }
  return track;
}

}  // namespace dancegen::motion
