#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dancegen/common.hpp"

namespace dancegen::motion {

inline constexpr int kMotionDim = 71;
inline constexpr int kDefaultFps = 30;
inline constexpr double kNormBound = 0.9;

/// One skeleton feature group: 3-d root translation or a 4-d joint quaternion.
struct JointEntry {
  enum class Kind { kTranslation3, kRotation4 };
  std::string name;
  Kind kind;
  int begin;  // first component index
  int end;    // one past the last component index
};

/// Fixed component order: root translation followed by 17 joint rotations.
class SkeletonLayout {
 public:
  static const SkeletonLayout& standard();

  const std::vector<JointEntry>& entries() const { return entries_; }
  int dim() const { return dim_; }

  /// Flat per-component names, e.g. "root.ty", "left_shoulder.qw".
  std::vector<std::string> component_names() const;

 private:
  SkeletonLayout(std::vector<JointEntry> entries, int dim);
  std::vector<JointEntry> entries_;
  int dim_;
};

using MotionFrame = std::vector<double>;

struct MotionSequence {
  std::vector<MotionFrame> frames;
  int fps = kDefaultFps;
  std::vector<double> scaler;  // per-component max-abs used for normalization

  std::size_t size() const { return frames.size(); }
  int dim() const { return frames.empty() ? 0 : static_cast<int>(frames[0].size()); }
};

/// Per-transition binary labels: 1 while the motion keeps its direction.
struct WeakLabelTrack {
  std::vector<std::uint8_t> labels;  // labels[j] is the label at frame j+2
};

struct Quaternion {
  double x = 0.0, y = 0.0, z = 0.0, w = 1.0;
};

Quaternion quat_mul(const Quaternion& a, const Quaternion& b);
double quat_norm(const Quaternion& q);

/// Unit quaternion from Euler angles in degrees. The order tag lists axes in
/// application order, e.g. "xyz" applies the x rotation first. The project
/// default is "xyz".
Quaternion quaternion_from_euler(double x_deg, double y_deg, double z_deg,
                                 const std::string& order = "xyz");

/// Scales each component track by 0.9 / max-abs. All-zero components are left
/// untouched with a scaler entry of 1. Returns the normalized sequence with
/// its scaler filled in.
MotionSequence normalize_motion(const MotionSequence& raw);

/// Exact inverse of normalize_motion (up to floating error).
MotionSequence denormalize_motion(const MotionSequence& seq,
                                  const std::vector<double>& scaler);

/// Population standard deviation across the components of one frame.
double frame_sd(const MotionFrame& frame);

/// Direction labels from the per-frame SD track: s_t = sign(sd_t - sd_{t-1})
/// with sign(0) = +1, label 1 when consecutive signs agree. Needs >= 3 frames;
/// produces size() - 2 labels.
WeakLabelTrack weak_labels(const MotionSequence& seq);

}  // namespace dancegen::motion
