#pragma once

#include <vector>

#include "dancegen/common.hpp"
#include "dancegen/motion.hpp"

namespace dancegen::beat {

inline constexpr double kDefaultToleranceS = 0.070;
inline constexpr double kDefaultMinimumRatio = 0.5;
inline constexpr int kDefaultHistogramBins = 50;
inline constexpr double kHistogramEps = 1e-6;

/// Ascending beat timestamps in seconds.
struct BeatAnnotation {
  std::vector<double> times;
};

struct MatchReport {
  long true_positives = 0;
  long false_positives = 0;
  long false_negatives = 0;
  double f_score = 0.0;
};

/// Per-transition speed: ||frame_{t+1} - frame_t||_2 * fps. Length n-1.
std::vector<double> motion_speed(const motion::MotionSequence& seq);

/// Motion beats: local minima of the speed track (tie plateaus collapse to
/// their midpoint) that fall below `minimum_ratio` times the mean speed.
BeatAnnotation extract_motion_beats(const motion::MotionSequence& seq,
                                    double minimum_ratio = kDefaultMinimumRatio);

/// Chronological one-to-one matching: each reference beat consumes the
/// earliest unmatched predicted beat within +-tolerance, which maximizes the
/// number of matches for sorted inputs.
MatchReport match_beats(const BeatAnnotation& predicted, const BeatAnnotation& reference,
                        double tolerance_s = kDefaultToleranceS);

/// Mean over components of the histogram cross entropy -sum p_ref ln p_gen,
/// with `bins` equal-width bins over [-1, 1] and add-eps smoothing. Values
/// outside [-1, 1] clamp into the edge bins. Returns nats.
double cross_entropy(const motion::MotionSequence& generated,
                     const motion::MotionSequence& reference,
                     int bins = kDefaultHistogramBins);

}  // namespace dancegen::beat
