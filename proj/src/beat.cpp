#include "dancegen/beat.hpp"

#include <algorithm>
#include <cmath>

namespace dancegen::beat {

namespace {

void require_strictly_ascending(const std::vector<double>& times, const char* what) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0) throw InvalidInputError(std::string(what) + ": negative timestamp");
    if (i > 0 && times[i] <= times[i - 1])
      throw InvalidInputError(std::string(what) + ": timestamps not strictly ascending");
  }
}

}  // namespace

std::vector<double> motion_speed(const motion::MotionSequence& seq) {
  if (seq.frames.size() < 2)
    throw InvalidInputError("motion_speed: need at least 2 frames");
  const std::size_t dim = seq.frames[0].size();
  std::vector<double> speed(seq.frames.size() - 1);
  for (std::size_t t = 0; t + 1 < seq.frames.size(); ++t) {
    const motion::MotionFrame& a = seq.frames[t];
    const motion::MotionFrame& b = seq.frames[t + 1];
    if (a.size() != dim || b.size() != dim)
      throw InvalidInputError("motion_speed: ragged frames");
    double acc = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = b[c] - a[c];
      acc += d * d;
    }
    speed[t] = std::sqrt(acc) * seq.fps;
  }
  return speed;
}

BeatAnnotation extract_motion_beats(const motion::MotionSequence& seq,
                                    double minimum_ratio) {
  if (seq.frames.size() < 3)
    throw InvalidInputError("extract_motion_beats: need at least 3 frames");
  const std::vector<double> speed = motion_speed(seq);

  double mean = 0.0;
  for (double s : speed) mean += s;
  mean /= static_cast<double>(speed.size());

  BeatAnnotation beats;
  if (mean <= 0.0) return beats;  // frozen motion
  const double threshold = minimum_ratio * mean;

  // Local minima with plateaus collapsed to their midpoint.
  std::size_t i = 1;
  while (i < speed.size()) {
    if (speed[i] < speed[i - 1]) {
      std::size_t j = i;
      while (j + 1 < speed.size() && speed[j + 1] == speed[i]) ++j;
      if (j + 1 < speed.size() && speed[j + 1] > speed[i] && speed[i] < threshold)
        beats.times.push_back((static_cast<double>(i) + j) / 2.0 / seq.fps);
      i = j + 1;
    } else {
      ++i;
    }
  }
  return beats;
}

MatchReport match_beats(const BeatAnnotation& predicted, const BeatAnnotation& reference,
                        double tolerance_s) {
  require_strictly_ascending(predicted.times, "match_beats predicted");
  require_strictly_ascending(reference.times, "match_beats reference");
  if (tolerance_s < 0.0) throw InvalidInputError("match_beats: negative tolerance");

  MatchReport report;
  std::size_t next = 0;  // earliest still-unmatched predicted beat
  for (double ref : reference.times) {
    while (next < predicted.times.size() && predicted.times[next] < ref - tolerance_s)
      ++next;
    if (next < predicted.times.size() && predicted.times[next] <= ref + tolerance_s) {
      ++report.true_positives;
      ++next;
    }
  }
  report.false_positives =
      static_cast<long>(predicted.times.size()) - report.true_positives;
  report.false_negatives =
      static_cast<long>(reference.times.size()) - report.true_positives;
  const double denom =
      2.0 * report.true_positives + report.false_positives + report.false_negatives;
  report.f_score = denom > 0.0 ? 2.0 * report.true_positives / denom : 0.0;
  return report;
}

double cross_entropy(const motion::MotionSequence& generated,
                     const motion::MotionSequence& reference, int bins) {
  if (generated.frames.empty() || reference.frames.empty())
    throw InvalidInputError("cross_entropy: empty sequence");
  if (bins < 2) throw InvalidInputError("cross_entropy: need at least 2 bins");
  const std::size_t dim = generated.frames[0].size();
  if (reference.frames[0].size() != dim)
    throw InvalidInputError("cross_entropy: component count mismatch");

  auto histogram = [bins](const motion::MotionSequence& seq, std::size_t c) {
    std::vector<double> p(bins, 0.0);
    for (const motion::MotionFrame& f : seq.frames) {
      int idx = static_cast<int>(std::floor((f[c] + 1.0) / 2.0 * bins));
      idx = std::clamp(idx, 0, bins - 1);
      p[idx] += 1.0;
    }
    double total = 0.0;
    for (double& v : p) {
      v += kHistogramEps;
      total += v;
    }
    for (double& v : p) v /= total;
    return p;
  };

  double ce_sum = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    const std::vector<double> p_ref = histogram(reference, c);
    const std::vector<double> p_gen = histogram(generated, c);
    double ce = 0.0;
    for (int b = 0; b < bins; ++b) ce -= p_ref[b] * std::log(p_gen[b]);
    ce_sum += ce;
  }
  return ce_sum / static_cast<double>(dim);
}

}  // namespace dancegen::beat
