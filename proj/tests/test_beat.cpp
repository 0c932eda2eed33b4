#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dancegen/beat.hpp"

using namespace dancegen;
using beat::BeatAnnotation;
using motion::MotionFrame;
using motion::MotionSequence;

namespace {

MotionSequence single_joint(const std::vector<double>& values, int fps = 30) {
  MotionSequence seq;
  seq.fps = fps;
  for (double v : values) {
    MotionFrame f(71, 0.0);
    f[0] = v;
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

// Exhaustive maximum one-to-one matching via bitmask DP over predictions.
long optimal_matches(const std::vector<double>& pred, const std::vector<double>& ref,
                     double tol) {
  const std::size_t bits = pred.size();
  std::vector<long> dp(1u << bits, 0);
  for (double r : ref) {
    std::vector<long> next = dp;
    for (std::size_t mask = 0; mask < dp.size(); ++mask) {
      for (std::size_t j = 0; j < bits; ++j) {
        if (mask & (1u << j)) continue;
        if (std::abs(pred[j] - r) > tol) continue;
        next[mask | (1u << j)] = std::max(next[mask | (1u << j)], dp[mask] + 1);
      }
    }
    dp = std::move(next);
  }
  return *std::max_element(dp.begin(), dp.end());
}

std::vector<double> strictly_ascending_times(std::mt19937_64& rng, int max_count,
                                             double span) {
  std::uniform_int_distribution<int> count_dist(0, max_count);
  std::uniform_real_distribution<double> time_dist(0.0, span);
  std::vector<double> times(count_dist(rng));
  for (auto& t : times) t = time_dist(rng);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

}  // namespace

TEST_CASE("motion_speed") {
  SUBCASE("frozen motion has zero speed") {
    const auto speed = beat::motion_speed(single_joint({0.4, 0.4, 0.4, 0.4}));
    REQUIRE(speed.size() == 3);
    for (double s : speed) CHECK(s == 0.0);
  }
  SUBCASE("a 0.1-per-frame ramp at 30 fps moves at 3.0 per second") {
    const auto speed = beat::motion_speed(single_joint({0.0, 0.1, 0.2, 0.3}));
    for (double s : speed) CHECK(s == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("random walk matches the direct norm oracle") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    MotionSequence seq;
    for (int t = 0; t < 40; ++t) {
      MotionFrame f(71);
      for (auto& v : f) v = dist(rng);
      seq.frames.push_back(std::move(f));
    }
    const auto speed = beat::motion_speed(seq);
    for (std::size_t t = 0; t + 1 < seq.frames.size(); ++t) {
      double acc = 0.0;
      for (int c = 0; c < 71; ++c) {
        const double d = seq.frames[t + 1][c] - seq.frames[t][c];
        acc += d * d;
      }
      CHECK(speed[t] == doctest::Approx(std::sqrt(acc) * 30.0).epsilon(1e-12));
    }
  }
  SUBCASE("fewer than two frames is an error") {
    CHECK_THROWS_AS(beat::motion_speed(single_joint({1.0})), InvalidInputError);
  }
}

TEST_CASE("extract_motion_beats finds sine extrema") {
  // 1 Hz sine sampled at 30 fps: speed dips to zero twice per second.
  std::vector<double> values(121);
  for (int t = 0; t < 121; ++t) values[t] = std::sin(2.0 * M_PI * t / 30.0);
  const BeatAnnotation beats = beat::extract_motion_beats(single_joint(values));

  // Extrema sit at 0.25 + 0.5k seconds.
  REQUIRE(beats.times.size() >= 6);
  for (double t : beats.times) {
    const double nearest = std::round((t - 0.25) / 0.5) * 0.5 + 0.25;
    CHECK(std::abs(t - nearest) <= 1.0 / 30.0 + 1e-9);
  }
  // Roughly 2 per second over 4 seconds.
  CHECK(beats.times.size() >= 7);
  CHECK(beats.times.size() <= 9);
}

TEST_CASE("extract_motion_beats degenerate motions") {
  SUBCASE("constant velocity has no beats") {
    std::vector<double> ramp(60);
    for (int t = 0; t < 60; ++t) ramp[t] = 0.01 * t;
    CHECK(beat::extract_motion_beats(single_joint(ramp)).times.empty());
  }
  SUBCASE("frozen motion has no beats") {
    CHECK(beat::extract_motion_beats(single_joint(std::vector<double>(60, 0.3)))
              .times.empty());
  }
}

TEST_CASE("extract_motion_beats on reversed sequences mirrors the beats") {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> step(0.0, 0.05);
  std::vector<double> values(200);
  double phase = 0.0;
  for (int t = 0; t < 200; ++t) {
    phase += 0.2 + 0.02 * step(rng);
    values[t] = std::sin(phase) + 0.02 * step(rng);
  }
  const MotionSequence fwd = single_joint(values);
  std::vector<double> reversed_values(values.rbegin(), values.rend());
  const MotionSequence rev = single_joint(reversed_values);

  const auto beats_fwd = beat::extract_motion_beats(fwd).times;
  const auto beats_rev = beat::extract_motion_beats(rev).times;

  // Map reversed beats back into forward time. Transition t in the reversed
  // speed track corresponds to transition n-2-t forward.
  const double last_transition = static_cast<double>(values.size() - 2) / 30.0;
  std::vector<double> mapped;
  for (double t : beats_rev) mapped.push_back(last_transition - t);
  std::sort(mapped.begin(), mapped.end());

  const double margin = 3.0 / 30.0;  // ignore endpoint effects
  for (double t : beats_fwd) {
    if (t < margin || t > last_transition - margin) continue;
    double best = 1e9;
    for (double m : mapped) best = std::min(best, std::abs(m - t));
    CHECK(best < 1e-9);
  }
}

TEST_CASE("match_beats basics") {
  BeatAnnotation ref{{1.0, 2.0, 3.0}};

  SUBCASE("identical sequences score 1.0") {
    const auto report = beat::match_beats(ref, ref);
    CHECK(report.true_positives == 3);
    CHECK(report.false_positives == 0);
    CHECK(report.false_negatives == 0);
    CHECK(report.f_score == doctest::Approx(1.0));
  }
  SUBCASE("empty predictions score 0") {
    const auto report = beat::match_beats(BeatAnnotation{}, ref);
    CHECK(report.true_positives == 0);
    CHECK(report.false_negatives == 3);
    CHECK(report.f_score == 0.0);
  }
  SUBCASE("both empty scores 0 without dividing by zero") {
    CHECK(beat::match_beats(BeatAnnotation{}, BeatAnnotation{}).f_score == 0.0);
  }
  SUBCASE("unsorted input is rejected") {
    BeatAnnotation bad{{2.0, 1.0}};
    CHECK_THROWS_AS(beat::match_beats(bad, ref), InvalidInputError);
    CHECK_THROWS_AS(beat::match_beats(ref, bad), InvalidInputError);
  }
  SUBCASE("beats outside the tolerance stay unmatched") {
    BeatAnnotation pred{{1.2, 2.0}};
    const auto report = beat::match_beats(pred, ref, 0.07);
    CHECK(report.true_positives == 1);
    CHECK(report.false_positives == 1);
    CHECK(report.false_negatives == 2);
  }
}

TEST_CASE("match_beats equals the exhaustive optimal assignment") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const auto pred = strictly_ascending_times(rng, 10, 2.0);
    const auto ref = strictly_ascending_times(rng, 10, 2.0);
    const double tol = std::uniform_real_distribution<double>(0.01, 0.4)(rng);

    const auto report =
        beat::match_beats(BeatAnnotation{pred}, BeatAnnotation{ref}, tol);
    const long best = optimal_matches(pred, ref, tol);
    CHECK(report.true_positives == best);
    CHECK(report.false_positives == static_cast<long>(pred.size()) - best);
    CHECK(report.false_negatives == static_cast<long>(ref.size()) - best);
    CHECK(report.true_positives <=
          static_cast<long>(std::min(pred.size(), ref.size())));
  }
}

TEST_CASE("small shifts preserve matches when reference beats are far apart") {
  std::mt19937_64 rng(24);
  const double tol = 0.07;
  BeatAnnotation ref;
  double t = 0.5;
  for (int i = 0; i < 20; ++i) {
    ref.times.push_back(t);
    t += 0.2 + std::uniform_real_distribution<double>(0.0, 0.1)(rng);
  }
  BeatAnnotation pred = ref;
  const auto base = beat::match_beats(pred, ref, tol);
  for (double shift : {0.01, -0.02, 0.03}) {
    BeatAnnotation shifted;
    for (double v : pred.times) shifted.times.push_back(v + shift);
    const auto report = beat::match_beats(shifted, ref, tol);
    CHECK(report.true_positives == base.true_positives);
  }
}

TEST_CASE("cross_entropy histogram comparison") {
  auto uniform_sequence = [](int bins) {
    // One frame per bin center in every component.
    MotionSequence seq;
    for (int b = 0; b < bins; ++b) {
      const double v = -1.0 + (b + 0.5) * 2.0 / bins;
      seq.frames.push_back(MotionFrame(71, v));
    }
    return seq;
  };

  SUBCASE("identical sequences give the reference self-entropy") {
    std::mt19937_64 rng(25);
    std::uniform_real_distribution<double> dist(-0.9, 0.9);
    MotionSequence seq;
    for (int t = 0; t < 200; ++t) {
      MotionFrame f(71);
      for (auto& v : f) v = dist(rng);
      seq.frames.push_back(std::move(f));
    }
    const double ce = beat::cross_entropy(seq, seq);
    // Gibbs: CE(p, q) >= CE(p, p) = H(p) for any q.
    MotionSequence other = seq;
    for (auto& f : other.frames)
      for (auto& v : f) v = dist(rng);
    CHECK(beat::cross_entropy(other, seq) >= ce);
  }

  SUBCASE("concentrated reference vs uniform generated gives ln(bins)") {
    const MotionSequence ref(
        {std::vector<MotionFrame>(100, MotionFrame(71, 0.5)), 30, {}});
    const double ce = beat::cross_entropy(uniform_sequence(50), ref, 50);
    CHECK(ce == doctest::Approx(std::log(50.0)).epsilon(1e-3));
  }

  SUBCASE("Gibbs inequality over random pairs") {
    std::mt19937_64 rng(26);
    std::uniform_real_distribution<double> dist(-0.9, 0.9);
    for (int trial = 0; trial < 100; ++trial) {
      MotionSequence p, q;
      for (int t = 0; t < 60; ++t) {
        MotionFrame fp(71), fq(71);
        for (auto& v : fp) v = dist(rng);
        for (auto& v : fq) v = dist(rng);
        p.frames.push_back(std::move(fp));
        q.frames.push_back(std::move(fq));
      }
      CHECK(beat::cross_entropy(p, p) <= beat::cross_entropy(q, p) + 1e-12);
    }
  }

  SUBCASE("empty input is rejected") {
    MotionSequence empty;
    MotionSequence one;
    one.frames.push_back(MotionFrame(71, 0.0));
    CHECK_THROWS_AS(beat::cross_entropy(empty, one), InvalidInputError);
    CHECK_THROWS_AS(beat::cross_entropy(one, empty), InvalidInputError);
  }
}
