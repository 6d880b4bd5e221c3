#include <doctest.h>

#include <random>

#include "avh/audio_analysis.hpp"
#include "avh/error.hpp"
#include "oracles.hpp"

using namespace avh;

namespace {

AudioClip make_clip(std::vector<float> s, std::uint32_t rate = 16000) {
  AudioClip c;
  c.samples = std::move(s);
  c.sample_rate = rate;
  return c;
}

}  // namespace

TEST_CASE("leading silence ends at the first sample strictly above tau") {
  std::vector<float> s(1000, 0.0f);
  s[480] = 0.01f;
  CHECK(leading_silence_duration(make_clip(s), 5e-4) == doctest::Approx(0.030));
  CHECK(leading_silence_duration(make_clip(s), 5e-4) == 480.0 / 16000.0);

  // exactly tau still counts as silence
  std::vector<float> t(10, 0.0f);
  t[3] = 0.5f;
  t[5] = 0.6f;
  CHECK(leading_silence_duration(make_clip(t, 10), 0.5) == 0.5);
}

TEST_CASE("silence over the whole clip returns its duration") {
  const auto c = make_clip(std::vector<float>(16000, 0.0f));
  CHECK(leading_silence_duration(c, 5e-4) == 1.0);
  CHECK(trailing_silence_duration(c, 5e-4) == 1.0);
}

TEST_CASE("trailing silence mirrors leading silence on the reversed clip") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    auto c = oracle::random_clip(rng, 300);
    auto r = c;
    std::reverse(r.samples.begin(), r.samples.end());
    for (double tau : {1e-4, 5e-4, 0.01, 0.5}) {
      CHECK(trailing_silence_duration(c, tau) == leading_silence_duration(r, tau));
    }
  }
}

TEST_CASE("leading max amplitude uses a round-half-up window clamped to the clip") {
  std::vector<float> s(100, 0.0f);
  s[2] = -0.3f;
  s[3] = 0.9f;
  const auto c = make_clip(s, 1000);
  CHECK(leading_max_amplitude(c, 0.003) == doctest::Approx(0.3));   // samples 0..2
  CHECK(leading_max_amplitude(c, 0.0035) == doctest::Approx(0.9));  // 3.5 rounds up to 4
  CHECK(leading_max_amplitude(c, 0.0034) == doctest::Approx(0.3));
  CHECK(leading_max_amplitude(c, 10.0) == global_max_amplitude(c));
  CHECK(seconds_to_samples(0.030, 16000) == 480);
  CHECK(seconds_to_samples(0.040, 16000) == 640);
  CHECK(seconds_to_samples(2.5, 1) == 3);
  CHECK(seconds_to_samples(0.0, 16000) == 0);
}

TEST_CASE("bias features of an all-zero second") {
  const auto f = bias_features(make_clip(std::vector<float>(16000, 0.0f)), AuditConfig{});
  CHECK(f.leading_silence_s == 1.0);
  CHECK(f.leading_max_amplitude == 0.0);
  CHECK(f.trailing_silence_s == 1.0);
  CHECK(f.global_max_amplitude == 0.0);
}

TEST_CASE("empty clips are rejected") {
  const AudioClip empty;
  CHECK_THROWS_AS(leading_silence_duration(empty, 1e-3), Error);
  CHECK_THROWS_AS(trailing_silence_duration(empty, 1e-3), Error);
  CHECK_THROWS_AS(leading_max_amplitude(empty, 0.03), Error);
  try {
    bias_features(empty, AuditConfig{});
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyClip);
  }
}

TEST_CASE("audit config validation") {
  AuditConfig c;
  CHECK_NOTHROW(c.validate());
  c.silence_threshold_tau = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.leading_window_delta_s = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("trimming") {
  std::vector<float> s(16000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<float>(i) / 16000.0f;
  const auto c = make_clip(s);

  const auto t = trim_leading(c, 0.040);
  CHECK(t.samples.size() == 16000 - 640);
  CHECK(t.samples.front() == s[640]);
  CHECK(trim_leading(c, 0.0).samples == c.samples);
  CHECK(trim_leading(c, 1.0).samples.empty());
  CHECK(trim_leading(c, 5.0).samples.empty());
  CHECK_THROWS_AS(trim_leading(c, -0.1), Error);

  // composition holds on the sample grid
  for (int a = 0; a < 50; a += 7) {
    for (int b = 0; b < 50; b += 5) {
      const auto two = trim_leading(trim_leading(c, a / 16000.0), b / 16000.0);
      CHECK(two.samples == trim_leading(c, (a + b) / 16000.0).samples);
    }
  }
}

TEST_CASE("monotonicity in tau and delta") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = oracle::random_clip(rng, 400);
    double prev = 0.0;
    for (double tau : {1e-6, 1e-5, 1e-4, 5e-4, 1e-3, 0.01, 0.1, 0.5, 1.0}) {
      const double s = leading_silence_duration(c, tau);
      CHECK(s >= prev);
      prev = s;
    }
    prev = 0.0;
    for (double delta : {1e-4, 1e-3, 0.005, 0.01, 0.03, 0.1}) {
      const double m = leading_max_amplitude(c, delta);
      CHECK(m >= prev);
      prev = m;
    }
  }
}

TEST_CASE("duality of the silence and max-amplitude classifiers on the sample grid") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = oracle::random_clip(rng, 500);
    const std::size_t n = c.samples.size();
    for (int q = 0; q < 10; ++q) {
      const double tau = std::pow(10.0, -6.0 + 6.0 * u(rng));
      const std::size_t w = 1 + static_cast<std::size_t>(u(rng) * static_cast<double>(n));
      const double delta = static_cast<double>(std::min(w, n)) / c.sample_rate;
      const bool lhs = leading_silence_duration(c, tau) >= delta;
      const bool rhs = leading_max_amplitude(c, delta) <= tau;
      if (lhs != rhs) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("pcm16 and float32 sources give the same features") {
  std::vector<float> s(400, 0.0f);
  for (std::size_t i = 100; i < s.size(); ++i) s[i] = static_cast<float>(static_cast<int>(i % 7) - 3) / 64.0f;
  const auto c = make_clip(s);
  const auto via_pcm = decode_wav(encode_wav(c, WavEncoding::pcm16));
  const auto a = bias_features(c, AuditConfig{});
  const auto b = bias_features(via_pcm, AuditConfig{});
  CHECK(a.leading_silence_s == b.leading_silence_s);
  CHECK(a.trailing_silence_s == b.trailing_silence_s);
  CHECK(a.global_max_amplitude == b.global_max_amplitude);
}

TEST_CASE("trim_features drops leading frames of both streams") {
  FeatureSequencePair p;
  p.audio.resize(100, 3);
  p.video.resize(100, 2);
  for (Eigen::Index i = 0; i < p.audio.size(); ++i) p.audio.data()[i] = static_cast<float>(i);
  for (Eigen::Index i = 0; i < p.video.size(); ++i) p.video.data()[i] = -static_cast<float>(i);
  const auto t = trim_features(p, 1);
  CHECK(t.frames() == 99);
  CHECK(t.audio.row(0) == p.audio.row(1));
  CHECK(t.video.row(0) == p.video.row(1));
  const auto same = trim_features(p, 0);
  CHECK(same.audio == p.audio);
  CHECK(same.video == p.video);
  try {
    trim_features(p, 100);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooShort);
  }
}
