#pragma once

#include <cstddef>

#include "avh/audio_io.hpp"
#include "avh/features.hpp"

namespace avh {

struct AuditConfig {
  /// A sample is silent when |s| <= tau.
  double silence_threshold_tau = 5e-4;
  double leading_window_delta_s = 0.030;
  double trim_duration_s = 0.040;
  double fps = 25.0;

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
};

struct BiasFeatureVector {
  double leading_silence_s = 0.0;
  double leading_max_amplitude = 0.0;
  double trailing_silence_s = 0.0;
  double global_max_amplitude = 0.0;
};

/// round-half-up(seconds * rate), the single rounding rule for every window
/// and trim length so that trimmed datasets are bit-reproducible.
std::size_t seconds_to_samples(double seconds, double rate);

/// Time until the first sample whose magnitude strictly exceeds tau; the full
/// duration when none does. Throws EmptyClip.
double leading_silence_duration(const AudioClip& clip, double tau);
double trailing_silence_duration(const AudioClip& clip, double tau);

/// Max |s| over the first seconds_to_samples(delta_s) samples, clamped to
/// the clip. Throws EmptyClip.
double leading_max_amplitude(const AudioClip& clip, double delta_s);
double global_max_amplitude(const AudioClip& clip);

BiasFeatureVector bias_features(const AudioClip& clip, const AuditConfig& cfg);

/// Drops the first seconds_to_samples(trim_s) samples. Trimming past the end
/// yields an empty clip.
AudioClip trim_leading(const AudioClip& clip, double trim_s);

/// Drops the first `frames` rows of both streams. Throws TooShort unless at
/// least one frame remains.
FeatureSequencePair trim_features(const FeatureSequencePair& pair, std::size_t frames);

}  // namespace avh
