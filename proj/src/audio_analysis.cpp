#include "avh/audio_analysis.hpp"

#include <algorithm>
#include <cmath>

#include "avh/error.hpp"

namespace avh {

namespace {

void require_samples(const AudioClip& clip) {
  if (clip.samples.empty()) throw Error(ErrorKind::EmptyClip, "clip '" + clip.source_id + "' is empty");
}

double magnitude(float s) { return std::fabs(static_cast<double>(s)); }

}  // namespace

void AuditConfig::validate() const {
  if (!(silence_threshold_tau > 0.0)) throw Error(ErrorKind::InvalidArgument, "tau must be > 0");
  if (!(leading_window_delta_s > 0.0)) throw Error(ErrorKind::InvalidArgument, "delta must be > 0");
  if (!(trim_duration_s >= 0.0)) throw Error(ErrorKind::InvalidArgument, "trim must be >= 0");
  if (!(fps > 0.0)) throw Error(ErrorKind::InvalidArgument, "fps must be > 0");
}

std::size_t seconds_to_samples(double seconds, double rate) {
  if (!(seconds > 0.0)) return 0;
  return static_cast<std::size_t>(std::floor(seconds * rate + 0.5));
}

double leading_silence_duration(const AudioClip& clip, double tau) {
  require_samples(clip);
  const auto& s = clip.samples;
  const auto it = std::find_if(s.begin(), s.end(), [tau](float x) { return magnitude(x) > tau; });
  return static_cast<double>(it - s.begin()) / clip.sample_rate;
}

double trailing_silence_duration(const AudioClip& clip, double tau) {
  require_samples(clip);
  const auto& s = clip.samples;
  const auto it = std::find_if(s.rbegin(), s.rend(), [tau](float x) { return magnitude(x) > tau; });
  return static_cast<double>(it - s.rbegin()) / clip.sample_rate;
}

double leading_max_amplitude(const AudioClip& clip, double delta_s) {
  require_samples(clip);
  const std::size_t window =
      std::min(seconds_to_samples(delta_s, clip.sample_rate), clip.samples.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < window; ++i) peak = std::max(peak, magnitude(clip.samples[i]));
  return peak;
}

double global_max_amplitude(const AudioClip& clip) {
  require_samples(clip);
  double peak = 0.0;
  for (float x : clip.samples) peak = std::max(peak, magnitude(x));
  return peak;
}

BiasFeatureVector bias_features(const AudioClip& clip, const AuditConfig& cfg) {
  return {
      .leading_silence_s = leading_silence_duration(clip, cfg.silence_threshold_tau),
      .leading_max_amplitude = leading_max_amplitude(clip, cfg.leading_window_delta_s),
      .trailing_silence_s = trailing_silence_duration(clip, cfg.silence_threshold_tau),
      .global_max_amplitude = global_max_amplitude(clip),
  };
}

AudioClip trim_leading(const AudioClip& clip, double trim_s) {
  if (trim_s < 0.0) throw Error(ErrorKind::InvalidArgument, "trim duration must be >= 0");
  const std::size_t drop = std::min(seconds_to_samples(trim_s, clip.sample_rate), clip.samples.size());
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_id = clip.source_id;
  out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(drop), clip.samples.end());
  return out;
}

FeatureSequencePair trim_features(const FeatureSequencePair& pair, std::size_t frames) {
  const auto total = static_cast<std::size_t>(pair.frames());
  if (frames >= total) {
    throw Error(ErrorKind::TooShort, "cannot trim " + std::to_string(frames) + " of " +
                                         std::to_string(total) + " frames from '" +
                                         pair.source_id + "'");
  }
  const auto keep = static_cast<Eigen::Index>(total - frames);
  FeatureSequencePair out;
  out.audio = pair.audio.bottomRows(keep);
  out.video = pair.video.bottomRows(keep);
  out.fps = pair.fps;
  out.source_id = pair.source_id;
  return out;
}

}  // namespace avh
