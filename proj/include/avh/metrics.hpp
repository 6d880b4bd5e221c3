#pragma once

#include <span>
#include <string>
#include <vector>

#include "avh/audio_analysis.hpp"
#include "avh/audio_io.hpp"
#include "avh/label.hpp"

namespace avh {

struct ScoreEntry {
  std::string source_id;
  double score = 0.0;
  Label label = Label::real;
};

struct FrameScoreEntry {
  std::string source_id;
  std::size_t frame_index = 0;
  double score = 0.0;
  Label label = Label::real;
};

/// Ranking inputs for video-level (`entries`) and frame-level (`frames`) AUC.
/// Higher scores mean "more fake".
struct ScoreReport {
  std::vector<ScoreEntry> entries;
  std::vector<FrameScoreEntry> frames;
};

/// Mann-Whitney AUC: the probability that a random fake outranks a random
/// real, ties counted as one half. Sorts once with tie-averaged ranks.
/// Throws SingleClass unless both labels occur, InvalidArgument on NaN scores
/// or mismatched lengths.
double auc(std::span<const double> scores, std::span<const Label> labels);
double video_auc(const ScoreReport& report);
double frame_auc(const ScoreReport& report);

struct HistogramBin {
  double center = 0.0;
  double fraction = 0.0;
};

/// Equal-width bins over [lo, hi]; out-of-range values land in the edge bins
/// and fractions sum to one. Throws EmptyInput, InvalidArgument.
std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins,
                                    double lo, double hi);

enum class BiasFeature { leading_silence, leading_max_amplitude, trailing_silence, global_max_amplitude };

std::string_view to_string(BiasFeature feature);
/// Accepts the enum names and the audit CSV column names
/// ("leading_silence_s", ...). Throws InvalidArgument.
BiasFeature parse_bias_feature(std::string_view text);

/// Orients a bias feature so that fakes rank high: silence durations are used
/// as-is, amplitudes are negated (fakes start quieter).
double fakeness_score(const BiasFeatureVector& features, BiasFeature feature);
bool higher_is_fake(BiasFeature feature);

struct LabeledClip {
  AudioClip clip;
  Label label = Label::real;
};

struct SweepPoint {
  double parameter = 0.0;
  double auc = 0.0;
};

/// AUC of a single-feature classifier for each grid value. The grid value is
/// the silence threshold tau for the silence features and the window length
/// delta (seconds) for leading_max_amplitude. Output is sorted by parameter.
std::vector<SweepPoint> sweep_auc(std::span<const LabeledClip> clips, BiasFeature feature,
                                  std::span<const double> grid, unsigned threads = 1);

/// Parameter of the best AUC. When several grid points share the maximum,
/// the largest such parameter is returned: the longest window that still
/// separates best.
double peak_parameter(std::span<const SweepPoint> sweep);

}  // namespace avh
