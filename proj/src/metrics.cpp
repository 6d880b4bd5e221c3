#include "avh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avh/error.hpp"
#include "avh/parallel.hpp"

namespace avh {

double auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::InvalidArgument, "scores and labels differ in length");
  }
  std::size_t n_fake = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw Error(ErrorKind::InvalidArgument, "NaN score");
    n_fake += labels[i] == Label::fake;
  }
  const std::size_t n_real = scores.size() - n_fake;
  if (n_fake == 0 || n_real == 0) {
    throw Error(ErrorKind::SingleClass, "AUC needs both real and fake samples");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based ranks of the fakes, tied groups sharing their mean rank.
  double fake_rank_sum = 0.0;
  for (std::size_t begin = 0; begin < order.size();) {
    std::size_t end = begin + 1;
    while (end < order.size() && scores[order[end]] == scores[order[begin]]) ++end;
    const double mean_rank = 0.5 * static_cast<double>(begin + 1 + end);
    for (std::size_t k = begin; k < end; ++k) {
      if (labels[order[k]] == Label::fake) fake_rank_sum += mean_rank;
    }
    begin = end;
  }
  const double nf = static_cast<double>(n_fake);
  const double u = fake_rank_sum - nf * (nf + 1.0) / 2.0;
  return u / (nf * static_cast<double>(n_real));
}

double video_auc(const ScoreReport& report) {
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& e : report.entries) {
    scores.push_back(e.score);
    labels.push_back(e.label);
  }
  return auc(scores, labels);
}

double frame_auc(const ScoreReport& report) {
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& f : report.frames) {
    scores.push_back(f.score);
    labels.push_back(f.label);
  }
  return auc(scores, labels);
}

std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins,
                                    double lo, double hi) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "histogram of no values");
  if (bins == 0) throw Error(ErrorKind::InvalidArgument, "need at least one bin");
  if (!(lo < hi)) throw Error(ErrorKind::InvalidArgument, "histogram range must satisfy lo < hi");

  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (std::isnan(v)) throw Error(ErrorKind::InvalidArgument, "NaN value");
    const double pos = std::floor((v - lo) / width);
    const double clamped = std::clamp(pos, 0.0, static_cast<double>(bins - 1));
    ++counts[static_cast<std::size_t>(clamped)];
  }
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].center = lo + (static_cast<double>(b) + 0.5) * width;
    out[b].fraction = static_cast<double>(counts[b]) / static_cast<double>(values.size());
  }
  return out;
}

std::string_view to_string(BiasFeature feature) {
  switch (feature) {
    case BiasFeature::leading_silence: return "leading_silence";
    case BiasFeature::leading_max_amplitude: return "leading_max_amplitude";
    case BiasFeature::trailing_silence: return "trailing_silence";
    case BiasFeature::global_max_amplitude: return "global_max_amplitude";
  }
  return "?";
}

BiasFeature parse_bias_feature(std::string_view text) {
  if (text == "leading_silence" || text == "leading_silence_s") return BiasFeature::leading_silence;
  if (text == "leading_max_amplitude" || text == "leading_max_amp") {
    return BiasFeature::leading_max_amplitude;
  }
  if (text == "trailing_silence" || text == "trailing_silence_s") return BiasFeature::trailing_silence;
  if (text == "global_max_amplitude" || text == "global_max_amp") {
    return BiasFeature::global_max_amplitude;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown bias feature '" + std::string(text) + "'");
}

bool higher_is_fake(BiasFeature feature) {
  return feature == BiasFeature::leading_silence || feature == BiasFeature::trailing_silence;
}

double fakeness_score(const BiasFeatureVector& f, BiasFeature feature) {
  switch (feature) {
    case BiasFeature::leading_silence: return f.leading_silence_s;
    case BiasFeature::leading_max_amplitude: return -f.leading_max_amplitude;
    case BiasFeature::trailing_silence: return f.trailing_silence_s;
    case BiasFeature::global_max_amplitude: return -f.global_max_amplitude;
  }
  return 0.0;
}

std::vector<SweepPoint> sweep_auc(std::span<const LabeledClip> clips, BiasFeature feature,
                                  std::span<const double> grid, unsigned threads) {
  if (grid.empty()) throw Error(ErrorKind::EmptyInput, "empty sweep grid");
  if (feature == BiasFeature::global_max_amplitude) {
    throw Error(ErrorKind::InvalidArgument, "global_max_amplitude has no sweep parameter");
  }
  std::vector<double> params(grid.begin(), grid.end());
  std::sort(params.begin(), params.end());

  std::vector<Label> labels;
  labels.reserve(clips.size());
  for (const auto& c : clips) labels.push_back(c.label);

  std::vector<SweepPoint> out(params.size());
  parallel_for(params.size(), threads, [&](std::size_t g) {
    const double p = params[g];
    std::vector<double> scores(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const auto& clip = clips[i].clip;
      switch (feature) {
        case BiasFeature::leading_silence: scores[i] = leading_silence_duration(clip, p); break;
        case BiasFeature::trailing_silence: scores[i] = trailing_silence_duration(clip, p); break;
        default: scores[i] = -leading_max_amplitude(clip, p); break;
      }
    }
    out[g] = {p, auc(scores, labels)};
  });
  return out;
}

double peak_parameter(std::span<const SweepPoint> sweep) {
  if (sweep.empty()) throw Error(ErrorKind::EmptyInput, "empty sweep");
  double best_auc = sweep.front().auc;
  for (const auto& p : sweep) best_auc = std::max(best_auc, p.auc);
  double best_param = sweep.front().parameter;
  bool found = false;
  for (const auto& p : sweep) {
    if (p.auc >= best_auc - 1e-12 && (!found || p.parameter > best_param)) {
      best_param = p.parameter;
      found = true;
    }
  }
  return best_param;
}

}  // namespace avh
