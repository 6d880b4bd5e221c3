#include "avh/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "avh/audio_analysis.hpp"
#include "avh/error.hpp"

namespace avh {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string indexed_id(const char* prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu", prefix, index);
  return buf;
}

Split split_for(std::size_t index, std::size_t count, double train_fraction, double val_fraction) {
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * count));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * count));
  if (index < n_train) return Split::train;
  if (index < n_train + n_val) return Split::val;
  return Split::test;
}

// Background noise with magnitude in [floor, 2*floor] and random sign, plus
// a syllable-rate modulated burst after `onset` samples.
std::vector<float> noise_process(std::size_t length, std::size_t onset, double floor,
                                 double peak, double rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution sign(0.5);
  const double syllable_hz = 3.0 + 2.0 * unit(rng);
  const double loudness = peak * (0.5 + 0.5 * unit(rng));
  std::vector<float> out(length);
  for (std::size_t t = 0; t < length; ++t) {
    double mag = floor * (1.0 + unit(rng));
    if (t >= onset) {
      const double phase = 2.0 * std::numbers::pi * syllable_hz * static_cast<double>(t - onset) / rate;
      mag += loudness * std::fabs(std::sin(phase)) * unit(rng);
    }
    mag = std::min(mag, 1.0);
    out[t] = static_cast<float>(sign(rng) ? mag : -mag);
  }
  return out;
}

}  // namespace

void SynthAudioConfig::validate() const {
  if (!(real_noise_floor > 0.0) || 2.0 * real_noise_floor > 1.0) {
    throw Error(ErrorKind::InvalidArgument, "noise floor must be in (0, 0.5]");
  }
  if (!(fake_lead_min_s >= 0.0 && fake_lead_min_s <= fake_lead_max_s && fake_lead_max_s < duration_s)) {
    throw Error(ErrorKind::InvalidArgument, "fake lead range must lie within the clip");
  }
  if (!(speech_onset_min_s >= 0.0 && speech_onset_min_s <= speech_onset_max_s &&
        speech_onset_max_s <= duration_s)) {
    throw Error(ErrorKind::InvalidArgument, "speech onset range must lie within the clip");
  }
  if (!(speech_peak >= 0.0 && speech_peak <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "speech peak must be in [0, 1]");
  }
  if (sample_rate == 0 || !(duration_s > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "duration and sample rate must be positive");
  }
}

SynthAudioCorpus gen_audio_corpus(const SynthAudioConfig& cfg) {
  cfg.validate();
  const double rate = cfg.sample_rate;
  const std::size_t length = seconds_to_samples(cfg.duration_s, rate);
  SynthAudioCorpus corpus;
  for (std::size_t n = 0; n < cfg.n_real + cfg.n_fake; ++n) {
    const bool fake = n >= cfg.n_real;
    std::mt19937_64 rng(mix_seed(cfg.seed, n));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::size_t lead = 0;
    if (fake) {
      const double lead_s = cfg.fake_lead_min_s + (cfg.fake_lead_max_s - cfg.fake_lead_min_s) * unit(rng);
      lead = std::min(seconds_to_samples(lead_s, rate), length);
    }
    const double onset_s =
        cfg.speech_onset_min_s + (cfg.speech_onset_max_s - cfg.speech_onset_min_s) * unit(rng);
    const auto body = noise_process(length - lead, seconds_to_samples(onset_s, rate),
                                    cfg.real_noise_floor, cfg.speech_peak, rate, rng);

    AudioClip clip;
    clip.sample_rate = cfg.sample_rate;
    clip.source_id = fake ? indexed_id("fake", n - cfg.n_real) : indexed_id("real", n);
    clip.samples.assign(lead, 0.0f);
    clip.samples.insert(clip.samples.end(), body.begin(), body.end());

    ManifestRecord record;
    record.source_id = clip.source_id;
    record.audio_path = "wav/" + clip.source_id + ".wav";
    record.category = fake ? Category::FVFA : Category::RVRA;
    record.split = Split::test;
    record.duration_s = clip.duration_seconds();
    if (fake) record.fake_segments.push_back({0.0, clip.duration_seconds()});
    corpus.manifest.records.push_back(std::move(record));
    corpus.clips.push_back(std::move(clip));
  }
  return corpus;
}

std::vector<LabeledClip> labeled_clips(const SynthAudioCorpus& corpus) {
  std::vector<LabeledClip> out;
  out.reserve(corpus.clips.size());
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
    out.push_back({corpus.clips[i], binary_label(corpus.manifest.records[i].category)});
  }
  return out;
}

void write_audio_corpus(const SynthAudioCorpus& corpus, const std::filesystem::path& root,
                        WavEncoding encoding) {
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
    write_wav(corpus.clips[i], root / *corpus.manifest.records[i].audio_path, encoding);
  }
  write_manifest(corpus.manifest, root / "manifest.jsonl");
}

std::string_view to_string(FakeMode mode) {
  switch (mode) {
    case FakeMode::global_shift: return "global_shift";
    case FakeMode::segment_replace: return "segment_replace";
    case FakeMode::segment_shift: return "segment_shift";
  }
  return "?";
}

FakeMode parse_fake_mode(std::string_view text) {
  for (auto m : {FakeMode::global_shift, FakeMode::segment_replace, FakeMode::segment_shift}) {
    if (text == to_string(m)) return m;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown fake mode '" + std::string(text) + "'");
}

void SynthFeatureConfig::validate() const {
  if (frames < 1 || feature_dim < 1 || latent_dim < 1) {
    throw Error(ErrorKind::InvalidArgument, "frames and dimensions must be positive");
  }
  if (latent_dim > feature_dim) throw Error(ErrorKind::InvalidArgument, "latent_dim must be <= feature_dim");
  if (shift_frames < 1) throw Error(ErrorKind::InvalidArgument, "shift_frames must be >= 1");
  if (!(smoothness >= 0.0 && smoothness < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "smoothness must be in [0, 1)");
  }
  if (!(noise_scale >= 0.0) || !(fps > 0.0f)) {
    throw Error(ErrorKind::InvalidArgument, "noise scale and fps must be valid");
  }
  if (segment_len_min < 1 || segment_len_min > segment_len_max || segment_len_max > frames) {
    throw Error(ErrorKind::InvalidArgument, "segment length range must lie within [1, frames]");
  }
  auto check = [](double train, double val) {
    if (!(train >= 0.0 && val >= 0.0 && train + val <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "split fractions must sum to at most 1");
    }
  };
  check(train_fraction, val_fraction);
  check(fake_train_fraction.value_or(train_fraction), fake_val_fraction.value_or(val_fraction));
}

SynthFeatureCorpus gen_feature_corpus(const SynthFeatureConfig& cfg) {
  cfg.validate();
  using Mat = Eigen::MatrixXd;
  const auto dim = static_cast<Eigen::Index>(cfg.feature_dim);
  const auto latent = static_cast<Eigen::Index>(cfg.latent_dim);
  const auto frames = static_cast<Eigen::Index>(cfg.frames);

  // Corpus-wide emission maps and the artifact vector.
  std::mt19937_64 map_rng(mix_seed(cfg.seed, ~std::uint64_t{0}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_matrix = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * gauss(map_rng);
    return m;
  };
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(latent));
  const Mat audio_map = random_matrix(dim, latent, map_scale);
  const Mat video_map = random_matrix(dim, latent, map_scale);
  const Mat artifact = random_matrix(1, dim, 1.0);

  const double innovation = std::sqrt(1.0 - cfg.smoothness * cfg.smoothness);
  auto trajectory = [&](Eigen::Index length, std::mt19937_64& rng) {
    Mat z(length, latent);
    for (Eigen::Index d = 0; d < latent; ++d) z(0, d) = gauss(rng);
    for (Eigen::Index t = 1; t < length; ++t) {
      for (Eigen::Index d = 0; d < latent; ++d) {
        z(t, d) = cfg.smoothness * z(t - 1, d) + innovation * gauss(rng);
      }
    }
    return z;
  };
  auto emit = [&](const Mat& z, const Mat& map, std::mt19937_64& rng) {
    Mat x = z * map.transpose();
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += cfg.noise_scale * gauss(rng);
    return x;
  };

  SynthFeatureCorpus corpus;
  for (std::size_t n = 0; n < cfg.n_real + cfg.n_fake; ++n) {
    const bool fake = n >= cfg.n_real;
    const std::size_t class_index = fake ? n - cfg.n_real : n;
    std::mt19937_64 rng(mix_seed(cfg.seed, n));
    const std::size_t extra = fake ? cfg.shift_frames : 0;
    const Mat z = trajectory(frames + static_cast<Eigen::Index>(extra), rng);
    const Mat z_now = z.topRows(frames);
    Mat audio = emit(z_now, audio_map, rng);
    Mat video = emit(z_now, video_map, rng);

    ManifestRecord record;
    record.source_id = fake ? indexed_id("fake", class_index) : indexed_id("real", class_index);
    record.feature_path = "features/" + record.source_id + ".avhf";
    record.category = fake ? Category::FVRA : Category::RVRA;
    record.split = fake ? split_for(class_index, cfg.n_fake,
                                    cfg.fake_train_fraction.value_or(cfg.train_fraction),
                                    cfg.fake_val_fraction.value_or(cfg.val_fraction))
                        : split_for(class_index, cfg.n_real, cfg.train_fraction, cfg.val_fraction);
    record.duration_s = static_cast<double>(cfg.frames) / cfg.fps;

    if (fake) {
      const auto shift = static_cast<Eigen::Index>(cfg.shift_frames);
      if (cfg.fake_mode == FakeMode::global_shift) {
        video = emit(z.bottomRows(frames), video_map, rng);
        record.fake_segments.push_back({0.0, *record.duration_s});
      } else {
        std::uniform_int_distribution<std::size_t> len_dist(cfg.segment_len_min, cfg.segment_len_max);
        const std::size_t len = len_dist(rng);
        std::uniform_int_distribution<std::size_t> start_dist(0, cfg.frames - len);
        const std::size_t start = start_dist(rng);
        const auto s = static_cast<Eigen::Index>(start);
        const auto l = static_cast<Eigen::Index>(len);
        if (cfg.fake_mode == FakeMode::segment_replace) {
          const Mat other = trajectory(l, rng);
          video.middleRows(s, l) = emit(other, video_map, rng);
        } else {
          video.middleRows(s, l) = emit(z.middleRows(s + shift, l), video_map, rng);
        }
        record.fake_segments.push_back(
            {static_cast<double>(start) / cfg.fps, static_cast<double>(start + len) / cfg.fps});
      }
      if (cfg.leading_artifact) audio.row(0) = artifact;
    }

    FeatureSequencePair pair;
    pair.audio = audio.cast<float>();
    pair.video = video.cast<float>();
    pair.fps = cfg.fps;
    pair.source_id = record.source_id;
    corpus.pairs.push_back(std::move(pair));
    corpus.manifest.records.push_back(std::move(record));
  }
  return corpus;
}

void write_feature_corpus(const SynthFeatureCorpus& corpus, const std::filesystem::path& root) {
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    write_features(corpus.pairs[i], root / *corpus.manifest.records[i].feature_path);
  }
  write_manifest(corpus.manifest, root / "manifest.jsonl");
}

std::vector<TrainingExample> corpus_examples(const SynthFeatureCorpus& corpus, Split split,
                                             bool real_only) {
  std::vector<TrainingExample> out;
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    const auto& record = corpus.manifest.records[i];
    if (record.split != split) continue;
    if (real_only && record.category != Category::RVRA) continue;
    out.push_back({corpus.pairs[i], record.category});
  }
  return out;
}

}  // namespace avh
