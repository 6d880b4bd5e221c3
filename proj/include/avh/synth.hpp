#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "avh/audio_io.hpp"
#include "avh/features.hpp"
#include "avh/manifest.hpp"
#include "avh/metrics.hpp"
#include "avh/trainer.hpp"

namespace avh {

/// Silence-biased audio corpus. Every real sample has magnitude in
/// [floor, 2*floor] plus a speech-like burst after a random onset; fakes
/// start with exact zeros for a lead drawn uniformly from
/// [fake_lead_min_s, fake_lead_max_s] and then run the same process.
struct SynthAudioConfig {
  std::size_t n_real = 500;
  std::size_t n_fake = 500;
  double fake_lead_min_s = 0.025;
  double fake_lead_max_s = 0.030;
  double real_noise_floor = 1e-3;
  double speech_onset_min_s = 0.10;
  double speech_onset_max_s = 0.40;
  double speech_peak = 0.5;
  double duration_s = 1.0;
  std::uint32_t sample_rate = 16000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthAudioCorpus {
  std::vector<AudioClip> clips;
  DatasetManifest manifest;  // RVRA reals, FVFA fakes, audio paths wav/<id>.wav
};

SynthAudioCorpus gen_audio_corpus(const SynthAudioConfig& cfg);
std::vector<LabeledClip> labeled_clips(const SynthAudioCorpus& corpus);
void write_audio_corpus(const SynthAudioCorpus& corpus, const std::filesystem::path& root,
                        WavEncoding encoding = WavEncoding::float32);

enum class FakeMode { global_shift, segment_replace, segment_shift };
std::string_view to_string(FakeMode mode);
FakeMode parse_fake_mode(std::string_view text);

/// Correlated feature pairs. A shared latent AR(1) trajectory z_t is emitted
/// through two corpus-wide random linear maps plus per-modality noise. Fakes
/// (category FVRA) manipulate the video stream only and record the touched
/// interval as a fake segment.
struct SynthFeatureConfig {
  std::size_t n_real = 200;
  std::size_t n_fake = 0;
  std::size_t frames = 100;
  std::size_t feature_dim = 16;
  std::size_t latent_dim = 8;
  /// AR(1) coefficient of the latent walk.
  double smoothness = 0.8;
  double noise_scale = 0.3;
  float fps = 25.0f;
  FakeMode fake_mode = FakeMode::segment_replace;
  std::size_t shift_frames = 5;
  std::size_t segment_len_min = 10;
  std::size_t segment_len_max = 30;
  /// Fakes get a corpus-wide constant audio vector at frame 0, a
  /// feature-level stand-in for a leading-silence artifact.
  bool leading_artifact = false;
  /// Per-class split fractions; the remainder goes to test.
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  /// Fakes use the real fractions unless these are set.
  std::optional<double> fake_train_fraction;
  std::optional<double> fake_val_fraction;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthFeatureCorpus {
  std::vector<FeatureSequencePair> pairs;
  DatasetManifest manifest;  // feature paths features/<id>.avhf
};

SynthFeatureCorpus gen_feature_corpus(const SynthFeatureConfig& cfg);
void write_feature_corpus(const SynthFeatureCorpus& corpus, const std::filesystem::path& root);

/// In-memory training examples of one split, optionally RVRA only.
std::vector<TrainingExample> corpus_examples(const SynthFeatureCorpus& corpus, Split split,
                                             bool real_only);

}  // namespace avh
