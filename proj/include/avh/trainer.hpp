#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avh/alignment_model.hpp"
#include "avh/checkpoint.hpp"
#include "avh/features.hpp"
#include "avh/manifest.hpp"
#include "avh/metrics.hpp"

namespace avh {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  TrainingMode mode = TrainingMode::unsupervised;
  /// Unset: 1e-5 for unsupervised, 1e-3 for supervised training.
  std::optional<double> learning_rate;
  /// Reduce-on-plateau, unsupervised mode only.
  std::size_t plateau_patience = 5;
  double plateau_factor = 0.1;
  std::size_t early_stop_patience = 10;
  std::size_t batch_size = 8;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  AdamConfig adam;
  /// audio_dim / video_dim are taken from the training data.
  Architecture architecture;
  LossConfig loss;
  unsigned threads = 1;

  double effective_learning_rate() const;
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
  std::string checkpoint_path;
};

/// Multiplies the learning rate by `factor` once `patience` consecutive
/// epochs fail to strictly decrease the best validation loss, then starts
/// counting again.
class PlateauScheduler {
 public:
  PlateauScheduler(double learning_rate, std::size_t patience, double factor);

  /// Returns true when this call reduced the learning rate.
  bool step(double val_loss);
  double learning_rate() const { return learning_rate_; }

 private:
  double learning_rate_;
  std::size_t patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

/// Signals a stop after `patience` consecutive epochs without a strict
/// decrease of the validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when val_loss is a new best.
  bool step(double val_loss);
  bool should_stop() const { return bad_epochs_ >= patience_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

/// Adam over a flat parameter vector.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t parameter_count, AdamConfig cfg);
  void step(Eigen::Ref<Eigen::VectorXf> params, const Eigen::VectorXf& gradient, double learning_rate);

 private:
  AdamConfig cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::size_t t_ = 0;
};

struct TrainingExample {
  FeatureSequencePair features;
  Category category = Category::RVRA;
};

struct TrainResult {
  AlignmentNetwork network;
  TrainReport report;
};

/// Validation loss of `net` on `examples` in the given mode: mean per-video
/// alignment loss, or mean cross-entropy for supervised training.
double evaluate_loss(const AlignmentNetwork& net, std::span<const TrainingExample> examples,
                     TrainingMode mode, const LossConfig& loss, unsigned threads = 1);

/// Trains from a seeded initialisation and returns the parameters of the
/// epoch with the lowest validation loss. Unsupervised training rejects any
/// non-RVRA example with FakeInUnsupervised; supervised training needs both
/// labels (SingleClass). Empty sets raise EmptyDataset.
TrainResult train(const TrainConfig& cfg, std::span<const TrainingExample> train_set,
                  std::span<const TrainingExample> val_set);

/// Reads the feature files of one split. With real_only, non-RVRA records are
/// skipped before their files are touched. Throws MissingFeatureFile.
std::vector<TrainingExample> load_examples(const DatasetManifest& manifest, Split split,
                                           bool real_only);

struct ScoreOptions {
  TrainingMode mode = TrainingMode::unsupervised;
  LossConfig loss;
  bool per_frame = false;
  /// Frames dropped from the start of each video before scoring.
  std::size_t trim_frames = 0;
  unsigned threads = 1;
};

/// Video score: pooled misalignment (unsupervised) or the supervised logit.
double video_fakeness(const AlignmentNetwork& net, const FeatureSequencePair& pair,
                      const ScoreOptions& options);
/// Per-frame fakeness: 1 - p(v_i|a_i) (unsupervised) or sigmoid(Phi_ii).
std::vector<double> frame_fakeness(const AlignmentNetwork& net, const FeatureSequencePair& pair,
                                   const ScoreOptions& options);

struct Omission {
  std::string source_id;
  std::string reason;
};

struct ScoringResult {
  ScoreReport report;
  std::vector<Omission> omissions;
};

/// One row per scorable record of the split, in manifest order. Records whose
/// feature file is missing or unreadable are reported as omissions and
/// skipped.
ScoringResult score_dataset(const AlignmentNetwork& net, const DatasetManifest& manifest,
                            Split split, const ScoreOptions& options);

}  // namespace avh
