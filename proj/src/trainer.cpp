#include "avh/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "avh/audio_analysis.hpp"
#include "avh/error.hpp"
#include "avh/parallel.hpp"

namespace avh {

double TrainConfig::effective_learning_rate() const {
  if (learning_rate) return *learning_rate;
  return mode == TrainingMode::unsupervised ? 1e-5 : 1e-3;
}

void TrainConfig::validate() const {
  if (!(effective_learning_rate() > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be > 0");
  if (plateau_patience < 1 || early_stop_patience < 1) {
    throw Error(ErrorKind::InvalidArgument, "patience values must be >= 1");
  }
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "plateau factor must be in (0, 1)");
  }
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch size must be >= 1");
  if (max_epochs < 1) throw Error(ErrorKind::InvalidArgument, "max_epochs must be >= 1");
  loss.validate();
}

PlateauScheduler::PlateauScheduler(double learning_rate, std::size_t patience, double factor)
    : learning_rate_(learning_rate), patience_(patience), factor_(factor) {}

bool PlateauScheduler::step(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ < patience_) return false;
  learning_rate_ *= factor_;
  bad_epochs_ = 0;
  return true;
}

bool EarlyStopping::step(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

AdamOptimizer::AdamOptimizer(std::size_t parameter_count, AdamConfig cfg)
    : cfg_(cfg),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))) {}

void AdamOptimizer::step(Eigen::Ref<Eigen::VectorXf> params, const Eigen::VectorXf& gradient,
                         double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double update = learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
    params[i] = static_cast<float>(params[i] - update);
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

LossAndGradient<float> example_gradient(const AlignmentNetwork& net, const TrainingExample& ex,
                                        TrainingMode mode, const LossConfig& loss) {
  if (mode == TrainingMode::unsupervised) return loss_gradient(net, ex.features, loss);
  return supervised_loss_gradient(net, ex.features, binary_label(ex.category));
}

void check_sets(const TrainConfig& cfg, std::span<const TrainingExample> train_set,
                std::span<const TrainingExample> val_set) {
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
  if (val_set.empty()) throw Error(ErrorKind::EmptyDataset, "validation set is empty");
  if (cfg.mode == TrainingMode::unsupervised) {
    for (auto set : {train_set, val_set}) {
      for (const auto& ex : set) {
        if (ex.category != Category::RVRA) {
          throw Error(ErrorKind::FakeInUnsupervised,
                      "record '" + ex.features.source_id + "' is " +
                          std::string(to_string(ex.category)));
        }
      }
    }
  } else {
    bool has_real = false, has_fake = false;
    for (const auto& ex : train_set) {
      (binary_label(ex.category) == Label::real ? has_real : has_fake) = true;
    }
    if (!has_real || !has_fake) {
      throw Error(ErrorKind::SingleClass, "supervised training needs real and fake examples");
    }
  }
}

}  // namespace

double evaluate_loss(const AlignmentNetwork& net, std::span<const TrainingExample> examples,
                     TrainingMode mode, const LossConfig& loss, unsigned threads) {
  if (examples.empty()) throw Error(ErrorKind::EmptyDataset, "no examples to evaluate");
  std::vector<double> losses(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    const auto& ex = examples[i];
    losses[i] = mode == TrainingMode::unsupervised
                    ? video_loss(net, ex.features, loss)
                    : supervised_loss(net, ex.features, binary_label(ex.category));
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

TrainResult train(const TrainConfig& cfg, std::span<const TrainingExample> train_set,
                  std::span<const TrainingExample> val_set) {
  cfg.validate();
  check_sets(cfg, train_set, val_set);

  Architecture arch = cfg.architecture;
  arch.audio_dim = static_cast<std::size_t>(train_set.front().features.audio.cols());
  arch.video_dim = static_cast<std::size_t>(train_set.front().features.video.cols());
  AlignmentNetwork net = AlignmentNetwork::initialized(arch, splitmix64(cfg.seed));
  AlignmentNetwork best = net;

  AdamOptimizer adam(net.parameter_count(), cfg.adam);
  PlateauScheduler scheduler(cfg.effective_learning_rate(), cfg.plateau_patience,
                             cfg.plateau_factor);
  EarlyStopping stopper(cfg.early_stop_patience);
  std::mt19937_64 shuffle_rng(splitmix64(cfg.seed ^ 0x5eed5eedULL));

  TrainReport report;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = cfg.mode == TrainingMode::unsupervised ? scheduler.learning_rate()
                                                             : cfg.effective_learning_rate();
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - begin);
      std::vector<std::optional<LossAndGradient<float>>> results(count);
      parallel_for(count, cfg.threads, [&](std::size_t j) {
        results[j] = example_gradient(net, train_set[order[begin + j]], cfg.mode, cfg.loss);
      });
      // Fixed-order reduction keeps runs reproducible for any thread count.
      Eigen::VectorXf grad = Eigen::VectorXf::Zero(net.parameters().size());
      for (const auto& r : results) {
        grad += r->gradient.parameters();
        epoch_loss += r->loss;
      }
      grad /= static_cast<float>(count);
      adam.step(net.parameters(), grad, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.train_loss = epoch_loss / static_cast<double>(train_set.size());
    rec.val_loss = evaluate_loss(net, val_set, cfg.mode, cfg.loss, cfg.threads);
    report.epochs.push_back(rec);

    if (stopper.step(rec.val_loss)) {
      best = net;
      report.best_epoch = epoch;
      report.best_val_loss = rec.val_loss;
    }
    if (cfg.mode == TrainingMode::unsupervised) scheduler.step(rec.val_loss);
    if (stopper.should_stop()) {
      report.stopped_early = true;
      break;
    }
  }
  return {std::move(best), std::move(report)};
}

std::vector<TrainingExample> load_examples(const DatasetManifest& manifest, Split split,
                                           bool real_only) {
  std::vector<TrainingExample> out;
  for (const auto* record : manifest.in_split(split)) {
    if (real_only && record->category != Category::RVRA) continue;
    if (!record->feature_path) {
      throw Error(ErrorKind::MissingFeatureFile, "record '" + record->source_id + "' has no feature_path");
    }
    TrainingExample ex;
    try {
      ex.features = read_features(manifest.resolve(*record->feature_path));
    } catch (const Error& e) {
      throw Error(ErrorKind::MissingFeatureFile, record->source_id + ": " + e.what());
    }
    ex.features.source_id = record->source_id;
    ex.category = record->category;
    out.push_back(std::move(ex));
  }
  return out;
}

double video_fakeness(const AlignmentNetwork& net, const FeatureSequencePair& pair,
                      const ScoreOptions& options) {
  if (options.trim_frames > 0) {
    return video_fakeness(net, trim_features(pair, options.trim_frames),
                          {options.mode, options.loss, false, 0, 1});
  }
  return options.mode == TrainingMode::unsupervised ? video_score(net, pair, options.loss)
                                                    : supervised_logit(net, pair);
}

std::vector<double> frame_fakeness(const AlignmentNetwork& net, const FeatureSequencePair& pair,
                                   const ScoreOptions& options) {
  if (options.trim_frames > 0) {
    return frame_fakeness(net, trim_features(pair, options.trim_frames),
                          {options.mode, options.loss, false, 0, 1});
  }
  return options.mode == TrainingMode::unsupervised ? per_frame_fakeness(net, pair, options.loss)
                                                    : supervised_frame_fakeness(net, pair);
}

ScoringResult score_dataset(const AlignmentNetwork& net, const DatasetManifest& manifest,
                            Split split, const ScoreOptions& options) {
  const auto records = manifest.in_split(split);

  struct Slot {
    std::optional<ScoreEntry> entry;
    std::vector<FrameScoreEntry> frames;
    std::optional<Omission> omission;
  };
  std::vector<Slot> slots(records.size());

  parallel_for(records.size(), options.threads, [&](std::size_t r) {
    const auto& record = *records[r];
    auto& slot = slots[r];
    if (!record.feature_path) {
      slot.omission = Omission{record.source_id, "MissingFeatureFile: no feature_path"};
      return;
    }
    FeatureSequencePair pair;
    try {
      pair = read_features(manifest.resolve(*record.feature_path));
      pair.source_id = record.source_id;
    } catch (const Error& e) {
      slot.omission = Omission{record.source_id, "MissingFeatureFile: " + std::string(e.what())};
      return;
    }
    const Label label = binary_label(record.category);
    slot.entry = ScoreEntry{record.source_id, video_fakeness(net, pair, options), label};
    if (options.per_frame) {
      const auto scores = frame_fakeness(net, pair, options);
      const auto labels = frame_labels(record, static_cast<std::size_t>(pair.frames()), pair.fps);
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const std::size_t original = i + options.trim_frames;
        slot.frames.push_back({record.source_id, original, scores[i], labels[original]});
      }
    }
  });

  ScoringResult result;
  for (auto& slot : slots) {
    if (slot.omission) result.omissions.push_back(std::move(*slot.omission));
    if (slot.entry) result.report.entries.push_back(std::move(*slot.entry));
    for (auto& f : slot.frames) result.report.frames.push_back(std::move(f));
  }
  return result;
}

}  // namespace avh
