#include <doctest.h>

#include <fstream>
#include <random>

#include "avh/error.hpp"
#include "avh/synth.hpp"
#include "avh/trainer.hpp"
#include "oracles.hpp"

using namespace avh;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.architecture.hidden = {16, 8};
  c.loss.neighborhood_half_width = 4;
  c.max_epochs = 3;
  c.batch_size = 4;
  c.seed = 5;
  return c;
}

std::vector<TrainingExample> zero_examples(std::size_t n, Eigen::Index frames = 12) {
  std::vector<TrainingExample> out(n);
  for (auto& e : out) {
    e.features.audio = FeatureMatrix::Zero(frames, 3);
    e.features.video = FeatureMatrix::Zero(frames, 2);
  }
  return out;
}

std::vector<TrainingExample> random_examples(std::mt19937_64& rng, std::size_t n, Category cat = Category::RVRA) {
  std::vector<TrainingExample> out(n);
  for (auto& e : out) {
    e.features = oracle::random_pair(rng, 10, 3, 2);
    e.category = cat;
  }
  return out;
}

ErrorKind train_error(const TrainConfig& cfg, std::span<const TrainingExample> tr, std::span<const TrainingExample> va) {
  try {
    train(cfg, tr, va);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoFailure;
}

}  // namespace

TEST_CASE("plateau scheduler counts strict improvements only") {
  PlateauScheduler s(1.0, 2, 0.5);
  CHECK_FALSE(s.step(3.0));
  CHECK_FALSE(s.step(3.0));  // equal is not an improvement
  CHECK(s.step(3.5));
  CHECK(s.learning_rate() == 0.5);
  CHECK_FALSE(s.step(2.0));
  CHECK_FALSE(s.step(2.5));
  CHECK(s.step(2.0));
  CHECK(s.learning_rate() == 0.25);
}

TEST_CASE("early stopping") {
  EarlyStopping e(3);
  CHECK(e.step(1.0));
  CHECK_FALSE(e.step(1.0));
  CHECK(e.step(0.9));
  CHECK_FALSE(e.step(0.95));
  CHECK_FALSE(e.step(0.9));
  CHECK_FALSE(e.should_stop());
  CHECK_FALSE(e.step(5.0));
  CHECK(e.should_stop());
}

TEST_CASE("adam first step moves every coordinate by the learning rate") {
  AdamOptimizer adam(3, AdamConfig{});
  Eigen::VectorXf p = Eigen::VectorXf::Zero(3);
  Eigen::VectorXf g(3);
  g << 2.0f, -0.5f, 0.0f;
  adam.step(p, g, 0.1);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(p[2] == 0.0f);
}

TEST_CASE("default learning rates and config validation") {
  TrainConfig c;
  CHECK(c.effective_learning_rate() == 1e-5);
  c.mode = TrainingMode::supervised;
  CHECK(c.effective_learning_rate() == 1e-3);
  c.learning_rate = 0.02;
  CHECK(c.effective_learning_rate() == 0.02);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.plateau_factor = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("flat validation loss: two reductions, stop after eleven epochs") {
  // All-zero inputs make Phi constant, so the loss never moves.
  const auto tr = zero_examples(6);
  const auto va = zero_examples(3);
  auto cfg = small_config();
  cfg.max_epochs = 100;
  const auto r = train(cfg, tr, va);
  const auto& ep = r.report.epochs;
  REQUIRE(ep.size() == 11);
  CHECK(r.report.stopped_early);
  CHECK(r.report.best_epoch == 1);
  for (std::size_t e = 0; e < 6; ++e) CHECK(ep[e].learning_rate == doctest::Approx(1e-5));
  for (std::size_t e = 6; e < 11; ++e) CHECK(ep[e].learning_rate == doctest::Approx(1e-6));
  for (const auto& rec : ep) CHECK(rec.val_loss == ep[0].val_loss);
}

TEST_CASE("training input errors") {
  std::mt19937_64 rng(3);
  const auto real = random_examples(rng, 4);
  const auto fake = random_examples(rng, 4, Category::FVRA);
  auto cfg = small_config();

  auto mixed = real;
  mixed.push_back(fake[0]);
  CHECK(train_error(cfg, mixed, real) == ErrorKind::FakeInUnsupervised);
  CHECK(train_error(cfg, real, mixed) == ErrorKind::FakeInUnsupervised);
  CHECK(train_error(cfg, {}, real) == ErrorKind::EmptyDataset);
  CHECK(train_error(cfg, real, {}) == ErrorKind::EmptyDataset);

  cfg.mode = TrainingMode::supervised;
  CHECK(train_error(cfg, real, real) == ErrorKind::SingleClass);
  CHECK_NOTHROW(train(cfg, mixed, mixed));

  auto wrong_dim = real;
  wrong_dim[2].features = oracle::random_pair(rng, 10, 4, 2);
  cfg.mode = TrainingMode::unsupervised;
  CHECK(train_error(cfg, wrong_dim, real) == ErrorKind::DimensionMismatch);
}

TEST_CASE("training is deterministic and independent of the thread count") {
  std::mt19937_64 rng(9);
  const auto tr = random_examples(rng, 11);
  const auto va = random_examples(rng, 4);
  auto cfg = small_config();
  cfg.learning_rate = 1e-3;
  const auto a = train(cfg, tr, va);
  const auto b = train(cfg, tr, va);
  cfg.threads = 3;
  const auto c = train(cfg, tr, va);
  CHECK(a.network.parameters() == b.network.parameters());
  CHECK(a.network.parameters() == c.network.parameters());
  REQUIRE(a.report.epochs.size() == c.report.epochs.size());
  for (std::size_t e = 0; e < a.report.epochs.size(); ++e) {
    CHECK(a.report.epochs[e].train_loss == c.report.epochs[e].train_loss);
    CHECK(a.report.epochs[e].val_loss == c.report.epochs[e].val_loss);
  }
  cfg.seed = 6;
  CHECK(train(cfg, tr, va).network.parameters() != a.network.parameters());
}

TEST_CASE("the returned network is the best validation epoch") {
  std::mt19937_64 rng(10);
  const auto tr = random_examples(rng, 8);
  const auto va = random_examples(rng, 4);
  auto cfg = small_config();
  cfg.learning_rate = 0.05;  // large enough to wander
  cfg.max_epochs = 8;
  const auto r = train(cfg, tr, va);
  double best = INFINITY;
  for (const auto& e : r.report.epochs) best = std::min(best, e.val_loss);
  CHECK(r.report.best_val_loss == best);
  CHECK(r.report.epochs[r.report.best_epoch - 1].val_loss == best);
  CHECK(evaluate_loss(r.network, va, cfg.mode, cfg.loss) == r.report.best_val_loss);
  CHECK(evaluate_loss(r.network, va, cfg.mode, cfg.loss, 2) == r.report.best_val_loss);
}

TEST_CASE("unsupervised training on correlated features lowers the loss") {
  SynthFeatureConfig sc;
  sc.n_real = 120;
  sc.frames = 40;
  sc.seed = 4;
  const auto corpus = gen_feature_corpus(sc);
  auto cfg = small_config();
  cfg.architecture.hidden = {32, 16};
  cfg.loss.neighborhood_half_width = 15;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 6;
  const auto tr = corpus_examples(corpus, Split::train, true);
  const auto va = corpus_examples(corpus, Split::val, true);
  const auto r = train(cfg, tr, va);
  // chance level is the mean log window size, just under log 31
  CHECK(r.report.epochs.front().val_loss < std::log(31.0));
  CHECK(r.report.best_val_loss < 0.5 * std::log(31.0));
}

TEST_CASE("supervised training separates shifted fakes") {
  SynthFeatureConfig sc;
  sc.n_real = 60;
  sc.n_fake = 60;
  sc.frames = 30;
  sc.fake_mode = FakeMode::global_shift;
  sc.seed = 8;
  const auto corpus = gen_feature_corpus(sc);
  auto cfg = small_config();
  cfg.mode = TrainingMode::supervised;
  cfg.architecture.hidden = {32, 16};
  cfg.max_epochs = 15;
  const auto r = train(cfg, corpus_examples(corpus, Split::train, false), corpus_examples(corpus, Split::val, false));
  CHECK(r.report.best_val_loss < r.report.epochs.front().val_loss);
  CHECK(r.report.best_val_loss < std::log(2.0));
}

TEST_CASE("loading and scoring a dataset from disk") {
  oracle::TempDir dir("score");
  SynthFeatureConfig sc;
  sc.n_real = 6;
  sc.n_fake = 4;
  sc.frames = 20;
  sc.segment_len_min = 4;
  sc.segment_len_max = 12;
  sc.train_fraction = 0.0;
  sc.val_fraction = 0.0;
  sc.seed = 2;
  const auto corpus = gen_feature_corpus(sc);
  write_feature_corpus(corpus, dir.path());
  auto manifest = read_manifest(dir / "manifest.jsonl");
  CHECK(manifest.base_dir == dir.path());

  const auto net = AlignmentNetwork::initialized([] {
    Architecture a;
    a.audio_dim = 16;
    a.video_dim = 16;
    a.hidden = {8};
    return a;
  }(), 1);

  // remove one fake's features: it is reported, not fatal
  const auto& victim = manifest.in_split(Split::test).back()->source_id;
  std::filesystem::remove(dir / ("features/" + victim + ".avhf"));

  ScoreOptions opt;
  opt.loss.neighborhood_half_width = 3;
  opt.per_frame = true;
  const auto res = score_dataset(net, manifest, Split::test, opt);
  REQUIRE(res.omissions.size() == 1);
  CHECK(res.omissions[0].source_id == victim);
  REQUIRE(res.report.entries.size() == 9);
  std::size_t j = 0;
  for (const auto* rec : manifest.in_split(Split::test)) {
    if (rec->source_id == victim) continue;
    CHECK(res.report.entries[j].source_id == rec->source_id);
    CHECK(res.report.entries[j].label == binary_label(rec->category));
    ++j;
  }
  CHECK(res.report.frames.size() == 9 * 20);
  CHECK(res.report.frames[0].frame_index == 0);

  // frame rows keep their original index after trimming
  opt.trim_frames = 2;
  const auto trimmed = score_dataset(net, manifest, Split::test, opt);
  CHECK(trimmed.report.frames.size() == 9 * 18);
  CHECK(trimmed.report.frames[0].frame_index == 2);
  // frame 10 sees the same window either way; frame 2 loses its left neighbours
  CHECK(trimmed.report.frames[8].frame_index == 10);
  CHECK(trimmed.report.frames[8].score == res.report.frames[10].score);
  CHECK(trimmed.report.frames[0].score != res.report.frames[2].score);
  const auto& first = corpus.pairs[0];
  CHECK(trimmed.report.entries[0].score ==
        video_fakeness(net, trim_features(first, 2), ScoreOptions{TrainingMode::unsupervised, opt.loss}));

  opt.threads = 3;
  opt.trim_frames = 0;
  const auto threaded = score_dataset(net, manifest, Split::test, opt);
  for (std::size_t i = 0; i < res.report.entries.size(); ++i) CHECK(threaded.report.entries[i].score == res.report.entries[i].score);

  // frame labels come from the fake segments
  std::size_t fake_frames = 0;
  for (const auto& f : res.report.frames) fake_frames += f.label == Label::fake;
  CHECK(fake_frames > 0);
  CHECK(fake_frames < 3 * 20);

  CHECK_THROWS_AS(load_examples(manifest, Split::test, false), Error);
  CHECK(load_examples(manifest, Split::test, true).size() == 6);
}

TEST_CASE("real-only loading never opens fake feature files") {
  oracle::TempDir dir("realonly");
  DatasetManifest m;
  m.base_dir = dir.path();
  std::mt19937_64 rng(1);
  auto pair = oracle::random_pair(rng, 8, 3, 2);
  write_features(pair, dir / "r.avhf");
  ManifestRecord r;
  r.source_id = "r";
  r.feature_path = "r.avhf";
  r.split = Split::train;
  ManifestRecord f = r;
  f.source_id = "f";
  f.feature_path = "does/not/exist.avhf";
  f.category = Category::FVFA;
  f.fake_segments = {{0.0, 0.1}};
  m.records = {r, f};
  const auto ex = load_examples(m, Split::train, true);
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].features.source_id == "r");
  CHECK(ex[0].features.audio == pair.audio);
  try {
    load_examples(m, Split::train, false);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingFeatureFile);
  }
}
