#include "avh/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <map>
#include <set>

#include "avh/audio_analysis.hpp"
#include "avh/audio_io.hpp"
#include "avh/checkpoint.hpp"
#include "avh/csv.hpp"
#include "avh/error.hpp"
#include "avh/features.hpp"
#include "avh/manifest.hpp"
#include "avh/metrics.hpp"
#include "avh/parallel.hpp"
#include "avh/synth.hpp"
#include "avh/trainer.hpp"

namespace avh {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// JSON config files: top-level keys are global option names, nested objects
// are keyed by subcommand name. Also used to dump the resolved config.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return options_json(app, default_also).dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j = json::parse(input, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw CLI::ConversionError("config file must hold a JSON object");
    }
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

  static json options_json(const CLI::App* app, bool default_also) {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string& name = opt->get_lnames().front();
      if (name == "help" || name == "config") continue;
      if (opt->count() > 0) {
        const auto& r = opt->results();
        if (r.size() == 1 && opt->get_items_expected_max() <= 1) {
          j[name] = r.front();
        } else {
          j[name] = r;
        }
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands()) {
      j[sub->get_name()] = options_json(sub, default_also);
    }
    return j;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("unsupported config value " + v.dump());
  }

  static void collect(const json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object()) {
        auto next = parents;
        next.push_back(it.key());
        collect(*it, next, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array()) {
        for (const auto& v : *it) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(*it));
      }
      items.push_back(std::move(item));
    }
  }
};

struct Globals {
  unsigned threads = 0;
  std::string log_level = "info";
  std::string output_dir;
};

struct Context {
  CLI::App* root = nullptr;
  Globals globals;

  fs::path out_path(const std::string& p) const {
    fs::path path(p);
    if (path.is_absolute() || globals.output_dir.empty()) return path;
    return fs::path(globals.output_dir) / path;
  }

  // Every output file gets a "<file>.config.json" sidecar with the resolved
  // flags so runs can be reproduced.
  void write_sidecar(const fs::path& output) const {
    fs::path sidecar = output;
    sidecar += ".config.json";
    const std::string text = root->config_to_str(true, false);
    write_text(sidecar, text);
  }

  static void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  }

  void write_table(const CsvTable& table, const fs::path& path) const {
    write_csv(table, path);
    write_sidecar(path);
  }
};

std::string label_text(Label label) { return std::to_string(to_int(label)); }

Label parse_label(const std::string& text, std::size_t row) {
  if (text == "0" || text == "real") return Label::real;
  if (text == "1" || text == "fake") return Label::fake;
  throw Error(ErrorKind::ParseError, "bad label '" + text + "'", row + 2);
}

double parse_double(const std::string& text, std::size_t row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::ParseError, "bad number '" + text + "'", row + 2);
}

std::size_t column_or_throw(const CsvTable& table, const std::string& name) {
  if (auto c = table.column(name)) return *c;
  throw Error(ErrorKind::ParseError, "CSV has no column '" + name + "'");
}

const std::vector<std::string> kSplits = {"train", "val", "test"};

std::optional<Split> optional_split(const std::string& text) {
  if (text.empty() || text == "all") return std::nullopt;
  return parse_split(text);
}

std::vector<const ManifestRecord*> select(const DatasetManifest& m, std::optional<Split> split) {
  if (split) return m.in_split(*split);
  std::vector<const ManifestRecord*> out;
  for (const auto& r : m.records) out.push_back(&r);
  return out;
}

// ---- audit ---------------------------------------------------------------

void add_audit(CLI::App& app, Context& ctx, std::vector<std::pair<CLI::App*, std::function<void()>>>& handlers) {
  struct Opts {
    std::string manifest, out, split;
    AuditConfig cfg;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("audit", "Per-file leading/trailing silence and amplitude features");
  sub->add_option("--manifest", o->manifest, "Dataset manifest (JSONL)")->required();
  sub->add_option("--out", o->out, "Output CSV")->required();
  sub->add_option("--tau", o->cfg.silence_threshold_tau, "Silence threshold (|s| <= tau is silent)");
  sub->add_option("--delta", o->cfg.leading_window_delta_s, "Leading window for the max-amplitude feature (s)");
  sub->add_option("--split", o->split, "Restrict to one split")->check(CLI::IsMember({"all", "train", "val", "test"}));
  handlers.emplace_back(sub, [o, &ctx] {
    o->cfg.validate();
    const auto manifest = read_manifest(o->manifest);
    std::vector<const ManifestRecord*> records;
    for (const auto* r : select(manifest, optional_split(o->split))) {
      if (r->audio_path) {
        records.push_back(r);
      } else {
        spdlog::warn("{}: no audio_path, skipped", r->source_id);
      }
    }
    std::vector<BiasFeatureVector> features(records.size());
    parallel_for(records.size(), ctx.globals.threads, [&](std::size_t i) {
      try {
        features[i] = bias_features(read_wav(manifest.resolve(*records[i]->audio_path)), o->cfg);
      } catch (const Error& e) {
        throw Error(e.kind(), records[i]->source_id + ": " + e.detail());
      }
    });
    CsvTable table;
    table.header = {"source_id", "label", "leading_silence_s", "leading_max_amplitude",
                    "trailing_silence_s", "global_max_amplitude"};
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& f = features[i];
      table.rows.push_back({records[i]->source_id, label_text(binary_label(records[i]->category)),
                            format_number(f.leading_silence_s), format_number(f.leading_max_amplitude),
                            format_number(f.trailing_silence_s), format_number(f.global_max_amplitude)});
    }
    ctx.write_table(table, ctx.out_path(o->out));
    spdlog::info("audited {} clips", records.size());
  });
}

// ---- trim ----------------------------------------------------------------

void add_trim(CLI::App& app, Context& ctx, std::vector<std::pair<CLI::App*, std::function<void()>>>& handlers) {
  struct Opts {
    std::string manifest, out_dir;
    double trim_s = 0.040;
    std::size_t frames = 1;
    std::string encoding = "float32";
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("trim", "Write trimmed copies of every WAV and feature file");
  sub->add_option("--manifest", o->manifest, "Dataset manifest (JSONL)")->required();
  sub->add_option("--out-dir", o->out_dir, "Output root; relative paths are preserved")->required();
  sub->add_option("--trim-s", o->trim_s, "Audio removed from the start (s)")->check(CLI::NonNegativeNumber);
  sub->add_option("--frames", o->frames, "Feature frames removed from the start");
  sub->add_option("--encoding", o->encoding, "WAV encoding")->check(CLI::IsMember({"float32", "pcm16"}));
  handlers.emplace_back(sub, [o, &ctx] {
    const auto manifest = read_manifest(o->manifest);
    const fs::path root = ctx.out_path(o->out_dir);
    const auto encoding = o->encoding == "pcm16" ? WavEncoding::pcm16 : WavEncoding::float32;
    auto target = [&](const std::string& rel) {
      fs::path p(rel);
      if (p.is_absolute()) throw Error(ErrorKind::InvalidArgument, "cannot mirror absolute path " + rel);
      return root / p;
    };

    DatasetManifest out;
    out.records.resize(manifest.records.size());
    parallel_for(manifest.records.size(), ctx.globals.threads, [&](std::size_t i) {
      const auto& rec = manifest.records[i];
      auto& copy = out.records[i];
      copy = rec;
      // Seconds removed from the timeline; the feature frame grid wins when
      // both streams are present.
      double shift = o->trim_s;
      try {
        if (rec.audio_path) {
          const auto clip = read_wav(manifest.resolve(*rec.audio_path));
          write_wav(trim_leading(clip, o->trim_s), target(*rec.audio_path), encoding);
        }
        if (rec.feature_path) {
          const auto pair = read_features(manifest.resolve(*rec.feature_path));
          write_features(trim_features(pair, o->frames), target(*rec.feature_path));
          shift = static_cast<double>(o->frames) / pair.fps;
        }
      } catch (const Error& e) {
        throw Error(e.kind(), rec.source_id + ": " + e.detail());
      }
      copy.fake_segments.clear();
      for (const auto& seg : rec.fake_segments) {
        if (seg.end_s - shift <= 0.0) continue;
        copy.fake_segments.push_back({std::max(0.0, seg.start_s - shift), seg.end_s - shift});
      }
      if (rec.duration_s) copy.duration_s = std::max(0.0, *rec.duration_s - shift);
    });
    const fs::path manifest_out = root / "manifest.jsonl";
    write_manifest(out, manifest_out);
    ctx.write_sidecar(manifest_out);
    spdlog::info("trimmed {} records into {}", out.records.size(), root.string());
  });
}

// ---- eval-auc ------------------------------------------------------------

void add_eval_auc(CLI::App& app, Context& ctx, std::vector<std::pair<CLI::App*, std::function<void()>>>& handlers) {
  struct Opts {
    std::string scores, feature = "score", label_column = "label";
    bool per_frame = false, negate = false;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("eval-auc", "ROC AUC of a scores CSV");
  sub->add_option("--scores", o->scores, "CSV with a score column and a 0/1 label column")->required();
  sub->add_option("--feature", o->feature, "Score column; bias feature columns are oriented so fakes rank high");
  sub->add_option("--label-column", o->label_column, "Label column");
  sub->add_flag("--per-frame", o->per_frame, "Frame-level rows (needs a frame_index column)");
  sub->add_flag("--negate", o->negate, "Rank low scores as fake");
  handlers.emplace_back(sub, [o, &ctx] {
    (void)ctx;
    const auto table = read_csv(o->scores);
    const auto sc = column_or_throw(table, o->feature);
    const auto lc = column_or_throw(table, o->label_column);
    if (o->per_frame) column_or_throw(table, "frame_index");
    double sign = o->negate ? -1.0 : 1.0;
    try {
      if (!higher_is_fake(parse_bias_feature(o->feature))) sign = -sign;
    } catch (const Error&) {
      // plain score column
    }
    std::vector<double> scores;
    std::vector<Label> labels;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      scores.push_back(sign * parse_double(table.rows[r][sc], r));
      labels.push_back(parse_label(table.rows[r][lc], r));
    }
    std::cout << format_number(auc(scores, labels)) << "\n";
  });
}

// ---- plot-data -----------------------------------------------------------

std::vector<LabeledClip> load_clips(const DatasetManifest& manifest, std::optional<Split> split,
                                    unsigned threads) {
  std::vector<const ManifestRecord*> records;
  for (const auto* r : select(manifest, split)) {
    if (r->audio_path) records.push_back(r);
  }
  std::vector<LabeledClip> clips(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    try {
      clips[i] = {read_wav(manifest.resolve(*records[i]->audio_path)), binary_label(records[i]->category)};
    } catch (const Error& e) {
      throw Error(e.kind(), records[i]->source_id + ": " + e.detail());
    }
  });
  return clips;
}

void add_plot_data(CLI::App& app, Context& ctx, std::vector<std::pair<CLI::App*, std::function<void()>>>& handlers) {
  auto* plot = app.add_subcommand("plot-data", "Histogram and sweep CSVs for plotting");
  plot->require_subcommand(1);

  struct HistOpts {
    std::string scores, feature = "leading_silence_s", out;
    std::size_t bins = 50;
    double lo = std::numeric_limits<double>::quiet_NaN(), hi = std::numeric_limits<double>::quiet_NaN();
  };
  auto h = std::make_shared<HistOpts>();
  auto* hist = plot->add_subcommand("histogram", "Per-class normalised histogram of one CSV column");
  hist->add_option("--scores", h->scores, "CSV with the column and a label column (e.g. audit output)")->required();
  hist->add_option("--feature", h->feature, "Column to histogram");
  hist->add_option("--bins", h->bins, "Number of bins")->check(CLI::PositiveNumber);
  auto* lo_opt = hist->add_option("--lo", h->lo, "Lower edge (default: data minimum)");
  auto* hi_opt = hist->add_option("--hi", h->hi, "Upper edge (default: data maximum)");
  hist->add_option("--out", h->out, "Output CSV")->required();
  handlers.emplace_back(hist, [h, &ctx, lo_opt, hi_opt] {
    const auto table = read_csv(h->scores);
    const auto vc = column_or_throw(table, h->feature);
    const auto lc = column_or_throw(table, "label");
    std::vector<double> by_class[2];
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      by_class[to_int(parse_label(table.rows[r][lc], r))].push_back(parse_double(table.rows[r][vc], r));
    }
    double lo = h->lo, hi = h->hi;
    if (lo_opt->count() == 0 || hi_opt->count() == 0) {
      double mn = std::numeric_limits<double>::infinity(), mx = -mn;
      for (const auto& v : by_class) {
        for (double x : v) {
          mn = std::min(mn, x);
          mx = std::max(mx, x);
        }
      }
      if (!std::isfinite(mn)) throw Error(ErrorKind::EmptyInput, "no rows to histogram");
      if (lo_opt->count() == 0) lo = mn;
      if (hi_opt->count() == 0) hi = mx > lo ? mx : lo + 1.0;
    }
    CsvTable out;
    out.header = {"label", "bin_center", "fraction"};
    for (int c = 0; c < 2; ++c) {
      if (by_class[c].empty()) continue;
      for (const auto& bin : histogram(by_class[c], h->bins, lo, hi)) {
        out.rows.push_back({std::to_string(c), format_number(bin.center), format_number(bin.fraction)});
      }
    }
    ctx.write_table(out, ctx.out_path(h->out));
  });

  struct SweepOpts {
    std::string manifest, feature = "leading_silence", split, out;
    std::vector<double> grid;
  };
  auto s = std::make_shared<SweepOpts>();
  auto* sweep = plot->add_subcommand("sweep", "AUC of a silence/amplitude classifier across a parameter grid");
  sweep->add_option("--manifest", s->manifest, "Dataset manifest (JSONL)")->required();
  sweep->add_option("--feature", s->feature, "leading_silence | trailing_silence (grid = tau) or leading_max_amplitude (grid = delta seconds)")
      ->check(CLI::IsMember({"leading_silence", "trailing_silence", "leading_max_amplitude"}));
  sweep->add_option("--grid", s->grid, "Parameter values, comma separated")->delimiter(',')->required();
  sweep->add_option("--split", s->split, "Restrict to one split")->check(CLI::IsMember({"all", "train", "val", "test"}));
  sweep->add_option("--out", s->out, "Output CSV")->required();
  handlers.emplace_back(sweep, [s, &ctx] {
    const auto manifest = read_manifest(s->manifest);
    const auto clips = load_clips(manifest, optional_split(s->split), ctx.globals.threads);
    const auto feature = parse_bias_feature(s->feature);
    const auto points = sweep_auc(clips, feature, s->grid, ctx.globals.threads);
    CsvTable out;
    out.header = {"parameter", "auc"};
    for (const auto& p : points) out.rows.push_back({format_number(p.parameter), format_number(p.auc)});
    ctx.write_table(out, ctx.out_path(s->out));
    spdlog::info("peak AUC at parameter {}", peak_parameter(points));
  });
}

// ---- gen-synth -----------------------------------------------------------

void add_gen_synth(CLI::App& app, Context& ctx, std::vector<std::pair<CLI::App*, std::function<void()>>>& handlers) {
  auto* gen = app.add_subcommand("gen-synth", "Generate synthetic corpora");
  gen->require_subcommand(1);

  struct AudioOpts {
    SynthAudioConfig cfg;
    std::string out, encoding = "float32";
  };
  auto a = std::make_shared<AudioOpts>();
  auto* audio = gen->add_subcommand("audio", "Silence-biased WAV corpus (wav/ + manifest.jsonl)");
  audio->add_option("--n-real", a->cfg.n_real, "Real clips");
  audio->add_option("--n-fake", a->cfg.n_fake, "Fake clips");
  audio->add_option("--lead-min", a->cfg.fake_lead_min_s, "Shortest fake leading silence (s)");
  audio->add_option("--lead-max", a->cfg.fake_lead_max_s, "Longest fake leading silence (s)");
  audio->add_option("--noise-floor", a->cfg.real_noise_floor, "Minimum |s| of the background noise");
  audio->add_option("--onset-min", a->cfg.speech_onset_min_s, "Earliest speech onset (s)");
  audio->add_option("--onset-max", a->cfg.speech_onset_max_s, "Latest speech onset (s)");
  audio->add_option("--speech-peak", a->cfg.speech_peak, "Peak speech amplitude");
  audio->add_option("--duration", a->cfg.duration_s, "Clip duration (s)");
  audio->add_option("--sample-rate", a->cfg.sample_rate, "Sample rate (Hz)");
  audio->add_option("--seed", a->cfg.seed, "Seed");
  audio->add_option("--encoding", a->encoding, "WAV encoding")->check(CLI::IsMember({"float32", "pcm16"}));
  audio->add_option("--out", a->out, "Output directory")->required();
  handlers.emplace_back(audio, [a, &ctx] {
    const auto corpus = gen_audio_corpus(a->cfg);
    const fs::path root = ctx.out_path(a->out);
    write_audio_corpus(corpus, root, a->encoding == "pcm16" ? WavEncoding::pcm16 : WavEncoding::float32);
    ctx.write_sidecar(root / "manifest.jsonl");
    spdlog::info("wrote {} clips to {}", corpus.clips.size(), root.string());
  });

  struct FeatureOpts {
    SynthFeatureConfig cfg;
    std::string out, fake_mode = "segment_replace";
    double fake_train = 0.0, fake_val = 0.0;
  };
  auto f = std::make_shared<FeatureOpts>();
  auto* feat = gen->add_subcommand("features", "Correlated audio/video feature corpus (features/ + manifest.jsonl)");
  feat->add_option("--n-real", f->cfg.n_real, "Real videos");
  feat->add_option("--n-fake", f->cfg.n_fake, "Fake videos");
  feat->add_option("--frames", f->cfg.frames, "Frames per video");
  feat->add_option("--feature-dim", f->cfg.feature_dim, "Feature width of both streams");
  feat->add_option("--latent-dim", f->cfg.latent_dim, "Shared latent width");
  feat->add_option("--smoothness", f->cfg.smoothness, "AR(1) coefficient of the latent walk");
  feat->add_option("--noise-scale", f->cfg.noise_scale, "Per-modality noise std");
  feat->add_option("--fps", f->cfg.fps, "Frame rate");
  feat->add_option("--fake-mode", f->fake_mode, "Video manipulation of fakes")
      ->check(CLI::IsMember({"global_shift", "segment_replace", "segment_shift"}));
  feat->add_option("--shift-frames", f->cfg.shift_frames, "Temporal shift for the shift modes");
  feat->add_option("--segment-len-min", f->cfg.segment_len_min, "Shortest manipulated segment (frames)");
  feat->add_option("--segment-len-max", f->cfg.segment_len_max, "Longest manipulated segment (frames)");
  feat->add_flag("--leading-artifact", f->cfg.leading_artifact, "Stamp a constant audio vector on frame 0 of fakes");
  feat->add_option("--train-fraction", f->cfg.train_fraction, "Per-class train share");
  feat->add_option("--val-fraction", f->cfg.val_fraction, "Per-class validation share");
  auto* ftf = feat->add_option("--fake-train-fraction", f->fake_train, "Train share of fakes (default: --train-fraction)");
  auto* fvf = feat->add_option("--fake-val-fraction", f->fake_val, "Validation share of fakes (default: --val-fraction)");
  feat->add_option("--seed", f->cfg.seed, "Seed");
  feat->add_option("--out", f->out, "Output directory")->required();
  handlers.emplace_back(feat, [f, &ctx, ftf, fvf] {
    f->cfg.fake_mode = parse_fake_mode(f->fake_mode);
    if (ftf->count() > 0) f->cfg.fake_train_fraction = f->fake_train;
    if (fvf->count() > 0) f->cfg.fake_val_fraction = f->fake_val;
    const auto corpus = gen_feature_corpus(f->cfg);
    const fs::path root = ctx.out_path(f->out);
    write_feature_corpus(corpus, root);
    ctx.write_sidecar(root / "manifest.jsonl");
    spdlog::info("wrote {} feature files to {}", corpus.pairs.size(), root.string());
  });
}

// ---- train-align / train-sup ---------------------------------------------

void add_train(CLI::App& app, Context& ctx, std::vector<std::pair<CLI::App*, std::function<void()>>>& handlers,
               TrainingMode mode) {
  struct Opts {
    TrainConfig cfg;
    std::string manifest, out, head = "mlp", pooling = "logsumexp";
    double lr = 0.0;
    std::vector<std::size_t> hidden = {512, 256, 128};
    bool normalize = true;
  };
  auto o = std::make_shared<Opts>();
  o->cfg.mode = mode;
  const bool unsup = mode == TrainingMode::unsupervised;
  auto* sub = app.add_subcommand(unsup ? "train-align" : "train-sup",
                                 unsup ? "Train the alignment scorer on real (RVRA) videos only"
                                       : "Train the supervised variant on real and fake videos");
  sub->add_option("--manifest", o->manifest, "Dataset manifest with train and val splits")->required();
  sub->add_option("--out", o->out, "Checkpoint path; report CSV and summary JSON go next to it")->required();
  auto* lr_opt = sub->add_option("--lr", o->lr, unsup ? "Learning rate (default 1e-5)" : "Learning rate (default 1e-3)");
  sub->add_option("--epochs", o->cfg.max_epochs, "Maximum epochs");
  sub->add_option("--batch-size", o->cfg.batch_size, "Videos per batch");
  sub->add_option("--early-stop-patience", o->cfg.early_stop_patience, "Epochs without improvement before stopping");
  if (unsup) {
    sub->add_option("--plateau-patience", o->cfg.plateau_patience, "Epochs without improvement before reducing lr");
    sub->add_option("--plateau-factor", o->cfg.plateau_factor, "Learning-rate reduction factor");
  }
  sub->add_option("--seed", o->cfg.seed, "Seed for initialisation and shuffling");
  sub->add_option("--head", o->head, "Scorer head")->check(CLI::IsMember({"mlp", "linear"}));
  sub->add_option("--hidden", o->hidden, "Hidden widths of the MLP head, comma separated")->delimiter(',');
  sub->add_option("--normalize-inputs", o->normalize, "L2-normalise audio and video features");
  sub->add_option("--layer-norm-eps", o->cfg.architecture.layer_norm_eps, "Layer-norm epsilon");
  sub->add_option("--neighborhood", o->cfg.loss.neighborhood_half_width, "Half width h of the candidate window");
  sub->add_option("--pooling", o->pooling, "Video score pooling")->check(CLI::IsMember({"logsumexp", "mean"}));
  sub->add_option("--adam-beta1", o->cfg.adam.beta1, "Adam beta1");
  sub->add_option("--adam-beta2", o->cfg.adam.beta2, "Adam beta2");
  sub->add_option("--adam-eps", o->cfg.adam.epsilon, "Adam epsilon");

  handlers.emplace_back(sub, [o, &ctx, lr_opt, unsup] {
    auto cfg = o->cfg;
    if (lr_opt->count() > 0) cfg.learning_rate = o->lr;
    cfg.architecture.head = parse_head_type(o->head);
    cfg.architecture.hidden = o->hidden;
    cfg.architecture.normalize_inputs = o->normalize;
    cfg.loss.pooling = parse_pooling(o->pooling);
    cfg.threads = ctx.globals.threads;
    cfg.validate();

    const auto manifest = read_manifest(o->manifest);
    const auto train_set = load_examples(manifest, Split::train, unsup);
    const auto val_set = load_examples(manifest, Split::val, unsup);
    spdlog::info("training on {} videos, validating on {}", train_set.size(), val_set.size());
    auto result = train(cfg, train_set, val_set);

    const fs::path ckpt_path = ctx.out_path(o->out);
    Checkpoint ckpt{std::move(result.network), cfg.loss, cfg.mode, {}};
    ckpt.metadata["seed"] = std::to_string(cfg.seed);
    ckpt.metadata["best_epoch"] = std::to_string(result.report.best_epoch);
    ckpt.metadata["best_val_loss"] = format_number(result.report.best_val_loss);
    write_checkpoint(ckpt, ckpt_path);
    ctx.write_sidecar(ckpt_path);

    CsvTable curve;
    curve.header = {"epoch", "train_loss", "val_loss", "learning_rate"};
    for (const auto& e : result.report.epochs) {
      curve.rows.push_back({std::to_string(e.epoch), format_number(e.train_loss),
                            format_number(e.val_loss), format_number(e.learning_rate)});
    }
    fs::path report_path = ckpt_path;
    report_path += ".report.csv";
    write_csv(curve, report_path);

    json summary;
    summary["mode"] = std::string(to_string(cfg.mode));
    summary["checkpoint"] = ckpt_path.string();
    summary["epochs"] = result.report.epochs.size();
    summary["best_epoch"] = result.report.best_epoch;
    summary["best_val_loss"] = result.report.best_val_loss;
    summary["stopped_early"] = result.report.stopped_early;
    summary["final_learning_rate"] =
        result.report.epochs.empty() ? 0.0 : result.report.epochs.back().learning_rate;
    summary["config"] = JsonConfig::options_json(ctx.root, true);
    fs::path summary_path = ckpt_path;
    summary_path += ".summary.json";
    Context::write_text(summary_path, summary.dump(2) + "\n");
    spdlog::info("best epoch {} (val loss {}), checkpoint {}", result.report.best_epoch,
                 result.report.best_val_loss, ckpt_path.string());
  });
}

// ---- score ---------------------------------------------------------------

void add_score(CLI::App& app, Context& ctx, std::vector<std::pair<CLI::App*, std::function<void()>>>& handlers) {
  struct Opts {
    std::string checkpoint, manifest, split = "test", out, frames_out, pooling;
    std::size_t trim_frames = 0;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("score", "Score a split with a trained checkpoint");
  sub->add_option("--checkpoint", o->checkpoint, "Checkpoint file")->required();
  sub->add_option("--manifest", o->manifest, "Dataset manifest (JSONL)")->required();
  sub->add_option("--split", o->split, "Split to score")->check(CLI::IsMember(kSplits));
  sub->add_option("--out", o->out, "Video-level scores CSV (source_id,score,label)")->required();
  sub->add_option("--frames-out", o->frames_out, "Frame-level scores CSV; enables per-frame scoring");
  sub->add_option("--trim-frames", o->trim_frames, "Drop this many leading frames before scoring");
  sub->add_option("--pooling", o->pooling, "Override the checkpoint's pooling")->check(CLI::IsMember({"logsumexp", "mean"}));
  handlers.emplace_back(sub, [o, &ctx] {
    const auto ckpt = read_checkpoint(o->checkpoint);
    const auto manifest = read_manifest(o->manifest);
    ScoreOptions options;
    options.mode = ckpt.mode;
    options.loss = ckpt.loss;
    if (!o->pooling.empty()) options.loss.pooling = parse_pooling(o->pooling);
    options.per_frame = !o->frames_out.empty();
    options.trim_frames = o->trim_frames;
    options.threads = ctx.globals.threads;
    const auto result = score_dataset(ckpt.network, manifest, parse_split(o->split), options);
    for (const auto& om : result.omissions) spdlog::warn("omitted {}: {}", om.source_id, om.reason);

    CsvTable videos;
    videos.header = {"source_id", "score", "label"};
    for (const auto& e : result.report.entries) {
      videos.rows.push_back({e.source_id, format_number(e.score), label_text(e.label)});
    }
    ctx.write_table(videos, ctx.out_path(o->out));
    if (options.per_frame) {
      CsvTable frames;
      frames.header = {"source_id", "frame_index", "score", "label"};
      for (const auto& f : result.report.frames) {
        frames.rows.push_back({f.source_id, std::to_string(f.frame_index), format_number(f.score), label_text(f.label)});
      }
      ctx.write_table(frames, ctx.out_path(o->frames_out));
    }
    try {
      std::cout << "video_auc " << format_number(video_auc(result.report)) << "\n";
      if (options.per_frame) std::cout << "frame_auc " << format_number(frame_auc(result.report)) << "\n";
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::SingleClass) throw;
      spdlog::warn("AUC not reported: {}", e.detail());
    }
  });
}

// ---- validate ------------------------------------------------------------

void add_validate(CLI::App& app, Context& ctx, std::vector<std::pair<CLI::App*, std::function<void()>>>& handlers) {
  struct Opts {
    std::string manifest;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("validate", "Check a manifest and every file it references");
  sub->add_option("--manifest", o->manifest, "Dataset manifest (JSONL)")->required();
  handlers.emplace_back(sub, [o, &ctx] {
    const auto manifest = read_manifest(o->manifest);
    const auto& records = manifest.records;
    struct Shape {
      Eigen::Index audio_dim = -1, video_dim = -1;
    };
    std::vector<std::string> problems(records.size());
    std::vector<Shape> shapes(records.size());
    parallel_for(records.size(), ctx.globals.threads, [&](std::size_t i) {
      const auto& rec = records[i];
      try {
        if (rec.feature_path) {
          const auto pair = read_features(manifest.resolve(*rec.feature_path));
          check_pair(pair);
          if (pair.frames() < 1) throw Error(ErrorKind::TooShort, "no frames");
          shapes[i] = {pair.audio.cols(), pair.video.cols()};
          for (const auto& seg : rec.fake_segments) {
            if (seg.start_s * pair.fps >= static_cast<double>(pair.frames())) {
              throw Error(ErrorKind::BadSegment, "fake segment starts after the last frame");
            }
          }
        }
        if (rec.audio_path) {
          const auto clip = read_wav(manifest.resolve(*rec.audio_path));
          if (clip.samples.empty()) throw Error(ErrorKind::EmptyClip, "no samples");
        }
      } catch (const Error& e) {
        problems[i] = e.what();
      }
    });
    std::size_t bad = 0;
    std::optional<Shape> first;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (problems[i].empty() && shapes[i].audio_dim >= 0) {
        if (!first) {
          first = shapes[i];
        } else if (shapes[i].audio_dim != first->audio_dim || shapes[i].video_dim != first->video_dim) {
          problems[i] = "DimensionMismatch: feature widths differ from the first record";
        }
      }
      if (!problems[i].empty()) {
        ++bad;
        spdlog::error("{}: {}", records[i].source_id, problems[i]);
      }
    }
    std::cout << records.size() - bad << " ok, " << bad << " invalid\n";
    if (bad > 0) throw Error(ErrorKind::InvalidArgument, std::to_string(bad) + " invalid records");
  });
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Leading-silence bias audit and audio-video alignment detector"};
  app.name("avh");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; flags override its values");

  Context ctx;
  ctx.root = &app;
  app.add_option("--threads", ctx.globals.threads, "Worker threads (0 = all cores)");
  app.add_option("--log-level", ctx.globals.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.add_option("--output-dir", ctx.globals.output_dir, "Base directory for relative output paths");

  std::vector<std::pair<CLI::App*, std::function<void()>>> handlers;
  add_audit(app, ctx, handlers);
  add_trim(app, ctx, handlers);
  add_eval_auc(app, ctx, handlers);
  add_plot_data(app, ctx, handlers);
  add_gen_synth(app, ctx, handlers);
  add_train(app, ctx, handlers, TrainingMode::unsupervised);
  add_train(app, ctx, handlers, TrainingMode::supervised);
  add_score(app, ctx, handlers);
  add_validate(app, ctx, handlers);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cerr, std::cerr);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto logger = std::make_shared<spdlog::logger>("avh", std::make_shared<spdlog::sinks::stderr_color_sink_mt>());
  logger->set_level(spdlog::level::from_str(ctx.globals.log_level));
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);

  for (auto& [sub, handler] : handlers) {
    if (sub->parsed()) {
      handler();
      return kExitOk;
    }
  }
  return kExitUsage;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    spdlog::critical("internal error: {}", e.what());
    return kExitInternal;
  } catch (...) {
    spdlog::critical("internal error");
    return kExitInternal;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"avh"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace avh
