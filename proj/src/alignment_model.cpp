#include "avh/alignment_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "avh/error.hpp"

namespace avh {

std::string_view to_string(HeadType head) { return head == HeadType::mlp ? "mlp" : "linear"; }
std::string_view to_string(Pooling pooling) {
  return pooling == Pooling::logsumexp ? "logsumexp" : "mean";
}

HeadType parse_head_type(std::string_view text) {
  if (text == "mlp") return HeadType::mlp;
  if (text == "linear") return HeadType::linear;
  throw Error(ErrorKind::InvalidArgument, "unknown head type '" + std::string(text) + "'");
}

Pooling parse_pooling(std::string_view text) {
  if (text == "logsumexp") return Pooling::logsumexp;
  if (text == "mean") return Pooling::mean;
  throw Error(ErrorKind::InvalidArgument, "unknown pooling '" + std::string(text) + "'");
}

std::vector<std::size_t> Architecture::layer_widths() const {
  std::vector<std::size_t> widths{audio_dim + video_dim};
  if (head == HeadType::mlp) widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  return widths;
}

void Architecture::validate() const {
  if (audio_dim == 0 || video_dim == 0) {
    throw Error(ErrorKind::InvalidArgument, "feature dimensions must be positive");
  }
  if (head == HeadType::mlp) {
    if (hidden.empty()) throw Error(ErrorKind::InvalidArgument, "mlp head needs hidden layers");
    for (auto w : hidden) {
      if (w == 0) throw Error(ErrorKind::InvalidArgument, "hidden width must be positive");
    }
  }
  if (!(layer_norm_eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "layer_norm_eps must be > 0");
}

void LossConfig::validate() const {
  if (neighborhood_half_width < 1) {
    throw Error(ErrorKind::InvalidArgument, "neighborhood half width must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// Parameter storage

template <typename Scalar>
BasicAlignmentNetwork<Scalar>::BasicAlignmentNetwork(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  const auto widths = arch_.layer_widths();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    LayerLayout layer;
    layer.in = widths[l];
    layer.out = widths[l + 1];
    layer.weights = offset;
    offset += layer.in * layer.out;
    layer.bias = offset;
    offset += layer.out;
    if (l + 2 < widths.size()) {
      layer.scale = offset;
      offset += layer.out;
      layer.shift = offset;
      offset += layer.out;
    }
    layout_.push_back(layer);
  }
  params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
}

template <typename Scalar>
BasicAlignmentNetwork<Scalar> BasicAlignmentNetwork<Scalar>::initialized(Architecture arch,
                                                                         std::uint64_t seed) {
  BasicAlignmentNetwork net(std::move(arch));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.layout_[l].in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = net.weights(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
    if (net.has_layer_norm(l)) net.ln_scale(l).setOnes();
  }
  return net;
}

#define AVH_LAYER_ACCESSORS(NAME, FIELD, ROWS)                                             \
  template <typename Scalar>                                                               \
  typename BasicAlignmentNetwork<Scalar>::VectorMap BasicAlignmentNetwork<Scalar>::NAME(   \
      std::size_t layer) {                                                                 \
    return VectorMap(params_.data() + layout_.at(layer).FIELD,                             \
                     static_cast<Eigen::Index>(ROWS));                                     \
  }                                                                                        \
  template <typename Scalar>                                                               \
  typename BasicAlignmentNetwork<Scalar>::ConstVectorMap BasicAlignmentNetwork<Scalar>::NAME( \
      std::size_t layer) const {                                                           \
    return ConstVectorMap(params_.data() + layout_.at(layer).FIELD,                        \
                          static_cast<Eigen::Index>(ROWS));                                \
  }

AVH_LAYER_ACCESSORS(bias, bias, layout_.at(layer).out)
AVH_LAYER_ACCESSORS(ln_scale, scale, has_layer_norm(layer) ? layout_[layer].out : 0)
AVH_LAYER_ACCESSORS(ln_shift, shift, has_layer_norm(layer) ? layout_[layer].out : 0)
#undef AVH_LAYER_ACCESSORS

template <typename Scalar>
typename BasicAlignmentNetwork<Scalar>::MatrixMap BasicAlignmentNetwork<Scalar>::weights(
    std::size_t layer) {
  const auto& l = layout_.at(layer);
  return MatrixMap(params_.data() + l.weights, static_cast<Eigen::Index>(l.out),
                   static_cast<Eigen::Index>(l.in));
}

template <typename Scalar>
typename BasicAlignmentNetwork<Scalar>::ConstMatrixMap BasicAlignmentNetwork<Scalar>::weights(
    std::size_t layer) const {
  const auto& l = layout_.at(layer);
  return ConstMatrixMap(params_.data() + l.weights, static_cast<Eigen::Index>(l.out),
                        static_cast<Eigen::Index>(l.in));
}

// ---------------------------------------------------------------------------
// Forward / backward over a batch of (audio frame, video frame) pairs

namespace {

template <typename Scalar>
using Net = BasicAlignmentNetwork<Scalar>;
template <typename Scalar>
using Mat = typename Net<Scalar>::Matrix;
template <typename Scalar>
using Vec = typename Net<Scalar>::Vector;

template <typename Scalar>
Mat<Scalar> prepare_inputs(const FeatureMatrix& x, bool normalize) {
  Mat<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) sq += double(x(r, c)) * double(x(r, c));
    // Zero rows (silent audio, black frames) pass through unscaled.
    const double norm = (normalize && sq > 0.0) ? std::sqrt(sq) : 1.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      out(r, c) = static_cast<Scalar>(double(x(r, c)) / norm);
    }
  }
  return out;
}

}  // namespace

FeatureMatrix l2_normalize_rows(const FeatureMatrix& x) { return prepare_inputs<float>(x, true); }

namespace {

template <typename Scalar>
struct ForwardCache {
  Mat<Scalar> audio;
  Mat<Scalar> video;
  std::vector<Eigen::Index> audio_row;
  std::vector<Eigen::Index> video_row;
  std::vector<Mat<Scalar>> xhat;     // per hidden layer
  std::vector<Vec<Scalar>> inv_std;  // per hidden layer
  std::vector<Mat<Scalar>> normed;   // layer-norm output before the rectifier
  std::vector<Mat<Scalar>> act;      // rectifier output, input of layer l + 1
  std::vector<double> phi;
};

template <typename Scalar>
void forward(const Net<Scalar>& net, ForwardCache<Scalar>& cache) {
  const auto& arch = net.architecture();
  const auto da = static_cast<Eigen::Index>(arch.audio_dim);
  const auto dv = static_cast<Eigen::Index>(arch.video_dim);
  const std::size_t layers = net.layer_count();
  const auto pairs = static_cast<Eigen::Index>(cache.audio_row.size());

  cache.xhat.assign(layers, {});
  cache.inv_std.assign(layers, {});
  cache.normed.assign(layers, {});
  cache.act.assign(layers, {});

  // Layer 0 is linear in [a; v], so project every frame once and gather.
  const auto w0 = net.weights(0);
  const Mat<Scalar> audio_proj = cache.audio * w0.leftCols(da).transpose();
  const Mat<Scalar> video_proj = cache.video * w0.rightCols(dv).transpose();
  Mat<Scalar> z(pairs, w0.rows());
  for (Eigen::Index p = 0; p < pairs; ++p) {
    z.row(p) = audio_proj.row(cache.audio_row[p]) + video_proj.row(cache.video_row[p]);
  }

  for (std::size_t l = 0; l < layers; ++l) {
    if (l > 0) z.noalias() = cache.act[l - 1] * net.weights(l).transpose();
    z.rowwise() += net.bias(l).transpose();
    if (!net.has_layer_norm(l)) break;

    const Scalar eps = static_cast<Scalar>(arch.layer_norm_eps);
    const Vec<Scalar> mean = z.rowwise().mean();
    Mat<Scalar> centered = z.colwise() - mean;
    const Vec<Scalar> var = centered.array().square().rowwise().mean();
    cache.inv_std[l] = (var.array() + eps).rsqrt();
    cache.xhat[l] = centered.array().colwise() * cache.inv_std[l].array();
    cache.normed[l] = (cache.xhat[l].array().rowwise() * net.ln_scale(l).transpose().array())
                          .rowwise() +
                      net.ln_shift(l).transpose().array();
    cache.act[l] = cache.normed[l].cwiseMax(Scalar(0));
  }
  cache.phi.resize(static_cast<std::size_t>(pairs));
  for (Eigen::Index p = 0; p < pairs; ++p) cache.phi[p] = static_cast<double>(z(p, 0));
}

template <typename Scalar>
void backward(const Net<Scalar>& net, const ForwardCache<Scalar>& cache,
              std::span<const double> dphi, Net<Scalar>& grad) {
  const auto& arch = net.architecture();
  const auto da = static_cast<Eigen::Index>(arch.audio_dim);
  const auto dv = static_cast<Eigen::Index>(arch.video_dim);
  const auto pairs = static_cast<Eigen::Index>(dphi.size());

  Mat<Scalar> dz(pairs, 1);
  for (Eigen::Index p = 0; p < pairs; ++p) dz(p, 0) = static_cast<Scalar>(dphi[p]);

  for (std::size_t l = net.layer_count(); l-- > 0;) {
    if (net.has_layer_norm(l)) {
      // dz currently holds d(loss)/d(act[l]).
      const Mat<Scalar> dy =
          (dz.array() * (cache.normed[l].array() > Scalar(0)).template cast<Scalar>()).matrix();
      const auto& xhat = cache.xhat[l];
      grad.ln_scale(l) = (dy.array() * xhat.array()).colwise().sum().transpose();
      grad.ln_shift(l) = dy.colwise().sum().transpose();
      const Mat<Scalar> dxhat = dy.array().rowwise() * net.ln_scale(l).transpose().array();
      const Vec<Scalar> m1 = dxhat.rowwise().mean();
      const Vec<Scalar> m2 = (dxhat.array() * xhat.array()).rowwise().mean();
      dz = ((dxhat.colwise() - m1).array() - xhat.array().colwise() * m2.array()).colwise() *
           cache.inv_std[l].array();
    }
    grad.bias(l) = dz.colwise().sum().transpose();
    if (l > 0) {
      grad.weights(l).noalias() = dz.transpose() * cache.act[l - 1];
      dz = dz * net.weights(l);
      continue;
    }
    // Scatter pair gradients back onto the frames they were gathered from.
    Mat<Scalar> audio_grad = Mat<Scalar>::Zero(cache.audio.rows(), dz.cols());
    Mat<Scalar> video_grad = Mat<Scalar>::Zero(cache.video.rows(), dz.cols());
    for (Eigen::Index p = 0; p < pairs; ++p) {
      audio_grad.row(cache.audio_row[p]) += dz.row(p);
      video_grad.row(cache.video_row[p]) += dz.row(p);
    }
    auto w0 = grad.weights(0);
    w0.leftCols(da).noalias() = audio_grad.transpose() * cache.audio;
    w0.rightCols(dv).noalias() = video_grad.transpose() * cache.video;
  }
}

template <typename Scalar>
void check_dims(const Net<Scalar>& net, const FeatureSequencePair& pair) {
  const auto& arch = net.architecture();
  if (pair.audio.rows() != pair.video.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "audio and video frame counts differ");
  }
  if (static_cast<std::size_t>(pair.audio.cols()) != arch.audio_dim ||
      static_cast<std::size_t>(pair.video.cols()) != arch.video_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "features are " + std::to_string(pair.audio.cols()) + "/" +
                    std::to_string(pair.video.cols()) + " wide, network expects " +
                    std::to_string(arch.audio_dim) + "/" + std::to_string(arch.video_dim));
  }
}

template <typename Scalar>
void require_frames(const Net<Scalar>& net, const FeatureSequencePair& pair) {
  check_dims(net, pair);
  if (pair.frames() == 0) throw Error(ErrorKind::EmptyInput, "video has no frames");
}

template <typename Scalar>
ForwardCache<Scalar> make_cache(const Net<Scalar>& net, const FeatureSequencePair& pair) {
  ForwardCache<Scalar> cache;
  const bool normalize = net.architecture().normalize_inputs;
  cache.audio = prepare_inputs<Scalar>(pair.audio, normalize);
  cache.video = prepare_inputs<Scalar>(pair.video, normalize);
  return cache;
}

struct Window {
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive
};

Window neighborhood(std::size_t frame, std::size_t frames, std::size_t half_width) {
  return {frame > half_width ? frame - half_width : 0,
          std::min(frames - 1, frame + half_width)};
}

/// Gathers every (i, k in N(i)) pair, runs the forward pass and records the
/// window layout.
template <typename Scalar>
WindowLogits forward_windows(const Net<Scalar>& net, ForwardCache<Scalar>& cache,
                             std::size_t frames, std::size_t half_width) {
  WindowLogits w;
  w.offsets.reserve(frames + 1);
  w.first.reserve(frames);
  w.offsets.push_back(0);
  for (std::size_t i = 0; i < frames; ++i) {
    const auto win = neighborhood(i, frames, half_width);
    w.first.push_back(win.first);
    for (std::size_t k = win.first; k <= win.last; ++k) {
      cache.audio_row.push_back(static_cast<Eigen::Index>(i));
      cache.video_row.push_back(static_cast<Eigen::Index>(k));
    }
    w.offsets.push_back(cache.audio_row.size());
  }
  forward(net, cache);
  w.logits = cache.phi;
  return w;
}

double log_sum_exp(std::span<const double> x) {
  const double peak = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

std::span<const double> window_span(const WindowLogits& w, std::size_t i) {
  return std::span<const double>(w.logits).subspan(w.offsets[i], w.window_size(i));
}

std::vector<double> window_misalignment(const WindowLogits& w) {
  const std::size_t frames = w.first.size();
  std::vector<double> m(frames);
  for (std::size_t i = 0; i < frames; ++i) m[i] = log_sum_exp(window_span(w, i)) - w.at(i, i);
  return m;
}

template <typename Scalar>
ForwardCache<Scalar> forward_diagonal(const Net<Scalar>& net, const FeatureSequencePair& pair) {
  auto cache = make_cache(net, pair);
  for (Eigen::Index i = 0; i < pair.frames(); ++i) {
    cache.audio_row.push_back(i);
    cache.video_row.push_back(i);
  }
  forward(net, cache);
  return cache;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double fused_bce(double logit, Label label) {
  const double y = label == Label::fake ? 1.0 : 0.0;
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::fabs(logit)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Public operations

template <typename Scalar>
double score(const Net<Scalar>& net, std::span<const float> audio, std::span<const float> video) {
  const auto& arch = net.architecture();
  if (audio.size() != arch.audio_dim || video.size() != arch.video_dim) {
    throw Error(ErrorKind::DimensionMismatch, "feature vector width does not match network");
  }
  FeatureSequencePair pair;
  pair.audio = Eigen::Map<const FeatureMatrix>(audio.data(), 1, static_cast<Eigen::Index>(audio.size()));
  pair.video = Eigen::Map<const FeatureMatrix>(video.data(), 1, static_cast<Eigen::Index>(video.size()));
  return forward_diagonal(net, pair).phi.front();
}

template <typename Scalar>
WindowLogits window_logits(const Net<Scalar>& net, const FeatureSequencePair& pair,
                           const LossConfig& cfg) {
  check_dims(net, pair);
  cfg.validate();
  auto cache = make_cache(net, pair);
  return forward_windows(net, cache, static_cast<std::size_t>(pair.frames()),
                         cfg.neighborhood_half_width);
}

double softmax_center_probability(std::span<const double> logits, std::size_t center) {
  if (center >= logits.size()) throw Error(ErrorKind::InvalidArgument, "centre outside window");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - peak);
  return std::exp(logits[center] - peak) / sum;
}

template <typename Scalar>
double frame_probability(const Net<Scalar>& net, const FeatureSequencePair& pair,
                         std::size_t frame, const LossConfig& cfg) {
  check_dims(net, pair);
  cfg.validate();
  const auto frames = static_cast<std::size_t>(pair.frames());
  if (frame >= frames) throw Error(ErrorKind::InvalidArgument, "frame index out of range");
  auto cache = make_cache(net, pair);
  const auto win = neighborhood(frame, frames, cfg.neighborhood_half_width);
  for (std::size_t k = win.first; k <= win.last; ++k) {
    cache.audio_row.push_back(static_cast<Eigen::Index>(frame));
    cache.video_row.push_back(static_cast<Eigen::Index>(k));
  }
  forward(net, cache);
  return softmax_center_probability(cache.phi, frame - win.first);
}

template <typename Scalar>
std::vector<double> misalignment(const Net<Scalar>& net, const FeatureSequencePair& pair,
                                 const LossConfig& cfg) {
  require_frames(net, pair);
  return window_misalignment(window_logits(net, pair, cfg));
}

template <typename Scalar>
double video_loss(const Net<Scalar>& net, const FeatureSequencePair& pair, const LossConfig& cfg) {
  const auto m = misalignment(net, pair, cfg);
  double sum = 0.0;
  for (double v : m) sum += v;
  return sum / static_cast<double>(m.size());
}

template <typename Scalar>
LossAndGradient<Scalar> loss_gradient(const Net<Scalar>& net, const FeatureSequencePair& pair,
                                      const LossConfig& cfg) {
  require_frames(net, pair);
  cfg.validate();
  const auto frames = static_cast<std::size_t>(pair.frames());
  auto cache = make_cache(net, pair);
  const auto w = forward_windows(net, cache, frames, cfg.neighborhood_half_width);

  // d/dPhi_ik of (1/T) sum_i [logsumexp_k Phi_ik - Phi_ii] = (softmax_ik - [k == i]) / T.
  const double inv_frames = 1.0 / static_cast<double>(frames);
  std::vector<double> dphi(w.logits.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < frames; ++i) {
    const auto logits = window_span(w, i);
    const double lse = log_sum_exp(logits);
    loss += lse - w.at(i, i);
    for (std::size_t j = 0; j < logits.size(); ++j) {
      const bool centre = w.first[i] + j == i;
      dphi[w.offsets[i] + j] = (std::exp(logits[j] - lse) - (centre ? 1.0 : 0.0)) * inv_frames;
    }
  }
  LossAndGradient<Scalar> out{loss * inv_frames, Net<Scalar>(net.architecture())};
  backward(net, cache, dphi, out.gradient);
  return out;
}

template <typename Scalar>
std::vector<double> per_frame_fakeness(const Net<Scalar>& net, const FeatureSequencePair& pair,
                                       const LossConfig& cfg) {
  require_frames(net, pair);
  const auto w = window_logits(net, pair, cfg);
  std::vector<double> f(w.first.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = 1.0 - softmax_center_probability(window_span(w, i), i - w.first[i]);
  }
  return f;
}

double pool_scores(std::span<const double> m, Pooling pooling) {
  if (m.empty()) throw Error(ErrorKind::EmptyInput, "nothing to pool");
  const double n = static_cast<double>(m.size());
  if (pooling == Pooling::mean) {
    double sum = 0.0;
    for (double v : m) sum += v;
    return sum / n;
  }
  const double peak = *std::max_element(m.begin(), m.end());
  double sum = 0.0;
  for (double v : m) sum += std::exp(v - peak);
  return peak + (std::log(sum) - std::log(n));
}

template <typename Scalar>
double video_score(const Net<Scalar>& net, const FeatureSequencePair& pair, const LossConfig& cfg) {
  return pool_scores(misalignment(net, pair, cfg), cfg.pooling);
}

template <typename Scalar>
double supervised_logit(const Net<Scalar>& net, const FeatureSequencePair& pair) {
  require_frames(net, pair);
  return log_sum_exp(forward_diagonal(net, pair).phi);
}

template <typename Scalar>
double supervised_loss(const Net<Scalar>& net, const FeatureSequencePair& pair, Label label) {
  return fused_bce(supervised_logit(net, pair), label);
}

template <typename Scalar>
LossAndGradient<Scalar> supervised_loss_gradient(const Net<Scalar>& net,
                                                 const FeatureSequencePair& pair, Label label) {
  require_frames(net, pair);
  auto cache = forward_diagonal(net, pair);
  const double logit = log_sum_exp(cache.phi);
  const double y = label == Label::fake ? 1.0 : 0.0;
  const double dlogit = stable_sigmoid(logit) - y;
  std::vector<double> dphi(cache.phi.size());
  for (std::size_t i = 0; i < dphi.size(); ++i) dphi[i] = dlogit * std::exp(cache.phi[i] - logit);
  LossAndGradient<Scalar> out{fused_bce(logit, label), Net<Scalar>(net.architecture())};
  backward(net, cache, dphi, out.gradient);
  return out;
}

template <typename Scalar>
std::vector<double> supervised_frame_fakeness(const Net<Scalar>& net,
                                              const FeatureSequencePair& pair) {
  require_frames(net, pair);
  auto phi = forward_diagonal(net, pair).phi;
  for (double& v : phi) v = stable_sigmoid(v);
  return phi;
}

#define AVH_INSTANTIATE(S)                                                                       \
  template class BasicAlignmentNetwork<S>;                                                       \
  template double score(const Net<S>&, std::span<const float>, std::span<const float>);          \
  template WindowLogits window_logits(const Net<S>&, const FeatureSequencePair&,                 \
                                      const LossConfig&);                                        \
  template double frame_probability(const Net<S>&, const FeatureSequencePair&, std::size_t,      \
                                    const LossConfig&);                                          \
  template std::vector<double> misalignment(const Net<S>&, const FeatureSequencePair&,           \
                                            const LossConfig&);                                  \
  template double video_loss(const Net<S>&, const FeatureSequencePair&, const LossConfig&);      \
  template LossAndGradient<S> loss_gradient(const Net<S>&, const FeatureSequencePair&,           \
                                            const LossConfig&);                                  \
  template std::vector<double> per_frame_fakeness(const Net<S>&, const FeatureSequencePair&,     \
                                                  const LossConfig&);                            \
  template double video_score(const Net<S>&, const FeatureSequencePair&, const LossConfig&);     \
  template double supervised_logit(const Net<S>&, const FeatureSequencePair&);                   \
  template double supervised_loss(const Net<S>&, const FeatureSequencePair&, Label);             \
  template LossAndGradient<S> supervised_loss_gradient(const Net<S>&,                            \
                                                       const FeatureSequencePair&, Label);       \
  template std::vector<double> supervised_frame_fakeness(const Net<S>&,                          \
                                                         const FeatureSequencePair&);

AVH_INSTANTIATE(float)
AVH_INSTANTIATE(double)
#undef AVH_INSTANTIATE

}  // namespace avh
