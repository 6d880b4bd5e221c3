#pragma once

// Audio-video alignment scorer. A network Phi maps a concatenated pair of
// (L2-normalised) audio and video frame features [a_i; v_k] to a scalar logit.
// Trained on real videos only, it should rank the true video frame above its
// temporal neighbours; per-frame misalignment then serves as a fakeness cue.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "avh/features.hpp"
#include "avh/label.hpp"

namespace avh {

enum class HeadType { mlp, linear };
enum class Pooling { logsumexp, mean };

std::string_view to_string(HeadType head);
std::string_view to_string(Pooling pooling);
HeadType parse_head_type(std::string_view text);
Pooling parse_pooling(std::string_view text);

struct Architecture {
  HeadType head = HeadType::mlp;
  std::size_t audio_dim = 1024;
  std::size_t video_dim = 1024;
  /// Hidden widths of the MLP head; ignored for the linear head.
  std::vector<std::size_t> hidden = {512, 256, 128};
  bool normalize_inputs = true;
  double layer_norm_eps = 1e-5;

  /// Input width followed by every layer's output width; ends with 1.
  std::vector<std::size_t> layer_widths() const;
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

struct LossConfig {
  /// N(i) = {max(0, i-h) .. min(T-1, i+h)}: 2h candidates plus the centre.
  std::size_t neighborhood_half_width = 15;
  Pooling pooling = Pooling::logsumexp;

  void validate() const;
};

/// Parameters of Phi in one contiguous vector, laid out per layer as
/// weights (out x in, row-major), bias, and for hidden layers the layer-norm
/// scale and shift. Hidden layers compute relu(layer_norm(W x + b)); the last
/// layer is affine. The same type doubles as the gradient container.
template <typename Scalar>
class BasicAlignmentNetwork {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  /// All parameters zero.
  explicit BasicAlignmentNetwork(Architecture arch);

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases, layer-norm
  /// scale 1 and shift 0.
  static BasicAlignmentNetwork initialized(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  std::size_t layer_count() const { return layout_.size(); }
  bool has_layer_norm(std::size_t layer) const { return layer + 1 < layout_.size(); }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  MatrixMap weights(std::size_t layer);
  ConstMatrixMap weights(std::size_t layer) const;
  VectorMap bias(std::size_t layer);
  ConstVectorMap bias(std::size_t layer) const;
  VectorMap ln_scale(std::size_t layer);
  ConstVectorMap ln_scale(std::size_t layer) const;
  VectorMap ln_shift(std::size_t layer);
  ConstVectorMap ln_shift(std::size_t layer) const;

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  template <typename Other>
  BasicAlignmentNetwork<Other> cast() const {
    BasicAlignmentNetwork<Other> out(arch_);
    out.parameters() = params_.template cast<Other>();
    return out;
  }

 private:
  struct LayerLayout {
    std::size_t in = 0, out = 0;
    std::size_t weights = 0, bias = 0, scale = 0, shift = 0;
  };

  Architecture arch_;
  std::vector<LayerLayout> layout_;
  Vector params_;
};

using AlignmentNetwork = BasicAlignmentNetwork<float>;

template <typename Scalar>
struct LossAndGradient {
  double loss = 0.0;
  BasicAlignmentNetwork<Scalar> gradient;
};

/// Row-wise L2 normalisation applied to both streams before Phi. The norm is
/// accumulated in double; all-zero rows are returned unchanged.
FeatureMatrix l2_normalize_rows(const FeatureMatrix& x);

/// Phi for one audio frame and one video frame. Throws DimensionMismatch.
template <typename Scalar>
double score(const BasicAlignmentNetwork<Scalar>& net, std::span<const float> audio,
             std::span<const float> video);

/// Logits Phi_ik for every frame i and every k in N(i), stored window by
/// window: frame i owns logits[offsets[i] .. offsets[i+1]) for
/// k = first[i], first[i]+1, ...
struct WindowLogits {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> first;
  std::vector<double> logits;

  std::size_t window_size(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  double at(std::size_t i, std::size_t k) const { return logits[offsets[i] + (k - first[i])]; }
};

template <typename Scalar>
WindowLogits window_logits(const BasicAlignmentNetwork<Scalar>& net, const FeatureSequencePair& pair,
                           const LossConfig& cfg);

/// exp(logits[center]) / sum_k exp(logits[k]), max-subtracted.
double softmax_center_probability(std::span<const double> logits, std::size_t center);

/// p(v_i | a_i) over the clamped window N(i).
template <typename Scalar>
double frame_probability(const BasicAlignmentNetwork<Scalar>& net, const FeatureSequencePair& pair,
                         std::size_t frame, const LossConfig& cfg);

/// m_i = -log p(v_i | a_i) for every frame.
template <typename Scalar>
std::vector<double> misalignment(const BasicAlignmentNetwork<Scalar>& net,
                                 const FeatureSequencePair& pair, const LossConfig& cfg);

/// Mean of m_i over the video.
template <typename Scalar>
double video_loss(const BasicAlignmentNetwork<Scalar>& net, const FeatureSequencePair& pair,
                  const LossConfig& cfg);

template <typename Scalar>
LossAndGradient<Scalar> loss_gradient(const BasicAlignmentNetwork<Scalar>& net,
                                      const FeatureSequencePair& pair, const LossConfig& cfg);

/// f_i = 1 - p(v_i | a_i).
template <typename Scalar>
std::vector<double> per_frame_fakeness(const BasicAlignmentNetwork<Scalar>& net,
                                       const FeatureSequencePair& pair, const LossConfig& cfg);

/// logsumexp: log(sum_i exp(m_i)) - log T; mean: (1/T) sum_i m_i.
/// Both are monotone in every m_i and return c when all m_i equal c.
double pool_scores(std::span<const double> misalignment, Pooling pooling);

/// Pooled misalignment; higher means more likely fake.
template <typename Scalar>
double video_score(const BasicAlignmentNetwork<Scalar>& net, const FeatureSequencePair& pair,
                   const LossConfig& cfg);

/// log sum_i exp(Phi_ii).
template <typename Scalar>
double supervised_logit(const BasicAlignmentNetwork<Scalar>& net, const FeatureSequencePair& pair);

/// Binary cross-entropy of sigmoid(supervised_logit) against the label, in
/// the fused form max(x, 0) - x*y + log(1 + exp(-|x|)).
template <typename Scalar>
double supervised_loss(const BasicAlignmentNetwork<Scalar>& net, const FeatureSequencePair& pair,
                       Label label);

template <typename Scalar>
LossAndGradient<Scalar> supervised_loss_gradient(const BasicAlignmentNetwork<Scalar>& net,
                                                 const FeatureSequencePair& pair, Label label);

/// sigmoid(Phi_ii) per frame, the per-frame view of the supervised detector.
template <typename Scalar>
std::vector<double> supervised_frame_fakeness(const BasicAlignmentNetwork<Scalar>& net,
                                              const FeatureSequencePair& pair);

}  // namespace avh
