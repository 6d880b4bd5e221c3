#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace avh {

/// Row i holds the feature vector of frame i.
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-frame audio and video features of one video. Both streams share the
/// frame count T; the feature widths may differ.
struct FeatureSequencePair {
  FeatureMatrix audio;
  FeatureMatrix video;
  float fps = 25.0f;
  std::string source_id;

  Eigen::Index frames() const { return audio.rows(); }
};

/// Throws DimensionMismatch when the streams disagree on T, NonFiniteValue on
/// NaN/Inf, and InvalidArgument for a non-positive frame rate.
void check_pair(const FeatureSequencePair& pair);

// "AVHF" container, version 1, all fields little-endian:
//   magic "AVHF" | u32 version | u32 T | u32 D_a | u32 D_v | f32 fps
//   | T*D_a f32 audio (row-major) | T*D_v f32 video (row-major)
inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 24;

std::vector<std::uint8_t> encode_features(const FeatureSequencePair& pair);
FeatureSequencePair decode_features(std::span<const std::uint8_t> bytes,
                                    std::string source_id = {});

void write_features(const FeatureSequencePair& pair, const std::filesystem::path& path);
FeatureSequencePair read_features(const std::filesystem::path& path);

}  // namespace avh
