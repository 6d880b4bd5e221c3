#include "avh/features.hpp"

#include <cmath>
#include <cstring>

#include "avh/error.hpp"
#include "byte_io.hpp"

namespace avh {

void check_pair(const FeatureSequencePair& pair) {
  if (pair.audio.rows() != pair.video.rows()) {
    throw Error(ErrorKind::DimensionMismatch,
                "audio has " + std::to_string(pair.audio.rows()) + " frames, video has " +
                    std::to_string(pair.video.rows()));
  }
  if (!std::isfinite(pair.fps) || pair.fps <= 0.0f) {
    throw Error(ErrorKind::InvalidArgument, "fps must be positive");
  }
  if (!pair.audio.allFinite() || !pair.video.allFinite()) {
    throw Error(ErrorKind::NonFiniteValue, "feature matrix of '" + pair.source_id +
                                               "' contains NaN or Inf");
  }
}

std::vector<std::uint8_t> encode_features(const FeatureSequencePair& pair) {
  check_pair(pair);
  const auto frames = static_cast<std::uint32_t>(pair.frames());
  const auto audio_dim = static_cast<std::uint32_t>(pair.audio.cols());
  const auto video_dim = static_cast<std::uint32_t>(pair.video.cols());

  detail::ByteWriter out;
  out.reserve(kFeatureHeaderBytes + 4 * (pair.audio.size() + pair.video.size()));
  out.write_tag("AVHF");
  out.write<std::uint32_t>(kFeatureFormatVersion);
  out.write<std::uint32_t>(frames);
  out.write<std::uint32_t>(audio_dim);
  out.write<std::uint32_t>(video_dim);
  out.write<float>(pair.fps);
  auto append_block = [&](const FeatureMatrix& m) {
    out.append({reinterpret_cast<const std::uint8_t*>(m.data()),
                static_cast<std::size_t>(m.size()) * sizeof(float)});
  };
  append_block(pair.audio);
  append_block(pair.video);
  return std::move(out.bytes());
}

FeatureSequencePair decode_features(std::span<const std::uint8_t> bytes,
                                    std::string source_id) {
  detail::ByteReader in(bytes);
  if (!in.has(4)) throw Error(ErrorKind::TruncatedData, "missing magic");
  if (std::memcmp(in.take(4).data(), "AVHF", 4) != 0) {
    throw Error(ErrorKind::MalformedHeader, "bad magic");
  }
  if (!in.has(4)) throw Error(ErrorKind::TruncatedData, "missing version");
  const auto version = in.read<std::uint32_t>();
  if (version != kFeatureFormatVersion) {
    throw Error(ErrorKind::VersionMismatch, "version " + std::to_string(version));
  }
  if (!in.has(16)) throw Error(ErrorKind::TruncatedData, "incomplete header");
  const std::uint64_t frames = in.read<std::uint32_t>();
  const std::uint64_t audio_dim = in.read<std::uint32_t>();
  const std::uint64_t video_dim = in.read<std::uint32_t>();
  const float fps = in.read<float>();
  if (!std::isfinite(fps) || fps <= 0.0f) {
    throw Error(ErrorKind::MalformedHeader, "fps must be positive and finite");
  }
  // Bound T by the payload before multiplying so the size check cannot overflow.
  const std::uint64_t payload = in.remaining();
  const std::uint64_t width = audio_dim + video_dim;
  if (width != 0 && frames > payload / (4 * width)) {
    throw Error(ErrorKind::TruncatedData, "declared matrix exceeds file");
  }
  const std::uint64_t expected = 4 * frames * width;
  if (expected > payload) throw Error(ErrorKind::TruncatedData, "declared matrix exceeds file");
  if (expected < payload) throw Error(ErrorKind::MalformedHeader, "trailing bytes after matrix");

  FeatureSequencePair pair;
  pair.fps = fps;
  pair.source_id = std::move(source_id);
  auto read_block = [&](FeatureMatrix& m, std::uint64_t cols) {
    m.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(cols));
    const std::size_t n = static_cast<std::size_t>(frames * cols) * sizeof(float);
    if (n > 0) std::memcpy(m.data(), in.take(n).data(), n);
  };
  read_block(pair.audio, audio_dim);
  read_block(pair.video, video_dim);
  return pair;
}

void write_features(const FeatureSequencePair& pair, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_features(pair));
}

FeatureSequencePair read_features(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_features(bytes, path.stem().string());
}

}  // namespace avh
