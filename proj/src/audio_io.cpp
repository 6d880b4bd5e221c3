#include "avh/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>

#include "avh/error.hpp"
#include "byte_io.hpp"

namespace avh {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

bool tag_is(std::span<const std::uint8_t> tag, const char* expected) {
  return std::memcmp(tag.data(), expected, 4) == 0;
}

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits_per_sample = 0;
};

}  // namespace

void check_clip(const AudioClip& clip) {
  if (clip.sample_rate == 0) {
    throw Error(ErrorKind::InvalidSample, "sample rate must be positive");
  }
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const float s = clip.samples[i];
    if (!std::isfinite(s) || std::fabs(s) > 1.0f) {
      throw Error(ErrorKind::InvalidSample,
                  "sample " + std::to_string(i) + " outside [-1, 1]");
    }
  }
}

AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id) {
  detail::ByteReader in(bytes);
  if (!in.has(12)) throw Error(ErrorKind::MalformedHeader, "shorter than RIFF header");
  if (!tag_is(in.take(4), "RIFF")) throw Error(ErrorKind::MalformedHeader, "missing RIFF magic");
  in.skip(4);  // riff size; chunk sizes are checked individually
  if (!tag_is(in.take(4), "WAVE")) throw Error(ErrorKind::MalformedHeader, "missing WAVE magic");

  std::optional<FmtChunk> fmt;
  std::optional<std::span<const std::uint8_t>> data;
  while (in.remaining() >= 8 && !data) {
    auto tag = in.take(4);
    const auto size = in.read<std::uint32_t>();
    if (tag_is(tag, "fmt ")) {
      if (size < 16) throw Error(ErrorKind::MalformedHeader, "fmt chunk too small");
      if (!in.has(size)) throw Error(ErrorKind::TruncatedData, "fmt chunk exceeds file");
      FmtChunk f;
      f.format = in.read<std::uint16_t>();
      f.channels = in.read<std::uint16_t>();
      f.sample_rate = in.read<std::uint32_t>();
      in.skip(4 + 2);  // byte rate, block align
      f.bits_per_sample = in.read<std::uint16_t>();
      in.skip(size - 16 + (size & 1u));
      fmt = f;
    } else if (tag_is(tag, "data")) {
      if (!fmt) throw Error(ErrorKind::MalformedHeader, "data chunk before fmt chunk");
      if (!in.has(size)) throw Error(ErrorKind::TruncatedData, "data chunk exceeds file");
      data = in.take(size);
    } else {
      const std::size_t padded = std::size_t{size} + (size & 1u);
      if (!in.has(padded)) throw Error(ErrorKind::TruncatedData, "chunk exceeds file");
      in.skip(padded);
    }
  }
  if (!fmt) throw Error(ErrorKind::MalformedHeader, "no fmt chunk");
  if (!data) throw Error(ErrorKind::MalformedHeader, "no data chunk");

  if (fmt->channels != 1) {
    throw Error(ErrorKind::UnsupportedEncoding,
                std::to_string(fmt->channels) + " channels; only mono is accepted");
  }
  if (fmt->sample_rate == 0) throw Error(ErrorKind::MalformedHeader, "zero sample rate");

  AudioClip clip;
  clip.sample_rate = fmt->sample_rate;
  clip.source_id = std::move(source_id);
  detail::ByteReader samples(*data);
  if (fmt->format == kFormatPcm && fmt->bits_per_sample == 16) {
    const std::size_t n = data->size() / 2;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      clip.samples[i] = static_cast<float>(samples.read<std::int16_t>()) / 32768.0f;
    }
  } else if (fmt->format == kFormatFloat && fmt->bits_per_sample == 32) {
    const std::size_t n = data->size() / 4;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) clip.samples[i] = samples.read<float>();
    check_clip(clip);
  } else {
    throw Error(ErrorKind::UnsupportedEncoding,
                "format " + std::to_string(fmt->format) + " with " +
                    std::to_string(fmt->bits_per_sample) + " bits");
  }
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_wav(bytes, path.stem().string());
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavEncoding encoding) {
  check_clip(clip);
  const bool pcm = encoding == WavEncoding::pcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint16_t block_align = bits / 8;
  const auto data_size = static_cast<std::uint32_t>(clip.samples.size() * block_align);

  detail::ByteWriter out;
  out.reserve(44 + data_size);
  out.write_tag("RIFF");
  out.write<std::uint32_t>(36 + data_size);
  out.write_tag("WAVE");
  out.write_tag("fmt ");
  out.write<std::uint32_t>(16);
  out.write<std::uint16_t>(pcm ? kFormatPcm : kFormatFloat);
  out.write<std::uint16_t>(1);
  out.write<std::uint32_t>(clip.sample_rate);
  out.write<std::uint32_t>(clip.sample_rate * block_align);
  out.write<std::uint16_t>(block_align);
  out.write<std::uint16_t>(bits);
  out.write_tag("data");
  out.write<std::uint32_t>(data_size);
  for (float s : clip.samples) {
    if (pcm) {
      const long q = std::lround(static_cast<double>(s) * 32768.0);
      out.write<std::int16_t>(static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L)));
    } else {
      out.write<float>(s);
    }
  }
  return std::move(out.bytes());
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path,
               WavEncoding encoding) {
  detail::write_file_bytes(path, encode_wav(clip, encoding));
}

}  // namespace avh
