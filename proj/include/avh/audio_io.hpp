#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace avh {

/// Mono waveform with amplitudes in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  std::uint32_t sample_rate = 16000;
  std::string source_id;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class WavEncoding { pcm16, float32 };

/// Throws InvalidSample when a sample is non-finite or outside [-1, 1], or
/// when the sample rate is zero.
void check_clip(const AudioClip& clip);

/// Decodes a RIFF/WAVE buffer. Accepts only mono PCM16 (format 1) and
/// float32 (format 3). PCM16 values are divided by 32768, so -32768 maps to
/// exactly -1.0 and +32767 to 1 - 2^-15.
AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id = {});
AudioClip read_wav(const std::filesystem::path& path);

/// PCM16 encoding rounds to nearest and saturates at +32767.
std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavEncoding encoding);
void write_wav(const AudioClip& clip, const std::filesystem::path& path,
               WavEncoding encoding = WavEncoding::float32);

}  // namespace avh
