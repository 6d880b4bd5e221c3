#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "avh/alignment_model.hpp"

namespace avh {

enum class TrainingMode { unsupervised, supervised };

std::string_view to_string(TrainingMode mode);
TrainingMode parse_training_mode(std::string_view text);

struct Checkpoint {
  AlignmentNetwork network;
  LossConfig loss;
  TrainingMode mode = TrainingMode::unsupervised;
  /// Free-form training metadata; keys must not contain whitespace.
  std::map<std::string, std::string> metadata;
};

// "AVHC1" checkpoint: a text header of `key value` lines closed by a line
// `end`, followed by parameter_count little-endian f32 values in the
// network's parameter order.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace avh
