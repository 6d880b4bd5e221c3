#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avh/label.hpp"

namespace avh {

/// Authenticity of the video (V) and audio (A) stream: real (R) or fake (F).
enum class Category { RVRA, RVFA, FVRA, FVFA };
enum class Split { train, val, test };

std::string_view to_string(Category category);
std::string_view to_string(Split split);
/// Throws InvalidCategory.
Category parse_category(std::string_view text);
/// Throws ParseError.
Split parse_split(std::string_view text);

/// Only RVRA is real; the three other categories are fakes.
Label binary_label(Category category);

struct FakeSegment {
  double start_s = 0.0;
  double end_s = 0.0;

  bool operator==(const FakeSegment&) const = default;
};

struct ManifestRecord {
  std::string source_id;
  std::optional<std::string> feature_path;
  std::optional<std::string> audio_path;
  Category category = Category::RVRA;
  Split split = Split::train;
  std::vector<FakeSegment> fake_segments;
  std::optional<double> duration_s;

  bool operator==(const ManifestRecord&) const = default;
};

/// Throws BadSegment for empty, unordered, overlapping or out-of-range
/// segments, and for an RVRA record that lists any segment.
void validate_record(const ManifestRecord& record);

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  /// Directory relative paths are resolved against; empty means cwd.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const;
  std::vector<const ManifestRecord*> in_split(Split split) const;
};

/// One JSON object per line; blank lines are skipped. Errors carry the 1-based
/// line number: ParseError, DuplicateId, InvalidCategory, BadSegment.
DatasetManifest parse_manifest(std::string_view text);
std::string format_manifest(const DatasetManifest& manifest);

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Frame i covers [i/fps, (i+1)/fps) and is fake iff that interval overlaps a
/// fake segment.
std::vector<Label> frame_labels(const ManifestRecord& record, std::size_t frames, double fps);

}  // namespace avh
