#include "avh/manifest.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <unordered_set>

#include "avh/error.hpp"
#include "byte_io.hpp"

namespace avh {

using nlohmann::json;

std::string_view to_string(Category category) {
  switch (category) {
    case Category::RVRA: return "RVRA";
    case Category::RVFA: return "RVFA";
    case Category::FVRA: return "FVRA";
    case Category::FVFA: return "FVFA";
  }
  return "?";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Category parse_category(std::string_view text) {
  for (auto c : {Category::RVRA, Category::RVFA, Category::FVRA, Category::FVFA}) {
    if (text == to_string(c)) return c;
  }
  throw Error(ErrorKind::InvalidCategory, "unknown category '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  for (auto s : {Split::train, Split::val, Split::test}) {
    if (text == to_string(s)) return s;
  }
  throw Error(ErrorKind::ParseError, "unknown split '" + std::string(text) + "'");
}

Label binary_label(Category category) {
  return category == Category::RVRA ? Label::real : Label::fake;
}

void validate_record(const ManifestRecord& record) {
  if (record.category == Category::RVRA && !record.fake_segments.empty()) {
    throw Error(ErrorKind::BadSegment, "RVRA record '" + record.source_id + "' has fake segments");
  }
  double previous_end = 0.0;
  for (const auto& seg : record.fake_segments) {
    if (!std::isfinite(seg.start_s) || !std::isfinite(seg.end_s) || seg.start_s < 0.0 ||
        seg.end_s <= seg.start_s) {
      throw Error(ErrorKind::BadSegment, "invalid segment in '" + record.source_id + "'");
    }
    if (seg.start_s < previous_end) {
      throw Error(ErrorKind::BadSegment,
                  "segments of '" + record.source_id + "' overlap or are unordered");
    }
    if (record.duration_s && seg.end_s > *record.duration_s) {
      throw Error(ErrorKind::BadSegment, "segment of '" + record.source_id + "' exceeds duration");
    }
    previous_end = seg.end_s;
  }
}

std::filesystem::path DatasetManifest::resolve(const std::string& relative) const {
  std::filesystem::path p(relative);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::vector<const ManifestRecord*> DatasetManifest::in_split(Split split) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

namespace {

const std::string& require_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorKind::ParseError, std::string("missing string field '") + key + "'");
  }
  return it->get_ref<const std::string&>();
}

std::optional<std::string> optional_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw Error(ErrorKind::ParseError, std::string("field '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

ManifestRecord record_from_json(const json& obj) {
  if (!obj.is_object()) throw Error(ErrorKind::ParseError, "record is not an object");
  ManifestRecord r;
  r.source_id = require_string(obj, "source_id");
  if (r.source_id.empty()) throw Error(ErrorKind::ParseError, "empty source_id");
  r.feature_path = optional_string(obj, "feature_path");
  r.audio_path = optional_string(obj, "audio_path");
  if (!r.feature_path && !r.audio_path) {
    throw Error(ErrorKind::ParseError, "record needs feature_path or audio_path");
  }
  r.category = parse_category(require_string(obj, "category"));
  r.split = parse_split(require_string(obj, "split"));
  if (auto it = obj.find("duration_s"); it != obj.end() && !it->is_null()) {
    if (!it->is_number()) throw Error(ErrorKind::ParseError, "duration_s must be a number");
    r.duration_s = it->get<double>();
    if (!std::isfinite(*r.duration_s) || *r.duration_s < 0.0) {
      throw Error(ErrorKind::ParseError, "duration_s must be non-negative");
    }
  }
  if (auto it = obj.find("fake_segments"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorKind::ParseError, "fake_segments must be an array");
    for (const auto& seg : *it) {
      if (!seg.is_array() || seg.size() != 2 || !seg[0].is_number() || !seg[1].is_number()) {
        throw Error(ErrorKind::BadSegment, "segment must be [start_s, end_s]");
      }
      r.fake_segments.push_back({seg[0].get<double>(), seg[1].get<double>()});
    }
  }
  validate_record(r);
  return r;
}

json record_to_json(const ManifestRecord& r) {
  json obj;
  obj["source_id"] = r.source_id;
  if (r.feature_path) obj["feature_path"] = *r.feature_path;
  if (r.audio_path) obj["audio_path"] = *r.audio_path;
  obj["category"] = std::string(to_string(r.category));
  obj["split"] = std::string(to_string(r.split));
  if (r.duration_s) obj["duration_s"] = *r.duration_s;
  json segs = json::array();
  for (const auto& s : r.fake_segments) segs.push_back({s.start_s, s.end_s});
  obj["fake_segments"] = std::move(segs);
  return obj;
}

}  // namespace

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest manifest;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded()) throw Error(ErrorKind::ParseError, "invalid JSON", line_no);
    ManifestRecord record;
    try {
      record = record_from_json(obj);
    } catch (const Error& e) {
      throw Error(e.kind(), e.detail(), line_no);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, e.what(), line_no);
    }
    if (!seen.insert(record.source_id).second) {
      throw Error(ErrorKind::DuplicateId, "duplicate source_id '" + record.source_id + "'", line_no);
    }
    manifest.records.push_back(std::move(record));
  }
  return manifest;
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  auto manifest = parse_manifest(
      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  manifest.base_dir = path.parent_path();
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  const std::string text = format_manifest(manifest);
  detail::write_file_bytes(
      path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<Label> frame_labels(const ManifestRecord& record, std::size_t frames, double fps) {
  std::vector<Label> labels(frames, Label::real);
  for (std::size_t i = 0; i < frames; ++i) {
    const double begin = static_cast<double>(i) / fps;
    const double end = static_cast<double>(i + 1) / fps;
    for (const auto& seg : record.fake_segments) {
      if (begin < seg.end_s && seg.start_s < end) {
        labels[i] = Label::fake;
        break;
      }
    }
  }
  return labels;
}

}  // namespace avh
