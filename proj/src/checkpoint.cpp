#include "avh/checkpoint.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "avh/error.hpp"
#include "byte_io.hpp"

namespace avh {

std::string_view to_string(TrainingMode mode) {
  return mode == TrainingMode::unsupervised ? "unsupervised" : "supervised";
}

TrainingMode parse_training_mode(std::string_view text) {
  if (text == "unsupervised") return TrainingMode::unsupervised;
  if (text == "supervised") return TrainingMode::supervised;
  throw Error(ErrorKind::InvalidArgument, "unknown training mode '" + std::string(text) + "'");
}

namespace {

constexpr std::string_view kMagic = "AVHC1";
constexpr std::size_t kMaxHeaderBytes = 1 << 16;

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::size_t parse_size(const std::string& text, const char* what) {
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw Error(ErrorKind::MalformedHeader, std::string("bad ") + what + " '" + text + "'");
  }
  return v;
}

double parse_double(const std::string& text, const char* what) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw Error(ErrorKind::MalformedHeader, std::string("bad ") + what + " '" + text + "'");
  }
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& cp) {
  const auto& arch = cp.network.architecture();
  const auto& params = cp.network.parameters();
  if (!params.allFinite()) throw Error(ErrorKind::NonFiniteValue, "checkpoint parameters not finite");

  std::ostringstream header;
  header << kMagic << '\n';
  header << "head " << to_string(arch.head) << '\n';
  header << "audio_dim " << arch.audio_dim << '\n';
  header << "video_dim " << arch.video_dim << '\n';
  header << "hidden";
  if (arch.head == HeadType::mlp) {
    for (auto w : arch.hidden) header << ' ' << w;
  }
  header << '\n';
  header << "normalize_inputs " << (arch.normalize_inputs ? 1 : 0) << '\n';
  header << "layer_norm_eps " << format_double(arch.layer_norm_eps) << '\n';
  header << "mode " << to_string(cp.mode) << '\n';
  header << "neighborhood_half_width " << cp.loss.neighborhood_half_width << '\n';
  header << "pooling " << to_string(cp.loss.pooling) << '\n';
  for (const auto& [key, value] : cp.metadata) {
    if (key.empty() || key.find_first_of(" \t\n") != std::string::npos ||
        value.find('\n') != std::string::npos) {
      throw Error(ErrorKind::InvalidArgument, "metadata key/value not representable: " + key);
    }
    header << "meta." << key << ' ' << value << '\n';
  }
  header << "parameter_count " << params.size() << '\n';
  header << "end\n";

  const std::string text = header.str();
  detail::ByteWriter out;
  out.append({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  for (Eigen::Index i = 0; i < params.size(); ++i) out.write<float>(params[i]);
  return std::move(out.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  // Collect header lines up to "end".
  std::vector<std::string> lines;
  std::size_t pos = 0;
  bool closed = false;
  while (pos < bytes.size() && pos < kMaxHeaderBytes) {
    std::size_t eol = pos;
    while (eol < bytes.size() && bytes[eol] != '\n') ++eol;
    if (eol == bytes.size()) break;
    lines.emplace_back(reinterpret_cast<const char*>(bytes.data() + pos), eol - pos);
    pos = eol + 1;
    if (lines.back() == "end") {
      closed = true;
      break;
    }
  }
  if (lines.empty() || lines.front().rfind("AVHC", 0) != 0) {
    throw Error(ErrorKind::MalformedHeader, "missing AVHC magic");
  }
  if (lines.front() != kMagic) throw Error(ErrorKind::VersionMismatch, lines.front());
  if (!closed) throw Error(ErrorKind::TruncatedData, "checkpoint header not terminated");

  Architecture arch;
  LossConfig loss;
  TrainingMode mode = TrainingMode::unsupervised;
  std::map<std::string, std::string> metadata;
  std::size_t declared = 0;
  bool have_count = false;
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    const auto& line = lines[i];
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string value = space == std::string::npos ? "" : line.substr(space + 1);
    try {
      if (key == "head") arch.head = parse_head_type(value);
      else if (key == "audio_dim") arch.audio_dim = parse_size(value, key.c_str());
      else if (key == "video_dim") arch.video_dim = parse_size(value, key.c_str());
      else if (key == "hidden") {
        arch.hidden.clear();
        std::istringstream ws(value);
        std::string tok;
        while (ws >> tok) arch.hidden.push_back(parse_size(tok, "hidden width"));
      } else if (key == "normalize_inputs") arch.normalize_inputs = parse_size(value, key.c_str()) != 0;
      else if (key == "layer_norm_eps") arch.layer_norm_eps = parse_double(value, key.c_str());
      else if (key == "mode") mode = parse_training_mode(value);
      else if (key == "neighborhood_half_width") loss.neighborhood_half_width = parse_size(value, key.c_str());
      else if (key == "pooling") loss.pooling = parse_pooling(value);
      else if (key == "parameter_count") {
        declared = parse_size(value, key.c_str());
        have_count = true;
      } else if (key.rfind("meta.", 0) == 0) metadata[key.substr(5)] = value;
      else throw Error(ErrorKind::MalformedHeader, "unknown header key '" + key + "'");
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::MalformedHeader) throw;
      throw Error(ErrorKind::MalformedHeader, e.detail());
    }
  }
  if (!have_count) throw Error(ErrorKind::MalformedHeader, "missing parameter_count");
  try {
    arch.validate();
    loss.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::MalformedHeader, e.detail());
  }
  // Guard against absurd dimensions before allocating.
  const auto widths = arch.layer_widths();
  std::size_t expected = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l] > (1u << 24) || widths[l + 1] > (1u << 24)) {
      throw Error(ErrorKind::MalformedHeader, "layer width too large");
    }
    expected += widths[l] * widths[l + 1] + widths[l + 1] + (l + 2 < widths.size() ? 2 * widths[l + 1] : 0);
  }
  if (expected != declared) throw Error(ErrorKind::MalformedHeader, "parameter_count does not match architecture");
  const std::size_t blob = bytes.size() - pos;
  if (blob / 4 < declared) throw Error(ErrorKind::TruncatedData, "parameter blob shorter than declared");
  if (blob != 4 * declared) throw Error(ErrorKind::MalformedHeader, "trailing bytes after parameters");

  Checkpoint cp{AlignmentNetwork(arch), loss, mode, std::move(metadata)};
  auto& params = cp.network.parameters();
  std::memcpy(params.data(), bytes.data() + pos, 4 * declared);
  if (!params.allFinite()) throw Error(ErrorKind::NonFiniteValue, "checkpoint parameters not finite");
  return cp;
}

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path));
}

}  // namespace avh
