#include "plrl/data_io.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "plrl/error.h"
#include "plrl/log.h"
#include "plrl/rng.h"

namespace plrl {
namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream file(path);
  require(file.good(), ErrorCode::kNotFound, "file not found: '" + path.string() + "'");
  return file;
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::optional<int> parse_int(const std::string& s) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double value = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::optional<bool> parse_bool(const std::string& s) {
  if (s == "true" || s == "True" || s == "TRUE" || s == "1") return true;
  if (s == "false" || s == "False" || s == "FALSE" || s == "0") return false;
  return std::nullopt;
}

std::string format_double(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  require(file.good(), ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  return file;
}

}  // namespace

std::size_t SessionLoadResult::interaction_count() const {
  std::size_t total = 0;
  for (const auto& s : sessions) total += s.items.size();
  return total;
}

SessionLoadResult load_sessions(const std::filesystem::path& path,
                                const SessionLoadOptions& options) {
  std::ifstream file = open_input(path);
  std::string line;
  require(read_line(file, line), ErrorCode::kSchema, "'" + path.string() + "' has no header row");
  const std::vector<std::string> header = split_csv_line(line);

  std::map<std::string, std::size_t> column_index;
  for (std::size_t i = 0; i < header.size(); ++i) column_index.emplace(header[i], i);
  if (!column_index.contains("track_id") && column_index.contains(kTrackIdAlias)) {
    column_index.emplace("track_id", column_index.at(kTrackIdAlias));
  }
  std::array<std::size_t, kSessionColumns.size()> idx{};
  for (std::size_t c = 0; c < kSessionColumns.size(); ++c) {
    auto it = column_index.find(kSessionColumns[c]);
    if (it == column_index.end()) {
      fail(ErrorCode::kSchema, "session log '" + path.string() + "' is missing required column '" +
                                   kSessionColumns[c] + "'");
    }
    idx[c] = it->second;
  }

  SessionLoadResult result;
  for (const std::string& name : header) {
    const bool used = std::find_if(kSessionColumns.begin(), kSessionColumns.end(), [&](const char* c) {
                        return name == c;
                      }) != kSessionColumns.end() || name == kTrackIdAlias;
    if (!used) result.ignored_columns.push_back(name);
  }
  if (!result.ignored_columns.empty()) {
    log_info("ignoring " + std::to_string(result.ignored_columns.size()) +
             " unused session-log columns");
  }

  std::vector<SessionRecord> grouped;
  std::unordered_map<std::string, std::size_t> session_index;
  while (read_line(file, line)) {
    if (line.empty()) continue;
    ++result.rows_read;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      ++result.rejected_rows;
      continue;
    }
    const auto position = parse_int(fields[idx[1]]);
    const auto s1 = parse_bool(fields[idx[4]]);
    const auto s2 = parse_bool(fields[idx[5]]);
    const auto s3 = parse_bool(fields[idx[6]]);
    const auto not_skipped = parse_bool(fields[idx[7]]);
    const std::string& session_id = fields[idx[0]];
    const std::string& track_id = fields[idx[3]];
    if (!position || !s1 || !s2 || !s3 || !not_skipped || session_id.empty() || track_id.empty()) {
      ++result.rejected_rows;
      continue;
    }
    auto [it, inserted] = session_index.emplace(session_id, grouped.size());
    if (inserted) grouped.push_back({session_id, {}});
    grouped[it->second].items.push_back({track_id, *position, *s1, *s2, *s3, *not_skipped});
  }

  for (SessionRecord& session : grouped) {
    std::stable_sort(session.items.begin(), session.items.end(),
                     [](const auto& a, const auto& b) { return a.position < b.position; });
    bool contiguous = true;
    for (std::size_t i = 0; i < session.items.size(); ++i) {
      if (session.items[i].position != static_cast<int>(i) + 1) contiguous = false;
    }
    if (!contiguous || session.items.size() < options.min_length) {
      ++result.rejected_sessions;
      continue;
    }
    result.sessions.push_back(std::move(session));
  }
  if (result.rejected_rows + result.rejected_sessions > 0) {
    log_warning("session log '" + path.string() + "': rejected " +
                std::to_string(result.rejected_rows) + " rows and " +
                std::to_string(result.rejected_sessions) + " sessions");
  }
  return result;
}

void write_sessions(const std::filesystem::path& path, std::span<const SessionRecord> sessions) {
  std::ofstream out = open_output(path);
  for (std::size_t c = 0; c < kSessionColumns.size(); ++c) {
    out << (c ? "," : "") << kSessionColumns[c];
  }
  out << '\n';
  auto flag = [](bool b) { return b ? "true" : "false"; };
  for (const SessionRecord& session : sessions) {
    for (const InteractionRecord& item : session.items) {
      out << session.session_id << ',' << item.position << ',' << session.items.size() << ','
          << item.track_id << ',' << flag(item.skip_1) << ',' << flag(item.skip_2) << ','
          << flag(item.skip_3) << ',' << flag(item.completed) << '\n';
    }
  }
  require(out.good(), ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

FeatureLoadResult load_features(const std::filesystem::path& path) {
  std::ifstream file = open_input(path);
  std::string line;
  require(read_line(file, line), ErrorCode::kSchema, "'" + path.string() + "' has no header row");
  std::vector<std::string> header = split_csv_line(line);
  require(!header.empty() && header.front() == "track_id", ErrorCode::kSchema,
          "feature table '" + path.string() + "' must start with column 'track_id'");
  require(header.size() >= 2, ErrorCode::kSchema,
          "feature table '" + path.string() + "' has no feature columns");

  FeatureLoadResult result;
  result.table = FeatureTable(std::vector<std::string>(header.begin() + 1, header.end()));
  const std::size_t dim = header.size() - 1;
  while (read_line(file, line)) {
    if (line.empty()) continue;
    ++result.rows_read;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size() || fields[0].empty()) {
      ++result.rejected_rows;
      continue;
    }
    Eigen::VectorXd values(static_cast<Eigen::Index>(dim));
    bool ok = true;
    for (std::size_t k = 0; k < dim && ok; ++k) {
      const auto v = parse_double(fields[k + 1]);
      ok = v.has_value();
      if (ok) values(static_cast<Eigen::Index>(k)) = *v;
    }
    if (!ok) {
      ++result.rejected_rows;
      continue;
    }
    result.table.insert({fields[0], std::move(values)});
  }
  if (result.rejected_rows > 0) {
    log_warning("feature table '" + path.string() + "': rejected " +
                std::to_string(result.rejected_rows) + " rows");
  }
  return result;
}

void write_features(const std::filesystem::path& path, const FeatureTable& table) {
  std::ofstream out = open_output(path);
  out << "track_id";
  for (const auto& name : table.column_names()) out << ',' << name;
  out << '\n';
  for (const TrackFeatures& track : table.tracks()) {
    out << track.track_id;
    for (Eigen::Index k = 0; k < track.features.size(); ++k) out << ',' << format_double(track.features(k));
    out << '\n';
  }
  require(out.good(), ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  require(file.good(), ErrorCode::kNotFound, "file not found: '" + path.string() + "'");
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buffer[1 << 16];
  while (file) {
    file.read(buffer, sizeof(buffer));
    const std::streamsize n = file.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      hash ^= static_cast<unsigned char>(buffer[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

std::string checksum_hex(std::uint64_t checksum) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(checksum));
  return buffer;
}

nlohmann::json DatasetManifest::to_json() const {
  return {{"format", "plrl-manifest-v1"},
          {"sessions_path", sessions_path.string()},
          {"features_path", features_path.string()},
          {"feature_dim", feature_dim},
          {"counts",
           {{"sessions", session_count},
            {"tracks", track_count},
            {"interactions", interaction_count},
            {"rejected_rows", rejected_rows},
            {"rejected_sessions", rejected_sessions}}},
          {"split", {{"seed", split_seed}, {"fractions", split_fractions}}},
          {"checksums", {{"sessions", sessions_checksum}, {"features", features_checksum}}}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& json) {
  try {
    DatasetManifest m;
    m.sessions_path = json.at("sessions_path").get<std::string>();
    m.features_path = json.at("features_path").get<std::string>();
    m.feature_dim = json.at("feature_dim").get<std::size_t>();
    const auto& counts = json.at("counts");
    m.session_count = counts.at("sessions").get<std::size_t>();
    m.track_count = counts.at("tracks").get<std::size_t>();
    m.interaction_count = counts.at("interactions").get<std::size_t>();
    m.rejected_rows = counts.value("rejected_rows", std::size_t{0});
    m.rejected_sessions = counts.value("rejected_sessions", std::size_t{0});
    m.split_seed = json.at("split").at("seed").get<std::uint64_t>();
    m.split_fractions = json.at("split").at("fractions").get<std::array<double, 3>>();
    m.sessions_checksum = json.at("checksums").at("sessions").get<std::string>();
    m.features_checksum = json.at("checksums").at("features").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out = open_output(path);
  out << manifest.to_json().dump(2) << '\n';
  require(out.good(), ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream file = open_input(path);
  nlohmann::json json;
  try {
    json = nlohmann::json::parse(file);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, "manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  DatasetManifest m = DatasetManifest::from_json(json);
  const auto base = path.parent_path();
  if (m.sessions_path.is_relative()) m.sessions_path = base / m.sessions_path;
  if (m.features_path.is_relative()) m.features_path = base / m.features_path;
  return m;
}

void verify_checksums(const DatasetManifest& manifest) {
  require(checksum_hex(fnv1a_file(manifest.sessions_path)) == manifest.sessions_checksum,
          ErrorCode::kCorrupt, "checksum mismatch for '" + manifest.sessions_path.string() + "'");
  require(checksum_hex(fnv1a_file(manifest.features_path)) == manifest.features_checksum,
          ErrorCode::kCorrupt, "checksum mismatch for '" + manifest.features_path.string() + "'");
}

DataSplit split_sessions(std::span<const SessionRecord> sessions,
                         const std::array<double, 3>& fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    require(f > 0.0, ErrorCode::kInvalidArgument, "split fractions must be positive");
    total += f;
  }
  require(std::abs(total - 1.0) < 1e-9, ErrorCode::kInvalidArgument,
          "split fractions must sum to 1");
  const std::size_t n = sessions.size();
  require(n >= fractions.size(), ErrorCode::kInvalidArgument,
          "cannot split " + std::to_string(n) + " sessions into 3 parts");

  std::array<std::size_t, 3> counts{};
  counts[0] = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  counts[1] = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  counts[0] = std::clamp<std::size_t>(counts[0], 1, n - 2);
  counts[1] = std::clamp<std::size_t>(counts[1], 1, n - counts[0] - 1);
  counts[2] = n - counts[0] - counts[1];

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  DataSplit split;
  std::array<std::vector<SessionRecord>*, 3> parts{&split.train, &split.validation, &split.test};
  std::size_t offset = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    std::vector<std::size_t> chosen(order.begin() + static_cast<long>(offset),
                                    order.begin() + static_cast<long>(offset + counts[p]));
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i : chosen) parts[p]->push_back(sessions[i]);
    offset += counts[p];
  }
  return split;
}

}  // namespace plrl
