#ifndef PLRL_DATA_IO_H_
#define PLRL_DATA_IO_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "plrl/domain.h"

namespace plrl {

// Columns of the public session log, in the order they are written.
inline constexpr std::array<const char*, 8> kSessionColumns = {
    "session_id", "session_position", "session_length", "track_id",
    "skip_1",     "skip_2",           "skip_3",         "not_skipped"};
// The public dataset names the track column `track_id_clean`; both spellings are accepted.
inline constexpr const char* kTrackIdAlias = "track_id_clean";

struct SessionLoadOptions {
  std::size_t min_length = 6;  // context_size + 1
};

struct SessionLoadResult {
  std::vector<SessionRecord> sessions;  // in order of first appearance
  std::size_t rows_read = 0;
  std::size_t rejected_rows = 0;      // malformed rows
  std::size_t rejected_sessions = 0;  // position gaps/duplicates or too short
  std::vector<std::string> ignored_columns;

  std::size_t interaction_count() const;
};

// Throws kNotFound for a missing file and kSchema (naming the column) when
// a required column is absent.
SessionLoadResult load_sessions(const std::filesystem::path& path,
                                const SessionLoadOptions& options = {});
void write_sessions(const std::filesystem::path& path, std::span<const SessionRecord> sessions);

struct FeatureLoadResult {
  FeatureTable table;
  std::size_t rows_read = 0;
  std::size_t rejected_rows = 0;  // non-numeric or wrong field count
};

// Header: `track_id` followed by F feature columns. Duplicate ids throw
// kInvalidArgument.
FeatureLoadResult load_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const FeatureTable& table);

std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::string checksum_hex(std::uint64_t checksum);

struct DatasetManifest {
  std::filesystem::path sessions_path;
  std::filesystem::path features_path;
  std::size_t feature_dim = 0;
  std::size_t session_count = 0;
  std::size_t track_count = 0;
  std::size_t interaction_count = 0;
  std::size_t rejected_rows = 0;
  std::size_t rejected_sessions = 0;
  std::uint64_t split_seed = 0;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  std::string sessions_checksum;
  std::string features_checksum;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& json);
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
// Relative data paths are resolved against the manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& path);
// Throws kNotFound for missing files and kCorrupt on checksum mismatch.
void verify_checksums(const DatasetManifest& manifest);

struct DataSplit {
  std::vector<SessionRecord> train;
  std::vector<SessionRecord> validation;
  std::vector<SessionRecord> test;
};

// Disjoint partition by session, deterministic per seed. Fractions must be
// positive and sum to 1; every part receives at least one session.
DataSplit split_sessions(std::span<const SessionRecord> sessions,
                         const std::array<double, 3>& fractions, std::uint64_t seed);

}  // namespace plrl

#endif  // PLRL_DATA_IO_H_
