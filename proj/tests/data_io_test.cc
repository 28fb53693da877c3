#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "plrl/data_io.h"
#include "plrl/error.h"
#include "plrl/synthetic.h"

namespace plrl {
namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "plrl_data_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::filesystem::path write_text(const std::string& name, const std::string& text) {
  auto path = temp_file(name);
  std::ofstream(path) << text;
  return path;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected plrl::Error";
  return ErrorCode::kUsage;
}

const char* kHeader = "session_id,session_position,session_length,track_id,skip_1,skip_2,skip_3,not_skipped\n";

TEST(LoadSessions, GroupsAndOrdersTwoSessions) {
  std::string text = kHeader;
  text += "b,2,2,t2,false,false,false,true\n";
  text += "a,1,3,t1,true,true,true,false\n";
  text += "b,1,2,t3,false,false,true,false\n";
  text += "a,3,3,t4,false,false,false,true\n";
  text += "a,2,3,t5,false,true,true,false\n";
  SessionLoadOptions options;
  options.min_length = 2;
  const auto result = load_sessions(write_text("two.csv", text), options);
  ASSERT_EQ(result.sessions.size(), 2u);
  EXPECT_EQ(result.sessions[0].session_id, "b");
  EXPECT_EQ(result.sessions[1].session_id, "a");
  EXPECT_EQ(result.sessions[1].items[0].track_id, "t1");
  EXPECT_EQ(result.sessions[1].items[1].track_id, "t5");
  EXPECT_EQ(result.sessions[1].items[2].track_id, "t4");
  EXPECT_TRUE(result.sessions[1].items[1].skip_2);
  EXPECT_FALSE(result.sessions[1].items[1].skip_1);
  EXPECT_EQ(result.interaction_count(), 5u);
}

TEST(LoadSessions, MissingColumnNamesTheColumn) {
  const auto path = write_text("missing.csv",
                               "session_id,session_position,session_length,track_id,skip_1,skip_3,not_skipped\n"
                               "a,1,1,t,false,false,true\n");
  try {
    load_sessions(path);
    FAIL() << "expected schema error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
    EXPECT_NE(std::string(e.what()).find("'skip_2'"), std::string::npos) << e.what();
  }
}

TEST(LoadSessions, PositionGapRejectsSession) {
  std::string text = kHeader;
  text += "a,1,3,t1,false,false,false,true\n";
  text += "a,3,3,t2,false,false,false,true\n";
  text += "b,1,2,t1,false,false,false,true\n";
  text += "b,2,2,t2,false,false,false,true\n";
  SessionLoadOptions options;
  options.min_length = 2;
  const auto result = load_sessions(write_text("gap.csv", text), options);
  EXPECT_EQ(result.sessions.size(), 1u);
  EXPECT_EQ(result.rejected_sessions, 1u);
}

TEST(LoadSessions, ShortSessionsRejectedAtIngestion) {
  std::string text = kHeader;
  for (int p = 1; p <= 5; ++p) text += "a," + std::to_string(p) + ",5,t,false,false,false,true\n";
  const auto result = load_sessions(write_text("short.csv", text));  // min_length 6
  EXPECT_TRUE(result.sessions.empty());
  EXPECT_EQ(result.rejected_sessions, 1u);
}

TEST(LoadSessions, MalformedRowsAreCounted) {
  std::string text = kHeader;
  text += "a,1,2,t1,false,false,false,true\n";
  text += "a,x,2,t2,false,false,false,true\n";      // bad position
  text += "a,2,2,t2,maybe,false,false,true\n";      // bad flag
  text += "a,2,2,t2,false,false,false\n";           // missing field
  text += "a,2,2,t2,false,false,false,true\n";
  SessionLoadOptions options;
  options.min_length = 2;
  const auto result = load_sessions(write_text("malformed.csv", text), options);
  EXPECT_EQ(result.rejected_rows, 3u);
  ASSERT_EQ(result.sessions.size(), 1u);
  EXPECT_EQ(result.sessions[0].items.size(), 2u);
}

TEST(LoadSessions, MissingFileIsNotFound) {
  EXPECT_EQ(code_of([] { load_sessions(temp_file("nope.csv")); }), ErrorCode::kNotFound);
}

TEST(LoadSessions, PublicDatasetLayoutParsesUnmodified) {
  std::string text =
      "session_id,session_position,session_length,track_id_clean,skip_1,skip_2,skip_3,not_skipped,"
      "context_switch,no_pause_before_play,short_pause_before_play,long_pause_before_play,"
      "hist_user_behavior_n_seekfwd,hist_user_behavior_n_seekback,hist_user_behavior_is_shuffle,"
      "hour_of_day,date,premium,context_type,hist_user_behavior_reason_start,"
      "hist_user_behavior_reason_end\n";
  for (int p = 1; p <= 6; ++p) {
    text += "0_00006f66-33e5-4de7-a324-2d18e439fc1e," + std::to_string(p) +
            ",6,t_" + std::to_string(p) +
            ",false,false,false,true,0,0,0,0,0,0,true,16,2018-07-15,true,"
            "editorial_playlist,trackdone,trackdone\n";
  }
  const auto result = load_sessions(write_text("public.csv", text));
  ASSERT_EQ(result.sessions.size(), 1u);
  EXPECT_EQ(result.sessions[0].items[5].track_id, "t_6");
  EXPECT_EQ(result.ignored_columns.size(), 13u);
}

TEST(SessionsRoundTrip, ParseSerializeParse) {
  SyntheticSpec spec;
  spec.num_sessions = 40;
  spec.num_tracks = 200;
  spec.seed = 9;
  const auto data = generate_synthetic(spec);
  const auto first = temp_file("rt1.csv");
  write_sessions(first, data.sessions);
  const auto parsed = load_sessions(first).sessions;
  const auto second = temp_file("rt2.csv");
  write_sessions(second, parsed);
  const auto reparsed = load_sessions(second).sessions;
  ASSERT_EQ(parsed.size(), data.sessions.size());
  ASSERT_EQ(reparsed.size(), parsed.size());
  for (std::size_t s = 0; s < parsed.size(); ++s) {
    ASSERT_EQ(parsed[s].items.size(), data.sessions[s].items.size());
    for (std::size_t i = 0; i < parsed[s].items.size(); ++i) {
      const auto& a = parsed[s].items[i];
      const auto& b = data.sessions[s].items[i];
      const auto& c = reparsed[s].items[i];
      EXPECT_TRUE(a.track_id == b.track_id && a.position == b.position && a.skip_1 == b.skip_1 &&
                  a.skip_2 == b.skip_2 && a.skip_3 == b.skip_3 && a.completed == b.completed);
      EXPECT_TRUE(a.track_id == c.track_id && a.position == c.position && a.skip_1 == c.skip_1 &&
                  a.skip_2 == c.skip_2 && a.skip_3 == c.skip_3 && a.completed == c.completed);
    }
  }
  EXPECT_EQ(read_bytes(first), read_bytes(second));
}

TEST(LoadFeatures, InfersDimensionFromHeader) {
  const auto path = write_text("features.csv",
                               "track_id,a,b,c,d\n"
                               "t1,1,2,3,4\n"
                               "t2,0.5,-1,2e-3,0\n"
                               "t3,9,9,9,9\n");
  const auto result = load_features(path);
  EXPECT_EQ(result.table.dim(), 4u);
  EXPECT_EQ(result.table.size(), 3u);
  EXPECT_DOUBLE_EQ(result.table.at("t2").features(2), 2e-3);
}

TEST(LoadFeatures, DuplicateIdIsAnError) {
  const auto path = write_text("dup.csv", "track_id,a\nt1,1\nt1,2\n");
  EXPECT_EQ(code_of([&] { load_features(path); }), ErrorCode::kInvalidArgument);
}

TEST(LoadFeatures, NonNumericRowRejected) {
  const auto path = write_text("nonnumeric.csv", "track_id,a,b\nt1,1,2\nt2,x,2\nt3,nan,1\nt4,3,4\n");
  const auto result = load_features(path);
  EXPECT_EQ(result.table.size(), 2u);
  EXPECT_EQ(result.rejected_rows, 2u);
}

TEST(LoadFeatures, WrongFirstColumnIsSchemaError) {
  const auto path = write_text("badheader.csv", "id,a\nt1,1\n");
  EXPECT_EQ(code_of([&] { load_features(path); }), ErrorCode::kSchema);
}

TEST(LoadFeatures, RoundTripPreservesValues) {
  SyntheticSpec spec;
  spec.num_sessions = 2;
  spec.num_tracks = 50;
  const auto data = generate_synthetic(spec);
  const auto path = temp_file("features_rt.csv");
  write_features(path, data.features);
  const auto table = load_features(path).table;
  ASSERT_EQ(table.size(), data.features.size());
  for (const auto& track : data.features.tracks()) {
    EXPECT_EQ(table.at(track.track_id).features, track.features);
  }
}

TEST(Split, SizesForTenSessions) {
  std::vector<SessionRecord> sessions(10);
  for (int i = 0; i < 10; ++i) sessions[i].session_id = "s" + std::to_string(i);
  const auto split = split_sessions(sessions, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(split.train.size(), 8u);
  EXPECT_EQ(split.validation.size(), 1u);
  EXPECT_EQ(split.test.size(), 1u);
}

TEST(Split, DisjointCoverAndDeterministic) {
  std::vector<SessionRecord> sessions(137);
  for (int i = 0; i < 137; ++i) sessions[i].session_id = "s" + std::to_string(i);
  const auto a = split_sessions(sessions, {0.7, 0.2, 0.1}, 5);
  const auto b = split_sessions(sessions, {0.7, 0.2, 0.1}, 5);
  std::set<std::string> seen;
  for (const auto* part : {&a.train, &a.validation, &a.test}) {
    for (const auto& s : *part) EXPECT_TRUE(seen.insert(s.session_id).second);
  }
  EXPECT_EQ(seen.size(), 137u);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].session_id, b.train[i].session_id);
  const auto c = split_sessions(sessions, {0.7, 0.2, 0.1}, 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) differs |= a.train[i].session_id != c.train[i].session_id;
  EXPECT_TRUE(differs);
}

TEST(Split, Errors) {
  std::vector<SessionRecord> two(2);
  EXPECT_EQ(code_of([&] { split_sessions(two, {0.8, 0.1, 0.1}, 0); }), ErrorCode::kInvalidArgument);
  std::vector<SessionRecord> ten(10);
  EXPECT_EQ(code_of([&] { split_sessions(ten, {0.8, 0.3, 0.1}, 0); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { split_sessions(ten, {1.0, 0.0, 0.0}, 0); }), ErrorCode::kInvalidArgument);
}

TEST(Manifest, RoundTripAndChecksums) {
  const auto sessions = write_text("m_sessions.csv", std::string(kHeader) + "a,1,1,t,false,false,false,true\n");
  const auto features = write_text("m_features.csv", "track_id,a\nt,1\n");
  DatasetManifest m;
  m.sessions_path = sessions;
  m.features_path = features;
  m.feature_dim = 1;
  m.session_count = 1;
  m.track_count = 1;
  m.interaction_count = 1;
  m.split_seed = 77;
  m.sessions_checksum = checksum_hex(fnv1a_file(sessions));
  m.features_checksum = checksum_hex(fnv1a_file(features));
  const auto path = temp_file("manifest.json");
  write_manifest(path, m);
  const DatasetManifest loaded = read_manifest(path);
  EXPECT_EQ(loaded.to_json(), m.to_json());
  EXPECT_NO_THROW(verify_checksums(loaded));
  std::ofstream(features, std::ios::app) << "u,2\n";
  EXPECT_EQ(code_of([&] { verify_checksums(loaded); }), ErrorCode::kCorrupt);
}

TEST(Fnv1a, KnownVector) {
  // FNV-1a 64 of "a" is 0xaf63dc4c8601ec8c.
  const auto path = write_text("fnv.txt", "a");
  EXPECT_EQ(fnv1a_file(path), 0xaf63dc4c8601ec8cULL);
}

// Pooled lag-1 correlation of residuals z_t - sigmoid(base logit), which
// removes between-session rate differences so only sequential dependence
// remains.
double residual_lag1_correlation(const SyntheticDataset& data) {
  std::vector<double> a, b;
  for (std::size_t s = 0; s < data.sessions.size(); ++s) {
    std::vector<double> residual;
    for (const auto& item : data.sessions[s].items) {
      const double base = 1.0 / (1.0 + std::exp(-data.truth.base_logit(
                                               s, data.features.at(item.track_id).features)));
      residual.push_back((item.completed ? 1.0 : 0.0) - base);
    }
    for (std::size_t t = 1; t < residual.size(); ++t) {
      a.push_back(residual[t - 1]);
      b.push_back(residual[t]);
    }
  }
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(Synthetic, NoAutocorrelationWithoutRho) {
  SyntheticSpec spec;
  spec.num_sessions = 10000;
  spec.rho = 0.0;
  spec.seed = 101;
  EXPECT_LT(std::abs(residual_lag1_correlation(generate_synthetic(spec))), 0.05);
}

TEST(Synthetic, StrongAutocorrelationWithRho) {
  SyntheticSpec spec;
  spec.num_sessions = 2000;
  spec.rho = 0.8;
  spec.seed = 102;
  EXPECT_GT(residual_lag1_correlation(generate_synthetic(spec)), 0.2);
}

TEST(Synthetic, SameSeedIsByteIdentical) {
  SyntheticSpec spec;
  spec.num_sessions = 100;
  spec.seed = 7;
  write_sessions(temp_file("syn_a.csv"), generate_synthetic(spec).sessions);
  write_sessions(temp_file("syn_b.csv"), generate_synthetic(spec).sessions);
  write_features(temp_file("syn_fa.csv"), generate_synthetic(spec).features);
  write_features(temp_file("syn_fb.csv"), generate_synthetic(spec).features);
  EXPECT_EQ(read_bytes(temp_file("syn_a.csv")), read_bytes(temp_file("syn_b.csv")));
  EXPECT_EQ(read_bytes(temp_file("syn_fa.csv")), read_bytes(temp_file("syn_fb.csv")));
}

TEST(Synthetic, TruthReproducesEmpiricalRates) {
  SyntheticSpec spec;
  spec.num_sessions = 3000;
  spec.rho = 0.5;
  spec.seed = 11;
  const auto data = generate_synthetic(spec);
  // Recompute each logged probability from the returned function and check
  // that completions match its mean within a binomial 4-sigma band.
  double expected = 0.0, variance = 0.0, observed = 0.0;
  for (std::size_t s = 0; s < data.sessions.size(); ++s) {
    double previous = 0.0;
    for (std::size_t i = 0; i < data.sessions[s].items.size(); ++i) {
      const auto& item = data.sessions[s].items[i];
      const double p =
          data.truth.p_complete(s, data.features.at(item.track_id).features, previous);
      EXPECT_NEAR(p, data.true_probability[s][i], 1e-15);
      expected += p;
      variance += p * (1.0 - p);
      observed += item.completed ? 1.0 : 0.0;
      previous = item.completed ? 1.0 : -1.0;
    }
  }
  EXPECT_LT(std::abs(observed - expected), 4.0 * std::sqrt(variance));
}

TEST(Synthetic, SpecValidation) {
  SyntheticSpec spec;
  spec.rho = 1.0;
  EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::kInvalidArgument);
  spec.rho = 0.0;
  spec.session_length = 5;
  EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace plrl
