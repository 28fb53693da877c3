#ifndef PLRL_DOMAIN_H_
#define PLRL_DOMAIN_H_

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace plrl {

using ContextVector = Eigen::VectorXd;

struct TrackFeatures {
  std::string track_id;
  Eigen::VectorXd features;
};

// Raw interaction row. Flags are kept exactly as logged; consistency is
// imposed only on the derived labels.
struct InteractionRecord {
  std::string track_id;
  int position = 0;  // 1-based
  bool skip_1 = false;
  bool skip_2 = false;
  bool skip_3 = false;
  bool completed = false;
};

struct SessionRecord {
  std::string session_id;
  std::vector<InteractionRecord> items;

  std::size_t size() const { return items.size(); }
};

enum class ResponseHead { kComplete = 0, kSkip = 1, kListenTau = 2 };
inline constexpr std::size_t kNumHeads = 3;

std::string_view head_name(ResponseHead head);
ResponseHead head_from_name(std::string_view name);

struct ResponseLabels {
  bool complete = false;
  bool skip = false;
  bool listen_tau = false;

  std::array<double, kNumHeads> as_array() const {
    return {complete ? 1.0 : 0.0, skip ? 1.0 : 0.0, listen_tau ? 1.0 : 0.0};
  }
};

// complete = completed; skip = (r1 | r2 | r3) & !completed; listen_tau = !r1.
ResponseLabels derive_labels(const InteractionRecord& record);

struct UserResponseProbs {
  double p_complete = 0.0;
  double p_skip = 0.0;
  double p_listen_tau = 0.0;

  double head(ResponseHead h) const;
  Eigen::Vector3d as_vector() const { return {p_complete, p_skip, p_listen_tau}; }
  static UserResponseProbs from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);
};

// Track-feature table keyed by track id. Insertion order is preserved so
// iteration and serialization are deterministic.
class FeatureTable {
 public:
  FeatureTable() = default;
  explicit FeatureTable(std::vector<std::string> column_names)
      : column_names_(std::move(column_names)) {}

  // Throws kInvalidArgument on duplicate id, wrong dimension or non-finite values.
  void insert(TrackFeatures track);

  const TrackFeatures* find(std::string_view track_id) const;
  // Throws kNotFound.
  const TrackFeatures& at(std::string_view track_id) const;
  bool contains(std::string_view track_id) const { return find(track_id) != nullptr; }

  std::size_t dim() const { return column_names_.size(); }
  std::size_t size() const { return tracks_.size(); }
  const std::vector<std::string>& column_names() const { return column_names_; }
  const std::vector<TrackFeatures>& tracks() const { return tracks_; }

 private:
  std::vector<std::string> column_names_;
  std::vector<TrackFeatures> tracks_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Element-wise mean. Throws kInvalidArgument on an empty list or mixed F.
Eigen::VectorXd mean_feature_vector(std::span<const TrackFeatures> tracks);

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& values);

}  // namespace plrl

#endif  // PLRL_DOMAIN_H_
