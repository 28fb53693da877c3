#include "plrl/domain.h"

#include "plrl/error.h"

namespace plrl {

std::string_view head_name(ResponseHead head) {
  switch (head) {
    case ResponseHead::kComplete: return "complete";
    case ResponseHead::kSkip: return "skip";
    case ResponseHead::kListenTau: return "listen_tau";
  }
  return "complete";
}

ResponseHead head_from_name(std::string_view name) {
  if (name == "complete") return ResponseHead::kComplete;
  if (name == "skip") return ResponseHead::kSkip;
  if (name == "listen_tau") return ResponseHead::kListenTau;
  fail(ErrorCode::kInvalidArgument, "unknown response head '" + std::string(name) + "'");
}

ResponseLabels derive_labels(const InteractionRecord& record) {
  ResponseLabels labels;
  labels.complete = record.completed;
  labels.skip = !record.completed && (record.skip_1 || record.skip_2 || record.skip_3);
  labels.listen_tau = !record.skip_1;
  return labels;
}

double UserResponseProbs::head(ResponseHead h) const {
  switch (h) {
    case ResponseHead::kComplete: return p_complete;
    case ResponseHead::kSkip: return p_skip;
    case ResponseHead::kListenTau: return p_listen_tau;
  }
  return p_complete;
}

UserResponseProbs UserResponseProbs::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  require(v.size() == 3, ErrorCode::kDimensionMismatch, "response vector must have 3 entries");
  return {v(0), v(1), v(2)};
}

void FeatureTable::insert(TrackFeatures track) {
  if (column_names_.empty() && tracks_.empty()) {
    for (Eigen::Index i = 0; i < track.features.size(); ++i) {
      column_names_.push_back("f" + std::to_string(i));
    }
  }
  require(static_cast<std::size_t>(track.features.size()) == dim(), ErrorCode::kDimensionMismatch,
          "track '" + track.track_id + "' has " + std::to_string(track.features.size()) +
              " features, table expects " + std::to_string(dim()));
  require(all_finite(track.features), ErrorCode::kInvalidArgument,
          "track '" + track.track_id + "' has non-finite features");
  require(!index_.contains(track.track_id), ErrorCode::kInvalidArgument,
          "duplicate track_id '" + track.track_id + "'");
  index_.emplace(track.track_id, tracks_.size());
  tracks_.push_back(std::move(track));
}

const TrackFeatures* FeatureTable::find(std::string_view track_id) const {
  auto it = index_.find(std::string(track_id));
  return it == index_.end() ? nullptr : &tracks_[it->second];
}

const TrackFeatures& FeatureTable::at(std::string_view track_id) const {
  const TrackFeatures* track = find(track_id);
  if (track == nullptr) fail(ErrorCode::kNotFound, "unknown track_id '" + std::string(track_id) + "'");
  return *track;
}

Eigen::VectorXd mean_feature_vector(std::span<const TrackFeatures> tracks) {
  require(!tracks.empty(), ErrorCode::kInvalidArgument, "mean_feature_vector: empty track list");
  const Eigen::Index dim = tracks.front().features.size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  for (const TrackFeatures& track : tracks) {
    require(track.features.size() == dim, ErrorCode::kDimensionMismatch,
            "mean_feature_vector: mixed feature dimensions");
    sum += track.features;
  }
  return sum / static_cast<double>(tracks.size());
}

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& values) {
  return values.allFinite();
}

}  // namespace plrl
