#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace crowdmac {

struct TrajectoryRecord {
  std::int64_t frame_id = 0;
  std::int64_t agent_id = 0;
  double x = 0.0;  // column, pixels
  double y = 0.0;  // row, pixels

  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

// Inclusive range of frame ids.
struct FrameRange {
  std::int64_t first = 0;
  std::int64_t last = -1;

  std::int64_t count() const { return last >= first ? last - first + 1 : 0; }
  bool contains(std::int64_t frame) const { return frame >= first && frame <= last; }
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

// Time-stamped agent positions, kept sorted by (frame_id, agent_id). At most one record
// per (frame_id, agent_id).
class TrajectoryDataset {
 public:
  TrajectoryDataset() = default;
  // Sorts the records; throws IntegrityError on a duplicate (frame_id, agent_id).
  explicit TrajectoryDataset(std::vector<TrajectoryRecord> records, double frame_interval = 0.4);

  const std::vector<TrajectoryRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  double frame_interval() const { return frame_interval_; }

  // Records observed at one frame (possibly empty).
  std::span<const TrajectoryRecord> frame(std::int64_t frame_id) const;

  // Explicit frame span if one was set, else the span covered by the records.
  std::optional<FrameRange> frame_range() const;
  void set_frame_range(FrameRange range) { range_ = range; }
  bool has_explicit_frame_range() const { return range_.has_value(); }

  friend bool operator==(const TrajectoryDataset&, const TrajectoryDataset&) = default;

 private:
  std::vector<TrajectoryRecord> records_;
  double frame_interval_ = 0.4;
  std::optional<FrameRange> range_;
};

// T consecutive frames [start_frame, start_frame + obs_frames + pred_frames).
struct TrajectoryWindow {
  std::int64_t start_frame = 0;
  int obs_frames = 8;
  int pred_frames = 12;
  TrajectoryDataset data;

  int length() const { return obs_frames + pred_frames; }
  FrameRange observation_range() const { return {start_frame, start_frame + obs_frames - 1}; }
  FrameRange full_range() const { return {start_frame, start_frame + length() - 1}; }
};

struct SimConfig {
  int width = 80;
  int height = 80;
  int n_agents = 8;
  int frames = 400;
  double speed_mean = 1.0;  // px per frame
  double speed_std = 0.25;
  double turn_std = 0.05;   // radians per frame
  double spawn_rate = 0.1;  // expected new agents per frame
  bool despawn = true;      // leave the scene at the boundary; reflect otherwise
  double frame_interval = 0.4;
  std::uint64_t seed = 0;

  void validate() const;
};

// Noisy constant-velocity agents; deterministic in cfg.seed.
TrajectoryDataset simulate_crowd(const SimConfig& cfg);

// Flat text records `frame_id,agent_id,x,y`; `#` comment lines and blank lines are ignored.
TrajectoryDataset load_trajectories(const std::filesystem::path& path);
void save_trajectories(const TrajectoryDataset& dataset, const std::filesystem::path& path);

// Sliding windows of obs_frames + pred_frames consecutive frame ids. No completeness
// filter: agents may enter or leave mid-window.
std::vector<TrajectoryWindow> window_split(const TrajectoryDataset& dataset, int obs_frames,
                                           int pred_frames, int stride);

struct CorruptionSpec {
  double miss_ratio = 0.0;
  std::uint64_t seed = 0;
  // Drop an agent from every in-scope frame instead of from individual frames.
  bool whole_track = false;

  void validate() const;
};

// Removes in-scope records independently with probability miss_ratio. Records outside
// `scope` are never touched; surviving records are unchanged.
TrajectoryDataset corrupt_missdetect(const TrajectoryDataset& dataset, const CorruptionSpec& spec,
                                     FrameRange scope);

// Corrupts the observation frames of a window; future frames stay clean for scoring.
TrajectoryWindow corrupt_missdetect(const TrajectoryWindow& window, const CorruptionSpec& spec);

}  // namespace crowdmac
