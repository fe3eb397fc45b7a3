#include "crowdmac/simdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "crowdmac/errors.hpp"
#include "crowdmac/random.hpp"

namespace crowdmac {

namespace {

bool record_less(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  return a.frame_id != b.frame_id ? a.frame_id < b.frame_id : a.agent_id < b.agent_id;
}

struct Agent {
  std::int64_t id;
  double x, y, heading, speed;
};

// Mirror a coordinate back into [0, extent).
double reflect(double v, double extent, bool& flipped) {
  flipped = false;
  for (int i = 0; i < 4 && (v < 0.0 || v >= extent); ++i) {
    v = v < 0.0 ? -v : 2.0 * extent - v;
    flipped = !flipped;
  }
  if (v >= extent) v = std::nextafter(extent, 0.0);
  if (v < 0.0) v = 0.0;
  return v;
}

int poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  int k = 0;
  double p = uniform01(rng);
  while (p > limit) {
    ++k;
    p *= uniform01(rng);
  }
  return k;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_field(std::string_view field, std::size_t line, const char* name) {
  field = trim(field);
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ParseError(line, std::string("malformed ") + name + " '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

TrajectoryDataset::TrajectoryDataset(std::vector<TrajectoryRecord> records, double frame_interval)
    : records_(std::move(records)), frame_interval_(frame_interval) {
  std::sort(records_.begin(), records_.end(), record_less);
  for (std::size_t i = 1; i < records_.size(); ++i) {
    if (records_[i].frame_id == records_[i - 1].frame_id &&
        records_[i].agent_id == records_[i - 1].agent_id) {
      throw IntegrityError("duplicate record for frame " + std::to_string(records_[i].frame_id) +
                           ", agent " + std::to_string(records_[i].agent_id));
    }
  }
}

std::span<const TrajectoryRecord> TrajectoryDataset::frame(std::int64_t frame_id) const {
  const auto lo = std::lower_bound(records_.begin(), records_.end(), frame_id,
                                   [](const TrajectoryRecord& r, std::int64_t f) { return r.frame_id < f; });
  const auto hi = std::upper_bound(lo, records_.end(), frame_id,
                                   [](std::int64_t f, const TrajectoryRecord& r) { return f < r.frame_id; });
  return {lo, hi};
}

std::optional<FrameRange> TrajectoryDataset::frame_range() const {
  if (range_) return range_;
  if (records_.empty()) return std::nullopt;
  return FrameRange{records_.front().frame_id, records_.back().frame_id};
}

void SimConfig::validate() const {
  if (width <= 0 || height <= 0) throw ParameterError("sim: scene size must be positive");
  if (n_agents < 0) throw ParameterError("sim: n_agents must be >= 0");
  if (frames <= 0) throw ParameterError("sim: frames must be positive");
  if (speed_mean < 0.0 || speed_std < 0.0) throw ParameterError("sim: speeds must be >= 0");
  if (turn_std < 0.0) throw ParameterError("sim: turn_std must be >= 0");
  if (spawn_rate < 0.0) throw ParameterError("sim: spawn_rate must be >= 0");
  if (frame_interval <= 0.0) throw ParameterError("sim: frame_interval must be positive");
}

TrajectoryDataset simulate_crowd(const SimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const double w = cfg.width;
  const double h = cfg.height;
  const auto draw_speed = [&] { return std::max(0.0, cfg.speed_mean + cfg.speed_std * standard_normal(rng)); };

  std::vector<Agent> agents;
  std::int64_t next_id = 0;
  for (int i = 0; i < cfg.n_agents; ++i) {
    Agent a{next_id++, uniform01(rng) * w, uniform01(rng) * h, 0.0, 0.0};
    a.heading = uniform01(rng) * 2.0 * std::numbers::pi;
    a.speed = draw_speed();
    agents.push_back(a);
  }

  std::vector<TrajectoryRecord> records;
  for (int f = 0; f < cfg.frames; ++f) {
    for (const Agent& a : agents) records.push_back({f, a.id, a.x, a.y});

    std::vector<Agent> alive;
    alive.reserve(agents.size());
    for (Agent a : agents) {
      a.heading += cfg.turn_std * standard_normal(rng);
      a.x += a.speed * std::cos(a.heading);
      a.y += a.speed * std::sin(a.heading);
      const bool outside = a.x < 0.0 || a.x >= w || a.y < 0.0 || a.y >= h;
      if (outside && cfg.despawn) continue;
      if (outside) {
        bool flip_x = false;
        bool flip_y = false;
        a.x = reflect(a.x, w, flip_x);
        a.y = reflect(a.y, h, flip_y);
        if (flip_x) a.heading = std::numbers::pi - a.heading;
        if (flip_y) a.heading = -a.heading;
      }
      alive.push_back(a);
    }
    agents = std::move(alive);

    const int spawned = poisson(rng, cfg.spawn_rate);
    for (int k = 0; k < spawned; ++k) {
      const auto edge = uniform_index(rng, 4);
      const double along = uniform01(rng);
      const double spread = (uniform01(rng) - 0.5) * (2.0 * std::numbers::pi / 3.0);
      Agent a{next_id++, 0.0, 0.0, 0.0, draw_speed()};
      switch (edge) {
        case 0: a.x = 0.0; a.y = along * h; a.heading = 0.0; break;
        case 1: a.x = std::nextafter(w, 0.0); a.y = along * h; a.heading = std::numbers::pi; break;
        case 2: a.x = along * w; a.y = 0.0; a.heading = 0.5 * std::numbers::pi; break;
        default: a.x = along * w; a.y = std::nextafter(h, 0.0); a.heading = -0.5 * std::numbers::pi; break;
      }
      a.heading += spread;
      agents.push_back(a);
    }
  }

  TrajectoryDataset out(std::move(records), cfg.frame_interval);
  out.set_frame_range({0, cfg.frames - 1});
  return out;
}

TrajectoryDataset load_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file " + path.string());

  std::vector<TrajectoryRecord> records;
  std::optional<FrameRange> range;
  double interval = 0.4;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      std::istringstream meta{std::string(view.substr(1))};
      std::string key;
      meta >> key;
      if (key == "frame_range") {
        FrameRange r;
        if (meta >> r.first >> r.last) range = r;
      } else if (key == "frame_interval") {
        double v = 0.0;
        if (meta >> v && v > 0.0) interval = v;
      }
      continue;
    }
    std::string_view fields[4];
    std::string_view rest = view;
    for (int i = 0; i < 4; ++i) {
      const auto comma = rest.find(',');
      if (i < 3 && comma == std::string_view::npos) throw ParseError(line_no, "expected 4 comma-separated fields");
      if (i == 3 && comma != std::string_view::npos) throw ParseError(line_no, "expected 4 comma-separated fields");
      fields[i] = rest.substr(0, comma);
      if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
    }
    TrajectoryRecord r;
    r.frame_id = parse_field<std::int64_t>(fields[0], line_no, "frame_id");
    r.agent_id = parse_field<std::int64_t>(fields[1], line_no, "agent_id");
    r.x = parse_field<double>(fields[2], line_no, "x");
    r.y = parse_field<double>(fields[3], line_no, "y");
    if (!std::isfinite(r.x) || !std::isfinite(r.y)) throw ParseError(line_no, "non-finite coordinate");
    records.push_back(r);
  }
  TrajectoryDataset out(std::move(records), interval);
  if (range) out.set_frame_range(*range);
  return out;
}

void save_trajectories(const TrajectoryDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write trajectory file " + path.string());
  char buf[128];
  out << "# frame_id,agent_id,x,y\n";
  std::snprintf(buf, sizeof buf, "# frame_interval %.17g\n", dataset.frame_interval());
  out << buf;
  if (dataset.has_explicit_frame_range()) {
    const FrameRange r = *dataset.frame_range();
    out << "# frame_range " << r.first << ' ' << r.last << '\n';
  }
  for (const TrajectoryRecord& r : dataset.records()) {
    std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%.17g\n", static_cast<long long>(r.frame_id),
                  static_cast<long long>(r.agent_id), r.x, r.y);
    out << buf;
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<TrajectoryWindow> window_split(const TrajectoryDataset& dataset, int obs_frames,
                                           int pred_frames, int stride) {
  if (obs_frames < 1 || pred_frames < 1) throw ParameterError("window_split: horizons must be >= 1");
  if (stride < 1) throw ParameterError("window_split: stride must be >= 1");
  std::vector<TrajectoryWindow> windows;
  const auto range = dataset.frame_range();
  if (!range) return windows;
  const std::int64_t length = obs_frames + pred_frames;
  const auto& records = dataset.records();
  for (std::int64_t start = range->first; start + length - 1 <= range->last; start += stride) {
    const auto lo = std::lower_bound(records.begin(), records.end(), start,
                                     [](const TrajectoryRecord& r, std::int64_t f) { return r.frame_id < f; });
    const auto hi = std::lower_bound(lo, records.end(), start + length,
                                     [](const TrajectoryRecord& r, std::int64_t f) { return r.frame_id < f; });
    TrajectoryWindow w;
    w.start_frame = start;
    w.obs_frames = obs_frames;
    w.pred_frames = pred_frames;
    w.data = TrajectoryDataset(std::vector<TrajectoryRecord>(lo, hi), dataset.frame_interval());
    w.data.set_frame_range(w.full_range());
    windows.push_back(std::move(w));
  }
  return windows;
}

void CorruptionSpec::validate() const {
  if (!(miss_ratio >= 0.0 && miss_ratio <= 1.0)) throw ParameterError("miss_ratio must lie in [0, 1]");
}

TrajectoryDataset corrupt_missdetect(const TrajectoryDataset& dataset, const CorruptionSpec& spec,
                                     FrameRange scope) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<TrajectoryRecord> kept;
  kept.reserve(dataset.size());

  if (spec.whole_track) {
    std::set<std::int64_t> agents;
    for (const auto& r : dataset.records()) {
      if (scope.contains(r.frame_id)) agents.insert(r.agent_id);
    }
    std::set<std::int64_t> dropped;
    for (const std::int64_t id : agents) {
      if (uniform01(rng) < spec.miss_ratio) dropped.insert(id);
    }
    for (const auto& r : dataset.records()) {
      if (!(scope.contains(r.frame_id) && dropped.contains(r.agent_id))) kept.push_back(r);
    }
  } else {
    for (const auto& r : dataset.records()) {
      if (scope.contains(r.frame_id) && uniform01(rng) < spec.miss_ratio) continue;
      kept.push_back(r);
    }
  }

  TrajectoryDataset out(std::move(kept), dataset.frame_interval());
  if (dataset.has_explicit_frame_range()) out.set_frame_range(*dataset.frame_range());
  return out;
}

TrajectoryWindow corrupt_missdetect(const TrajectoryWindow& window, const CorruptionSpec& spec) {
  TrajectoryWindow out = window;
  out.data = corrupt_missdetect(window.data, spec, window.observation_range());
  out.data.set_frame_range(window.full_range());
  return out;
}

}  // namespace crowdmac
