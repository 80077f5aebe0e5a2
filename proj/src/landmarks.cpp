#include "retreg/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "retreg/error.hpp"

namespace retreg {

std::string_view to_string(LandmarkKind k) {
  return k == LandmarkKind::Bifurcation ? "bifurcation" : "crossover";
}

void LinkConfig::validate() const {
  if (!(max_extension > 0.0) || !(crossover_max_dist > 0.0) || !(crossover_max_angle > 0.0) ||
      !(merge_radius >= 0.0) || direction_window < 2)
    throw InvalidArgument("link configuration values must be positive");
}

std::vector<Landmark> CrossoverResult::all() const {
  std::vector<Landmark> out = bifurcations;
  out.insert(out.end(), crossovers.begin(), crossovers.end());
  return out;
}

namespace {

// Segment owner lookup over the bounding box of all segment pixels.
class OwnerMap {
 public:
  explicit OwnerMap(const std::vector<Segment>& segments) {
    int x0 = std::numeric_limits<int>::max(), y0 = x0;
    int x1 = std::numeric_limits<int>::min(), y1 = x1;
    for (const auto& s : segments)
      for (const Pixel& p : s.points) {
        x0 = std::min(x0, p.x);
        y0 = std::min(y0, p.y);
        x1 = std::max(x1, p.x);
        y1 = std::max(y1, p.y);
      }
    if (x0 > x1) return;
    ox_ = x0;
    oy_ = y0;
    w_ = x1 - x0 + 1;
    h_ = y1 - y0 + 1;
    cells_.assign(static_cast<std::size_t>(w_) * static_cast<std::size_t>(h_), Entry{});
    for (std::size_t s = 0; s < segments.size(); ++s)
      for (std::size_t i = 0; i < segments[s].points.size(); ++i) {
        const Pixel p = segments[s].points[i];
        cells_[cell(p.x, p.y)] = Entry{static_cast<int>(s), static_cast<int>(i)};
      }
  }

  struct Entry {
    int segment = -1;
    int index = -1;
  };

  Entry at(int x, int y) const {
    if (x < ox_ || y < oy_ || x >= ox_ + w_ || y >= oy_ + h_) return {};
    return cells_[cell(x, y)];
  }

 private:
  std::size_t cell(int x, int y) const {
    return static_cast<std::size_t>(y - oy_) * static_cast<std::size_t>(w_) + static_cast<std::size_t>(x - ox_);
  }

  int ox_ = 0, oy_ = 0, w_ = 0, h_ = 0;
  std::vector<Entry> cells_;
};

struct Arm {
  int segment = -1;
  int sense = 0;  // -1 runs towards lower indices, +1 towards higher ones
  Vec2 direction{};
};

struct Candidate {
  Vec2 position{};
  std::vector<Arm> arms;
};

// Direction of the part of `seg` leaving index i with the given sense,
// pointing away from i.
std::optional<Vec2> arm_direction(const Segment& seg, int i, int sense, int window) {
  std::vector<Pixel> pts;
  const int n = static_cast<int>(seg.points.size());
  for (int k = i; k >= 0 && k < n && static_cast<int>(pts.size()) < window; k += sense)
    pts.push_back(seg.points[static_cast<std::size_t>(k)]);
  if (pts.size() < 3) return std::nullopt;
  return -fit_direction(pts);
}

void add_arm(std::vector<Arm>& arms, const Arm& a) {
  for (const Arm& e : arms)
    if (e.segment == a.segment && e.sense == a.sense) return;
  arms.push_back(a);
}

Landmark make_bifurcation(Vec2 pos, const std::vector<Vec2>& dirs) {
  Landmark l;
  l.position = pos;
  l.kind = LandmarkKind::Bifurcation;
  for (Vec2 d : dirs) l.orientations.push_back(wrap_angle(angle_of(d)));
  return l;
}

}  // namespace

std::vector<Landmark> detect_bifurcations(const std::vector<Segment>& segments, const LinkConfig& cfg) {
  cfg.validate();
  const OwnerMap owners(segments);
  std::vector<Candidate> candidates;

  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    if (seg.closed || seg.points.size() < 3) continue;
    for (int end = 0; end < 2; ++end) {
      const Pixel tip = end == 0 ? seg.points.front() : seg.points.back();
      const Vec2 dir = end == 0 ? seg.start_direction : seg.end_direction;
      if (norm(dir) == 0.0) continue;

      std::optional<OwnerMap::Entry> hit;
      Vec2 hit_pos{};
      for (double r = 0.0; r <= cfg.max_extension + 1e-9 && !hit; r += 0.5) {
        const Vec2 probe = tip.vec() + r * dir;
        const int cx = static_cast<int>(std::lround(probe.x));
        const int cy = static_cast<int>(std::lround(probe.y));
        double best = std::numeric_limits<double>::infinity();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const auto e = owners.at(cx + dx, cy + dy);
            if (e.segment < 0 || e.segment == static_cast<int>(s)) continue;
            const Vec2 q{static_cast<double>(cx + dx), static_cast<double>(cy + dy)};
            const double d = distance(q, probe);
            const bool better = d < best - 1e-12 ||
                                (std::abs(d - best) <= 1e-12 && hit &&
                                 std::pair(e.segment, e.index) < std::pair(hit->segment, hit->index));
            if (better) {
              best = d;
              hit = e;
              hit_pos = q;
            }
          }
      }
      if (!hit) continue;

      Candidate c;
      c.position = hit_pos;
      c.arms.push_back(Arm{static_cast<int>(s), end == 0 ? +1 : -1, -dir});
      const Segment& other = segments[static_cast<std::size_t>(hit->segment)];
      for (int sense : {-1, +1})
        if (auto d = arm_direction(other, hit->index, sense, cfg.direction_window))
          add_arm(c.arms, Arm{hit->segment, sense, *d});
      candidates.push_back(std::move(c));
    }
  }

  // Single-linkage clustering of candidates within merge_radius.
  const std::size_t n = candidates.size();
  std::vector<int> cluster(n, -1);
  int clusters = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (cluster[i] >= 0) continue;
    cluster[i] = clusters;
    std::vector<std::size_t> stack{i};
    while (!stack.empty()) {
      const std::size_t c = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j)
        if (cluster[j] < 0 && distance(candidates[c].position, candidates[j].position) <= cfg.merge_radius) {
          cluster[j] = clusters;
          stack.push_back(j);
        }
    }
    ++clusters;
  }

  std::vector<Landmark> out;
  for (int c = 0; c < clusters; ++c) {
    Vec2 pos{};
    int members = 0;
    std::vector<Arm> arms;
    for (std::size_t i = 0; i < n; ++i) {
      if (cluster[i] != c) continue;
      pos += candidates[i].position;
      ++members;
      for (const Arm& a : candidates[i].arms) add_arm(arms, a);
    }
    pos = pos / static_cast<double>(members);
    if (arms.size() < 3) continue;
    if (arms.size() == 3) {
      out.push_back(make_bifurcation(pos, {arms[0].direction, arms[1].direction, arms[2].direction}));
      continue;
    }
    // More than three arms: split into bifurcations sharing the straightest
    // through pair; crossover detection fuses them again.
    std::size_t ta = 0, tb = 1;
    double most_opposite = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < arms.size(); ++a)
      for (std::size_t b = a + 1; b < arms.size(); ++b) {
        const double d = dot(arms[a].direction, arms[b].direction);
        if (d < most_opposite) {
          most_opposite = d;
          ta = a;
          tb = b;
        }
      }
    int emitted = 0;
    for (std::size_t k = 0; k < arms.size() && emitted < members; ++k) {
      if (k == ta || k == tb) continue;
      out.push_back(make_bifurcation(pos, {arms[ta].direction, arms[tb].direction, arms[k].direction}));
      ++emitted;
    }
  }
  return out;
}

ThroughAxis through_axis(const Landmark& bif) {
  ThroughAxis t;
  const auto& o = bif.orientations;
  if (o.size() < 3) throw InvalidArgument("through_axis needs a bifurcation");
  double best = -1.0;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) {
      const double d = angle_diff(o[a], o[b]);
      if (d > best) {
        best = d;
        t.a = a;
        t.b = b;
        t.branch = 3 - a - b;
      }
    }
  // Mean undirected axis of the two through arms.
  const Vec2 u = unit_from_angle(o[t.a]);
  const Vec2 v = -unit_from_angle(o[t.b]);
  double ang = angle_of(u + v);
  if (ang < 0.0) ang += kPi;
  if (ang >= kPi) ang -= kPi;
  t.axis_angle = ang;
  return t;
}

CrossoverResult detect_crossovers(const std::vector<Landmark>& bifs, const LinkConfig& cfg) {
  cfg.validate();
  struct Pair {
    double dist;
    std::size_t a, b;
  };
  std::vector<ThroughAxis> axes;
  axes.reserve(bifs.size());
  for (const auto& b : bifs) {
    if (b.kind != LandmarkKind::Bifurcation || b.orientations.size() != 3)
      throw InvalidArgument("detect_crossovers expects bifurcations");
    axes.push_back(through_axis(b));
  }

  std::vector<Pair> pairs;
  for (std::size_t a = 0; a < bifs.size(); ++a)
    for (std::size_t b = a + 1; b < bifs.size(); ++b) {
      const double d = distance(bifs[a].position, bifs[b].position);
      if (!(d < cfg.crossover_max_dist)) continue;
      if (!(axis_diff(axes[a].axis_angle, axes[b].axis_angle) < cfg.crossover_max_angle)) continue;
      // Branches must leave the shared through vessel on opposite sides.
      const Vec2 axis = unit_from_angle(axes[a].axis_angle);
      const double sa = cross(axis, unit_from_angle(bifs[a].orientations[axes[a].branch]));
      const double sb = cross(axis, unit_from_angle(bifs[b].orientations[axes[b].branch]));
      if (!(sa * sb < 0.0)) continue;
      pairs.push_back({d, a, b});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& l, const Pair& r) { return l.dist < r.dist; });

  std::vector<bool> used(bifs.size(), false);
  CrossoverResult result;
  for (const Pair& p : pairs) {
    if (used[p.a] || used[p.b]) continue;
    used[p.a] = used[p.b] = true;
    const Landmark& la = bifs[p.a];
    const Landmark& lb = bifs[p.b];
    Landmark x;
    x.kind = LandmarkKind::Crossover;
    x.position = 0.5 * (la.position + lb.position);
    x.orientations = {la.orientations[axes[p.a].a], la.orientations[axes[p.a].b],
                      la.orientations[axes[p.a].branch], lb.orientations[axes[p.b].branch]};
    std::sort(x.orientations.begin(), x.orientations.end());
    result.crossovers.push_back(std::move(x));
  }
  for (std::size_t i = 0; i < bifs.size(); ++i)
    if (!used[i]) result.bifurcations.push_back(bifs[i]);
  return result;
}

LandmarkDetection detect_landmarks(const Image& img, Polarity polarity, const CreaseConfig& crease,
                                   const LinkConfig& link) {
  LandmarkDetection d;
  d.creaseness = creaseness(img, polarity, crease);
  d.skeleton = extract_skeleton(d.creaseness, crease.threshold, crease.min_segment_length, crease.max_gap);
  d.segments = trace_segments(d.skeleton, crease.end_window);
  d.landmarks = detect_crossovers(detect_bifurcations(d.segments, link), link).all();
  return d;
}

nlohmann::json to_json(const std::vector<Landmark>& landmarks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : landmarks)
    arr.push_back({{"kind", std::string(to_string(l.kind))},
                   {"x", l.position.x},
                   {"y", l.position.y},
                   {"orientations", l.orientations}});
  return arr;
}

std::vector<Landmark> landmarks_from_json(const nlohmann::json& j) {
  std::vector<Landmark> out;
  try {
    for (const auto& e : j) {
      Landmark l;
      const auto kind = e.at("kind").get<std::string>();
      if (kind == "bifurcation")
        l.kind = LandmarkKind::Bifurcation;
      else if (kind == "crossover")
        l.kind = LandmarkKind::Crossover;
      else
        throw InvalidArgument("unknown landmark kind '" + kind + "'");
      l.position = {e.at("x").get<double>(), e.at("y").get<double>()};
      l.orientations = e.at("orientations").get<std::vector<double>>();
      out.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed landmark JSON: ") + e.what());
  }
  return out;
}

}  // namespace retreg
