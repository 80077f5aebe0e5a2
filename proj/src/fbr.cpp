#include "retreg/fbr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "retreg/error.hpp"

namespace retreg {

void MatchConstraints::validate() const {
  if (!(s_min > 0.0) || !(s_max >= s_min)) throw InvalidArgument("scale bounds must satisfy 0 < s_min <= s_max");
  if (!(angle_tolerance > 0.0) || !(inlier_radius > 0.0))
    throw InvalidArgument("match tolerances must be positive");
}

Similarity4 similarity_from_two_pairs(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const Vec2 dp = p2 - p1, dq = q2 - q1;
  const double lp = norm(dp), lq = norm(dq);
  if (!(lp > 1e-6) || !(lq > 1e-6)) throw InvalidArgument("coincident points in a matching pair");
  Similarity4 s;
  s.scale = lq / lp;
  s.angle = wrap_signed(angle_of(dq) - angle_of(dp));
  const Vec2 r = Similarity4{s.scale, s.angle, 0.0, 0.0}.apply(p1);
  s.tx = q1.x - r.x;
  s.ty = q1.y - r.y;
  return s;
}

Similarity4 fit_similarity(const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
  if (from.size() != to.size() || from.size() < 2) throw InvalidArgument("fit_similarity needs >= 2 pairs");
  Vec2 mp{}, mq{};
  for (std::size_t i = 0; i < from.size(); ++i) {
    mp += from[i];
    mq += to[i];
  }
  mp = mp / static_cast<double>(from.size());
  mq = mq / static_cast<double>(to.size());
  double a = 0.0, b = 0.0, var = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const Vec2 p = from[i] - mp, q = to[i] - mq;
    a += dot(p, q);
    b += cross(p, q);
    var += dot(p, p);
  }
  if (!(var > 1e-12)) throw InvalidArgument("fit_similarity: source points coincide");
  Similarity4 s;
  s.angle = std::atan2(b, a);
  s.scale = std::hypot(a, b) / var;
  const Vec2 r = Similarity4{s.scale, s.angle, 0.0, 0.0}.apply(mp);
  s.tx = mq.x - r.x;
  s.ty = mq.y - r.y;
  return s;
}

namespace {

// Uniform bucket grid over moving landmark positions for radius queries.
class PointGrid {
 public:
  PointGrid(const std::vector<Vec2>& pts, double cell) : pts_(pts), cell_(cell) {
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
    for (Vec2 p : pts) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    ox_ = x0;
    oy_ = y0;
    nx_ = static_cast<int>((x1 - x0) / cell) + 1;
    ny_ = static_cast<int>((y1 - y0) / cell) + 1;
    buckets_.resize(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_));
    for (std::size_t i = 0; i < pts.size(); ++i) buckets_[bucket(cx(pts[i].x), cy(pts[i].y))].push_back(i);
  }

  template <typename F>
  void near(Vec2 q, double radius, F&& visit) const {
    const int bx0 = std::max(0, cx(q.x - radius)), bx1 = std::min(nx_ - 1, cx(q.x + radius));
    const int by0 = std::max(0, cy(q.y - radius)), by1 = std::min(ny_ - 1, cy(q.y + radius));
    for (int by = by0; by <= by1; ++by)
      for (int bx = bx0; bx <= bx1; ++bx)
        for (std::size_t i : buckets_[bucket(bx, by)]) {
          const double d = distance(q, pts_[i]);
          if (d <= radius) visit(i, d);
        }
  }

 private:
  int cx(double x) const { return static_cast<int>(std::floor((x - ox_) / cell_)); }
  int cy(double y) const { return static_cast<int>(std::floor((y - oy_) / cell_)); }
  std::size_t bucket(int bx, int by) const {
    return static_cast<std::size_t>(by) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(bx);
  }

  const std::vector<Vec2>& pts_;
  double cell_;
  double ox_ = 0.0, oy_ = 0.0;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double mean_residual = 0.0;
};

struct Link {
  double d;
  std::size_t a, b;
};

// Greedy one-to-one nearest assignment of transformed fixed points to moving
// points within the inlier radius.
Assignment assign(const Similarity4& t, const std::vector<Vec2>& fixed, const PointGrid& grid,
                  std::size_t n_moving, double radius, std::vector<Link>& scratch) {
  scratch.clear();
  for (std::size_t a = 0; a < fixed.size(); ++a) {
    const Vec2 q = t.apply(fixed[a]);
    grid.near(q, radius, [&](std::size_t b, double d) { scratch.push_back({d, a, b}); });
  }
  std::sort(scratch.begin(), scratch.end(), [](const Link& l, const Link& r) {
    if (l.d != r.d) return l.d < r.d;
    if (l.a != r.a) return l.a < r.a;
    return l.b < r.b;
  });
  std::vector<bool> used_a(fixed.size(), false), used_b(n_moving, false);
  Assignment out;
  double sum = 0.0;
  for (const Link& l : scratch) {
    if (used_a[l.a] || used_b[l.b]) continue;
    used_a[l.a] = used_b[l.b] = true;
    out.pairs.emplace_back(l.a, l.b);
    sum += l.d;
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  out.mean_residual = out.pairs.empty() ? 0.0 : sum / static_cast<double>(out.pairs.size());
  return out;
}

// Number of orientations of `f`, rotated by angle, that agree with some
// orientation of `m`.
int agreeing(const Landmark& f, const Landmark& m, double angle, double tol) {
  int n = 0;
  for (double a : f.orientations) {
    const double r = a + angle;
    for (double b : m.orientations)
      if (angle_diff(r, b) <= tol) {
        ++n;
        break;
      }
  }
  return n;
}

bool better(std::size_t score, double residual, std::size_t best_score, double best_residual) {
  if (score != best_score) return score > best_score;
  return residual < best_residual - 1e-12;
}

}  // namespace

MatchResult match_landmarks(const std::vector<Landmark>& fixed, const std::vector<Landmark>& moving,
                            const MatchConstraints& c) {
  c.validate();
  if (fixed.size() < 2 || moving.size() < 2) throw MatchFailure("need at least two landmarks in each image");

  std::vector<Vec2> fp, mp;
  for (const auto& l : fixed) fp.push_back(l.position);
  for (const auto& l : moving) mp.push_back(l.position);
  const PointGrid grid(mp, c.inlier_radius);
  std::vector<Link> scratch;

  MatchStats stats;
  bool found = false;
  std::size_t best_score = 0;
  double best_residual = std::numeric_limits<double>::infinity();
  Similarity4 best_t;
  Assignment best_assign;

  const std::size_t nf = fp.size(), nm = mp.size();
  for (std::size_t i = 0; i < nf; ++i) {
    for (std::size_t j = i + 1; j < nf; ++j) {
      const Vec2 dp = fp[j] - fp[i];
      const double lp = norm(dp);
      for (std::size_t k = 0; k < nm; ++k) {
        for (std::size_t l = 0; l < nm; ++l) {
          if (k == l) continue;
          ++stats.enumerated;
          if (!(lp > 1e-6)) {
            ++stats.scale_pruned;
            continue;
          }
          const Vec2 dq = mp[l] - mp[k];
          const double s = norm(dq) / lp;
          if (s < c.s_min || s > c.s_max) {
            ++stats.scale_pruned;
            continue;
          }
          const double angle = angle_of(dq) - angle_of(dp);
          const int total = static_cast<int>(fixed[i].orientations.size() + fixed[j].orientations.size());
          const int agree = agreeing(fixed[i], moving[k], angle, c.angle_tolerance) +
                            agreeing(fixed[j], moving[l], angle, c.angle_tolerance);
          if (2 * agree < total) {
            ++stats.orientation_pruned;
            continue;
          }
          ++stats.scored;
          const Similarity4 t = similarity_from_two_pairs(fp[i], fp[j], mp[k], mp[l]);
          Assignment a = assign(t, fp, grid, nm, c.inlier_radius, scratch);
          if (!found || better(a.pairs.size(), a.mean_residual, best_score, best_residual)) {
            found = true;
            best_score = a.pairs.size();
            best_residual = a.mean_residual;
            best_t = t;
            best_assign = std::move(a);
          }
        }
      }
    }
  }
  if (!found || best_score < 2) throw MatchFailure("no landmark hypothesis reached two inliers");

  // Least-squares refinement over the inlier set, re-assigning until stable.
  Similarity4 t = best_t;
  Assignment cur = best_assign;
  for (int iter = 0; iter < 10; ++iter) {
    std::vector<Vec2> from, to;
    for (auto [a, b] : cur.pairs) {
      from.push_back(fp[a]);
      to.push_back(mp[b]);
    }
    const Similarity4 refined = fit_similarity(from, to);
    Assignment next = assign(refined, fp, grid, nm, c.inlier_radius, scratch);
    if (next.pairs.size() < cur.pairs.size()) break;
    const bool same = next.pairs == cur.pairs;
    t = refined;
    cur = std::move(next);
    if (same) break;
  }

  // Trimmed refit: near-misses inside the inlier radius pull the fit, so
  // drop pairs well above the median residual.
  for (int iter = 0; iter < 3 && cur.pairs.size() > 3; ++iter) {
    std::vector<double> res;
    for (auto [a, b] : cur.pairs) res.push_back(distance(t.apply(fp[a]), mp[b]));
    std::vector<double> sorted = res;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double cut = std::max(1.5, 2.5 * sorted[sorted.size() / 2]);
    std::vector<Vec2> from, to;
    for (std::size_t n = 0; n < cur.pairs.size(); ++n)
      if (res[n] <= cut) {
        from.push_back(fp[cur.pairs[n].first]);
        to.push_back(mp[cur.pairs[n].second]);
      }
    if (from.size() < 3 || from.size() == cur.pairs.size()) break;
    t = fit_similarity(from, to);
  }
  double sum = 0.0;
  for (auto [a, b] : cur.pairs) sum += distance(t.apply(fp[a]), mp[b]);
  cur.mean_residual = sum / static_cast<double>(cur.pairs.size());

  MatchResult r;
  r.transform = t;
  r.correspondences = cur.pairs;
  r.score = cur.pairs.size();
  r.mean_residual = cur.mean_residual;
  r.stats = stats;
  return r;
}

nlohmann::json to_json(const MatchResult& r) {
  nlohmann::json corr = nlohmann::json::array();
  for (auto [a, b] : r.correspondences) corr.push_back({a, b});
  return {{"transform", to_json(Transform{r.transform})},
          {"score", r.score},
          {"mean_residual", r.mean_residual},
          {"correspondences", corr},
          {"hypotheses",
           {{"enumerated", r.stats.enumerated},
            {"scale_pruned", r.stats.scale_pruned},
            {"orientation_pruned", r.stats.orientation_pruned},
            {"scored", r.stats.scored}}}};
}

}  // namespace retreg
