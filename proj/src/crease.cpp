#include "retreg/crease.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>

#include "retreg/error.hpp"

namespace retreg {

namespace {

// Ring order E, NE, N, NW, W, SW, S, SE (image y grows downwards).
constexpr std::array<int, 8> kRingDx{1, 1, 0, -1, -1, -1, 0, 1};
constexpr std::array<int, 8> kRingDy{0, -1, -1, -1, 0, 1, 1, 1};

std::array<bool, 8> ring(const VesselSkeleton& sk, int x, int y) {
  std::array<bool, 8> r{};
  for (std::size_t k = 0; k < 8; ++k) r[k] = sk.at(x + kRingDx[k], y + kRingDy[k]);
  return r;
}

// Number of 8-connected groups formed by the foreground pixels of the ring.
int ring_components(const std::array<bool, 8>& r) {
  std::array<int, 8> parent{0, 1, 2, 3, 4, 5, 6, 7};
  auto find = [&parent](int i) {
    while (parent[static_cast<std::size_t>(i)] != i) i = parent[static_cast<std::size_t>(i)];
    return i;
  };
  auto unite = [&](int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); };
  for (int k = 0; k < 8; ++k) {
    if (!r[static_cast<std::size_t>(k)]) continue;
    const int n1 = (k + 1) % 8;
    if (r[static_cast<std::size_t>(n1)]) unite(k, n1);
    // Two edge neighbours on either side of a corner touch diagonally.
    if (k % 2 == 0) {
      const int n2 = (k + 2) % 8;
      if (r[static_cast<std::size_t>(n2)]) unite(k, n2);
    }
  }
  int count = 0;
  for (int k = 0; k < 8; ++k)
    if (r[static_cast<std::size_t>(k)] && find(k) == k) ++count;
  return count;
}

void zhang_suen(VesselSkeleton& sk) {
  const int w = sk.width, h = sk.height;
  std::vector<std::size_t> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      doomed.clear();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!sk.at(x, y)) continue;
          // P2..P9 clockwise starting north.
          const bool p2 = sk.at(x, y - 1), p3 = sk.at(x + 1, y - 1), p4 = sk.at(x + 1, y),
                     p5 = sk.at(x + 1, y + 1), p6 = sk.at(x, y + 1), p7 = sk.at(x - 1, y + 1),
                     p8 = sk.at(x - 1, y), p9 = sk.at(x - 1, y - 1);
          const std::array<bool, 8> seq{p2, p3, p4, p5, p6, p7, p8, p9};
          int b = 0, a = 0;
          for (std::size_t k = 0; k < 8; ++k) {
            b += seq[k] ? 1 : 0;
            if (!seq[k] && seq[(k + 1) % 8]) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (pass == 0) {
            if ((p2 && p4 && p6) || (p4 && p6 && p8)) continue;
          } else {
            if ((p2 && p4 && p8) || (p2 && p6 && p8)) continue;
          }
          doomed.push_back(static_cast<std::size_t>(y) * w + x);
        }
      }
      for (std::size_t i : doomed) sk.mask[i] = 0;
      changed = changed || !doomed.empty();
    }
  }
}

// Removes pixels whose foreground neighbours stay connected without them.
// Collapses staircases and junction blobs left by Zhang-Suen.
void prune_redundant(VesselSkeleton& sk) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < sk.height; ++y) {
      for (int x = 0; x < sk.width; ++x) {
        if (!sk.at(x, y)) continue;
        const auto r = ring(sk, x, y);
        const int n = static_cast<int>(std::count(r.begin(), r.end(), true));
        if (n >= 2 && ring_components(r) == 1) {
          sk.set(x, y, false);
          changed = true;
        }
      }
    }
  }
}

// Pixels a bridge or reconnection may use; empty allows all.
using Allowed = std::vector<std::uint8_t>;

bool line_allowed(const VesselSkeleton& sk, const Allowed& ok, Pixel a, Pixel b) {
  if (ok.empty()) return true;
  const int n = std::max(std::abs(b.x - a.x), std::abs(b.y - a.y));
  for (int k = 1; k < n; ++k) {
    const double t = static_cast<double>(k) / n;
    const int x = static_cast<int>(std::lround(a.x + t * (b.x - a.x)));
    const int y = static_cast<int>(std::lround(a.y + t * (b.y - a.y)));
    if (!ok[static_cast<std::size_t>(y) * sk.width + x]) return false;
  }
  return true;
}

void draw_line(VesselSkeleton& sk, Pixel a, Pixel b) {
  const int n = std::max(std::abs(b.x - a.x), std::abs(b.y - a.y));
  for (int k = 1; k < n; ++k) {
    const double t = static_cast<double>(k) / n;
    sk.set(static_cast<int>(std::lround(a.x + t * (b.x - a.x))), static_cast<int>(std::lround(a.y + t * (b.y - a.y))),
           true);
  }
}

bool adjacent(Pixel a, Pixel b) { return a != b && std::abs(a.x - b.x) <= 1 && std::abs(a.y - b.y) <= 1; }

// Groups of mutually touching junction pixels (>= 3 neighbours) become a
// single junction pixel: the one nearest the group centroid. Arms that lose
// contact are reconnected through the common neighbour with the fewest other
// foreground neighbours.
bool collapse_junctions(VesselSkeleton& sk, const Allowed& ok) {
  const int w = sk.width, h = sk.height;
  std::vector<std::uint8_t> seen(sk.mask.size(), 0);
  const auto idx = [w](Pixel p) { return static_cast<std::size_t>(p.y) * w + p.x; };
  const auto is_junction = [&sk](Pixel p) { return sk.at(p.x, p.y) && sk.neighbor_count(p.x, p.y) >= 3; };
  bool changed = false;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Pixel start{x, y};
      if (seen[idx(start)] || !is_junction(start)) continue;
      std::vector<Pixel> cluster{start}, stack{start};
      seen[idx(start)] = 1;
      while (!stack.empty()) {
        const Pixel c = stack.back();
        stack.pop_back();
        for (std::size_t k = 0; k < 8; ++k) {
          const Pixel q{c.x + kRingDx[k], c.y + kRingDy[k]};
          if (!sk.in_bounds(q.x, q.y) || seen[idx(q)] || !is_junction(q)) continue;
          seen[idx(q)] = 1;
          cluster.push_back(q);
          stack.push_back(q);
        }
      }
      if (cluster.size() < 2) continue;
      Vec2 centroid{};
      for (const Pixel c : cluster) centroid += c.vec();
      centroid = centroid / static_cast<double>(cluster.size());
      Pixel keep = cluster.front();
      for (const Pixel c : cluster)
        if (distance(c.vec(), centroid) < distance(keep.vec(), centroid) - 1e-12) keep = c;
      std::vector<Pixel> arms;
      for (const Pixel c : cluster)
        for (std::size_t k = 0; k < 8; ++k) {
          const Pixel q{c.x + kRingDx[k], c.y + kRingDy[k]};
          if (!sk.at(q.x, q.y) || std::find(cluster.begin(), cluster.end(), q) != cluster.end()) continue;
          if (std::find(arms.begin(), arms.end(), q) == arms.end()) arms.push_back(q);
        }
      for (const Pixel c : cluster)
        if (c != keep) sk.set(c.x, c.y, false);
      for (const Pixel a : arms) {
        if (adjacent(a, keep)) continue;
        Pixel best{-1, -1};
        int best_count = 99;
        for (std::size_t k = 0; k < 8; ++k) {
          const Pixel q{keep.x + kRingDx[k], keep.y + kRingDy[k]};
          if (!adjacent(q, a) || !sk.in_bounds(q.x, q.y)) continue;
          if (!ok.empty() && !ok[idx(q)]) continue;
          if (sk.at(q.x, q.y)) {
            best = q;
            best_count = -1;
            break;
          }
          const int n = sk.neighbor_count(q.x, q.y) - 2;
          if (n < best_count) {
            best_count = n;
            best = q;
          }
        }
        if (best.x >= 0) sk.set(best.x, best.y, true);
        else if (line_allowed(sk, ok, a, keep)) draw_line(sk, a, keep);
      }
      changed = true;
    }
  }
  return changed;
}

void cleanup(VesselSkeleton& sk, const Allowed& ok = {}) {
  prune_redundant(sk);
  for (int pass = 0; pass < 4 && collapse_junctions(sk, ok); ++pass) prune_redundant(sk);
}

void remove_small_components(VesselSkeleton& sk, int min_size) {
  if (min_size <= 1) return;
  const int w = sk.width, h = sk.height;
  std::vector<int> label(sk.mask.size(), -1);
  std::vector<std::size_t> stack, members;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!sk.mask[i] || label[i] >= 0) continue;
      members.clear();
      stack.assign(1, i);
      label[i] = 1;
      while (!stack.empty()) {
        const std::size_t c = stack.back();
        stack.pop_back();
        members.push_back(c);
        const int cx = static_cast<int>(c % w), cy = static_cast<int>(c / w);
        for (std::size_t k = 0; k < 8; ++k) {
          const int nx = cx + kRingDx[k], ny = cy + kRingDy[k];
          if (!sk.at(nx, ny)) continue;
          const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
          if (label[ni] >= 0) continue;
          label[ni] = 1;
          stack.push_back(ni);
        }
      }
      if (static_cast<int>(members.size()) < min_size)
        for (std::size_t m : members) sk.mask[m] = 0;
    }
  }
}

// Walks from an endpoint along its chain, collecting up to `n` pixels.
std::vector<Pixel> end_chain(const VesselSkeleton& sk, Pixel end, int n) {
  std::vector<Pixel> chain{end};
  Pixel prev{-1, -1}, cur = end;
  while (static_cast<int>(chain.size()) < n) {
    Pixel next{-1, -1};
    int count = 0;
    for (std::size_t k = 0; k < 8; ++k) {
      const Pixel q{cur.x + kRingDx[k], cur.y + kRingDy[k]};
      if (!sk.at(q.x, q.y) || q == prev) continue;
      if (std::find(chain.begin(), chain.end(), q) != chain.end()) continue;
      next = q;
      ++count;
    }
    if (count != 1) break;
    prev = cur;
    cur = next;
    chain.push_back(cur);
  }
  return chain;
}

// Joins endpoints to skeleton pixels a few pixels ahead along the end
// direction. Crease measures fade where vessels meet, which leaves junctions
// open by a pixel or two.
void bridge_gaps(VesselSkeleton& sk, int max_gap, const Allowed& ok) {
  if (max_gap <= 0) return;
  std::vector<Pixel> ends;
  for (int y = 0; y < sk.height; ++y)
    for (int x = 0; x < sk.width; ++x)
      if (sk.at(x, y) && sk.neighbor_count(x, y) == 1) ends.push_back({x, y});
  bool changed = false;
  for (const Pixel e : ends) {
    if (!sk.at(e.x, e.y) || sk.neighbor_count(e.x, e.y) != 1) continue;
    const auto chain = end_chain(sk, e, 8);
    if (chain.size() < 4) continue;
    const Vec2 dir = fit_direction(chain);
    for (double t = 1.0; t <= max_gap + 0.5; t += 0.5) {
      const Vec2 q = e.vec() + t * dir;
      const Pixel p{static_cast<int>(std::lround(q.x)), static_cast<int>(std::lround(q.y))};
      if (!sk.at(p.x, p.y) || std::find(chain.begin(), chain.end(), p) != chain.end()) continue;
      bool touches_chain = false;
      for (const Pixel c : chain)
        if (c != e && std::abs(c.x - p.x) <= 1 && std::abs(c.y - p.y) <= 1) touches_chain = true;
      if (touches_chain || !line_allowed(sk, ok, e, p)) break;
      draw_line(sk, e, p);
      changed = true;
      break;
    }
  }
  if (changed) cleanup(sk, ok);
}

}  // namespace

Polarity vessel_polarity(Modality m) {
  switch (m) {
    case Modality::Retinography:
      return Polarity::Valley;
    case Modality::Angiography:
      return Polarity::Ridge;
    default:
      throw InvalidArgument("vessel polarity is only defined for retinography and angiography");
  }
}

void CreaseConfig::validate() const {
  if (!(derivation_scale > 0.0) || !(integration_scale > 0.0))
    throw InvalidArgument("crease scales must be positive");
  if (!(threshold > 0.0)) throw InvalidArgument("crease threshold must be positive");
  if (min_segment_length < 1 || end_window < 2) throw InvalidArgument("invalid crease lengths");
  if (!(confidence_factor >= 0.0)) throw InvalidArgument("crease confidence factor must be >= 0");
}

double CreasenessMap::max_value() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

int VesselSkeleton::neighbor_count(int x, int y) const {
  int n = 0;
  for (std::size_t k = 0; k < 8; ++k) n += at(x + kRingDx[k], y + kRingDy[k]) ? 1 : 0;
  return n;
}

std::size_t VesselSkeleton::foreground_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

CreasenessMap creaseness(const Image& img, Polarity polarity, const CreaseConfig& cfg) {
  cfg.validate();
  const Image src = polarity == Polarity::Ridge ? img : scaled(img, -1.0, 0.0);
  const int w = img.width(), h = img.height();

  const Image smooth = gaussian_smooth(src, cfg.derivation_scale);
  const Image gx = derivative_x(smooth);
  const Image gy = derivative_y(smooth);
  const TensorField st = structure_tensor(src, cfg.derivation_scale, cfg.integration_scale);

  CreasenessMap out;
  out.width = w;
  out.height = h;
  out.polarity = polarity;
  out.normal_angle.resize(img.size());
  Image wx(w, h), wy(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double phi = st.dominant_angle(i);
    out.normal_angle[i] = phi;
    double vx = std::cos(phi), vy = std::sin(phi);
    const double dot = vx * gx.data()[i] + vy * gy.data()[i];
    if (dot < 0.0) {
      vx = -vx;
      vy = -vy;
    }
    // Flat tensors carry no orientation; neither does a pixel sitting exactly
    // on the crease, where picking a sign would shift the peak by half a pixel.
    if (st.xx[i] + st.yy[i] <= 0.0 || std::abs(dot) <= 1e-12) vx = vy = 0.0;
    wx.data()[i] = vx;
    wy.data()[i] = vy;
  }
  const Image dwx = derivative_x(wx);
  const Image dwy = derivative_y(wy);
  // The divergence is flat-topped across the crease (the orientation flips
  // within one pixel); a derivation-scale blur makes the centre a strict
  // maximum for the suppression step.
  Image div(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) div.data()[i] = -(dwx.data()[i] + dwy.data()[i]);
  div = gaussian_smooth(div, cfg.derivation_scale);
  out.values.assign(div.data().begin(), div.data().end());
  if (cfg.confidence_factor > 0.0) {
    std::vector<double> aniso(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
      const auto [l1, l2] = st.eigenvalues(i);
      aniso[i] = l1 - l2;
    }
    std::vector<double> sorted = aniso;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double peak = *std::max_element(aniso.begin(), aniso.end());
    const double c = std::max(cfg.confidence_factor * median, 0.01 * peak);
    if (c > 0.0)
      for (std::size_t i = 0; i < img.size(); ++i) {
        const double r = aniso[i] / c;
        out.values[i] *= 1.0 - std::exp(-0.5 * r * r);
      }
  }
  return out;
}

void thin(VesselSkeleton& sk) {
  zhang_suen(sk);
  cleanup(sk);
}

VesselSkeleton extract_skeleton(const CreasenessMap& kappa, double threshold, int min_segment_length, int max_gap) {
  if (!(threshold > 0.0)) throw InvalidArgument("skeleton threshold must be positive");
  const int w = kappa.width, h = kappa.height;
  VesselSkeleton sk(w, h);
  const double peak = kappa.max_value();
  if (!(peak > 0.0)) return sk;
  const double cut = threshold * peak;
  const auto value = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return -std::numeric_limits<double>::infinity();
    return kappa.at(x, y);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = kappa.at(x, y);
      if (!(v > cut)) continue;
      const double phi = kappa.normal_angle[static_cast<std::size_t>(y) * w + x];
      const int dx = static_cast<int>(std::lround(std::cos(phi)));
      const int dy = static_cast<int>(std::lround(std::sin(phi)));
      if (v >= value(x + dx, y + dy) && v >= value(x - dx, y - dy)) sk.set(x, y, true);
    }
  }
  Allowed ok(kappa.values.size(), 0);
  for (std::size_t i = 0; i < ok.size(); ++i) ok[i] = kappa.values[i] > cut;
  zhang_suen(sk);
  cleanup(sk, ok);
  bridge_gaps(sk, max_gap, ok);
  remove_small_components(sk, min_segment_length);
  return sk;
}

Vec2 fit_direction(const std::vector<Pixel>& pts) {
  if (pts.size() < 2) return {};
  Vec2 mean{};
  for (const Pixel& p : pts) mean += p.vec();
  mean = mean / static_cast<double>(pts.size());
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const Pixel& p : pts) {
    const Vec2 d = p.vec() - mean;
    sxx += d.x * d.x;
    sxy += d.x * d.y;
    syy += d.y * d.y;
  }
  const double phi = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  Vec2 axis{std::cos(phi), std::sin(phi)};
  const Vec2 span = pts.front().vec() - pts.back().vec();
  if (dot(axis, span) < 0.0) axis = -axis;
  return axis;
}

std::vector<Segment> trace_segments(const VesselSkeleton& sk, int end_window) {
  const int w = sk.width, h = sk.height;
  std::vector<std::uint8_t> visited(sk.mask.size(), 0);
  const auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
  const auto is_junction = [&](Pixel p) { return sk.at(p.x, p.y) && sk.neighbor_count(p.x, p.y) >= 3; };

  // Arms first: paths through non-junction pixels, which have at most two
  // such neighbours, so each arm's pixel set is independent of scan order.
  const auto walk = [&](Pixel start, bool through_junctions) {
    std::vector<Pixel> pts{start};
    visited[idx(start.x, start.y)] = 1;
    Pixel cur = start;
    while (true) {
      if (through_junctions && pts.size() > 1 && is_junction(cur)) break;
      bool moved = false;
      // Edge neighbours first so staircases are walked in order.
      for (int pass = 0; pass < 2 && !moved; ++pass) {
        for (std::size_t k = static_cast<std::size_t>(pass); k < 8; k += 2) {
          const Pixel q{cur.x + kRingDx[k], cur.y + kRingDy[k]};
          if (!sk.at(q.x, q.y) || visited[idx(q.x, q.y)]) continue;
          if (!through_junctions && is_junction(q)) continue;
          cur = q;
          visited[idx(q.x, q.y)] = 1;
          pts.push_back(cur);
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    return pts;
  };
  const auto arm_degree = [&](Pixel p) {
    int n = 0;
    for (std::size_t k = 0; k < 8; ++k) {
      const Pixel q{p.x + kRingDx[k], p.y + kRingDy[k]};
      if (sk.at(q.x, q.y) && !is_junction(q)) ++n;
    }
    return n;
  };

  std::vector<std::vector<Pixel>> arms;
  std::vector<bool> cyclic;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (sk.at(x, y) && !visited[idx(x, y)] && !is_junction({x, y}) && arm_degree({x, y}) <= 1) {
        arms.push_back(walk({x, y}, false));
        cyclic.push_back(false);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (sk.at(x, y) && !visited[idx(x, y)] && !is_junction({x, y})) {
        auto pts = walk({x, y}, false);
        const Pixel a = pts.front(), b = pts.back();
        cyclic.push_back(pts.size() > 2 && adjacent(a, b) && sk.neighbor_count(a.x, a.y) == 2);
        arms.push_back(std::move(pts));
      }

  // Each junction pixel joins one arm end: edge contact beats diagonal, then
  // the longer arm. An arm end takes at most one junction.
  std::vector<std::array<bool, 2>> end_taken(arms.size(), {false, false});
  std::vector<std::array<std::optional<Pixel>, 2>> end_junction(arms.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Pixel j{x, y};
      if (!is_junction(j)) continue;
      int best = -1, best_end = 0;
      std::pair<int, std::size_t> best_key{-1, 0};
      for (std::size_t a = 0; a < arms.size(); ++a) {
        if (cyclic[a]) continue;
        for (int e = 0; e < 2; ++e) {
          if (end_taken[a][e]) continue;
          const Pixel p = e == 0 ? arms[a].front() : arms[a].back();
          if (!adjacent(p, j)) continue;
          const int edge = (p.x == j.x || p.y == j.y) ? 1 : 0;
          const std::pair<int, std::size_t> key{edge, arms[a].size()};
          if (key > best_key) {
            best_key = key;
            best = static_cast<int>(a);
            best_end = e;
          }
        }
      }
      if (best < 0) continue;
      end_taken[best][best_end] = true;
      if (arms[best].size() == 1) end_taken[best][1 - best_end] = true;
      end_junction[best][best_end] = j;
      visited[idx(x, y)] = 1;
    }
  }

  std::vector<Segment> segments;
  const auto emit = [&](std::vector<Pixel> pts, bool closed) {
    Segment seg;
    seg.points = std::move(pts);
    seg.closed = closed;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(end_window), seg.points.size());
    std::vector<Pixel> head(seg.points.begin(), seg.points.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<Pixel> tail(seg.points.rbegin(), seg.points.rbegin() + static_cast<std::ptrdiff_t>(k));
    seg.start_direction = fit_direction(head);
    seg.end_direction = fit_direction(tail);
    segments.push_back(std::move(seg));
  };
  for (std::size_t a = 0; a < arms.size(); ++a) {
    auto pts = std::move(arms[a]);
    if (end_junction[a][0]) pts.insert(pts.begin(), *end_junction[a][0]);
    if (end_junction[a][1]) pts.push_back(*end_junction[a][1]);
    emit(std::move(pts), cyclic[a]);
  }

  // Junction pixels no arm could take (clusters, isolated crossings).
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (sk.at(x, y) && !visited[idx(x, y)]) emit(walk({x, y}, true), false);

  return segments;
}

}  // namespace retreg
