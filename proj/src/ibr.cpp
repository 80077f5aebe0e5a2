#include "retreg/ibr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "retreg/error.hpp"
#include "retreg/warp.hpp"

namespace retreg {

OptimizerConfig OptimizerConfig::affine_defaults() {
  OptimizerConfig c;
  c.max_iterations = 200;
  c.parameter_tolerance = {0.25, 0.25, deg2rad(0.25), 0.002, 0.002, 0.002};
  c.initial_steps = {4.0, 4.0, deg2rad(2.0), 0.02, 0.02, 0.02};
  c.pyramid_levels = 3;
  return c;
}

OptimizerConfig OptimizerConfig::ffd_defaults() {
  OptimizerConfig c;
  c.max_iterations = 40;
  c.parameter_tolerance = {0.25};
  c.initial_steps = {2.0};
  c.pyramid_levels = 1;
  return c;
}

void OptimizerConfig::validate(std::size_t n_params) const {
  if (max_iterations < 1 || pyramid_levels < 1) throw InvalidArgument("optimizer counts must be positive");
  if (parameter_tolerance.size() != n_params || initial_steps.size() != n_params)
    throw InvalidArgument("optimizer step vectors have the wrong length");
  for (std::size_t i = 0; i < n_params; ++i)
    if (!(parameter_tolerance[i] > 0.0) || !(initial_steps[i] > 0.0))
      throw InvalidArgument("optimizer steps must be positive");
}

AffineParams AffineParams::from_affine(const Affine6& a, Vec2 pivot) {
  if (!(a.det() > Affine6::kMinDeterminant)) throw InvalidArgument("degenerate or reflecting affine initialization");
  AffineParams p;
  const Vec2 d = a.apply(pivot);
  const double theta = std::atan2(a.a21, a.a11);
  const double c = std::cos(theta), s = std::sin(theta);
  p.v = {d.x, d.y, theta, std::hypot(a.a11, a.a21), -s * a.a12 + c * a.a22, c * a.a12 + s * a.a22};
  return p;
}

Affine6 AffineParams::to_affine(Vec2 pivot) const {
  const auto [dx, dy, theta, sx, sy, k] = v;
  const double c = std::cos(theta), s = std::sin(theta);
  Affine6 a;
  a.a11 = c * sx;
  a.a12 = c * k - s * sy;
  a.a21 = s * sx;
  a.a22 = s * k + c * sy;
  a.tx = dx - (a.a11 * pivot.x + a.a12 * pivot.y);
  a.ty = dy - (a.a21 * pivot.x + a.a22 * pivot.y);
  return a;
}

namespace {

// VE-NCC of an affine map on one pyramid level; nullopt when the metric is
// undefined (too little overlap or a flat operand).
std::optional<double> level_score(const Image& f, const Image& m, const Affine6& full, int level) {
  // Pixel (i, j) of level l sits at (2^l i, 2^l j) in full resolution, so
  // only the translation rescales.
  const double scale = std::ldexp(1.0, level);
  Affine6 a = full;
  a.tx = full.tx / scale;
  a.ty = full.ty / scale;
  if (!(std::abs(a.det()) > Affine6::kMinDeterminant)) return std::nullopt;
  NccAccumulator acc;
  const int w = f.width(), h = f.height();
  for (int y = 0; y < h; ++y) {
    const double bx = a.a12 * y + a.tx, by = a.a22 * y + a.ty;
    for (int x = 0; x < w; ++x) {
      const double px = bx + a.a11 * x, py = by + a.a21 * x;
      if (inside(m, px, py)) acc.add(f(x, y), sample_bilinear(m, px, py));
    }
  }
  try {
    return finish_score(acc, static_cast<double>(f.size())).value;
  } catch (const MetricError&) {
    return std::nullopt;
  }
}

}  // namespace

AffineResult optimize_affine(const VeNccMetric& metric, const Transform& init, const OptimizerConfig& cfg) {
  cfg.validate(6);
  if (std::holds_alternative<FFDGrid>(init)) throw InvalidArgument("optimize_affine: init must be similarity or affine");
  const Affine6 start = affine_part(init);
  if (!(std::abs(start.det()) > Affine6::kMinDeterminant)) throw InvalidArgument("optimize_affine: degenerate init");

  AffineResult result;
  result.initial_score = metric.evaluate(start);

  std::vector<Image> fixed_levels{metric.fixed().values};
  std::vector<Image> moving_levels{metric.moving().values};
  for (int l = 1; l < cfg.pyramid_levels; ++l) {
    if (fixed_levels.back().width() < 16 || fixed_levels.back().height() < 16) break;
    fixed_levels.push_back(downsample2(fixed_levels.back()));
    moving_levels.push_back(downsample2(moving_levels.back()));
  }
  const int levels = static_cast<int>(fixed_levels.size());

  const Image& f0 = metric.fixed().values;
  const Vec2 pivot{0.5 * (f0.width() - 1), 0.5 * (f0.height() - 1)};
  AffineParams p = AffineParams::from_affine(start, pivot);

  int evaluations = 0;
  for (int level = levels - 1; level >= 0; --level) {
    const Image& f = fixed_levels[static_cast<std::size_t>(level)];
    const Image& m = moving_levels[static_cast<std::size_t>(level)];
    const auto score_of = [&](const AffineParams& q) {
      ++evaluations;
      return level_score(f, m, q.to_affine(pivot), level);
    };
    auto current = score_of(p);
    if (!current) continue;

    std::array<double, 6> step{}, floor{};
    const double coarse = std::ldexp(1.0, level);
    const double shrink = std::ldexp(1.0, level - (levels - 1));
    for (std::size_t i = 0; i < 6; ++i) {
      floor[i] = cfg.parameter_tolerance[i] * coarse;
      step[i] = std::max(cfg.initial_steps[i] * shrink, floor[i]);
    }

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
      bool active = false;
      for (std::size_t i = 0; i < 6; ++i) {
        if (step[i] < floor[i]) continue;
        active = true;
        bool moved = false;
        for (double sign : {1.0, -1.0}) {
          AffineParams trial = p;
          trial.v[i] += sign * step[i];
          if (trial.v[3] <= 0.0 || trial.v[4] <= 0.0) continue;
          const auto s = score_of(trial);
          if (s && *s > *current) {
            p = trial;
            current = s;
            moved = true;
            break;
          }
        }
        if (!moved) step[i] *= 0.5;
      }
      if (!active) break;
    }
  }
  result.evaluations = evaluations;

  const Affine6 candidate = p.to_affine(pivot);
  try {
    const VeNccScore final_score = metric.evaluate(candidate);
    if (final_score.value >= result.initial_score.value) {
      result.transform = candidate;
      result.score = final_score;
      return result;
    }
  } catch (const MetricError&) {
  }
  result.transform = start;
  result.score = result.initial_score;
  return result;
}

AffineResult optimize_affine(const Image& fixed, const Image& moving, const Transform& init,
                             const OptimizerConfig& cfg, const ScaleSpaceConfig& scales) {
  return optimize_affine(VeNccMetric(fixed, moving, scales), init, cfg);
}

namespace {

// Incremental VE-NCC for an FFD: per-pixel warped positions and samples are
// cached so that moving one control point only revisits its 4x4-cell support.
class FfdState {
 public:
  FfdState(const VeNccMetric& metric, const FFDGrid& grid)
      : f_(metric.fixed().values), m_(metric.moving().values), grid_(grid) {
    const int w = f_.width(), h = f_.height();
    col_ = axis_table(w, grid_.origin().x, grid_.spacing());
    row_ = axis_table(h, grid_.origin().y, grid_.spacing());
    col_range_ = support_ranges(col_, grid_.nx());
    row_range_ = support_ranges(row_, grid_.ny());
    const std::size_t n = f_.size();
    px_.resize(n);
    py_.resize(n);
    val_.resize(n);
    valid_.resize(n);
    std::size_t k = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x, ++k) {
        const Vec2 s = grid_.apply({static_cast<double>(x), static_cast<double>(y)});
        set_pixel(k, s.x, s.y);
      }
    rebuild();
  }

  double total() const { return static_cast<double>(f_.size()); }
  const NccAccumulator& acc() const { return acc_; }
  const FFDGrid& grid() const { return grid_; }

  std::optional<double> score(const NccAccumulator& a) const {
    try {
      return finish_score(a, total()).value;
    } catch (const MetricError&) {
      return std::nullopt;
    }
  }

  // Exact recomputation of the sums from the cache.
  void rebuild() {
    acc_ = {};
    const auto fd = f_.data();
    for (std::size_t k = 0; k < fd.size(); ++k)
      if (valid_[k]) acc_.add(fd[k], val_[k]);
  }

  // Evaluates moving control point (i, j) by `delta` (fixed-frame pixels).
  // Returns the trial score; the trial is kept in scratch for commit().
  std::optional<double> trial(int i, int j, Vec2 delta) {
    const Vec2 shift = grid_.base().linear() * delta;
    const auto [x0, x1] = col_range_[static_cast<std::size_t>(i)];
    const auto [y0, y1] = row_range_[static_cast<std::size_t>(j)];
    trial_acc_ = acc_;
    scratch_.clear();
    const int w = f_.width();
    for (int y = y0; y <= y1; ++y) {
      const auto& ry = row_[static_cast<std::size_t>(y)];
      const int by = j - ry.first;
      if (by < 0 || by > 3) continue;
      const double wy = ry.weights[static_cast<std::size_t>(by)];
      for (int x = x0; x <= x1; ++x) {
        const auto& cx = col_[static_cast<std::size_t>(x)];
        const int bx = i - cx.first;
        if (bx < 0 || bx > 3) continue;
        const double wgt = wy * cx.weights[static_cast<std::size_t>(bx)];
        if (wgt == 0.0) continue;
        const std::size_t k = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
        const double nx = px_[k] + wgt * shift.x, ny = py_[k] + wgt * shift.y;
        const double fv = f_.data()[k];
        if (valid_[k]) trial_acc_.remove(fv, val_[k]);
        Cached c{k, nx, ny, 0.0, false};
        if (inside(m_, nx, ny)) {
          c.value = sample_bilinear(m_, nx, ny);
          c.valid = true;
          trial_acc_.add(fv, c.value);
        }
        scratch_.push_back(c);
      }
    }
    return score(trial_acc_);
  }

  void commit(int i, int j, Vec2 new_disp) {
    for (const Cached& c : scratch_) {
      px_[c.k] = c.x;
      py_[c.k] = c.y;
      val_[c.k] = c.value;
      valid_[c.k] = c.valid ? 1 : 0;
    }
    acc_ = trial_acc_;
    grid_.set_displacement(i, j, new_disp);
  }

 private:
  struct AxisEntry {
    int first = 0;  // first control index with non-zero weight
    std::array<double, 4> weights{};
  };
  struct Cached {
    std::size_t k;
    double x, y, value;
    bool valid;
  };

  static std::vector<AxisEntry> axis_table(int n, double origin, double spacing) {
    std::vector<AxisEntry> t(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) {
      const double g = (p - origin) / spacing;
      const double fl = std::floor(g);
      t[static_cast<std::size_t>(p)] = {static_cast<int>(fl) - 1, bspline::weights(g - fl)};
    }
    return t;
  }

  // Pixel interval influenced by each control index.
  static std::vector<std::pair<int, int>> support_ranges(const std::vector<AxisEntry>& t, int count) {
    std::vector<std::pair<int, int>> r(static_cast<std::size_t>(count), {1, 0});
    for (int p = 0; p < static_cast<int>(t.size()); ++p)
      for (int b = 0; b < 4; ++b) {
        const int c = t[static_cast<std::size_t>(p)].first + b;
        if (c < 0 || c >= count) continue;
        auto& range = r[static_cast<std::size_t>(c)];
        if (range.first > range.second) range = {p, p};
        range.first = std::min(range.first, p);
        range.second = std::max(range.second, p);
      }
    return r;
  }

  void set_pixel(std::size_t k, double x, double y) {
    px_[k] = x;
    py_[k] = y;
    if (inside(m_, x, y)) {
      val_[k] = sample_bilinear(m_, x, y);
      valid_[k] = 1;
    } else {
      val_[k] = 0.0;
      valid_[k] = 0;
    }
  }

  const Image& f_;
  const Image& m_;
  FFDGrid grid_;
  std::vector<AxisEntry> col_, row_;
  std::vector<std::pair<int, int>> col_range_, row_range_;
  std::vector<double> px_, py_, val_;
  std::vector<std::uint8_t> valid_;
  NccAccumulator acc_, trial_acc_;
  std::vector<Cached> scratch_;
};

}  // namespace

FfdResult optimize_ffd(const VeNccMetric& metric, const Affine6& init, const OptimizerConfig& cfg,
                       double grid_spacing) {
  cfg.validate(1);
  if (!(std::abs(init.det()) > Affine6::kMinDeterminant)) throw InvalidArgument("optimize_ffd: degenerate init");
  const Image& f = metric.fixed().values;
  FFDGrid start(f.width(), f.height(), grid_spacing, init);

  FfdResult result;
  result.initial_score = metric.evaluate(init);

  FfdState state(metric, start);
  auto current = state.score(state.acc());
  if (!current) throw MetricError(MetricError::Kind::InsufficientOverlap, "FFD initialization cannot be scored");

  const double floor = cfg.parameter_tolerance[0];
  const double bound = start.max_bound();
  double step = cfg.initial_steps[0];
  int sweeps = 0;
  while (step >= floor && sweeps < cfg.max_iterations) {
    ++sweeps;
    const double sweep_start = *current;
    for (int j = 0; j < start.ny(); ++j)
      for (int i = 0; i < start.nx(); ++i)
        for (int axis = 0; axis < 2; ++axis)
          for (double sign : {1.0, -1.0}) {
            const Vec2 d = state.grid().displacement_at(i, j);
            Vec2 target = d;
            (axis == 0 ? target.x : target.y) += sign * step;
            const double mag = norm(target);
            if (mag > bound) target = target * (bound / mag);
            const Vec2 delta = target - d;
            if (norm(delta) < 1e-12) continue;
            const auto s = state.trial(i, j, delta);
            if (s && *s > *current) {
              state.commit(i, j, target);
              current = s;
              ++result.accepted_moves;
              break;
            }
          }
    state.rebuild();
    current = state.score(state.acc());
    if (!current) break;
    if (*current - sweep_start <= 1e-6) step *= 0.5;
  }
  result.sweeps = sweeps;

  FFDGrid candidate = state.grid();
  try {
    const VeNccScore final_score = metric.evaluate(candidate);
    if (final_score.value >= result.initial_score.value) {
      result.grid = std::move(candidate);
      result.score = final_score;
      return result;
    }
  } catch (const MetricError&) {
  }
  result.grid = start;
  result.score = result.initial_score;
  return result;
}

FfdResult optimize_ffd(const Image& fixed, const Image& moving, const Affine6& init, const OptimizerConfig& cfg,
                       double grid_spacing, const ScaleSpaceConfig& scales) {
  return optimize_ffd(VeNccMetric(fixed, moving, scales), init, cfg, grid_spacing);
}

}  // namespace retreg
