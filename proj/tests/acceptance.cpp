// Acceptance run: one PASS/FAIL/SKIP line per criterion. Exit status is 1
// when any criterion fails.
//
// Criterion 8 needs the public fundus dataset; point RETREG_DATASET_ROOT at
// a directory with healthy/ and pathological/ pair folders to enable it.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

#include "retreg/error.hpp"
#include "retreg/fbr.hpp"
#include "retreg/ibr.hpp"
#include "retreg/pipeline.hpp"
#include "retreg/report.hpp"
#include "retreg/synth.hpp"
#include "test_support.hpp"

using namespace retreg;
using namespace testsupport;

namespace {

struct Outcome {
  enum { Pass, Fail, Skip } verdict = Fail;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {Outcome::Fail, std::string("exception: ") + e.what()};
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (o.verdict != Outcome::Skip && dt > limit_s) {
    o.verdict = Outcome::Fail;
    o.detail += " (over the " + std::to_string(static_cast<int>(limit_s)) + " s budget)";
  }
  const char* tag = o.verdict == Outcome::Pass ? "PASS" : o.verdict == Outcome::Skip ? "SKIP" : "FAIL";
  if (o.verdict == Outcome::Fail) ++failures;
  std::printf("[%s] %d %s: %s [%.1f s]\n", tag, id, name.c_str(), o.detail.c_str(), dt);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

// --- 1 ---------------------------------------------------------------------

Outcome metric_correctness() {
  const Image r = smooth_image(96, 80, 1, Modality::Retinography);
  const double self = ve_ncc(r, inverted(r, Modality::Angiography), Affine6{}).value;

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_bound = 0.0, worst_invariance = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const Image f = n % 2 ? smooth_image(48, 40, 2 * n + 1, Modality::Retinography)
                          : random_image(48, 40, 2 * n + 1, Modality::Retinography);
    const Image m = random_image(48, 40, 2 * n + 2, Modality::Angiography);
    const Similarity4 tf{1.0 + 0.1 * u(rng), 0.2 * u(rng), 4.0 * u(rng), 4.0 * u(rng)};
    const double v = ve_ncc(f, m, tf).value;
    worst_bound = std::max(worst_bound, std::abs(v));
    const double a = 0.2 + 3.0 * (0.5 + 0.5 * u(rng));
    const double w = ve_ncc(scaled(f, a, u(rng)), scaled(m, 1.0 / a, u(rng)), tf).value;
    worst_invariance = std::max(worst_invariance, std::abs(v - w));
  }
  const bool ok = std::abs(self - 1.0) <= 1e-6 && worst_bound <= 1.0 && worst_invariance <= 1e-6;
  return verdict(ok, fmt("self=%.9f", self) + fmt(" max|v|=%.4f", worst_bound) +
                         fmt(" max rescale change=%.2e", worst_invariance));
}

// --- 2 ---------------------------------------------------------------------

Outcome scale_selection() {
  std::vector<double> grid;
  for (int k = -4; k <= 20; ++k) grid.push_back(std::pow(2.0, k / 4.0));
  std::string detail;
  bool ok = true;
  for (double t0 : {2.0, 4.0, 8.0}) {
    const Image blob = gaussian_blob(129, t0);
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double v = std::abs(normalized_laplacian(blob, grid[k])(64, 64));
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    const std::size_t truth = static_cast<std::size_t>(std::find_if(grid.begin(), grid.end(), [&](double g) {
                                                         return std::abs(g - t0) < 1e-9;
                                                       }) - grid.begin());
    ok = ok && std::abs(static_cast<int>(best) - static_cast<int>(truth)) <= 1;
    detail += fmt("t0=%g", t0) + fmt("->%.3f ", grid[best]);
  }
  return verdict(ok, detail);
}

// --- 3 ---------------------------------------------------------------------

Outcome fbr_recovery() {
  SceneDraw d;
  d.scale_min = 0.7;
  d.scale_max = 1.4;
  d.angle_max = deg2rad(20.0);
  d.translation_max = 60.0;
  int ok = 0;
  double pruned = 0.0;
  for (std::uint64_t s = 1; s <= 30; ++s) {
    const SyntheticSceneConfig cfg = random_scene(s, d);
    const SyntheticPair p = synth_pair(cfg);
    const auto f = detect_landmarks(p.retinography, Polarity::Valley).landmarks;
    const auto m = detect_landmarks(p.angiography, Polarity::Ridge).landmarks;
    const Similarity4 truth = std::get<Similarity4>(cfg.applied_transform);
    try {
      const MatchResult r = match_landmarks(f, m);
      const bool good = std::abs(r.transform.scale - truth.scale) <= 0.02 &&
                        rad2deg(angle_diff(r.transform.angle, truth.angle)) <= 1.0 &&
                        std::hypot(r.transform.tx - truth.tx, r.transform.ty - truth.ty) <= 2.0;
      ok += good;
      pruned += double(r.stats.scale_pruned) / double(r.stats.enumerated);
    } catch (const MatchFailure&) {
    }
  }
  return verdict(ok >= 28, std::to_string(ok) + "/30 scenes recovered" +
                               fmt(", scale pruning removed %.0f%% of hypotheses on average", 100.0 * pruned / 30));
}

// --- 4, 5, 7: one misaligned synthetic cohort --------------------------------

struct CohortRun {
  SyntheticPair pair;
  double none = 0, fbr = 0, fbr_at = 0, hybrid = 0, direct = 0;
  double error_before = 0, error_after = 0;
  RunStatus status = RunStatus::Ok;
};

std::vector<SyntheticSceneConfig> cohort_scenes() {
  SceneDraw d;
  d.scale_min = 0.85;
  d.scale_max = 1.15;
  d.angle_max = deg2rad(12.0);
  d.translation_min = 45.0;
  d.translation_max = 70.0;
  d.sinusoid_amplitude = 3.0;
  std::vector<SyntheticSceneConfig> out;
  for (std::uint64_t s = 101; s <= 110; ++s) out.push_back(random_scene(s, d));
  return out;
}

std::vector<CohortRun>& cohort() {
  static std::vector<CohortRun> runs;
  return runs;
}

Outcome hybrid_ordering() {
  auto& runs = cohort();
  runs.clear();
  int ordered = 0;
  double mean_fbr = 0, mean_hybrid = 0;
  for (const auto& cfg : cohort_scenes()) {
    CohortRun c;
    c.pair = synth_pair(cfg);
    PairSession session(c.pair.retinography, c.pair.angiography, RegistrationConfig{});
    const RegistrationResult h = session.run({Step::Fbr, Step::At, Step::Ffd});
    c.none = session.run({}).final_score.value;
    c.fbr = session.run({Step::Fbr}).final_score.value;
    c.fbr_at = session.run({Step::Fbr, Step::At}).final_score.value;
    c.hybrid = h.final_score.value;
    c.status = h.status;
    std::vector<Vec2> junctions;
    for (const auto& l : c.pair.landmarks) junctions.push_back(l.position);
    c.error_before = mean_registration_error(Affine6{}, c.pair.truth, junctions);
    c.error_after = mean_registration_error(h.final_transform(), c.pair.truth, junctions);
    ordered += c.none <= c.fbr && c.fbr <= c.fbr_at && c.fbr_at <= c.hybrid;
    mean_fbr += c.fbr;
    mean_hybrid += c.hybrid;
    runs.push_back(std::move(c));
  }
  const double n = static_cast<double>(runs.size());
  mean_fbr /= n;
  mean_hybrid /= n;
  const double rel = (mean_hybrid - mean_fbr) / mean_fbr;
  return verdict(ordered == static_cast<int>(runs.size()) && rel >= 0.05,
                 std::to_string(ordered) + "/" + std::to_string(runs.size()) + " pairs ordered" +
                     fmt(", mean fbr=%.3f", mean_fbr) + fmt(" hybrid=%.3f", mean_hybrid) +
                     fmt(" (+%.0f%%)", 100.0 * rel));
}

Outcome initialization_necessity() {
  auto& runs = cohort();
  if (runs.empty()) return {Outcome::Fail, "hybrid cohort unavailable"};
  int failed = 0, scenes = 0;
  double worst_ratio = 0.0;
  for (auto& c : runs) {
    if (distance(c.pair.truth.apply({359.5, 287.5}), {359.5, 287.5}) <= 40.0) continue;
    ++scenes;
    PairSession session(c.pair.retinography, c.pair.angiography, RegistrationConfig{});
    double best = -1.0;
    for (const auto& steps : {std::vector<Step>{Step::At}, std::vector<Step>{Step::At, Step::Ffd}}) {
      const RegistrationResult r = session.run(steps);
      best = std::max(best, r.hard_failure() ? c.none : r.final_score.value);
    }
    c.direct = best;
    const double ratio = best / c.hybrid;
    worst_ratio = std::max(worst_ratio, ratio);
    failed += ratio < 0.5;
  }
  const bool ok = scenes > 0 && failed >= 0.8 * scenes;
  return verdict(ok, std::to_string(failed) + "/" + std::to_string(scenes) +
                         " direct runs below half the hybrid score" + fmt(", worst ratio %.2f", worst_ratio));
}

Outcome end_to_end_accuracy() {
  auto& runs = cohort();
  if (runs.empty()) return {Outcome::Fail, "hybrid cohort unavailable"};
  double before = 0, after = 0;
  for (const auto& c : runs) {
    before += c.error_before;
    after += c.error_after;
  }
  const double n = static_cast<double>(runs.size());
  return verdict(after / n <= 2.0 && before / n >= 20.0,
                 fmt("mean landmark error %.2f px registered", after / n) + fmt(" vs %.1f px unregistered", before / n));
}

// --- 6 ---------------------------------------------------------------------

Outcome ffd_refinement() {
  SyntheticSceneConfig cfg;
  cfg.sinusoid = {4.0, 200.0};
  const SyntheticPair p = synth_pair(cfg);
  const VeNccMetric metric(p.retinography, p.angiography);
  const Affine6 truth = affine_part(p.truth.base);
  const AffineResult at = optimize_affine(metric, truth, OptimizerConfig::affine_defaults());
  const FfdResult ffd = optimize_ffd(metric, truth, OptimizerConfig::ffd_defaults(), 20.0);
  const double residual = mean_registration_error(ffd.grid, p.truth, p.centerline);
  const double gain = ffd.score.value - at.score.value;
  return verdict(residual <= 1.5 && gain >= 0.02,
                 fmt("residual %.2f px", residual) + fmt(" (affine only %.2f px)", mean_registration_error(at.transform, p.truth, p.centerline)) +
                     fmt(", VE-NCC %.3f", at.score.value) + fmt(" -> %.3f", ffd.score.value));
}

// --- 8 ---------------------------------------------------------------------

Outcome dataset_trends() {
  const char* root = std::getenv("RETREG_DATASET_ROOT");
  if (!root || !*root) return {Outcome::Skip, "RETREG_DATASET_ROOT not set"};
  const Dataset ds = ingest_dataset(root);
  EvaluationOptions opts;
  opts.jobs = 1;
  const auto& t = table_configurations();
  opts.configurations = {t[0], t[1], t[2], t[3], t[7]};
  opts.write_overlays = false;
  const auto out = std::filesystem::temp_directory_path() / "retreg_acceptance_dataset";
  const Evaluation ev = evaluate_dataset(ds.pairs, RegistrationConfig{}, out, opts);
  bool ok = true;
  std::string detail;
  for (Cohort c : {Cohort::Healthy, Cohort::Pathological}) {
    const CohortStats base = cohort_stats(ev.results, {}, c);
    if (!base.mean) continue;
    double m[4];
    for (int k = 0; k < 4; ++k) m[k] = cohort_stats(ev.results, t[static_cast<std::size_t>(k)], c).mean.value_or(0.0);
    const bool band = *base.mean >= 0.0 && *base.mean <= 0.15;
    const bool ranked = m[0] >= m[1] && m[1] >= m[2] && m[2] >= m[3];
    ok = ok && band && ranked;
    detail += std::string(to_string(c)) + fmt(": none=%.4f", *base.mean) + fmt(" hybrid=%.4f", m[0]) +
              fmt(" fbr+at=%.4f", m[1]) + fmt(" fbr+ffd=%.4f", m[2]) + fmt(" fbr=%.4f; ", m[3]);
  }
  return verdict(ok, detail);
}

}  // namespace

int main() {
  criterion(1, "metric correctness", 60, metric_correctness);
  criterion(2, "scale selection", 60, scale_selection);
  criterion(3, "FBR recovery", 300, fbr_recovery);
  criterion(4, "hybrid ordering", 600, hybrid_ordering);
  criterion(5, "initialization necessity", 600, initialization_necessity);
  criterion(6, "FFD refinement", 300, ffd_refinement);
  criterion(7, "end-to-end accuracy", 600, end_to_end_accuracy);
  criterion(8, "dataset trends", 3600, dataset_trends);
  return failures == 0 ? 0 : 1;
}
