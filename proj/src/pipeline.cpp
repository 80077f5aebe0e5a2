#include "retreg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "retreg/error.hpp"
#include "retreg/report.hpp"

namespace retreg {

namespace fs = std::filesystem;

std::string_view to_string(Cohort c) {
  switch (c) {
    case Cohort::Healthy: return "healthy";
    case Cohort::Pathological: return "pathological";
    case Cohort::Synthetic: return "synthetic";
  }
  return "unknown";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  std::string out(s.substr(a, b - a));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) fields.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> ext{".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"};
  return ext.count(lower(p.extension().string())) > 0;
}

std::optional<fs::path> find_image(const fs::path& dir, const std::string& stem) {
  std::vector<fs::path> hits;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && lower(e.path().stem().string()) == stem && is_image_file(e.path()))
      hits.push_back(e.path());
  if (hits.empty()) return std::nullopt;
  std::sort(hits.begin(), hits.end());
  return hits.front();
}

Dataset ingest_layout(const fs::path& root) {
  Dataset ds;
  std::set<std::string> seen;
  for (Cohort cohort : kAllCohorts) {
    const fs::path cdir = root / std::string(to_string(cohort));
    if (!fs::is_directory(cdir)) continue;
    std::vector<fs::path> ids;
    for (const auto& e : fs::directory_iterator(cdir))
      if (e.is_directory()) ids.push_back(e.path());
    std::sort(ids.begin(), ids.end());
    for (const fs::path& dir : ids) {
      const std::string id = dir.filename().string();
      const std::string where = std::string(to_string(cohort)) + "/" + id;
      const auto r = find_image(dir, "retino");
      const auto a = find_image(dir, "angio");
      if (!r || !a) {
        ds.warnings.push_back(where + ": missing " + std::string(!r ? "retinography" : "angiography") + " image");
        continue;
      }
      if (!seen.insert(id).second) {
        ds.warnings.push_back(where + ": duplicate pair id, skipped");
        continue;
      }
      ds.pairs.push_back({id, *r, *a, cohort});
    }
  }
  return ds;
}

Dataset ingest_manifest(const fs::path& root, const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DatasetError("cannot open manifest " + manifest.string());
  const fs::path base = root.empty() ? manifest.parent_path() : root;
  Dataset ds;
  std::set<std::string> seen;
  int idx_id = -1, idx_r = -1, idx_a = -1, idx_c = -1;
  std::size_t columns = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    const auto f = split_csv(line);
    if (columns == 0) {
      for (std::size_t i = 0; i < f.size(); ++i) {
        const std::string h = lower(f[i]);
        if (h == "pair_id") idx_id = static_cast<int>(i);
        if (h == "retino") idx_r = static_cast<int>(i);
        if (h == "angio") idx_a = static_cast<int>(i);
        if (h == "cohort") idx_c = static_cast<int>(i);
      }
      if (idx_id < 0 || idx_r < 0 || idx_a < 0 || idx_c < 0)
        throw DatasetError("manifest line " + std::to_string(lineno) +
                           ": header must name pair_id, retino, angio, cohort");
      columns = f.size();
      continue;
    }
    if (f.size() != columns)
      throw DatasetError("manifest line " + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                         " fields, found " + std::to_string(f.size()));
    PairRecord p;
    p.pair_id = f[static_cast<std::size_t>(idx_id)];
    if (p.pair_id.empty()) throw DatasetError("manifest line " + std::to_string(lineno) + ": empty pair_id");
    try {
      p.cohort = cohort_from_string(f[static_cast<std::size_t>(idx_c)]);
    } catch (const InvalidArgument& e) {
      throw DatasetError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    const auto resolve = [&base](const std::string& s) {
      const fs::path q(s);
      return q.is_absolute() ? q : base / q;
    };
    p.retinography_path = resolve(f[static_cast<std::size_t>(idx_r)]);
    p.angiography_path = resolve(f[static_cast<std::size_t>(idx_a)]);
    const bool has_r = fs::is_regular_file(p.retinography_path);
    const bool has_a = fs::is_regular_file(p.angiography_path);
    if (!has_r || !has_a) {
      ds.warnings.push_back(p.pair_id + ": missing " + (has_r ? "angiography " + p.angiography_path.string()
                                                              : "retinography " + p.retinography_path.string()));
      continue;
    }
    if (!seen.insert(p.pair_id).second) {
      ds.warnings.push_back(p.pair_id + ": duplicate pair id on line " + std::to_string(lineno) + ", skipped");
      continue;
    }
    ds.pairs.push_back(std::move(p));
  }
  if (columns == 0) throw DatasetError("manifest " + manifest.string() + " has no header");
  return ds;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Cohort cohort_from_string(std::string_view s) {
  const std::string l = lower(trim(s));
  for (Cohort c : kAllCohorts)
    if (l == to_string(c)) return c;
  throw InvalidArgument("unknown cohort '" + std::string(s) + "'");
}

Dataset ingest_dataset(const fs::path& root, const std::optional<fs::path>& manifest) {
  Dataset ds;
  if (manifest) {
    ds = ingest_manifest(root, *manifest);
  } else {
    if (!fs::is_directory(root)) throw DatasetError("dataset root " + root.string() + " is not a directory");
    ds = ingest_layout(root);
  }
  if (ds.pairs.empty()) throw DatasetError("empty dataset: no usable image pairs found");
  std::sort(ds.pairs.begin(), ds.pairs.end(),
            [](const PairRecord& a, const PairRecord& b) { return a.pair_id < b.pair_id; });
  return ds;
}

std::string_view to_string(Step s) {
  switch (s) {
    case Step::Fbr: return "fbr";
    case Step::At: return "at";
    case Step::Ffd: return "ffd";
  }
  return "?";
}

std::vector<Step> parse_steps(std::string_view text) {
  std::vector<Step> steps;
  const std::string t = lower(trim(text));
  if (t.empty() || t == "none") return steps;
  std::istringstream is(t);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    Step s;
    if (item == "fbr") s = Step::Fbr;
    else if (item == "at") s = Step::At;
    else if (item == "ffd") s = Step::Ffd;
    else throw InvalidArgument("unknown step '" + item + "' (expected fbr, at, ffd)");
    if (!steps.empty() && static_cast<int>(s) <= static_cast<int>(steps.back()))
      throw InvalidArgument("steps must be distinct and ordered fbr, at, ffd");
    steps.push_back(s);
  }
  return steps;
}

std::string configuration_name(const std::vector<Step>& steps) {
  if (steps.empty()) return "none";
  std::string s;
  for (Step st : steps) {
    if (!s.empty()) s += '+';
    s += to_string(st);
  }
  return s;
}

const std::vector<std::vector<Step>>& table_configurations() {
  using enum Step;
  static const std::vector<std::vector<Step>> configs{
      {Fbr, At, Ffd}, {Fbr, At}, {Fbr, Ffd}, {Fbr}, {At}, {At, Ffd}, {Ffd}, {}};
  return configs;
}

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Ok: return "ok";
    case RunStatus::FbrFailed: return "fbr_failed";
    case RunStatus::MetricError: return "metric_error";
    case RunStatus::LoadFailed: return "load_failed";
  }
  return "?";
}

Transform RegistrationResult::final_transform() const {
  return steps.empty() ? Transform{Affine6{}} : steps.back().transform;
}

PairSession::PairSession(Image retinography, Image angiography, RegistrationConfig cfg, std::string pair_id,
                         Cohort cohort)
    : fixed_(cfg.swap ? std::move(angiography) : std::move(retinography)),
      moving_(cfg.swap ? std::move(retinography) : std::move(angiography)),
      cfg_(std::move(cfg)),
      pair_id_(std::move(pair_id)),
      cohort_(cohort),
      metric_(fixed_, moving_, cfg_.scales) {
  try {
    initial_ = metric_.evaluate(Affine6{});
  } catch (const MetricError& e) {
    initial_error_ = e.what();
  }
  if (cfg_.dump_dir) {
    fs::create_directories(*cfg_.dump_dir);
    save_png_stretched(metric_.fixed().values, *cfg_.dump_dir / (pair_id_ + "_enhanced_fixed.png"));
    save_png_stretched(metric_.moving().values, *cfg_.dump_dir / (pair_id_ + "_enhanced_moving.png"));
  }
}

void PairSession::dump_landmarks(const LandmarkDetection& d, const std::string& tag) const {
  if (!cfg_.dump_dir) return;
  Image k(d.creaseness.width, d.creaseness.height,
          std::vector<double>(d.creaseness.values.begin(), d.creaseness.values.end()), Modality::Synthetic);
  for (double& v : k.data()) v = std::max(v, 0.0);
  save_png_stretched(k, *cfg_.dump_dir / (pair_id_ + "_creaseness_" + tag + ".png"));
  Image sk(d.skeleton.width, d.skeleton.height);
  for (int y = 0; y < sk.height(); ++y)
    for (int x = 0; x < sk.width(); ++x) sk(x, y) = d.skeleton.at(x, y) ? 1.0 : 0.0;
  save_png(sk, *cfg_.dump_dir / (pair_id_ + "_skeleton_" + tag + ".png"));
  std::ofstream(*cfg_.dump_dir / (pair_id_ + "_landmarks_" + tag + ".json")) << to_json(d.landmarks).dump(1);
}

StepRecord PairSession::run_fbr(const Prefix& from, Prefix& to) {
  StepRecord rec;
  rec.name = "fbr";
  rec.before = from.score;
  rec.transform = from.current;
  rec.score = {from.score, from.steps.empty() ? initial_.overlap_fraction : from.steps.back().score.overlap_fraction};
  rec.accepted = false;
  const auto t0 = std::chrono::steady_clock::now();
  const auto df = detect_landmarks(fixed_, vessel_polarity(fixed_.modality()), cfg_.crease, cfg_.link);
  const auto dm = detect_landmarks(moving_, vessel_polarity(moving_.modality()), cfg_.crease, cfg_.link);
  dump_landmarks(df, "fixed");
  dump_landmarks(dm, "moving");
  try {
    const MatchResult m = match_landmarks(df.landmarks, dm.landmarks, cfg_.match);
    try {
      const VeNccScore s = metric_.evaluate(m.transform);
      if (s.value >= from.score) {
        rec.transform = m.transform;
        rec.score = s;
        rec.accepted = true;
      } else {
        to.message = "fbr estimate lowered VE-NCC; kept the previous transform";
      }
    } catch (const MetricError& e) {
      to.message = std::string("fbr estimate rejected: ") + e.what();
    }
  } catch (const MatchFailure& e) {
    to.status = RunStatus::FbrFailed;
    to.message = e.what();
  }
  rec.wall_time = seconds_since(t0);
  return rec;
}

const PairSession::Prefix& PairSession::prefix(const std::vector<Step>& steps) {
  const std::string key = configuration_name(steps);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  Prefix p;
  if (steps.empty()) {
    if (initial_error_) {
      p.status = RunStatus::MetricError;
      p.message = *initial_error_;
    } else {
      p.score = initial_.value;
    }
    return cache_.emplace(key, std::move(p)).first->second;
  }

  const Prefix parent = prefix(std::vector<Step>(steps.begin(), steps.end() - 1));
  p = parent;
  if (parent.status == RunStatus::MetricError) return cache_.emplace(key, std::move(p)).first->second;

  const Step last = steps.back();
  if (last == Step::Fbr) {
    StepRecord rec = run_fbr(parent, p);
    p.current = rec.transform;
    p.score = rec.score.value;
    p.steps.push_back(std::move(rec));
    return cache_.emplace(key, std::move(p)).first->second;
  }

  StepRecord rec;
  rec.name = std::string(to_string(last));
  rec.before = parent.score;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (last == Step::At) {
      const AffineResult r = optimize_affine(metric_, parent.current, cfg_.affine);
      rec.transform = r.transform;
      rec.score = r.score;
    } else {
      const FfdResult r = optimize_ffd(metric_, affine_part(parent.current), cfg_.ffd, cfg_.grid_spacing);
      rec.transform = r.grid;
      rec.score = r.score;
    }
    rec.accepted = rec.score.value > parent.score;
    if (rec.score.value < parent.score) {
      // Cannot happen with accept-only optimizers; guard anyway.
      rec.transform = parent.current;
      rec.score.value = parent.score;
      rec.accepted = false;
    }
  } catch (const MetricError& e) {
    p.status = RunStatus::MetricError;
    p.message = rec.name + ": " + e.what();
    rec.transform = parent.current;
    rec.score.value = parent.score;
    rec.accepted = false;
  }
  rec.wall_time = seconds_since(t0);
  p.current = rec.transform;
  p.score = rec.score.value;
  p.steps.push_back(std::move(rec));
  return cache_.emplace(key, std::move(p)).first->second;
}

RegistrationResult PairSession::run(const std::vector<Step>& steps) {
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (static_cast<int>(steps[i]) <= static_cast<int>(steps[i - 1]))
      throw InvalidArgument("steps must be distinct and ordered fbr, at, ffd");
  const Prefix& p = prefix(steps);
  RegistrationResult r;
  r.pair_id = pair_id_;
  r.cohort = cohort_;
  r.configuration = steps;
  r.initial = initial_;
  r.steps = p.steps;
  r.status = p.status;
  r.message = p.message;
  r.final_score = r.steps.empty() ? initial_ : r.steps.back().score;
  return r;
}

std::pair<Image, Image> load_pair(const PairRecord& pair) {
  return {load_image(pair.retinography_path, Modality::Retinography),
          load_image(pair.angiography_path, Modality::Angiography)};
}

namespace {

RegistrationResult failed_result(const PairRecord& pair, const std::vector<Step>& steps, RunStatus status,
                                 const std::string& message) {
  RegistrationResult r;
  r.pair_id = pair.pair_id;
  r.cohort = pair.cohort;
  r.configuration = steps;
  r.status = status;
  r.message = message;
  return r;
}

}  // namespace

RegistrationResult run_configuration(const PairRecord& pair, const std::vector<Step>& steps,
                                     const RegistrationConfig& cfg) {
  std::pair<Image, Image> images;
  try {
    images = load_pair(pair);
  } catch (const IoError& e) {
    return failed_result(pair, steps, RunStatus::LoadFailed, e.what());
  }
  try {
    PairSession session(std::move(images.first), std::move(images.second), cfg, pair.pair_id, pair.cohort);
    return session.run(steps);
  } catch (const MetricError& e) {
    return failed_result(pair, steps, RunStatus::MetricError, e.what());
  }
}

namespace {

nlohmann::json transform_report(const RegistrationResult& r, bool swapped) {
  nlohmann::json j;
  j["pair_id"] = r.pair_id;
  j["cohort"] = std::string(to_string(r.cohort));
  j["configuration"] = configuration_name(r.configuration);
  j["status"] = std::string(to_string(r.status));
  j["fixed"] = swapped ? "angiography" : "retinography";
  j["initial_ve_ncc"] = r.initial.value;
  j["steps"] = nlohmann::json::array();
  for (const auto& s : r.steps)
    j["steps"].push_back({{"step", s.name},
                          {"ve_ncc", s.score.value},
                          {"overlap", s.score.overlap_fraction},
                          {"accepted", s.accepted},
                          {"wall_time_s", s.wall_time},
                          {"transform", to_json(s.transform)}});
  j["final_ve_ncc"] = r.final_score.value;
  j["transform"] = to_json(r.final_transform());
  if (!r.message.empty()) j["message"] = r.message;
  return j;
}

std::vector<RegistrationResult> evaluate_pair(const PairRecord& pair, const RegistrationConfig& cfg,
                                              const fs::path& out_dir, const EvaluationOptions& opts) {
  std::vector<RegistrationResult> out;
  std::pair<Image, Image> images;
  try {
    images = load_pair(pair);
  } catch (const IoError& e) {
    for (const auto& c : opts.configurations) out.push_back(failed_result(pair, c, RunStatus::LoadFailed, e.what()));
    return out;
  }
  try {
    PairSession session(std::move(images.first), std::move(images.second), cfg, pair.pair_id, pair.cohort);
    for (const auto& c : opts.configurations) out.push_back(session.run(c));
    const auto hybrid = std::max_element(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return a.configuration.size() < b.configuration.size();
    });
    if (hybrid != out.end() && !hybrid->hard_failure()) {
      if (opts.write_transforms)
        write_text(out_dir / ("transform_" + pair.pair_id + ".json"), transform_report(*hybrid, cfg.swap).dump(2));
      if (opts.write_overlays)
        save_png(checkerboard(session.fixed(), session.moving(), hybrid->final_transform()),
                 out_dir / ("overlay_" + pair.pair_id + ".png"));
    }
  } catch (const MetricError& e) {
    out.clear();
    for (const auto& c : opts.configurations) out.push_back(failed_result(pair, c, RunStatus::MetricError, e.what()));
  }
  return out;
}

}  // namespace

nlohmann::json registration_report(const RegistrationResult& r, bool swapped) { return transform_report(r, swapped); }

Evaluation evaluate_dataset(const std::vector<PairRecord>& pairs, const RegistrationConfig& cfg,
                            const fs::path& out_dir, const EvaluationOptions& opts) {
  if (pairs.empty()) throw DatasetError("evaluate_dataset needs at least one pair");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());

  std::vector<PairRecord> sorted = pairs;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.pair_id < b.pair_id; });

  std::vector<std::vector<RegistrationResult>> per_pair(sorted.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  const auto worker = [&] {
    for (std::size_t i = next++; i < sorted.size(); i = next++) {
      try {
        per_pair[i] = evaluate_pair(sorted[i], cfg, out_dir, opts);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(opts.jobs, 1)), 1,
                                                        sorted.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);

  Evaluation ev;
  for (auto& v : per_pair)
    for (auto& r : v) {
      ev.any_hard_failure = ev.any_hard_failure || r.hard_failure();
      ev.results.push_back(std::move(r));
    }
  write_report(ev.results, opts.configurations, out_dir);
  return ev;
}

}  // namespace retreg
