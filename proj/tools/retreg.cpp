// retreg: multimodal retinal registration driver.
//
//   retreg register <retino> <angio> [--steps fbr,at,ffd] [--out dir]
//   retreg enhance <image> --modality r|a --out enhanced.png
//   retreg landmarks <image> --modality r|a [--out landmarks.json]
//   retreg evaluate <root> [--manifest pairs.csv] [--jobs N] [--out dir]
//   retreg synth --out <root> [--seed S] [--count N]
//
// Exit codes: 0 ok, 1 usage, 2 dataset/input, 3 a pair hard-failed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "retreg/error.hpp"
#include "retreg/pipeline.hpp"
#include "retreg/report.hpp"
#include "retreg/synth.hpp"

namespace fs = std::filesystem;
using namespace retreg;

namespace {

enum Exit { kOk = 0, kUsage = 1, kDataset = 2, kPairFailed = 3 };

struct Common {
  std::vector<double> scales{1, 2, 4, 8, 16};
  std::string steps = "fbr,at,ffd";
  bool swap = false;
  std::string dump_dir;
  int jobs = 1;
  std::uint64_t seed = 1;
  std::string out = ".";
  std::string manifest;
  double grid_spacing = kDefaultGridSpacing;
  double threshold = CreaseConfig{}.threshold;
};

RegistrationConfig make_config(const Common& c) {
  RegistrationConfig cfg;
  cfg.scales.scales = c.scales;
  cfg.scales.validate();
  cfg.grid_spacing = c.grid_spacing;
  if (!(c.grid_spacing >= 4.0)) throw InvalidArgument("--grid-spacing must be at least 4 px");
  cfg.crease.threshold = c.threshold;
  cfg.crease.validate();
  cfg.swap = c.swap;
  if (!c.dump_dir.empty()) cfg.dump_dir = fs::path(c.dump_dir);
  return cfg;
}

Modality parse_modality(const std::string& m) {
  if (m == "r" || m == "retinography") return Modality::Retinography;
  if (m == "a" || m == "angiography") return Modality::Angiography;
  throw InvalidArgument("--modality must be r or a");
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (!fs::is_directory(p)) throw IoError("cannot create directory " + p.string());
}

int cmd_register(const Common& c, const std::string& retino, const std::string& angio, const std::string& id_in) {
  const auto steps = parse_steps(c.steps);
  const RegistrationConfig cfg = make_config(c);
  PairRecord pair{id_in.empty() ? fs::path(retino).stem().string() : id_in, retino, angio, Cohort::Healthy};
  for (const fs::path& p : {pair.retinography_path, pair.angiography_path})
    if (!fs::is_regular_file(p)) throw DatasetError("missing input image " + p.string());
  auto [r_img, a_img] = load_pair(pair);
  ensure_dir(c.out);
  PairSession session(std::move(r_img), std::move(a_img), cfg, pair.pair_id, pair.cohort);
  const RegistrationResult res = session.run(steps);
  std::printf("%-5s ve_ncc=%.6f\n", "none", res.initial.value);
  for (const auto& s : res.steps)
    std::printf("%-5s ve_ncc=%.6f overlap=%.3f %s %.2fs\n", s.name.c_str(), s.score.value, s.score.overlap_fraction,
                s.accepted ? "accepted" : "kept-previous", s.wall_time);
  if (!res.message.empty()) std::fprintf(stderr, "%s: %s\n", pair.pair_id.c_str(), res.message.c_str());
  if (res.hard_failure()) return kPairFailed;
  write_text(fs::path(c.out) / ("transform_" + pair.pair_id + ".json"), registration_report(res, c.swap).dump(2));
  save_png(checkerboard(session.fixed(), session.moving(), res.final_transform()),
           fs::path(c.out) / ("overlay_" + pair.pair_id + ".png"));
  return kOk;
}

int cmd_enhance(const Common& c, const std::string& input, const std::string& modality) {
  const Modality m = parse_modality(modality);
  if (!fs::is_regular_file(input)) throw DatasetError("missing input image " + input);
  ScaleSpaceConfig sc;
  sc.scales = c.scales;
  const EnhancedImage e = vessel_enhance(load_image(input, m), m, sc);
  fs::path out = c.out;
  if (out == "." || fs::is_directory(out)) out /= fs::path(input).stem().string() + "_enhanced.png";
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  save_png_stretched(e.values, out);
  std::printf("%s\n", out.string().c_str());
  return kOk;
}

int cmd_landmarks(const Common& c, const std::string& input, const std::string& modality) {
  const Modality m = parse_modality(modality);
  if (!fs::is_regular_file(input)) throw DatasetError("missing input image " + input);
  const RegistrationConfig cfg = make_config(c);
  const LandmarkDetection d = detect_landmarks(load_image(input, m), vessel_polarity(m), cfg.crease, cfg.link);
  if (cfg.dump_dir) {
    ensure_dir(*cfg.dump_dir);
    const std::string stem = fs::path(input).stem().string();
    Image k(d.creaseness.width, d.creaseness.height);
    for (std::size_t i = 0; i < k.size(); ++i) k.data()[i] = std::max(d.creaseness.values[i], 0.0);
    save_png_stretched(k, *cfg.dump_dir / (stem + "_creaseness.png"));
    Image sk(d.skeleton.width, d.skeleton.height);
    for (std::size_t i = 0; i < sk.size(); ++i) sk.data()[i] = d.skeleton.mask[i] ? 1.0 : 0.0;
    save_png(sk, *cfg.dump_dir / (stem + "_skeleton.png"));
  }
  const std::string text = to_json(d.landmarks).dump(1);
  if (c.out == ".") {
    std::printf("%s\n", text.c_str());
  } else {
    const fs::path out(c.out);
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    write_text(out, text);
  }
  std::fprintf(stderr, "%zu landmarks, %zu segments\n", d.landmarks.size(), d.segments.size());
  return kOk;
}

int cmd_evaluate(const Common& c, const std::string& root) {
  const RegistrationConfig cfg = make_config(c);
  if (c.jobs < 1) throw InvalidArgument("--jobs must be >= 1");
  std::optional<fs::path> manifest;
  if (!c.manifest.empty()) manifest = fs::path(c.manifest);
  const Dataset ds = ingest_dataset(root, manifest);
  for (const auto& w : ds.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::fprintf(stderr, "%zu pairs\n", ds.pairs.size());
  EvaluationOptions opts;
  opts.jobs = c.jobs;
  const Evaluation ev = evaluate_dataset(ds.pairs, cfg, c.out, opts);
  std::cout << summary_csv(ev.results, opts.configurations);
  for (const auto& r : ev.results)
    if (r.hard_failure())
      std::fprintf(stderr, "%s [%s]: %s\n", r.pair_id.c_str(), configuration_name(r.configuration).c_str(),
                   r.message.c_str());
  return ev.any_hard_failure ? kPairFailed : kOk;
}

int cmd_synth(const Common& c, int count, double amplitude, double max_translation, const std::string& size) {
  if (count < 1) throw InvalidArgument("--count must be >= 1");
  SyntheticSceneConfig base;
  if (!size.empty()) {
    int w = 0, h = 0;
    char tail = 0;
    if (std::sscanf(size.c_str(), "%dx%d%c", &w, &h, &tail) != 2 || w < 64 || h < 64)
      throw InvalidArgument("--size expects WxH with both sides >= 64");
    base.width = w;
    base.height = h;
  }
  SceneDraw draw;
  draw.scale_min = 0.85;
  draw.scale_max = 1.15;
  draw.angle_max = deg2rad(10.0);
  draw.translation_min = 0.3 * max_translation;
  draw.translation_max = max_translation;
  draw.anisotropy = 0.03;
  draw.shear = 0.03;
  draw.sinusoid_amplitude = amplitude;
  const fs::path root = fs::path(c.out) / "synthetic";
  for (int k = 0; k < count; ++k) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(k);
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04llu", static_cast<unsigned long long>(seed));
    const SyntheticPair p = synth_pair(random_scene(seed, draw, base));
    const fs::path dir = root / id;
    ensure_dir(dir);
    save_png(p.retinography, dir / "retino.png");
    save_png(p.angiography, dir / "angio.png");
    nlohmann::json truth;
    truth["seed"] = seed;
    truth["base"] = to_json(p.truth.base);
    truth["sinusoid"] = {{"amplitude", p.truth.sinusoid.amplitude}, {"wavelength", p.truth.sinusoid.wavelength}};
    truth["landmarks"] = to_json(p.landmarks);
    write_text(dir / "truth.json", truth.dump(1));
    std::printf("%s\n", dir.string().c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal retinal image registration (retinography / fluorescein angiography)"};
  app.require_subcommand(1);
  Common c;

  const auto add_scales = [&c](CLI::App* sub) {
    sub->add_option("--scales", c.scales, "Laplacian scales (Gaussian variances, px^2)")->delimiter(',');
  };

  std::string retino, angio, pair_id;
  auto* reg = app.add_subcommand("register", "Register one retinography/angiography pair");
  reg->add_option("retino", retino, "Retinography image")->required();
  reg->add_option("angio", angio, "Angiography image")->required();
  reg->add_option("--steps", c.steps, "Chain of steps: fbr,at,ffd (or none)");
  reg->add_flag("--swap", c.swap, "Use the angiography as the fixed image");
  reg->add_option("--dump-intermediate", c.dump_dir, "Write enhanced, creaseness and skeleton images here");
  reg->add_option("--out", c.out, "Output directory");
  reg->add_option("--id", pair_id, "Pair id used in output names");
  reg->add_option("--grid-spacing", c.grid_spacing, "FFD control point spacing (px)");
  reg->add_option("--threshold", c.threshold, "Creaseness threshold relative to the maximum");
  add_scales(reg);

  std::string image, modality;
  auto* enh = app.add_subcommand("enhance", "Write the vessel-enhanced image");
  enh->add_option("image", image, "Input image")->required();
  enh->add_option("--modality", modality, "r (retinography) or a (angiography)")->required();
  enh->add_option("--out", c.out, "Output PNG or directory");
  add_scales(enh);

  auto* lm = app.add_subcommand("landmarks", "Detect bifurcations and crossovers");
  lm->add_option("image", image, "Input image")->required();
  lm->add_option("--modality", modality, "r (retinography) or a (angiography)")->required();
  lm->add_option("--out", c.out, "Output JSON (stdout when omitted)");
  lm->add_option("--dump-intermediate", c.dump_dir, "Write creaseness and skeleton images here");
  lm->add_option("--threshold", c.threshold, "Creaseness threshold relative to the maximum");

  std::string root;
  auto* ev = app.add_subcommand("evaluate", "Run all eight configurations over a dataset");
  ev->add_option("root", root, "Dataset root")->required();
  ev->add_option("--manifest", c.manifest, "CSV with pair_id,retino,angio,cohort");
  ev->add_option("--jobs", c.jobs, "Pairs processed concurrently");
  ev->add_option("--out", c.out, "Report directory");
  ev->add_flag("--swap", c.swap, "Use the angiography as the fixed image");
  ev->add_option("--grid-spacing", c.grid_spacing, "FFD control point spacing (px)");
  add_scales(ev);

  int count = 1;
  double amplitude = 3.0, max_translation = 50.0;
  std::string size;
  auto* syn = app.add_subcommand("synth", "Write synthetic pairs with ground truth");
  syn->add_option("--out", c.out, "Dataset root (pairs go to <out>/synthetic/<id>)")->required();
  syn->add_option("--seed", c.seed, "First scene seed");
  syn->add_option("--count", count, "Number of pairs");
  syn->add_option("--amplitude", amplitude, "Sinusoidal warp amplitude (px)");
  syn->add_option("--max-translation", max_translation, "Largest translation drawn (px)");
  syn->add_option("--size", size, "Image size WxH (default 720x576)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*reg) return cmd_register(c, retino, angio, pair_id);
    if (*enh) return cmd_enhance(c, image, modality);
    if (*lm) return cmd_landmarks(c, image, modality);
    if (*ev) return cmd_evaluate(c, root);
    if (*syn) return cmd_synth(c, count, amplitude, max_translation, size);
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const DatasetError& e) {
    std::fprintf(stderr, "dataset error: %s\n", e.what());
    return kDataset;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kDataset;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kPairFailed;
  }
  return kUsage;
}
