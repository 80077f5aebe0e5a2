#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "retreg/crease.hpp"
#include "retreg/enhance.hpp"
#include "retreg/fbr.hpp"
#include "retreg/ibr.hpp"
#include "retreg/image.hpp"
#include "retreg/landmarks.hpp"
#include "retreg/transform.hpp"

namespace retreg {

enum class Cohort { Healthy, Pathological, Synthetic };

std::string_view to_string(Cohort c);
Cohort cohort_from_string(std::string_view s);  // throws InvalidArgument
inline constexpr Cohort kAllCohorts[] = {Cohort::Healthy, Cohort::Pathological, Cohort::Synthetic};

struct PairRecord {
  std::string pair_id;
  std::filesystem::path retinography_path;
  std::filesystem::path angiography_path;
  Cohort cohort = Cohort::Healthy;
};

struct Dataset {
  std::vector<PairRecord> pairs;     // sorted by pair_id
  std::vector<std::string> warnings;  // one line per skipped pair
};

// Reads either the `<root>/<cohort>/<id>/{retino.*,angio.*}` layout or, when
// `manifest` is given, a CSV with header pair_id,retino,angio,cohort. Relative
// manifest paths resolve against `root` (the manifest's directory when root is
// empty). Broken pairs become warnings. Throws DatasetError when nothing
// usable remains or the manifest is malformed (message carries the line).
Dataset ingest_dataset(const std::filesystem::path& root,
                       const std::optional<std::filesystem::path>& manifest = std::nullopt);

enum class Step { Fbr, At, Ffd };

std::string_view to_string(Step s);
// "fbr,at,ffd" style list; "" or "none" is the empty chain. Steps must be
// distinct and in fbr < at < ffd order.
std::vector<Step> parse_steps(std::string_view text);
std::string configuration_name(const std::vector<Step>& steps);  // "fbr+at+ffd" or "none"

// The eight configurations in table order, ending with the unregistered row.
const std::vector<std::vector<Step>>& table_configurations();

struct StepRecord {
  std::string name;  // none, fbr, at, ffd
  Transform transform = Affine6{};
  VeNccScore score;
  double before = 0.0;     // VE-NCC of the transform the step started from
  double wall_time = 0.0;  // s
  bool accepted = true;    // false when the step's proposal was discarded
};

enum class RunStatus { Ok, FbrFailed, MetricError, LoadFailed };
std::string_view to_string(RunStatus s);

struct RegistrationResult {
  std::string pair_id;
  Cohort cohort = Cohort::Healthy;
  std::vector<Step> configuration;
  VeNccScore initial;  // identity
  std::vector<StepRecord> steps;
  VeNccScore final_score;
  RunStatus status = RunStatus::Ok;
  std::string message;

  // The transform of the last step, or identity.
  Transform final_transform() const;
  bool hard_failure() const { return status == RunStatus::MetricError || status == RunStatus::LoadFailed; }
};

struct RegistrationConfig {
  ScaleSpaceConfig scales;
  CreaseConfig crease;
  LinkConfig link;
  MatchConstraints match;
  OptimizerConfig affine = OptimizerConfig::affine_defaults();
  OptimizerConfig ffd = OptimizerConfig::ffd_defaults();
  double grid_spacing = kDefaultGridSpacing;
  // Register retinography onto angiography instead of the reverse.
  bool swap = false;
  std::optional<std::filesystem::path> dump_dir;
};

// One image pair with its enhanced images and landmarks computed once.
// Chains sharing a prefix reuse the prefix's results.
class PairSession {
 public:
  PairSession(Image retinography, Image angiography, RegistrationConfig cfg, std::string pair_id = "pair",
              Cohort cohort = Cohort::Synthetic);

  RegistrationResult run(const std::vector<Step>& steps);

  const Image& fixed() const { return fixed_; }
  const Image& moving() const { return moving_; }
  const VeNccMetric& metric() const { return metric_; }

 private:
  struct Prefix {
    std::vector<StepRecord> steps;
    Transform current = Affine6{};
    double score = 0.0;
    RunStatus status = RunStatus::Ok;
    std::string message;
  };

  const Prefix& prefix(const std::vector<Step>& steps);
  StepRecord run_fbr(const Prefix& from, Prefix& to);
  void dump_landmarks(const LandmarkDetection& d, const std::string& tag) const;

  Image fixed_, moving_;
  RegistrationConfig cfg_;
  std::string pair_id_;
  Cohort cohort_;
  VeNccMetric metric_;
  VeNccScore initial_;
  std::optional<std::string> initial_error_;
  std::map<std::string, Prefix> cache_;
};

std::pair<Image, Image> load_pair(const PairRecord& pair);

// JSON record of a result: per-step scores and transforms plus the final one.
nlohmann::json registration_report(const RegistrationResult& r, bool swapped = false);

RegistrationResult run_configuration(const PairRecord& pair, const std::vector<Step>& steps,
                                     const RegistrationConfig& cfg);

struct EvaluationOptions {
  std::vector<std::vector<Step>> configurations = table_configurations();
  int jobs = 1;
  bool write_overlays = true;
  bool write_transforms = true;
};

struct Evaluation {
  std::vector<RegistrationResult> results;  // pair_id order, then configuration order
  bool any_hard_failure = false;
};

// Runs every configuration on every pair (pairs in parallel) and writes the
// report files into `out_dir`.
Evaluation evaluate_dataset(const std::vector<PairRecord>& pairs, const RegistrationConfig& cfg,
                            const std::filesystem::path& out_dir, const EvaluationOptions& opts = {});

}  // namespace retreg
