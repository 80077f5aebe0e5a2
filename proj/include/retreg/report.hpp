#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "retreg/pipeline.hpp"

namespace retreg {

struct CohortStats {
  std::size_t count = 0;   // pairs with a final score
  std::size_t failed = 0;  // hard failures, excluded from the statistics
  std::optional<double> mean;
  std::optional<double> stddev;  // unbiased; needs count >= 2
};

CohortStats cohort_stats(const std::vector<RegistrationResult>& results, const std::vector<Step>& configuration,
                         Cohort cohort);

// Scores as (before, after) points of one step of one configuration.
std::vector<std::pair<double, double>> step_points(const std::vector<RegistrationResult>& results,
                                                   const std::vector<Step>& configuration, Step step, Cohort cohort);

// Mean over points of (after - before) / max(before, 1e-6), in percent.
double mean_improvement_percent(const std::vector<std::pair<double, double>>& points);

// Configuration x cohort table; every cohort gets a row, even when empty.
std::string summary_csv(const std::vector<RegistrationResult>& results,
                        const std::vector<std::vector<Step>>& configurations);
std::string pairs_csv(const std::vector<RegistrationResult>& results);

struct CdfSeries {
  std::string label;
  std::vector<double> values;
};
std::string cdf_svg(const std::string& title, const std::vector<CdfSeries>& series);
std::string scatter_svg(const std::string& title, const std::vector<std::pair<double, double>>& points);

// Alternating tiles of the fixed image and the warped moving image, each
// stretched to [0, 1]; pixels without a moving sample show the fixed image.
Image checkerboard(const Image& fixed, const Image& moving, const Transform& tf, int tiles = 8);

void write_text(const std::filesystem::path& path, const std::string& text);

// summary.csv, pairs.csv, cdf_<cohort>.svg, scatter_<step>_<cohort>.svg.
void write_report(const std::vector<RegistrationResult>& results,
                  const std::vector<std::vector<Step>>& configurations, const std::filesystem::path& out_dir);

}  // namespace retreg
