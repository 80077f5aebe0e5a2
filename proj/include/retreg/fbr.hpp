#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"
#include "retreg/landmarks.hpp"
#include "retreg/transform.hpp"

namespace retreg {

struct MatchConstraints {
  double s_min = 0.5;
  double s_max = 2.0;
  double angle_tolerance = deg2rad(15.0);
  double inlier_radius = 8.0;  // px

  void validate() const;
};

struct MatchStats {
  std::uint64_t enumerated = 0;          // (i,j) -> (k,l) hypotheses considered
  std::uint64_t scale_pruned = 0;
  std::uint64_t orientation_pruned = 0;
  std::uint64_t scored = 0;              // hypotheses that reached inlier scoring
};

struct MatchResult {
  Similarity4 transform;
  // (fixed landmark index, moving landmark index)
  std::vector<std::pair<std::size_t, std::size_t>> correspondences;
  std::size_t score = 0;
  double mean_residual = 0.0;
  MatchStats stats;
};

// The similarity mapping p1 -> q1 and p2 -> q2.
Similarity4 similarity_from_two_pairs(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2);

// Closed-form least-squares similarity over point pairs (at least two).
Similarity4 fit_similarity(const std::vector<Vec2>& from, const std::vector<Vec2>& to);

// Exhaustive two-pair hypothesis search. Fixed landmarks are mapped onto
// moving landmarks. Throws MatchFailure when no hypothesis survives.
MatchResult match_landmarks(const std::vector<Landmark>& fixed, const std::vector<Landmark>& moving,
                            const MatchConstraints& c = {});

nlohmann::json to_json(const MatchResult& r);

}  // namespace retreg
