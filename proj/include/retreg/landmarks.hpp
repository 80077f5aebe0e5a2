#pragma once

#include <string_view>
#include <vector>

#include "json.hpp"
#include "retreg/crease.hpp"
#include "retreg/geometry.hpp"

namespace retreg {

enum class LandmarkKind { Bifurcation, Crossover };

std::string_view to_string(LandmarkKind k);

// A vessel junction. Orientations are the incident vessel directions,
// pointing away from the junction, in [0, 2*pi).
struct Landmark {
  Vec2 position{};
  std::vector<double> orientations;
  LandmarkKind kind = LandmarkKind::Bifurcation;
};

struct LinkConfig {
  double max_extension = 10.0;           // px
  double crossover_max_dist = 15.0;      // px
  double crossover_max_angle = deg2rad(30.0);
  double merge_radius = 2.0;             // px
  int direction_window = 8;              // px used for local vessel directions

  void validate() const;
};

// Extends every segment end along its end direction by up to max_extension
// pixels and emits a bifurcation where the extension meets another segment
// (1 px tolerance band). Candidates within merge_radius are fused.
std::vector<Landmark> detect_bifurcations(const std::vector<Segment>& segments, const LinkConfig& cfg = {});

struct CrossoverResult {
  std::vector<Landmark> bifurcations;  // survivors
  std::vector<Landmark> crossovers;

  std::vector<Landmark> all() const;
};

// Fuses pairs of nearby bifurcations that share their through-vessel axis
// into crossovers located at the pair midpoint.
CrossoverResult detect_crossovers(const std::vector<Landmark>& bifurcations, const LinkConfig& cfg = {});

// The through axis of a bifurcation: the two most nearly opposite arms.
// Returns indices into orientations; the remaining index is the branch.
struct ThroughAxis {
  std::size_t a = 0, b = 1, branch = 2;
  double axis_angle = 0.0;  // undirected, [0, pi)
};
ThroughAxis through_axis(const Landmark& bif);

struct LandmarkDetection {
  CreasenessMap creaseness;
  VesselSkeleton skeleton;
  std::vector<Segment> segments;
  std::vector<Landmark> landmarks;
};

// Full chain: creaseness -> skeleton -> segments -> bifurcations -> crossovers.
LandmarkDetection detect_landmarks(const Image& img, Polarity polarity, const CreaseConfig& crease = {},
                                   const LinkConfig& link = {});

nlohmann::json to_json(const std::vector<Landmark>& landmarks);
std::vector<Landmark> landmarks_from_json(const nlohmann::json& j);

}  // namespace retreg
