#pragma once

#include <string>
#include <vector>

#include "svsde/geometry.hpp"
#include "svsde/types.hpp"

namespace svsde {

struct Observation {
  long t = 0;  // integer time index, unit stride within a segment
  double x = 0;
  double y = 0;
};

using Segment = std::vector<Observation>;

struct Individual {
  std::string id;
  std::vector<Segment> segments;
};

/// Uniformly spaced (t, x, y) observations per individual, split into
/// independent segments (each exit/re-entry starts a new one).
struct TrajectorySet {
  std::vector<Individual> individuals;
  double delta = 1.0;  // seconds per time index

  long n_observations() const;
  long n_transitions() const;  // sum over segments of (length - 1)
};

struct IngestReport {
  long rows_in = 0;
  long duplicates = 0;
  long interpolated = 0;
  long clamped = 0;
  long dropped_out_of_bounds = 0;
  long dropped_short_segments = 0;
  long rows_out = 0;
  long segments = 0;

  std::string to_json() const;
};

struct LoadOptions {
  long max_gap = 5;           // gaps up to this many steps are interpolated
  double clamp_margin = 1.0;  // mm outside bounds still treated as in-nest
  double delta = 1.0;
};

/// Parse and validate `id,t,x,y` CSV: duplicates resolved keep-first, short
/// gaps interpolated, exits split into independent segments, segments with
/// fewer than 3 observations dropped.
TrajectorySet load_trajectories(const std::string& path, const NestGeometry& geometry,
                                const LoadOptions& options, IngestReport* report = nullptr);

/// Write `id,t,x,y` CSV (round-trips through load_trajectories on clean data).
void save_trajectories(const TrajectorySet& set, const std::string& path);

/// Write `id,t,x,y,vx,vy` CSV for a simulated path.
void save_sim_path(const std::vector<std::pair<std::string, Matrix>>& paths,
                   double delta, const std::string& path);

/// Interpolate gaps of length <= max_gap linearly; longer gaps split the
/// segment. `interpolated` counts inserted records.
std::vector<Segment> fill_gaps(const Segment& segment, long max_gap,
                               long* interpolated = nullptr);

/// Split one individual's records into independent in-nest segments at
/// absence spans and out-of-bounds exits; fragments under 3 observations
/// are dropped.
std::vector<Segment> split_exit_segments(const Segment& records,
                                         const NestGeometry& geometry,
                                         const LoadOptions& options,
                                         IngestReport* report = nullptr);

/// Per-step speeds tagged by the section of the step's origin. Row format:
/// (section index, speed). Section -1 collects points outside all sections.
std::vector<std::pair<int, double>> empirical_speeds(const TrajectorySet& set,
                                                     const NestGeometry& geometry);

}  // namespace svsde
