#include "svsde/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace svsde {

long TrajectorySet::n_observations() const {
  long n = 0;
  for (const auto& ind : individuals)
    for (const auto& seg : ind.segments) n += static_cast<long>(seg.size());
  return n;
}

long TrajectorySet::n_transitions() const {
  long n = 0;
  for (const auto& ind : individuals)
    for (const auto& seg : ind.segments) n += static_cast<long>(seg.size()) - 1;
  return n;
}

std::string IngestReport::to_json() const {
  nlohmann::json j{{"rows_in", rows_in},
                   {"duplicates", duplicates},
                   {"interpolated", interpolated},
                   {"clamped", clamped},
                   {"dropped_out_of_bounds", dropped_out_of_bounds},
                   {"dropped_short_segments", dropped_short_segments},
                   {"rows_out", rows_out},
                   {"segments", segments}};
  return j.dump(2);
}

std::vector<Segment> fill_gaps(const Segment& segment, long max_gap,
                               long* interpolated) {
  std::vector<Segment> out;
  if (segment.empty()) return out;
  Segment cur;
  cur.push_back(segment.front());
  for (std::size_t i = 1; i < segment.size(); ++i) {
    const auto& prev = cur.back();
    const auto& next = segment[i];
    const long gap = next.t - prev.t - 1;
    if (gap < 0) throw std::invalid_argument("fill_gaps: time indices not increasing");
    if (gap > max_gap) {
      out.push_back(std::move(cur));
      cur = Segment{next};
      continue;
    }
    for (long k = 1; k <= gap; ++k) {
      const double f = static_cast<double>(k) / (gap + 1);
      cur.push_back({prev.t + k, prev.x + f * (next.x - prev.x),
                     prev.y + f * (next.y - prev.y)});
      if (interpolated) ++*interpolated;
    }
    cur.push_back(next);
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<Segment> split_exit_segments(const Segment& records,
                                         const NestGeometry& geometry,
                                         const LoadOptions& options,
                                         IngestReport* report) {
  // Out-of-bounds beyond the clamp margin marks an exit; marginal excursions
  // are clamped to the bounds.
  std::vector<Segment> runs;
  Segment cur;
  for (const auto& rec : records) {
    Observation o = rec;
    const bool inside_margin =
        o.x >= geometry.x_lo - options.clamp_margin &&
        o.x <= geometry.x_hi + options.clamp_margin &&
        o.y >= geometry.y_lo - options.clamp_margin &&
        o.y <= geometry.y_hi + options.clamp_margin;
    if (!inside_margin) {
      if (report) ++report->dropped_out_of_bounds;
      if (!cur.empty()) runs.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    const double cx = std::clamp(o.x, geometry.x_lo, geometry.x_hi);
    const double cy = std::clamp(o.y, geometry.y_lo, geometry.y_hi);
    if ((cx != o.x || cy != o.y) && report) ++report->clamped;
    o.x = cx;
    o.y = cy;
    cur.push_back(o);
  }
  if (!cur.empty()) runs.push_back(std::move(cur));

  std::vector<Segment> segments;
  for (const auto& run : runs) {
    long interp = 0;
    for (auto& seg : fill_gaps(run, options.max_gap, &interp)) {
      if (seg.size() < 3) {
        if (report) report->dropped_short_segments += static_cast<long>(seg.size());
        continue;
      }
      segments.push_back(std::move(seg));
    }
    if (report) report->interpolated += interp;
  }
  return segments;
}

TrajectorySet load_trajectories(const std::string& path, const NestGeometry& geometry,
                                const LoadOptions& options, IngestReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trajectories: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_trajectories: empty file " + path);
  {
    std::string header = line;
    header.erase(std::remove_if(header.begin(), header.end(),
                                [](char c) { return c == ' ' || c == '\r'; }),
                 header.end());
    if (header != "id,t,x,y")
      throw std::runtime_error("load_trajectories: expected header id,t,x,y");
  }

  IngestReport rep;
  std::map<std::string, std::map<long, Observation>> by_id;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string id, ts, xs, ys;
    if (!std::getline(ss, id, ',') || !std::getline(ss, ts, ',') ||
        !std::getline(ss, xs, ',') || !std::getline(ss, ys))
      throw std::runtime_error("load_trajectories: malformed row at line " +
                               std::to_string(line_no));
    Observation o;
    try {
      o.t = std::stol(ts);
      o.x = std::stod(xs);
      o.y = std::stod(ys);
    } catch (const std::exception&) {
      throw std::runtime_error("load_trajectories: malformed row at line " +
                               std::to_string(line_no));
    }
    if (!std::isfinite(o.x) || !std::isfinite(o.y))
      throw std::runtime_error("load_trajectories: non-finite coordinate at line " +
                               std::to_string(line_no));
    ++rep.rows_in;
    auto [it, inserted] = by_id[id].emplace(o.t, o);
    if (!inserted) ++rep.duplicates;  // keep-first policy
  }

  TrajectorySet set;
  set.delta = options.delta;
  for (auto& [id, recs] : by_id) {
    Segment ordered;
    ordered.reserve(recs.size());
    for (auto& [t, o] : recs) ordered.push_back(o);
    Individual ind;
    ind.id = id;
    ind.segments = split_exit_segments(ordered, geometry, options, &rep);
    if (!ind.segments.empty()) set.individuals.push_back(std::move(ind));
  }
  rep.rows_out = set.n_observations();
  for (const auto& ind : set.individuals)
    rep.segments += static_cast<long>(ind.segments.size());
  if (report) *report = rep;
  return set;
}

void save_trajectories(const TrajectorySet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_trajectories: cannot open " + path);
  out << "id,t,x,y\n";
  out.precision(17);
  for (const auto& ind : set.individuals)
    for (const auto& seg : ind.segments)
      for (const auto& o : seg)
        out << ind.id << ',' << o.t << ',' << o.x << ',' << o.y << '\n';
}

void save_sim_path(const std::vector<std::pair<std::string, Matrix>>& paths,
                   double delta, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_sim_path: cannot open " + path);
  out << "id,t,x,y,vx,vy\n";
  out.precision(17);
  (void)delta;
  for (const auto& [id, m] : paths)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      out << id << ',' << i << ',' << m(i, 0) << ',' << m(i, 1) << ',' << m(i, 2)
          << ',' << m(i, 3) << '\n';
}

std::vector<std::pair<int, double>> empirical_speeds(const TrajectorySet& set,
                                                     const NestGeometry& geometry) {
  std::vector<std::pair<int, double>> out;
  for (const auto& ind : set.individuals)
    for (const auto& seg : ind.segments)
      for (std::size_t i = 0; i + 1 < seg.size(); ++i) {
        const double dx = seg[i + 1].x - seg[i].x;
        const double dy = seg[i + 1].y - seg[i].y;
        const double dt = (seg[i + 1].t - seg[i].t) * set.delta;
        out.emplace_back(geometry.section_of(seg[i].x, seg[i].y),
                         std::sqrt(dx * dx + dy * dy) / dt);
      }
  return out;
}

}  // namespace svsde
