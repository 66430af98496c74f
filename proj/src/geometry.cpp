#include "svsde/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace svsde {

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool on_line(const WallSegment& w, const Vec2& p, double tol) {
  const Vec2 d = w.b - w.a;
  return std::abs(cross2(d, p - w.a)) <= tol * d.norm();
}

double param_on(const WallSegment& w, const Vec2& p) {
  const Vec2 d = w.b - w.a;
  return (p - w.a).dot(d) / d.squaredNorm();
}

}  // namespace

std::optional<double> segment_intersection(const Vec2& p, const Vec2& q,
                                           const WallSegment& s) {
  const Vec2 r = q - p;
  const Vec2 d = s.b - s.a;
  const double denom = cross2(r, d);
  if (std::abs(denom) < 1e-14) return std::nullopt;  // parallel or degenerate
  const double t = cross2(s.a - p, d) / denom;
  const double u = cross2(s.a - p, r) / denom;
  if (t > 1e-12 && t <= 1.0 && u >= 0.0 && u <= 1.0) return t;
  return std::nullopt;
}

void NestGeometry::finalize() {
  solid.clear();
  std::vector<WallSegment> all = walls;
  all.push_back({{x_lo, y_lo}, {x_hi, y_lo}});
  all.push_back({{x_hi, y_lo}, {x_hi, y_hi}});
  all.push_back({{x_hi, y_hi}, {x_lo, y_hi}});
  all.push_back({{x_lo, y_hi}, {x_lo, y_lo}});

  const double tol = 1e-9;
  for (const auto& w : all) {
    // Doorway intervals lying on this wall, in wall parameter space.
    std::vector<std::pair<double, double>> holes;
    for (const auto& d : doorways) {
      if (!on_line(w, d.a, tol) || !on_line(w, d.b, tol)) continue;
      double t0 = param_on(w, d.a);
      double t1 = param_on(w, d.b);
      if (t0 > t1) std::swap(t0, t1);
      t0 = std::max(t0, 0.0);
      t1 = std::min(t1, 1.0);
      if (t1 > t0) holes.emplace_back(t0, t1);
    }
    std::sort(holes.begin(), holes.end());
    double cursor = 0.0;
    const Vec2 dir = w.b - w.a;
    auto emit = [&](double t0, double t1) {
      if (t1 - t0 > 1e-9)
        solid.push_back({w.a + t0 * dir, w.a + t1 * dir});
    };
    for (const auto& [h0, h1] : holes) {
      emit(cursor, h0);
      cursor = std::max(cursor, h1);
    }
    emit(cursor, 1.0);
  }
}

int NestGeometry::section_of(double x, double y) const {
  for (std::size_t i = 0; i < sections.size(); ++i)
    if (sections[i].contains(x, y)) return static_cast<int>(i);
  return -1;
}

NestGeometry load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_geometry: cannot open " + path);
  nlohmann::json j;
  in >> j;

  NestGeometry g;
  const auto& b = j.at("bounds");
  g.x_lo = b.at(0);
  g.y_lo = b.at(1);
  g.x_hi = b.at(2);
  g.y_hi = b.at(3);
  auto read_segment = [](const nlohmann::json& s) -> WallSegment {
    return {Vec2(s.at(0).get<double>(), s.at(1).get<double>()),
            Vec2(s.at(2).get<double>(), s.at(3).get<double>())};
  };
  for (const auto& s : j.value("walls", nlohmann::json::array()))
    g.walls.push_back(read_segment(s));
  for (const auto& s : j.value("doorways", nlohmann::json::array()))
    g.doorways.push_back(read_segment(s));
  for (const auto& s : j.value("sections", nlohmann::json::array())) {
    const auto& r = s.at("rect");
    g.sections.push_back({s.at("name"), r.at(0), r.at(1), r.at(2), r.at(3)});
  }
  if (j.contains("exit")) g.exit = Vec2(j["exit"].at(0), j["exit"].at(1));
  g.finalize();
  return g;
}

void save_geometry(const NestGeometry& g, const std::string& path) {
  nlohmann::json j;
  j["bounds"] = {g.x_lo, g.y_lo, g.x_hi, g.y_hi};
  auto seg = [](const WallSegment& s) {
    return nlohmann::json{s.a.x(), s.a.y(), s.b.x(), s.b.y()};
  };
  j["walls"] = nlohmann::json::array();
  for (const auto& w : g.walls) j["walls"].push_back(seg(w));
  j["doorways"] = nlohmann::json::array();
  for (const auto& d : g.doorways) j["doorways"].push_back(seg(d));
  j["sections"] = nlohmann::json::array();
  for (const auto& s : g.sections)
    j["sections"].push_back(
        {{"name", s.name}, {"rect", {s.x_lo, s.y_lo, s.x_hi, s.y_hi}}});
  if (g.exit) j["exit"] = {g.exit->x(), g.exit->y()};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_geometry: cannot open " + path);
  out << j.dump(2) << "\n";
}

NestGeometry four_chamber_nest() {
  NestGeometry g;
  g.x_lo = 0.0;
  g.y_lo = 0.0;
  g.x_hi = 65.0;
  g.y_hi = 160.0;

  // Chambers bottom to top: IV [0,40), III [40,80), II [80,120), I [120,160].
  // 6mm doors between chambers, 12mm passages across mid-chamber barriers.
  const double door_c = 32.5, door_h = 3.0;
  const double pass_c = 32.5, pass_h = 6.0;
  for (double y : {40.0, 80.0, 120.0}) {
    g.walls.push_back({{0.0, y}, {65.0, y}});
    g.doorways.push_back({{door_c - door_h, y}, {door_c + door_h, y}});
  }
  for (double y : {20.0, 60.0, 100.0, 140.0}) {
    g.walls.push_back({{0.0, y}, {65.0, y}});
    g.doorways.push_back({{pass_c - pass_h, y}, {pass_c + pass_h, y}});
  }

  const char* names[] = {"IVb", "IVa", "IIIb", "IIIa", "IIb", "IIa", "Ib", "Ia"};
  for (int i = 0; i < 8; ++i) {
    const double y0 = 20.0 * i;
    const double y1 = (i == 7) ? 160.0 + 1e-9 : 20.0 * (i + 1);
    g.sections.push_back({names[i], 0.0, y0, 65.0 + 1e-9, y1});
  }
  g.exit = Vec2(3.0, 0.0);
  g.finalize();
  return g;
}

}  // namespace svsde
