#include "ffvio/trajectory_io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ffvio {

std::string format_tum_line(const StampedPose& sp) {
  const auto& t = sp.pose.translation;
  const auto& q = sp.pose.rotation;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f", sp.timestamp,
                t.x(), t.y(), t.z(), q.x, q.y, q.z, q.w);
  return buf;
}

void write_tum(std::ostream& os, const Trajectory& trajectory) {
  for (const auto& sp : trajectory) os << format_tum_line(sp) << '\n';
}

void write_tum(const std::filesystem::path& path, const Trajectory& trajectory) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tum(os, trajectory);
}

Trajectory read_tum(std::istream& is) {
  Trajectory out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw std::runtime_error("malformed TUM line " + std::to_string(line_no));
    }
    out.push_back(t, Transform{Quaternion{qw, qx, qy, qz}.normalized(), Vec3(tx, ty, tz)});
  }
  return out;
}

Trajectory read_tum(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_tum(is);
}

}  // namespace ffvio
