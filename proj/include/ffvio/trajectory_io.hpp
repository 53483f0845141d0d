#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ffvio/geometry.hpp"

namespace ffvio {

/// One pose per line: "timestamp tx ty tz qx qy qz qw", nine decimals.
std::string format_tum_line(const StampedPose& sp);
void write_tum(std::ostream& os, const Trajectory& trajectory);
void write_tum(const std::filesystem::path& path, const Trajectory& trajectory);

/// Reads TUM lines; blank lines and lines starting with '#' are skipped.
Trajectory read_tum(std::istream& is);
Trajectory read_tum(const std::filesystem::path& path);

}  // namespace ffvio
