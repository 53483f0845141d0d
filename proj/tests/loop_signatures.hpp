#pragma once

// Synthetic place signatures with chosen similarity to a 100-id query.

#include <cmath>
#include <vector>

#include "ffvio/loop_closure.hpp"

namespace ffvio::loop_signatures {

// Signature sharing round(score * 100) ids with the 100-id query.
inline PlaceSignature scored(double score, int& fresh) {
  std::vector<int> ids;
  const int shared = static_cast<int>(std::lround(score * 100));
  for (int i = 0; i < shared; ++i) ids.push_back(i);
  while (static_cast<int>(ids.size()) < 100) ids.push_back(fresh++);
  return PlaceSignature::from_ids(0, ids);
}

inline PlaceSignature query() {
  std::vector<int> ids;
  for (int i = 0; i < 100; ++i) ids.push_back(i);
  return PlaceSignature::from_ids(0, ids);
}

// Database of `guard` recent entries (score 0.9, ignored) after `old` scores.
inline std::vector<PlaceSignature> database(const std::vector<double>& old, std::size_t guard = 20) {
  int fresh = 1000;
  std::vector<PlaceSignature> db;
  for (double s : old) db.push_back(scored(s, fresh));
  for (std::size_t i = 0; i < guard; ++i) db.push_back(scored(0.9, fresh));
  return db;
}

}  // namespace ffvio::loop_signatures
