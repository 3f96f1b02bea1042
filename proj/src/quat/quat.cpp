#include "surfnet/quat.hpp"

#include <algorithm>
#include <string>

#include "surfnet/error.hpp"

namespace surfnet {

bool block_is_valid(const QuatBlock& m, double tol) {
  const Quaternion q{m(0, 0), m(1, 0), m(2, 0), m(3, 0)};
  const QuatBlock ref = to_block(q);
  for (int i = 0; i < 16; ++i) {
    if (!(std::abs(ref.m[i] - m.m[i]) <= tol)) return false;
  }
  return true;
}

Quaternion from_block(const QuatBlock& m, double tol) {
  if (!block_is_valid(m, tol)) {
    throw InvalidBlock("4x4 block does not have quaternion structure");
  }
  return {m(0, 0), m(1, 0), m(2, 0), m(3, 0)};
}

QuatBlock block_multiply(const QuatBlock& x, const QuatBlock& y) {
  QuatBlock out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += x(r, k) * y(k, c);
      out(r, c) = s;
    }
  }
  return out;
}

QuatBlock block_transpose(const QuatBlock& x) {
  QuatBlock out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out(r, c) = x(c, r);
  }
  return out;
}

std::vector<Quaternion> split_lanes(std::span<const double> features) {
  if (features.size() % 4 != 0) {
    throw NonQuadChannels("feature length " + std::to_string(features.size()) +
                          " is not a multiple of 4");
  }
  std::vector<Quaternion> out(features.size() / 4);
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = {features[4 * t], features[4 * t + 1], features[4 * t + 2], features[4 * t + 3]};
  }
  return out;
}

std::vector<double> join_lanes(std::span<const Quaternion> lanes) {
  std::vector<double> out;
  out.reserve(lanes.size() * 4);
  for (const auto& q : lanes) {
    out.insert(out.end(), {q.a, q.b, q.c, q.d});
  }
  return out;
}

}  // namespace surfnet
