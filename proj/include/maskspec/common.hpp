// Copyright 2026 The maskspec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MASKSPEC_COMMON_HPP_
#define MASKSPEC_COMMON_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskspec {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Raised on any contract violation (bad input, shape mismatch, IO failure).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

template <typename... Args>
std::string str_cat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  return oss.str();
}

/// Shortest decimal text that parses back to the identical double.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char shorter[40];
      std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
      std::sscanf(shorter, "%lf", &back);
      if (back == v) return std::string(shorter);
    }
  }
  return std::string(buf);
}

// 64-bit FNV-1a. Used for artifact fingerprints and child-seed derivation,
// not for anything security sensitive.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

inline std::uint64_t fingerprint(const Mat& m, std::uint64_t h = 0xcbf29ce484222325ull) {
  // Eigen is column-major; hashing the raw buffer is stable for fixed shapes.
  h = fnv1a64(&*"M", 1, h);
  const auto r = static_cast<std::uint64_t>(m.rows());
  const auto c = static_cast<std::uint64_t>(m.cols());
  h = fnv1a64(&r, sizeof r, h);
  h = fnv1a64(&c, sizeof c, h);
  return fnv1a64(m.data(), sizeof(double) * m.size(), h);
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "hash_file: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace maskspec

#endif  // MASKSPEC_COMMON_HPP_
