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
//
// Named-array container: a text header describing metadata and array shapes
// followed by raw little-endian float64 payloads. Used for checkpoints and
// teacher feature archives.

#ifndef MASKSPEC_ARCHIVE_HPP_
#define MASKSPEC_ARCHIVE_HPP_

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "maskspec/common.hpp"
#include "maskspec/frontend.hpp"

namespace maskspec {

class ArrayFile {
 public:
  static constexpr const char* kMagic = "maskspec-arrays v1";

  void set_meta(const std::string& key, const std::string& value) {
    require(!key.empty() && key.find_first_of(" \t\n") == std::string::npos,
            "ArrayFile: meta key must be non-empty without whitespace");
    require(value.find('\n') == std::string::npos, "ArrayFile: meta value contains newline");
    for (auto& kv : meta_)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    meta_.emplace_back(key, value);
  }

  bool has_meta(const std::string& key) const {
    for (const auto& kv : meta_)
      if (kv.first == key) return true;
    return false;
  }

  const std::string& meta(const std::string& key) const {
    for (const auto& kv : meta_)
      if (kv.first == key) return kv.second;
    throw Error(str_cat("ArrayFile: missing meta key '", key, "'"));
  }

  double meta_double(const std::string& key) const { return std::stod(meta(key)); }
  long meta_long(const std::string& key) const { return std::stol(meta(key)); }

  void add(const std::string& name, Mat m) {
    require(!name.empty() && name.find_first_of(" \t\n") == std::string::npos,
            "ArrayFile: array name must be non-empty without whitespace");
    require(!has(name), str_cat("ArrayFile: duplicate array '", name, "'"));
    arrays_.emplace_back(name, std::move(m));
  }

  bool has(const std::string& name) const {
    for (const auto& kv : arrays_)
      if (kv.first == name) return true;
    return false;
  }

  const Mat& get(const std::string& name) const {
    for (const auto& kv : arrays_)
      if (kv.first == name) return kv.second;
    throw Error(str_cat("ArrayFile: missing array '", name, "'"));
  }

  /// get() plus a loud shape check.
  const Mat& get_shaped(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
    const Mat& m = get(name);
    if (m.rows() != rows || m.cols() != cols)
      throw Error(str_cat("ArrayFile: array '", name, "' has shape ", m.rows(), "x", m.cols(),
                          ", expected ", rows, "x", cols));
    return m;
  }

  const std::vector<std::pair<std::string, std::string>>& meta_entries() const { return meta_; }
  const std::vector<std::pair<std::string, Mat>>& arrays() const { return arrays_; }

  void save(const std::string& path) const {
    static_assert(sizeof(double) == 8, "float64 payload assumed");
    std::ofstream out(path, std::ios::binary);
    require(out.good(), str_cat("ArrayFile: cannot open '", path, "' for writing"));
    out << kMagic << "\n";
    for (const auto& kv : meta_) out << "meta " << kv.first << " " << kv.second << "\n";
    for (const auto& kv : arrays_)
      out << "array " << kv.first << " " << kv.second.rows() << " " << kv.second.cols() << "\n";
    out << "data\n";
    for (const auto& kv : arrays_) {
      const Mat& m = kv.second;
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    }
    require(out.good(), str_cat("ArrayFile: write failed for '", path, "'"));
  }

  static ArrayFile load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), str_cat("ArrayFile: cannot open '", path, "'"));
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == kMagic,
            str_cat("ArrayFile: '", path, "' is not a maskspec array file"));
    ArrayFile f;
    struct Decl {
      std::string name;
      Eigen::Index rows, cols;
    };
    std::vector<Decl> decls;
    while (std::getline(in, line)) {
      if (line == "data") break;
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "meta") {
        std::string key;
        ls >> key;
        std::string value;
        std::getline(ls, value);
        if (!value.empty() && value.front() == ' ') value.erase(0, 1);
        f.meta_.emplace_back(key, value);
      } else if (tag == "array") {
        Decl d;
        ls >> d.name >> d.rows >> d.cols;
        require(!ls.fail() && d.rows >= 0 && d.cols >= 0,
                str_cat("ArrayFile: bad array declaration in '", path, "'"));
        decls.push_back(std::move(d));
      } else {
        throw Error(str_cat("ArrayFile: unknown header line '", line, "' in '", path, "'"));
      }
    }
    for (const auto& d : decls) {
      Mat m(d.rows, d.cols);
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
      require(in.good() || (in.eof() && m.size() == 0),
              str_cat("ArrayFile: truncated payload for '", d.name, "' in '", path, "'"));
      f.arrays_.emplace_back(d.name, std::move(m));
    }
    in.peek();
    require(in.eof(), str_cat("ArrayFile: trailing bytes after payload in '", path, "'"));
    return f;
  }

 private:
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<std::pair<std::string, Mat>> arrays_;
};

/// Teacher feature archive: one array per clip id, rows = frames.
struct FeatureArchive {
  double frame_stride_ms = 0.0;
  int feature_dim = 0;
  std::vector<std::pair<std::string, Mat>> features;

  bool has(const std::string& clip_id) const {
    for (const auto& kv : features)
      if (kv.first == clip_id) return true;
    return false;
  }

  const Mat& get(const std::string& clip_id) const {
    for (const auto& kv : features)
      if (kv.first == clip_id) return kv.second;
    throw Error(str_cat("FeatureArchive: no features for clip '", clip_id, "'"));
  }

  void save(const std::string& path) const {
    ArrayFile f;
    f.set_meta("kind", "feature-archive");
    f.set_meta("frame_stride_ms", fmt_double(frame_stride_ms));
    f.set_meta("feature_dim", str_cat(feature_dim));
    for (const auto& kv : features) {
      require(kv.second.cols() == feature_dim,
              str_cat("FeatureArchive: clip '", kv.first, "' width ", kv.second.cols(),
                      " != feature_dim ", feature_dim));
      f.add(kv.first, kv.second);
    }
    f.save(path);
    std::ofstream manifest(path + ".manifest");
    require(manifest.good(), str_cat("FeatureArchive: cannot write '", path, ".manifest'"));
    for (const auto& kv : features) manifest << kv.first << " " << kv.second.rows() << "\n";
    require(manifest.good(), str_cat("FeatureArchive: write failed for '", path, ".manifest'"));
  }

  static FeatureArchive load(const std::string& path) {
    ArrayFile f = ArrayFile::load(path);
    require(f.has_meta("kind") && f.meta("kind") == "feature-archive",
            str_cat("FeatureArchive: '", path, "' is not a feature archive"));
    FeatureArchive a;
    a.frame_stride_ms = f.meta_double("frame_stride_ms");
    a.feature_dim = static_cast<int>(f.meta_long("feature_dim"));
    require(a.frame_stride_ms > 0 && a.feature_dim > 0,
            str_cat("FeatureArchive: bad metadata in '", path, "'"));
    for (const auto& kv : f.arrays()) {
      require(kv.second.cols() == a.feature_dim,
              str_cat("FeatureArchive: clip '", kv.first, "' width mismatch in '", path, "'"));
      a.features.emplace_back(kv.first, kv.second);
    }
    return a;
  }
};

inline void save_stats(const std::string& path, const NormStats& stats) {
  std::ofstream out(path);
  require(out.good(), str_cat("save_stats: cannot open '", path, "'"));
  out.precision(17);
  out << "mean=" << stats.mean << "\n";
  out << "std=" << stats.std << "\n";
  out << "n_frames_seen=" << stats.n_frames_seen << "\n";
  out << "corpus_id=" << stats.corpus_id << "\n";
  require(out.good(), str_cat("save_stats: write failed for '", path, "'"));
}

inline NormStats load_stats(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), str_cat("load_stats: cannot open '", path, "'"));
  NormStats s;
  bool have_mean = false, have_std = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, str_cat("load_stats: bad line '", line, "' in '", path, "'"));
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "mean") {
      s.mean = std::stod(value);
      have_mean = true;
    } else if (key == "std") {
      s.std = std::stod(value);
      have_std = true;
    } else if (key == "n_frames_seen") {
      s.n_frames_seen = std::stol(value);
    } else if (key == "corpus_id") {
      s.corpus_id = value;
    } else {
      throw Error(str_cat("load_stats: unknown key '", key, "' in '", path, "'"));
    }
  }
  require(have_mean && have_std, str_cat("load_stats: incomplete stats in '", path, "'"));
  require(s.std > 0, "load_stats: std must be positive");
  return s;
}

}  // namespace maskspec

#endif  // MASKSPEC_ARCHIVE_HPP_
