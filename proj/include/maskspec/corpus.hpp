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
// Directory-backed corpora: WAV clips sorted by id plus an optional
// tab-separated label table (labels.tsv: header "clip<TAB>task...", one row
// per clip).

#ifndef MASKSPEC_CORPUS_HPP_
#define MASKSPEC_CORPUS_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "maskspec/common.hpp"
#include "maskspec/wav.hpp"

namespace maskspec {

struct Clip {
  std::string id;  // filename stem
  WavData wav;
};

struct Corpus {
  std::vector<Clip> clips;  // sorted by id
  std::vector<std::string> task_names;
  std::map<std::string, std::vector<int>> labels;  // task -> label per clip, aligned

  const std::vector<int>& labels_for(const std::string& task) const {
    auto it = labels.find(task);
    require(it != labels.end(), str_cat("Corpus: no labels for task '", task, "'"));
    return it->second;
  }
};

inline std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, '\t')) out.push_back(field);
  return out;
}

inline Corpus load_corpus(const std::string& dir, int expected_sample_rate = 16000) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), str_cat("load_corpus: '", dir, "' is not a directory"));
  Corpus corpus;
  std::vector<std::string> wav_paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      wav_paths.push_back(entry.path().string());
  std::sort(wav_paths.begin(), wav_paths.end());
  require(!wav_paths.empty(), str_cat("load_corpus: no .wav files in '", dir, "'"));
  corpus.clips.reserve(wav_paths.size());
  for (const auto& path : wav_paths) {
    Clip clip;
    clip.id = fs::path(path).stem().string();
    clip.wav = read_wav(path);
    require(clip.wav.sample_rate == expected_sample_rate,
            str_cat("load_corpus: '", path, "' has sample rate ", clip.wav.sample_rate,
                    ", expected ", expected_sample_rate));
    corpus.clips.push_back(std::move(clip));
  }

  const fs::path label_path = fs::path(dir) / "labels.tsv";
  if (fs::exists(label_path)) {
    std::ifstream in(label_path.string());
    require(in.good(), str_cat("load_corpus: cannot open '", label_path.string(), "'"));
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "load_corpus: empty labels.tsv");
    auto header = split_tsv(line);
    require(header.size() >= 2 && header[0] == "clip",
            "load_corpus: labels.tsv header must be 'clip<TAB>task...'");
    corpus.task_names.assign(header.begin() + 1, header.end());
    std::map<std::string, std::vector<int>> by_clip_row;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto fields = split_tsv(line);
      require(fields.size() == header.size(),
              str_cat("load_corpus: labels.tsv row for '", fields[0], "' has ", fields.size(),
                      " fields, expected ", header.size()));
      std::vector<int> row;
      for (std::size_t i = 1; i < fields.size(); ++i) row.push_back(std::stoi(fields[i]));
      require(by_clip_row.emplace(fields[0], std::move(row)).second,
              str_cat("load_corpus: duplicate label row for '", fields[0], "'"));
    }
    for (const auto& task : corpus.task_names) corpus.labels[task] = {};
    for (const auto& clip : corpus.clips) {
      auto it = by_clip_row.find(clip.id);
      require(it != by_clip_row.end(),
              str_cat("load_corpus: no label row for clip '", clip.id, "'"));
      for (std::size_t t = 0; t < corpus.task_names.size(); ++t)
        corpus.labels[corpus.task_names[t]].push_back(it->second[t]);
    }
  }
  return corpus;
}

inline void write_labels_tsv(const std::string& dir, const std::vector<std::string>& clip_ids,
                             const std::vector<std::string>& task_names,
                             const std::map<std::string, std::vector<int>>& labels) {
  namespace fs = std::filesystem;
  std::ofstream out((fs::path(dir) / "labels.tsv").string());
  require(out.good(), str_cat("write_labels_tsv: cannot write in '", dir, "'"));
  out << "clip";
  for (const auto& t : task_names) out << "\t" << t;
  out << "\n";
  for (std::size_t i = 0; i < clip_ids.size(); ++i) {
    out << clip_ids[i];
    for (const auto& t : task_names) {
      const auto& v = labels.at(t);
      require(v.size() == clip_ids.size(), "write_labels_tsv: label column length mismatch");
      out << "\t" << v[i];
    }
    out << "\n";
  }
  require(out.good(), "write_labels_tsv: write failed");
}

/// Order-independent content hash of every regular file under dir.
inline std::uint64_t hash_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), str_cat("hash_directory: '", dir, "' is not a directory"));
  std::vector<std::string> rel_paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      rel_paths.push_back(fs::relative(entry.path(), dir).generic_string());
  std::sort(rel_paths.begin(), rel_paths.end());
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& rel : rel_paths) {
    h = fnv1a64(rel.data(), rel.size(), h);
    const std::uint64_t fh = hash_file((fs::path(dir) / rel).string());
    h = fnv1a64(&fh, sizeof fh, h);
  }
  return h;
}

}  // namespace maskspec

#endif  // MASKSPEC_CORPUS_HPP_
