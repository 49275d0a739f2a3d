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

#ifndef MASKSPEC_WAV_HPP_
#define MASKSPEC_WAV_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "maskspec/common.hpp"

namespace maskspec {

static_assert(std::endian::native == std::endian::little,
              "wav io assumes a little-endian host");

struct WavData {
  int sample_rate = 0;
  std::vector<double> samples;  // mono, in [-1, 1]
};

namespace wav_detail {

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace wav_detail

/// Reads a mono RIFF/WAVE file. Accepts 16-bit PCM and 32-bit IEEE float.
inline WavData read_wav(const std::string& path) {
  using namespace wav_detail;
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_wav: cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  require(in.good() && std::memcmp(tag, "RIFF", 4) == 0, "read_wav: not a RIFF file: " + path);
  read_le<std::uint32_t>(in);  // riff size
  in.read(tag, 4);
  require(in.good() && std::memcmp(tag, "WAVE", 4) == 0, "read_wav: not a WAVE file: " + path);

  int format = 0, channels = 0, bits = 0, rate = 0;
  bool got_fmt = false;
  WavData out;
  while (in.read(tag, 4)) {
    const auto chunk_size = read_le<std::uint32_t>(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_le<std::uint16_t>(in);
      channels = read_le<std::uint16_t>(in);
      rate = static_cast<int>(read_le<std::uint32_t>(in));
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      bits = read_le<std::uint16_t>(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      got_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      require(got_fmt, "read_wav: data chunk before fmt chunk in " + path);
      require(channels == 1, "read_wav: only mono input is supported: " + path);
      out.sample_rate = rate;
      if (format == 1 && bits == 16) {
        const std::size_t n = chunk_size / 2;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i)
          out.samples[i] = read_le<std::int16_t>(in) / 32768.0;
      } else if (format == 3 && bits == 32) {
        const std::size_t n = chunk_size / 4;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          const auto u = read_le<std::uint32_t>(in);
          float f;
          std::memcpy(&f, &u, 4);
          out.samples[i] = static_cast<double>(f);
        }
      } else {
        throw Error(str_cat("read_wav: unsupported encoding (format=", format,
                            ", bits=", bits, ") in ", path));
      }
      require(in.good(), "read_wav: truncated data chunk in " + path);
      return out;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  throw Error("read_wav: no data chunk in " + path);
}

/// Writes mono 16-bit PCM. Samples are clipped to [-1, 1] and quantized
/// deterministically (round half away from zero).
inline void write_wav_pcm16(const std::string& path, const std::vector<double>& samples,
                            int sample_rate) {
  using namespace wav_detail;
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_wav_pcm16: cannot open " + path);

  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, 1);  // PCM
  write_le<std::uint16_t>(out, 1);  // mono
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate * 2));
  write_le<std::uint16_t>(out, 2);
  write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (double s : samples) {
    double c = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
    double scaled = c * 32767.0;
    auto q = static_cast<std::int16_t>(scaled >= 0 ? scaled + 0.5 : scaled - 0.5);
    write_le<std::int16_t>(out, q);
  }
  require(out.good(), "write_wav_pcm16: write failed for " + path);
}

}  // namespace maskspec

#endif  // MASKSPEC_WAV_HPP_
