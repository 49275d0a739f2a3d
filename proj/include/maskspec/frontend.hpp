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
// Log-mel frontend: waveform -> log mel spectrogram, dataset statistics
// normalization, and noisy mixture construction in the linear mel-energy
// domain.

#ifndef MASKSPEC_FRONTEND_HPP_
#define MASKSPEC_FRONTEND_HPP_

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "maskspec/common.hpp"
#include "maskspec/rng.hpp"
#include "maskspec/wav.hpp"

namespace maskspec {

struct FrontendConfig {
  int sample_rate = 16000;  // Hz
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 80;
  double fmin = 50.0;    // Hz
  double fmax = 8000.0;  // Hz
  double log_floor = 1e-5;  // added to mel energies before the log

  int window_samples() const {
    return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
  }
  int hop_samples() const {
    return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
  }

  void validate() const {
    require(sample_rate > 0, "FrontendConfig: sample_rate must be positive");
    require(n_mels >= 1, "FrontendConfig: n_mels must be >= 1");
    require(fmin < fmax, "FrontendConfig: fmin must be < fmax");
    require(fmax <= sample_rate / 2.0, "FrontendConfig: fmax must be <= Nyquist");
    require(hop_ms <= window_ms, "FrontendConfig: hop must be <= window");
    require(hop_samples() >= 1 && window_samples() >= 1,
            "FrontendConfig: window/hop too small for sample rate");
    require(log_floor > 0.0, "FrontendConfig: log_floor must be positive");
  }

  bool operator==(const FrontendConfig&) const = default;
};

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
  std::string corpus_id;
  std::int64_t n_frames_seen = 0;
};

struct LogMelSpectrogram {
  Mat values;  // [n_mels x n_frames], natural-log scale
  FrontendConfig config;
  bool normalized = false;
  std::string stats_id;  // set iff normalized

  int n_mels() const { return static_cast<int>(values.rows()); }
  int n_frames() const { return static_cast<int>(values.cols()); }
};

struct MixConfig {
  double alpha = 0.2;  // dataset noise ratio in [0, 1]
  std::string noise_corpus;
  std::uint64_t seed = 0;

  void validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, "MixConfig: alpha must lie in [0, 1]");
  }
};

namespace fft_detail {

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace fft_detail

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular mel filterbank over FFT power bins, [n_mels x (n_fft/2+1)].
inline Mat mel_filterbank(const FrontendConfig& cfg, int n_fft) {
  cfg.validate();
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  const double mel_step = (mel_hi - mel_lo) / (cfg.n_mels + 1);
  const double bin_hz = static_cast<double>(cfg.sample_rate) / n_fft;

  Mat fb = Mat::Zero(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = mel_to_hz(mel_lo + m * mel_step);
    const double center = mel_to_hz(mel_lo + (m + 1) * mel_step);
    const double right = mel_to_hz(mel_lo + (m + 2) * mel_step);
    for (int b = 0; b < n_bins; ++b) {
      const double f = b * bin_hz;
      double w = 0.0;
      if (f > left && f < center) {
        w = (f - left) / (center - left);
      } else if (f >= center && f < right) {
        w = (right - f) / (right - center);
      }
      fb(m, b) = w;
    }
  }
  return fb;
}

/// Waveform -> log-mel spectrogram.
///
/// Frames are centered at t*hop + hop/2 with zero padding at the edges, so a
/// clip of exactly k hops yields k frames (2.08 s at 10 ms hop -> 208 frames).
inline LogMelSpectrogram compute_logmel(const std::vector<double>& waveform,
                                        const FrontendConfig& cfg) {
  cfg.validate();
  require(!waveform.empty(), "compute_logmel: empty waveform");
  for (double s : waveform)
    require(std::isfinite(s), "compute_logmel: waveform contains non-finite samples");

  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  const auto n = static_cast<long>(waveform.size());
  const int n_frames = static_cast<int>(n / hop);
  require(n_frames >= 1, "compute_logmel: waveform shorter than one hop");

  const auto n_fft = fft_detail::next_pow2(static_cast<std::size_t>(win));
  const int n_bins = static_cast<int>(n_fft / 2 + 1);
  const Mat fb = mel_filterbank(cfg, static_cast<int>(n_fft));

  // Periodic Hann window.
  std::vector<double> window(win);
  for (int i = 0; i < win; ++i)
    window[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / win));

  LogMelSpectrogram out;
  out.config = cfg;
  out.values.resize(cfg.n_mels, n_frames);

  std::vector<std::complex<double>> buf(n_fft);
  Vec power(n_bins);
  for (int t = 0; t < n_frames; ++t) {
    const long center = static_cast<long>(t) * hop + hop / 2;
    const long start = center - win / 2;
    for (std::size_t i = 0; i < n_fft; ++i) buf[i] = 0.0;
    for (int i = 0; i < win; ++i) {
      const long s = start + i;
      if (s >= 0 && s < n) buf[static_cast<std::size_t>(i)] = waveform[static_cast<std::size_t>(s)] * window[i];
    }
    fft_detail::fft_inplace(buf);
    for (int b = 0; b < n_bins; ++b) power[b] = std::norm(buf[static_cast<std::size_t>(b)]);
    const Vec mel = fb * power;
    for (int m = 0; m < cfg.n_mels; ++m)
      out.values(m, t) = std::log(mel[m] + cfg.log_floor);
  }
  return out;
}

/// Overload that checks the container's sample rate. Non-matching input is
/// rejected; there is no silent resampling.
inline LogMelSpectrogram compute_logmel(const WavData& wav, const FrontendConfig& cfg) {
  require(wav.sample_rate == cfg.sample_rate,
          str_cat("compute_logmel: sample rate mismatch (got ", wav.sample_rate,
                  " Hz, expected ", cfg.sample_rate, " Hz)"));
  return compute_logmel(wav.samples, cfg);
}

/// Scalar mean/std over all values of all frames. Population variance; the
/// fixed epsilon 1e-7 added to std guards constant corpora.
inline NormStats compute_dataset_stats(const std::vector<const LogMelSpectrogram*>& corpus,
                                       const std::string& corpus_id) {
  require(!corpus.empty(), "compute_dataset_stats: empty corpus");
  double sum = 0.0, sum_sq = 0.0;
  std::int64_t count = 0, frames = 0;
  for (const auto* spec : corpus) {
    require(spec != nullptr && spec->values.size() > 0, "compute_dataset_stats: empty spectrogram");
    sum += spec->values.sum();
    sum_sq += spec->values.array().square().sum();
    count += spec->values.size();
    frames += spec->n_frames();
  }
  NormStats stats;
  stats.mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sum_sq / static_cast<double>(count) - stats.mean * stats.mean);
  stats.std = std::sqrt(var) + 1e-7;
  stats.corpus_id = corpus_id;
  stats.n_frames_seen = frames;
  return stats;
}

inline NormStats compute_dataset_stats(const std::vector<LogMelSpectrogram>& corpus,
                                       const std::string& corpus_id) {
  std::vector<const LogMelSpectrogram*> ptrs;
  ptrs.reserve(corpus.size());
  for (const auto& s : corpus) ptrs.push_back(&s);
  return compute_dataset_stats(ptrs, corpus_id);
}

inline LogMelSpectrogram normalize(const LogMelSpectrogram& spec, const NormStats& stats) {
  require(!spec.normalized, "normalize: spectrogram is already normalized");
  require(stats.std > 0.0, "normalize: stats.std must be positive");
  LogMelSpectrogram out = spec;
  out.values = (spec.values.array() - stats.mean) / stats.std;
  out.normalized = true;
  out.stats_id = stats.corpus_id;
  return out;
}

inline LogMelSpectrogram denormalize(const LogMelSpectrogram& spec, const NormStats& stats) {
  require(spec.normalized, "denormalize: spectrogram is not normalized");
  LogMelSpectrogram out = spec;
  out.values = spec.values.array() * stats.std + stats.mean;
  out.normalized = false;
  out.stats_id.clear();
  return out;
}

/// Draws a random clip, then a random crop of exactly duration_frames.
/// Clips shorter than the requested duration are loop-padded (cyclic crop).
inline LogMelSpectrogram sample_noise_segment(const std::vector<LogMelSpectrogram>& corpus,
                                              int duration_frames, Rng& rng) {
  require(!corpus.empty(), "sample_noise_segment: empty noise corpus");
  require(duration_frames >= 1, "sample_noise_segment: duration must be >= 1 frame");
  const auto& clip = corpus[rng.uniform_index(corpus.size())];
  const int len = clip.n_frames();
  LogMelSpectrogram out;
  out.config = clip.config;
  out.normalized = clip.normalized;
  out.stats_id = clip.stats_id;
  out.values.resize(clip.n_mels(), duration_frames);
  if (len >= duration_frames) {
    const int offset = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(len - duration_frames) + 1));
    out.values = clip.values.middleCols(offset, duration_frames);
  } else {
    const int offset = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(len)));
    for (int j = 0; j < duration_frames; ++j)
      out.values.col(j) = clip.values.col((offset + j) % len);
  }
  return out;
}

/// Mixes noise and speech in the alpha : (1-alpha) ratio. The spectrograms
/// are reverted to linear scale with the exact inverse of the frontend log,
/// mixed, and converted back: out = log(alpha*exp(noise) + (1-alpha)*exp(speech)).
inline LogMelSpectrogram mix_noisy(const LogMelSpectrogram& speech,
                                   const LogMelSpectrogram& noise, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "mix_noisy: alpha must lie in [0, 1]");
  require(speech.values.rows() == noise.values.rows() &&
              speech.values.cols() == noise.values.cols(),
          "mix_noisy: shape mismatch between speech and noise");
  require(!speech.normalized && !noise.normalized,
          "mix_noisy: mixing must precede statistics normalization");
  LogMelSpectrogram out;
  out.config = speech.config;
  out.values = (alpha * noise.values.array().exp() + (1.0 - alpha) * speech.values.array().exp()).log();
  return out;
}

}  // namespace maskspec

#endif  // MASKSPEC_FRONTEND_HPP_
