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
// Patch split of spectrograms, fixed 2D sin-cos positional encoding, token
// embedding, and visible/masked partitions at a fixed masking ratio.

#ifndef MASKSPEC_PATCHING_HPP_
#define MASKSPEC_PATCHING_HPP_

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "maskspec/common.hpp"
#include "maskspec/frontend.hpp"
#include "maskspec/rng.hpp"

namespace maskspec {

struct PatchConfig {
  int patch_freq = 80;  // mel bins per patch
  int patch_time = 4;   // frames per patch
  int embed_dim = 64;

  int patch_len() const { return patch_freq * patch_time; }

  void validate(int n_mels) const {
    require(patch_freq >= 1 && patch_time >= 1, "PatchConfig: patch sides must be >= 1");
    require(n_mels % patch_freq == 0,
            str_cat("PatchConfig: n_mels (", n_mels, ") not divisible by patch_freq (",
                    patch_freq, ")"));
    require(embed_dim >= 4 && embed_dim % 4 == 0,
            "PatchConfig: embed_dim must be a positive multiple of 4");
  }

  bool operator==(const PatchConfig&) const = default;
};

// Token order is time-major with frequency fastest-varying: token t*nF + f
// holds frequency-patch f of frame-group t. Within a patch, values are
// flattened row-major (all frames of mel bin 0, then bin 1, ...).
struct PatchGrid {
  int n_freq_patches = 0;  // nF
  int n_time_patches = 0;  // nT
  int patch_freq = 0;
  int patch_time = 0;
  Mat patches;  // [nF*nT x patch_freq*patch_time]

  int n() const { return n_freq_patches * n_time_patches; }
};

inline PatchGrid patchify(const LogMelSpectrogram& spec, const PatchConfig& cfg) {
  cfg.validate(spec.n_mels());
  require(spec.n_frames() >= cfg.patch_time,
          "patchify: spectrogram shorter than one patch; nothing to cover");
  PatchGrid grid;
  grid.patch_freq = cfg.patch_freq;
  grid.patch_time = cfg.patch_time;
  grid.n_freq_patches = spec.n_mels() / cfg.patch_freq;
  grid.n_time_patches = spec.n_frames() / cfg.patch_time;  // trailing frames dropped
  grid.patches.resize(grid.n(), cfg.patch_len());
  for (int t = 0; t < grid.n_time_patches; ++t) {
    for (int f = 0; f < grid.n_freq_patches; ++f) {
      const int token = t * grid.n_freq_patches + f;
      for (int r = 0; r < cfg.patch_freq; ++r)
        for (int c = 0; c < cfg.patch_time; ++c)
          grid.patches(token, r * cfg.patch_time + c) =
              spec.values(f * cfg.patch_freq + r, t * cfg.patch_time + c);
    }
  }
  return grid;
}

/// Inverse of patchify over the covered region, [n_mels x nT*patch_time].
inline Mat unpatchify(const PatchGrid& grid) {
  const int n_mels = grid.n_freq_patches * grid.patch_freq;
  const int n_frames = grid.n_time_patches * grid.patch_time;
  Mat out(n_mels, n_frames);
  for (int t = 0; t < grid.n_time_patches; ++t) {
    for (int f = 0; f < grid.n_freq_patches; ++f) {
      const int token = t * grid.n_freq_patches + f;
      for (int r = 0; r < grid.patch_freq; ++r)
        for (int c = 0; c < grid.patch_time; ++c)
          out(f * grid.patch_freq + r, t * grid.patch_time + c) =
              grid.patches(token, r * grid.patch_time + c);
    }
  }
  return out;
}

struct MaskPlan {
  double ratio = 0.6;
  std::vector<int> visible_idx;  // sorted ascending
  std::vector<int> masked_idx;   // sorted ascending (I_M)
  std::uint64_t seed = 0;

  int n() const { return static_cast<int>(visible_idx.size() + masked_idx.size()); }
};

/// Uniform random partition via a shuffled permutation. Exactly
/// round(ratio * n_patches) indices are masked (round half up).
inline MaskPlan sample_mask(int n_patches, double ratio, std::uint64_t seed) {
  require(n_patches >= 2, "sample_mask: need at least 2 patches");
  require(ratio > 0.0 && ratio < 1.0, "sample_mask: ratio must lie strictly in (0, 1)");
  const int n_masked = static_cast<int>(std::floor(ratio * n_patches + 0.5));
  require(n_masked >= 1 && n_masked < n_patches,
          str_cat("sample_mask: degenerate plan (", n_masked, " of ", n_patches,
                  " masked)"));
  std::vector<int> perm(static_cast<std::size_t>(n_patches));
  for (int i = 0; i < n_patches; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(perm);

  MaskPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.masked_idx.assign(perm.begin(), perm.begin() + n_masked);
  plan.visible_idx.assign(perm.begin() + n_masked, perm.end());
  std::sort(plan.masked_idx.begin(), plan.masked_idx.end());
  std::sort(plan.visible_idx.begin(), plan.visible_idx.end());
  return plan;
}

struct PositionalEncoding {
  int n_freq_patches = 0;
  int n_time_patches = 0;
  Mat table;  // [nF*nT x embed_dim]
};

/// Fixed (non-learned) 2D sinusoidal encoding over (freq-patch, time-patch)
/// indices; half the width encodes frequency position, half time position.
inline PositionalEncoding positional_encoding(int n_freq_patches, int n_time_patches,
                                              int embed_dim) {
  require(n_freq_patches >= 1 && n_time_patches >= 1, "positional_encoding: empty grid");
  require(embed_dim % 4 == 0, "positional_encoding: embed_dim must be a multiple of 4");
  PositionalEncoding pos;
  pos.n_freq_patches = n_freq_patches;
  pos.n_time_patches = n_time_patches;
  const int quarter = embed_dim / 4;
  pos.table.resize(n_freq_patches * n_time_patches, embed_dim);
  for (int t = 0; t < n_time_patches; ++t) {
    for (int f = 0; f < n_freq_patches; ++f) {
      const int row = t * n_freq_patches + f;
      for (int j = 0; j < quarter; ++j) {
        const double omega = std::exp(-std::log(10000.0) * j / quarter);
        pos.table(row, j) = std::sin(f * omega);
        pos.table(row, quarter + j) = std::cos(f * omega);
        pos.table(row, 2 * quarter + j) = std::sin(t * omega);
        pos.table(row, 3 * quarter + j) = std::cos(t * omega);
      }
    }
  }
  return pos;
}

/// token_i = W * patch_i + b + pos_i with W: [patch_len x d], b: [1 x d].
inline Mat embed_patches(const PatchGrid& grid, const Mat& weight, const Mat& bias,
                         const PositionalEncoding& pos) {
  require(weight.rows() == grid.patches.cols(),
          "embed_patches: weight rows must equal patch length");
  require(bias.rows() == 1 && bias.cols() == weight.cols(),
          "embed_patches: bias must be [1 x d]");
  require(pos.table.rows() == grid.n() && pos.table.cols() == weight.cols(),
          "embed_patches: positional table shape mismatch");
  Mat tokens = grid.patches * weight;
  tokens.rowwise() += bias.row(0);
  tokens += pos.table;
  return tokens;
}

/// Splits tokens into (visible rows in ascending original order, masked index
/// list for later reassembly).
inline std::pair<Mat, std::vector<int>> partition(const Mat& tokens, const MaskPlan& plan) {
  require(static_cast<int>(tokens.rows()) == plan.n(),
          "partition: token count does not match plan");
  Mat visible(static_cast<Eigen::Index>(plan.visible_idx.size()), tokens.cols());
  for (std::size_t i = 0; i < plan.visible_idx.size(); ++i)
    visible.row(static_cast<Eigen::Index>(i)) = tokens.row(plan.visible_idx[i]);
  return {std::move(visible), plan.masked_idx};
}

/// Rebuilds the full sequence from visible rows and masked rows.
inline Mat reassemble(const Mat& visible, const Mat& masked, const MaskPlan& plan) {
  require(static_cast<int>(visible.rows()) == static_cast<int>(plan.visible_idx.size()),
          "reassemble: visible row count mismatch");
  require(static_cast<int>(masked.rows()) == static_cast<int>(plan.masked_idx.size()),
          "reassemble: masked row count mismatch");
  require(visible.cols() == masked.cols() || visible.rows() == 0 || masked.rows() == 0,
          "reassemble: width mismatch");
  Mat out(plan.n(), visible.cols());
  for (std::size_t i = 0; i < plan.visible_idx.size(); ++i)
    out.row(plan.visible_idx[i]) = visible.row(static_cast<Eigen::Index>(i));
  for (std::size_t i = 0; i < plan.masked_idx.size(); ++i)
    out.row(plan.masked_idx[i]) = masked.row(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace maskspec

#endif  // MASKSPEC_PATCHING_HPP_
