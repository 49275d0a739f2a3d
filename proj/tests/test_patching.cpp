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

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "maskspec/patching.hpp"
#include "maskspec/rng.hpp"

using namespace maskspec;

namespace {

LogMelSpectrogram random_spec(int n_mels, int n_frames, std::uint64_t seed) {
  LogMelSpectrogram s;
  s.values.resize(n_mels, n_frames);
  Rng rng(seed);
  for (int r = 0; r < n_mels; ++r)
    for (int c = 0; c < n_frames; ++c) s.values(r, c) = rng.uniform(-4.0, 4.0);
  return s;
}

}  // namespace

TEST_CASE("80 x 208 with 16 x 16 patches gives 65 tokens") {
  PatchConfig cfg;
  cfg.patch_freq = 16;
  cfg.patch_time = 16;
  const PatchGrid grid = patchify(random_spec(80, 208, 1), cfg);
  CHECK(grid.n_freq_patches == 5);
  CHECK(grid.n_time_patches == 13);
  CHECK(grid.n() == 65);
  CHECK(grid.patches.cols() == 256);
}

TEST_CASE("unpatchify inverts patchify for every studied patch size") {
  const struct {
    int pf, pt;
  } sizes[] = {{80, 1}, {80, 2}, {80, 3}, {80, 4}, {80, 6}, {40, 4}, {16, 16}};
  for (const auto& sz : sizes) {
    PatchConfig cfg;
    cfg.patch_freq = sz.pf;
    cfg.patch_time = sz.pt;
    const int n_frames = sz.pt * 13;
    const LogMelSpectrogram spec = random_spec(80, n_frames, 7);
    const PatchGrid grid = patchify(spec, cfg);
    const Mat back = unpatchify(grid);
    REQUIRE(back.rows() == 80);
    REQUIRE(back.cols() == n_frames);
    CHECK((back - spec.values).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("patchify drops trailing frames that do not fill a patch") {
  PatchConfig cfg;
  const LogMelSpectrogram spec = random_spec(80, 11, 3);
  const PatchGrid grid = patchify(spec, cfg);  // patch_time 4: 11 -> 2 groups
  CHECK(grid.n_time_patches == 2);
  const Mat back = unpatchify(grid);
  CHECK((back - spec.values.leftCols(8)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("token order is time-major with frequency fastest") {
  PatchConfig cfg;
  cfg.patch_freq = 2;
  cfg.patch_time = 1;
  LogMelSpectrogram spec;
  spec.values.resize(4, 2);
  // Column t holds 100*t + row index.
  for (int r = 0; r < 4; ++r)
    for (int t = 0; t < 2; ++t) spec.values(r, t) = 100.0 * t + r;
  const PatchGrid grid = patchify(spec, cfg);
  REQUIRE(grid.n() == 4);
  // token t*nF + f; patch rows are (bin, frame) row-major.
  CHECK(grid.patches(0, 0) == 0.0);    // t=0 f=0 -> bins 0,1 of frame 0
  CHECK(grid.patches(0, 1) == 1.0);
  CHECK(grid.patches(1, 0) == 2.0);    // t=0 f=1 -> bins 2,3
  CHECK(grid.patches(2, 0) == 100.0);  // t=1 f=0
  CHECK(grid.patches(3, 1) == 103.0);  // t=1 f=1 -> bin 3 of frame 1
}

TEST_CASE("patch config validation") {
  PatchConfig cfg;
  cfg.patch_freq = 33;
  CHECK_THROWS_AS(cfg.validate(80), Error);
  PatchConfig cfg2;
  cfg2.embed_dim = 30;
  CHECK_THROWS_AS(cfg2.validate(80), Error);
  PatchConfig ok;
  ok.validate(80);
}

TEST_CASE("65 tokens at ratio 0.6 mask exactly 39") {
  const MaskPlan plan = sample_mask(65, 0.6, 123);
  CHECK(plan.masked_idx.size() == 39);
  CHECK(plan.visible_idx.size() == 26);
}

TEST_CASE("masked count is round(ratio * n) for all small sizes") {
  for (int n = 2; n <= 512; n += 7) {
    for (double ratio : {0.5, 0.6, 0.7}) {
      const int expected = static_cast<int>(std::floor(ratio * n + 0.5));
      if (expected < 1 || expected >= n) {
        CHECK_THROWS_AS(sample_mask(n, ratio, 1), Error);
      } else {
        CHECK(static_cast<int>(sample_mask(n, ratio, static_cast<std::uint64_t>(n)).masked_idx.size()) == expected);
      }
    }
  }
}

TEST_CASE("mask plans partition the token set") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const MaskPlan plan = sample_mask(65, 0.6, seed);
    std::set<int> all(plan.visible_idx.begin(), plan.visible_idx.end());
    all.insert(plan.masked_idx.begin(), plan.masked_idx.end());
    CHECK(all.size() == 65);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 64);
    CHECK(std::is_sorted(plan.visible_idx.begin(), plan.visible_idx.end()));
    CHECK(std::is_sorted(plan.masked_idx.begin(), plan.masked_idx.end()));
  }
}

TEST_CASE("each index is masked at frequency 0.6 over many plans") {
  const int n = 65, trials = 10000;
  std::vector<int> hits(n, 0);
  for (int t = 0; t < trials; ++t) {
    const MaskPlan plan = sample_mask(n, 0.6, static_cast<std::uint64_t>(t));
    for (int idx : plan.masked_idx) hits[static_cast<std::size_t>(idx)]++;
  }
  for (int i = 0; i < n; ++i)
    CHECK(std::abs(hits[static_cast<std::size_t>(i)] / static_cast<double>(trials) - 0.6) <= 0.02);
}

TEST_CASE("identical mask seed reproduces the plan") {
  const MaskPlan a = sample_mask(100, 0.6, 9);
  const MaskPlan b = sample_mask(100, 0.6, 9);
  CHECK(a.visible_idx == b.visible_idx);
  CHECK(a.masked_idx == b.masked_idx);
  const MaskPlan c = sample_mask(100, 0.6, 10);
  CHECK(a.masked_idx != c.masked_idx);
}

TEST_CASE("degenerate mask plans are rejected") {
  CHECK_THROWS_AS(sample_mask(1, 0.6, 0), Error);
  CHECK_THROWS_AS(sample_mask(65, 0.0, 0), Error);
  CHECK_THROWS_AS(sample_mask(65, 1.0, 0), Error);
  CHECK_THROWS_AS(sample_mask(2, 0.1, 0), Error);  // rounds to zero masked
}

TEST_CASE("positional encoding separates frequency and time quarters") {
  const int d = 16;
  const PositionalEncoding pos = positional_encoding(3, 5, d);
  REQUIRE(pos.table.rows() == 15);
  REQUIRE(pos.table.cols() == d);

  // Tokens sharing f agree on the frequency half; tokens sharing t agree on
  // the time half.
  for (int t1 = 0; t1 < 5; ++t1)
    for (int t2 = 0; t2 < 5; ++t2)
      for (int f = 0; f < 3; ++f) {
        const auto r1 = pos.table.row(t1 * 3 + f), r2 = pos.table.row(t2 * 3 + f);
        CHECK(r1.head(d / 2) == r2.head(d / 2));
      }
  for (int f1 = 0; f1 < 3; ++f1)
    for (int f2 = 0; f2 < 3; ++f2)
      for (int t = 0; t < 5; ++t) {
        const auto r1 = pos.table.row(t * 3 + f1), r2 = pos.table.row(t * 3 + f2);
        CHECK(r1.tail(d / 2) == r2.tail(d / 2));
      }
}

TEST_CASE("positional encoding rows are pairwise distinct") {
  const PositionalEncoding pos = positional_encoding(4, 16, 16);
  for (int i = 0; i < pos.table.rows(); ++i)
    for (int j = i + 1; j < pos.table.rows(); ++j)
      CHECK((pos.table.row(i) - pos.table.row(j)).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("embed_patches projects and adds positions") {
  PatchConfig cfg;
  cfg.patch_freq = 2;
  cfg.patch_time = 2;
  cfg.embed_dim = 8;
  const PatchGrid grid = patchify(random_spec(4, 6, 17), cfg);
  Mat w = Mat::Zero(cfg.patch_len(), cfg.embed_dim);
  Mat b = Mat::Zero(1, cfg.embed_dim);
  Rng rng(5);
  for (int r = 0; r < w.rows(); ++r)
    for (int c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-1.0, 1.0);
  for (int c = 0; c < b.cols(); ++c) b(0, c) = rng.uniform(-1.0, 1.0);
  const PositionalEncoding pos = positional_encoding(grid.n_freq_patches, grid.n_time_patches, 8);

  const Mat got = embed_patches(grid, w, b, pos);
  Mat want(grid.n(), 8);
  for (int i = 0; i < grid.n(); ++i)
    want.row(i) = grid.patches.row(i) * w + b.row(0) + pos.table.row(i);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("partition and reassemble form an exact inverse pair") {
  Rng rng(3);
  Mat tokens(10, 6);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 6; ++c) tokens(r, c) = rng.uniform(-1.0, 1.0);
  const MaskPlan plan = sample_mask(10, 0.6, 77);
  const auto [visible, masked_idx] = partition(tokens, plan);
  REQUIRE(visible.rows() == static_cast<Eigen::Index>(plan.visible_idx.size()));
  REQUIRE(masked_idx == plan.masked_idx);
  for (std::size_t i = 0; i < plan.visible_idx.size(); ++i)
    CHECK(visible.row(static_cast<Eigen::Index>(i)) == tokens.row(plan.visible_idx[i]));
  Mat masked(static_cast<Eigen::Index>(plan.masked_idx.size()), tokens.cols());
  for (std::size_t i = 0; i < plan.masked_idx.size(); ++i)
    masked.row(static_cast<Eigen::Index>(i)) = tokens.row(plan.masked_idx[i]);
  const Mat back = reassemble(visible, masked, plan);
  CHECK((back - tokens).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("partition rejects a token count that disagrees with the plan") {
  const MaskPlan plan = sample_mask(10, 0.6, 1);
  CHECK_THROWS_AS(partition(Mat::Zero(9, 4), plan), Error);
}
