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
// Masked-prediction loss with standardized targets, per-frame frequency
// concatenation, denoising-distillation loss, and the weighted combination.

#ifndef MASKSPEC_OBJECTIVES_HPP_
#define MASKSPEC_OBJECTIVES_HPP_

#include <algorithm>
#include <cmath>
#include <utility>

#include "maskspec/common.hpp"
#include "maskspec/patching.hpp"

namespace maskspec {

struct ObjectiveConfig {
  double lambda_m2d = 1.0;
  double lambda_off = 0.0;
  double standardize_eps = 1e-5;
  double l2_eps = 1e-12;

  void validate() const {
    require(lambda_m2d >= 0.0 && lambda_off >= 0.0,
            "ObjectiveConfig: loss weights must be >= 0");
    require(lambda_m2d > 0.0 || lambda_off > 0.0,
            "ObjectiveConfig: at least one loss weight must be positive");
    require(standardize_eps > 0.0 && l2_eps > 0.0, "ObjectiveConfig: eps must be positive");
  }
};

struct LossBreakdown {
  double l_m2d = 0.0;
  double l_off = 0.0;
  double l_total = 0.0;
  double lambda_m2d = 0.0;
  double lambda_off = 0.0;
};

/// Per-row standardization over the feature dimension: zero mean, unit
/// population variance, eps inside the sqrt so constant rows map to zeros.
inline Mat standardize_target(const Mat& z, double eps = 1e-5) {
  require(z.rows() >= 1, "standardize_target: need at least one row");
  Mat out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mu = z.row(r).mean();
    const double var = (z.row(r).array() - mu).square().mean();
    out.row(r) = (z.row(r).array() - mu) / std::sqrt(var + eps);
  }
  return out;
}

/// 2 - 2*cos(x, t) with eps-guarded norms; zero-norm rows are treated as
/// orthogonal (loss 2).
inline double cosine_pair_loss(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& t,
                               double eps = 1e-12) {
  require(x.size() == t.size(), "cosine_pair_loss: length mismatch");
  const double s = x.dot(t) / ((x.norm() + eps) * (t.norm() + eps));
  return 2.0 - 2.0 * s;
}

/// Mean over rows of the per-row normalized MSE.
inline double loss_rows(const Mat& x, const Mat& t, double eps = 1e-12) {
  require(x.rows() == t.rows() && x.cols() == t.cols(), "loss_rows: shape mismatch");
  require(x.rows() >= 1, "loss_rows: empty input");
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    total += cosine_pair_loss(x.row(r), t.row(r), eps);
  return total / static_cast<double>(x.rows());
}

inline double loss_m2d(const Mat& z_hat_m, const Mat& z_tilde_m, double eps = 1e-12) {
  return loss_rows(z_hat_m, z_tilde_m, eps);
}

inline double loss_off(const Mat& h, const Mat& h_hat, double eps = 1e-12) {
  return loss_rows(h_hat, h, eps);
}

/// Rebuilds the full token sequence from visible and masked features, then
/// concatenates the nF frequency vectors of each time frame:
/// output [nT x nF*d], row t = [feat(f=0, t), feat(f=1, t), ...].
inline Mat reassemble_frame_order(const Mat& z_v, const Mat& z_hat_m, const MaskPlan& plan,
                                  int n_freq_patches, int n_time_patches) {
  require(n_freq_patches >= 1 && n_time_patches >= 1, "reassemble_frame_order: bad grid");
  require(z_v.cols() == z_hat_m.cols(), "reassemble_frame_order: feature width mismatch");
  require(static_cast<int>(z_v.rows() + z_hat_m.rows()) == n_freq_patches * n_time_patches &&
              plan.n() == n_freq_patches * n_time_patches,
          "reassemble_frame_order: plan does not cover the grid");
  const Mat full = reassemble(z_v, z_hat_m, plan);
  const Eigen::Index d = full.cols();
  Mat out(n_time_patches, n_freq_patches * d);
  for (int t = 0; t < n_time_patches; ++t)
    for (int f = 0; f < n_freq_patches; ++f)
      out.block(t, f * d, 1, d) = full.row(t * n_freq_patches + f);
  return out;
}

/// Brings teacher features to the patch frame rate: block mean when the
/// patch stride is a multiple of the teacher stride, row repetition in the
/// opposite case. Trailing frames that do not fill a block are dropped.
inline Mat align_teacher(const Mat& h, double patch_stride_ms, double teacher_stride_ms) {
  require(patch_stride_ms > 0 && teacher_stride_ms > 0, "align_teacher: strides must be positive");
  require(h.rows() >= 1, "align_teacher: empty features");
  const double down = patch_stride_ms / teacher_stride_ms;
  const double up = teacher_stride_ms / patch_stride_ms;
  if (std::abs(down - std::lround(down)) < 1e-9 && std::lround(down) >= 1) {
    const int k = static_cast<int>(std::lround(down));
    if (k == 1) return h;
    const Eigen::Index n_out = h.rows() / k;
    require(n_out >= 1, "align_teacher: fewer teacher frames than one patch frame");
    Mat out(n_out, h.cols());
    for (Eigen::Index t = 0; t < n_out; ++t)
      out.row(t) = h.middleRows(t * k, k).colwise().mean();
    return out;
  }
  if (std::abs(up - std::lround(up)) < 1e-9 && std::lround(up) >= 1) {
    const int k = static_cast<int>(std::lround(up));
    Mat out(h.rows() * k, h.cols());
    for (Eigen::Index t = 0; t < h.rows(); ++t)
      for (int i = 0; i < k; ++i) out.row(t * k + i) = h.row(t);
    return out;
  }
  throw Error(str_cat("align_teacher: strides ", patch_stride_ms, " ms and ", teacher_stride_ms,
                      " ms have a non-integer ratio"));
}

/// Trims both feature matrices to their common leading rows.
inline std::pair<Mat, Mat> trim_to_common_rows(const Mat& a, const Mat& b) {
  const Eigen::Index n = std::min(a.rows(), b.rows());
  require(n >= 1, "trim_to_common_rows: no overlapping frames");
  return {a.topRows(n), b.topRows(n)};
}

inline LossBreakdown loss_total(const ObjectiveConfig& cfg, double l_m2d_value,
                                double l_off_value) {
  cfg.validate();
  require(std::isfinite(l_m2d_value) && std::isfinite(l_off_value),
          "loss_total: non-finite loss input");
  LossBreakdown b;
  b.l_m2d = l_m2d_value;
  b.l_off = l_off_value;
  b.lambda_m2d = cfg.lambda_m2d;
  b.lambda_off = cfg.lambda_off;
  b.l_total = cfg.lambda_m2d * l_m2d_value + cfg.lambda_off * l_off_value;
  return b;
}

}  // namespace maskspec

#endif  // MASKSPEC_OBJECTIVES_HPP_
