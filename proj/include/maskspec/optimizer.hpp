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
// Adam with decoupled weight decay and optional global-norm gradient
// clipping. Weight decay skips single-row parameters (biases, norm scales,
// the mask token).

#ifndef MASKSPEC_OPTIMIZER_HPP_
#define MASKSPEC_OPTIMIZER_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "maskspec/common.hpp"

namespace maskspec {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double grad_clip = 3.0;  // <= 0 disables clipping
};

class AdamW {
 public:
  AdamW(std::vector<Mat*> params, AdamWOptions opts)
      : params_(std::move(params)), opts_(opts) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Mat* p : params_) {
      require(p != nullptr, "AdamW: null parameter");
      m_.push_back(Mat::Zero(p->rows(), p->cols()));
      v_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }

  std::size_t n_slots() const { return params_.size(); }
  long step_count() const { return t_; }
  const std::vector<Mat>& m() const { return m_; }
  const std::vector<Mat>& v() const { return v_; }

  void restore(std::vector<Mat> m, std::vector<Mat> v, long t) {
    require(m.size() == params_.size() && v.size() == params_.size(),
            "AdamW::restore: slot count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i)
      require(m[i].rows() == params_[i]->rows() && m[i].cols() == params_[i]->cols() &&
                  v[i].rows() == params_[i]->rows() && v[i].cols() == params_[i]->cols(),
              "AdamW::restore: moment shape mismatch");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

  /// Applies one update. Returns the pre-clip global gradient norm.
  double step(std::vector<Mat>& grads, double lr) {
    require(grads.size() == params_.size(), "AdamW::step: gradient count mismatch");
    double sq = 0.0;
    for (std::size_t i = 0; i < grads.size(); ++i) {
      require(grads[i].rows() == params_[i]->rows() && grads[i].cols() == params_[i]->cols(),
              "AdamW::step: gradient shape mismatch");
      sq += grads[i].squaredNorm();
    }
    const double norm = std::sqrt(sq);
    require(std::isfinite(norm), "AdamW::step: non-finite gradient");
    if (opts_.grad_clip > 0.0 && norm > opts_.grad_clip) {
      const double s = opts_.grad_clip / norm;
      for (Mat& g : grads) g *= s;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Mat& p = *params_[i];
      m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * grads[i];
      v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grads[i].cwiseProduct(grads[i]);
      const Mat m_hat = m_[i] / bc1;
      const Mat v_hat = v_[i] / bc2;
      if (opts_.weight_decay > 0.0 && p.rows() > 1) p -= lr * opts_.weight_decay * p;
      p -= lr * (m_hat.array() / (v_hat.array().sqrt() + opts_.eps)).matrix();
    }
    return norm;
  }

 private:
  std::vector<Mat*> params_;
  AdamWOptions opts_;
  std::vector<Mat> m_, v_;
  long t_ = 0;
};

/// Linear warmup to base_lr over warmup_steps, then cosine decay to zero at
/// total_steps. step is the 1-based index of the update being applied.
inline double lr_schedule(long step, long total_steps, long warmup_steps, double base_lr) {
  require(step >= 0 && total_steps >= 1 && warmup_steps >= 0 && warmup_steps < total_steps,
          "lr_schedule: bad arguments");
  if (step <= warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(std::max(warmup_steps, 1L));
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * std::min(progress, 1.0)));
}

}  // namespace maskspec

#endif  // MASKSPEC_OPTIMIZER_HPP_
