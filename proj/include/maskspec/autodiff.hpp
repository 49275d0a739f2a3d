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
// Minimal reverse-mode tape over dense double matrices. Define-by-run: ops
// append nodes in topological order; backward() walks the tape in reverse.
// Only the op set needed by the transformer forward/backward lives here.

#ifndef MASKSPEC_AUTODIFF_HPP_
#define MASKSPEC_AUTODIFF_HPP_

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "maskspec/common.hpp"

namespace maskspec {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf with no gradient (inputs, detached targets).
  Var constant(Mat v) { return make(std::move(v), false, {}); }

  /// Leaf that collects gradient (parameters).
  Var param(const Mat& v) { return make(v, true, {}); }

  const Mat& value(Var v) const { return node(v).val; }

  /// Gradient accumulated for v by the last backward(); zero matrix if the
  /// loss did not reach it.
  Mat grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) return Mat::Zero(n.val.rows(), n.val.cols());
    return n.grad;
  }

  Var matmul(Var a, Var b) {
    check_inner(value(a).cols(), value(b).rows(), "matmul");
    Mat out = value(a) * value(b);
    return make(std::move(out), rg(a) || rg(b), [this, a, b](const Mat& g) {
      if (rg(a)) gref(a) += g * value(b).transpose();
      if (rg(b)) gref(b) += value(a).transpose() * g;
    });
  }

  /// a * b^T without materializing the transpose node.
  Var matmul_nt(Var a, Var b) {
    check_inner(value(a).cols(), value(b).cols(), "matmul_nt");
    Mat out = value(a) * value(b).transpose();
    return make(std::move(out), rg(a) || rg(b), [this, a, b](const Mat& g) {
      if (rg(a)) gref(a) += g * value(b);
      if (rg(b)) gref(b) += g.transpose() * value(a);
    });
  }

  Var add(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
            "Graph::add: shape mismatch");
    Mat out = value(a) + value(b);
    return make(std::move(out), rg(a) || rg(b), [this, a, b](const Mat& g) {
      if (rg(a)) gref(a) += g;
      if (rg(b)) gref(b) += g;
    });
  }

  /// Adds a [1 x d] row vector to every row of a.
  Var add_rowvec(Var a, Var bias) {
    require(value(bias).rows() == 1 && value(bias).cols() == value(a).cols(),
            "Graph::add_rowvec: bias must be [1 x cols(a)]");
    Mat out = value(a);
    out.rowwise() += value(bias).row(0);
    return make(std::move(out), rg(a) || rg(bias), [this, a, bias](const Mat& g) {
      if (rg(a)) gref(a) += g;
      if (rg(bias)) gref(bias).row(0) += g.colwise().sum();
    });
  }

  Var scale(Var a, double s) {
    Mat out = value(a) * s;
    return make(std::move(out), rg(a), [this, a, s](const Mat& g) {
      if (rg(a)) gref(a) += g * s;
    });
  }

  Var gelu(Var a) {
    const Mat& x = value(a);
    Mat out = x.unaryExpr([](double v) {
      return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    });
    return make(std::move(out), rg(a), [this, a](const Mat& g) {
      if (!rg(a)) return;
      const Mat& x = value(a);
      Mat d = x.unaryExpr([](double v) {
        return 0.5 * (1.0 + std::erf(v * M_SQRT1_2)) +
               v * std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
      });
      gref(a).array() += g.array() * d.array();
    });
  }

  Var softmax_rows(Var a) {
    const Mat& x = value(a);
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double m = x.row(r).maxCoeff();
      Eigen::RowVectorXd e = (x.row(r).array() - m).exp();
      out.row(r) = e / e.sum();
    }
    Var v = make(std::move(out), rg(a), {});
    node(v).back = [this, a, v](const Mat& g) {
      if (!rg(a)) return;
      const Mat& p = value(v);
      Mat& da = gref(a);
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double dot = g.row(r).dot(p.row(r));
        da.row(r).array() += p.row(r).array() * (g.row(r).array() - dot);
      }
    };
    return v;
  }

  /// Row-wise layer norm with affine parameters gamma/beta of shape [1 x d].
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6) {
    const Mat& v = value(x);
    const int d = static_cast<int>(v.cols());
    require(value(gamma).rows() == 1 && value(gamma).cols() == d &&
                value(beta).rows() == 1 && value(beta).cols() == d,
            "Graph::layer_norm: gamma/beta must be [1 x d]");
    Mat xhat(v.rows(), d);
    Vec inv_std(v.rows());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      const double mu = v.row(r).mean();
      const double var = (v.row(r).array() - mu).square().mean();
      const double s = std::sqrt(var + eps);
      inv_std[r] = 1.0 / s;
      xhat.row(r) = (v.row(r).array() - mu) / s;
    }
    Mat out = xhat;
    out.array().rowwise() *= value(gamma).row(0).array();
    out.rowwise() += value(beta).row(0);
    return make(std::move(out), rg(x) || rg(gamma) || rg(beta),
                [this, x, gamma, beta, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](const Mat& g) {
      const int d = static_cast<int>(xhat.cols());
      if (rg(beta)) gref(beta).row(0) += g.colwise().sum();
      if (rg(gamma)) gref(gamma).row(0) += (g.array() * xhat.array()).colwise().sum().matrix();
      if (rg(x)) {
        Mat& dx = gref(x);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          Eigen::RowVectorXd dxhat =
              (g.row(r).array() * value(gamma).row(0).array()).matrix();
          const double m1 = dxhat.mean();
          const double m2 = (dxhat.array() * xhat.row(r).array()).mean();
          dx.row(r).array() +=
              inv_std[r] * (dxhat.array() - m1 - xhat.row(r).array() * m2);
        }
        (void)d;
      }
    });
  }

  Var slice_cols(Var a, int start, int len) {
    require(start >= 0 && len >= 1 && start + len <= value(a).cols(),
            "Graph::slice_cols: range out of bounds");
    Mat out = value(a).middleCols(start, len);
    return make(std::move(out), rg(a), [this, a, start, len](const Mat& g) {
      if (rg(a)) gref(a).middleCols(start, len) += g;
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "Graph::concat_cols: empty input");
    const Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    bool any_rg = false;
    for (Var p : parts) {
      require(value(p).rows() == rows, "Graph::concat_cols: row mismatch");
      cols += value(p).cols();
      any_rg = any_rg || rg(p);
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    return make(std::move(out), any_rg, [this, parts](const Mat& g) {
      Eigen::Index at = 0;
      for (Var p : parts) {
        const Eigen::Index w = value(p).cols();
        if (rg(p)) gref(p) += g.middleCols(at, w);
        at += w;
      }
    });
  }

  Var gather_rows(Var a, std::vector<int> idx) {
    Mat out(static_cast<Eigen::Index>(idx.size()), value(a).cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      require(idx[i] >= 0 && idx[i] < value(a).rows(), "Graph::gather_rows: index out of range");
      out.row(static_cast<Eigen::Index>(i)) = value(a).row(idx[i]);
    }
    return make(std::move(out), rg(a), [this, a, idx = std::move(idx)](const Mat& g) {
      if (!rg(a)) return;
      Mat& da = gref(a);
      for (std::size_t i = 0; i < idx.size(); ++i)
        da.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    });
  }

  /// Builds an [n_rows x d] sequence: rows_a[i] takes a.row(i); rows_b takes
  /// b rows, or broadcast copies of b.row(0) when b has a single row (the
  /// learnable mask token case). rows_a and rows_b must partition 0..n_rows-1.
  Var assemble_rows(int n_rows, Var a, const std::vector<int>& rows_a, Var b,
                    const std::vector<int>& rows_b) {
    const Eigen::Index d = value(a).cols();
    require(value(b).cols() == d, "Graph::assemble_rows: width mismatch");
    require(static_cast<std::size_t>(value(a).rows()) == rows_a.size(),
            "Graph::assemble_rows: a row count mismatch");
    const bool broadcast_b = value(b).rows() == 1 && rows_b.size() != 1;
    require(broadcast_b || static_cast<std::size_t>(value(b).rows()) == rows_b.size(),
            "Graph::assemble_rows: b row count mismatch");
    require(rows_a.size() + rows_b.size() == static_cast<std::size_t>(n_rows),
            "Graph::assemble_rows: indices do not cover the sequence");
    Mat out(n_rows, d);
    for (std::size_t i = 0; i < rows_a.size(); ++i)
      out.row(rows_a[i]) = value(a).row(static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < rows_b.size(); ++i)
      out.row(rows_b[i]) = value(b).row(broadcast_b ? 0 : static_cast<Eigen::Index>(i));
    return make(std::move(out), rg(a) || rg(b),
                [this, a, b, rows_a, rows_b, broadcast_b](const Mat& g) {
      if (rg(a)) {
        Mat& da = gref(a);
        for (std::size_t i = 0; i < rows_a.size(); ++i)
          da.row(static_cast<Eigen::Index>(i)) += g.row(rows_a[i]);
      }
      if (rg(b)) {
        Mat& db = gref(b);
        for (std::size_t i = 0; i < rows_b.size(); ++i)
          db.row(broadcast_b ? 0 : static_cast<Eigen::Index>(i)) += g.row(rows_b[i]);
      }
    });
  }

  /// [nF*nT x d] token sequence (time-major, frequency fastest) ->
  /// [nT x nF*d] per-frame concatenation of the nF frequency vectors.
  Var frame_concat(Var a, int n_freq) {
    const Eigen::Index n = value(a).rows();
    const Eigen::Index d = value(a).cols();
    require(n_freq >= 1 && n % n_freq == 0, "Graph::frame_concat: rows not divisible by nF");
    const Eigen::Index n_t = n / n_freq;
    Mat out(n_t, n_freq * d);
    for (Eigen::Index t = 0; t < n_t; ++t)
      for (int f = 0; f < n_freq; ++f)
        out.block(t, f * d, 1, d) = value(a).row(t * n_freq + f);
    return make(std::move(out), rg(a), [this, a, n_freq, d](const Mat& g) {
      if (!rg(a)) return;
      Mat& da = gref(a);
      for (Eigen::Index t = 0; t < g.rows(); ++t)
        for (int f = 0; f < n_freq; ++f)
          da.row(t * n_freq + f) += g.block(t, f * d, 1, d);
    });
  }

  /// Mean over rows of the normalized MSE 2 - 2*cos(x_i, t_i) against a
  /// detached target matrix. Returns a 1x1 scalar node. Rows of near-zero
  /// norm contribute 2 with zero gradient (treated as orthogonal).
  Var cosine_row_loss(Var x, Mat targets, double eps = 1e-12) {
    const Mat& v = value(x);
    require(v.rows() == targets.rows() && v.cols() == targets.cols(),
            "Graph::cosine_row_loss: shape mismatch");
    require(v.rows() >= 1, "Graph::cosine_row_loss: empty input");
    const Eigen::Index n = v.rows();
    double total = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double nx = v.row(r).norm();
      const double nt = targets.row(r).norm();
      const double s = v.row(r).dot(targets.row(r)) / ((nx + eps) * (nt + eps));
      total += 2.0 - 2.0 * s;
    }
    Mat out(1, 1);
    out(0, 0) = total / static_cast<double>(n);
    return make(std::move(out), rg(x),
                [this, x, targets = std::move(targets), eps](const Mat& g) {
      if (!rg(x)) return;
      const Mat& v = value(x);
      const double scale = g(0, 0) * (-2.0) / static_cast<double>(v.rows());
      Mat& dx = gref(x);
      for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double nx = v.row(r).norm();
        if (nx <= eps) continue;  // zero-norm rows are flat, not a pole
        const double nt = targets.row(r).norm();
        const double a = nx + eps;
        const double b = nt + eps;
        const double s = v.row(r).dot(targets.row(r)) / (a * b);
        dx.row(r) += scale * (targets.row(r) / (a * b) -
                              (s / (a * std::max(nx, eps))) * v.row(r));
      }
    });
  }

  /// a * s with a learnable 1x1 scalar node s.
  Var scale_var(Var a, Var s) {
    require(value(s).rows() == 1 && value(s).cols() == 1, "Graph::scale_var: s must be 1x1");
    Mat out = value(a) * value(s)(0, 0);
    return make(std::move(out), rg(a) || rg(s), [this, a, s](const Mat& g) {
      if (rg(a)) gref(a) += g * value(s)(0, 0);
      if (rg(s)) gref(s)(0, 0) += (g.array() * value(a).array()).sum();
    });
  }

  /// Mean softmax cross-entropy of row logits against integer labels.
  Var cross_entropy_rows(Var logits, std::vector<int> labels) {
    const Mat& x = value(logits);
    require(static_cast<std::size_t>(x.rows()) == labels.size(),
            "Graph::cross_entropy_rows: label count mismatch");
    require(x.rows() >= 1, "Graph::cross_entropy_rows: empty input");
    Mat probs(x.rows(), x.cols());
    double total = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const int y = labels[static_cast<std::size_t>(r)];
      require(y >= 0 && y < x.cols(), "Graph::cross_entropy_rows: label out of range");
      const double m = x.row(r).maxCoeff();
      Eigen::RowVectorXd e = (x.row(r).array() - m).exp();
      const double z = e.sum();
      probs.row(r) = e / z;
      total -= (x(r, y) - m) - std::log(z);
    }
    Mat out(1, 1);
    out(0, 0) = total / static_cast<double>(x.rows());
    return make(std::move(out), rg(logits),
                [this, logits, labels = std::move(labels), probs = std::move(probs)](const Mat& g) {
      if (!rg(logits)) return;
      const double scale = g(0, 0) / static_cast<double>(probs.rows());
      Mat& dl = gref(logits);
      dl += scale * probs;
      for (Eigen::Index r = 0; r < probs.rows(); ++r)
        dl(r, labels[static_cast<std::size_t>(r)]) -= scale;
    });
  }

  /// Weighted sum of 1x1 scalar nodes.
  Var add_scaled(const std::vector<std::pair<double, Var>>& terms) {
    require(!terms.empty(), "Graph::add_scaled: empty input");
    double total = 0.0;
    bool any_rg = false;
    for (const auto& [w, t] : terms) {
      require(value(t).rows() == 1 && value(t).cols() == 1,
              "Graph::add_scaled: operands must be scalars");
      total += w * value(t)(0, 0);
      any_rg = any_rg || rg(t);
    }
    Mat out(1, 1);
    out(0, 0) = total;
    return make(std::move(out), any_rg, [this, terms](const Mat& g) {
      for (const auto& [w, t] : terms)
        if (rg(t)) gref(t)(0, 0) += w * g(0, 0);
    });
  }

  /// Reverse pass from a scalar loss node. One shot per graph.
  void backward(Var loss) {
    require(!backward_done_, "Graph::backward: already run on this tape");
    backward_done_ = true;
    Node& ln = node(loss);
    require(ln.val.rows() == 1 && ln.val.cols() == 1, "Graph::backward: loss must be scalar");
    require(ln.rg, "Graph::backward: loss does not depend on any parameter");
    gref(loss)(0, 0) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& nd = nodes_[static_cast<std::size_t>(i)];
      if (!nd.rg || !nd.back || nd.grad.size() == 0) continue;
      nd.back(nd.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;  // allocated lazily
    bool rg = false;
    std::function<void(const Mat&)> back;
  };

  Var make(Mat v, bool requires_grad, std::function<void(const Mat&)> back) {
    Node n;
    n.val = std::move(v);
    n.rg = requires_grad;
    n.back = requires_grad ? std::move(back) : nullptr;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var v) {
    require(v.valid() && v.id < static_cast<int>(nodes_.size()), "Graph: invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    require(v.valid() && v.id < static_cast<int>(nodes_.size()), "Graph: invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  bool rg(Var v) const { return node(v).rg; }

  Mat& gref(Var v) {
    Node& n = node(v);
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    return n.grad;
  }

  static void check_inner(Eigen::Index a, Eigen::Index b, const char* op) {
    require(a == b, str_cat("Graph::", op, ": inner dimension mismatch"));
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace maskspec

#endif  // MASKSPEC_AUTODIFF_HPP_
