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
// Acceptance gate: fourteen numbered criteria covering the loss form, target
// standardization, end-to-end gradients, stop-gradient/EMA semantics, masking
// and patching arithmetic, noise mixing, frame reassembly, teacher alignment,
// a desk-scale training run with probe quality thresholds, the ablation grid,
// and bitwise reproducibility. One PASS/FAIL line per criterion; exit 0 only
// if all pass. argv[1] must point at the maskspec CLI binary.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "maskspec/autodiff.hpp"
#include "maskspec/checkpoint.hpp"
#include "maskspec/common.hpp"
#include "maskspec/corpus.hpp"
#include "maskspec/evaluation.hpp"
#include "maskspec/frontend.hpp"
#include "maskspec/model.hpp"
#include "maskspec/objectives.hpp"
#include "maskspec/optimizer.hpp"
#include "maskspec/patching.hpp"
#include "maskspec/rng.hpp"
#include "maskspec/training.hpp"

namespace fs = std::filesystem;
using namespace maskspec;

namespace {

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

struct Context {
  std::string cli;
  fs::path work;
  ToyCorpus toy;  // 256-clip corpus shared by criteria 11 and 12
  Corpus speech;
  std::optional<Checkpoint> trained;  // produced by criterion 11
  int n_pass = 0;
  int n_total = 0;
};

using CriterionFn = std::function<std::pair<bool, std::string>(Context&)>;

void run_criterion(Context& ctx, int id, const char* title, const CriterionFn& fn) {
  ctx.n_total += 1;
  bool pass = false;
  std::string detail;
  std::fprintf(stderr, "[acceptance] running criterion %d: %s\n", id, title);
  try {
    auto [ok, d] = fn(ctx);
    pass = ok;
    detail = d;
  } catch (const std::exception& e) {
    detail = str_cat("exception: ", e.what());
  }
  if (pass) ctx.n_pass += 1;
  std::printf("criterion %02d %s: %s (%s)\n", id, pass ? "PASS" : "FAIL", title, detail.c_str());
  std::fflush(stdout);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return std::string(buf);
}

Mat random_mat(int rows, int cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  Rng rng(seed);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

Eigen::RowVectorXd random_row(int n, Rng& rng) {
  Eigen::RowVectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(-1.0, 1.0);
  return v;
}

LogMelSpectrogram make_spec(int n_mels, int n_frames, std::uint64_t seed, bool normalized,
                            double lo = -1.0, double hi = 1.0) {
  LogMelSpectrogram s;
  s.config = FrontendConfig{};
  s.values = random_mat(n_mels, n_frames, seed, lo, hi);
  s.normalized = normalized;
  if (normalized) s.stats_id = "acceptance";
  return s;
}

int run_cli(const std::string& cli, const std::string& args, const std::string& log_path) {
  const std::string cmd = "\"" + cli + "\" " + args + " > \"" + log_path + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), str_cat("cannot open '", path, "'"));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.push_back("");
    rows.push_back(std::move(fields));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Criteria 1-3: loss form and target standardization
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_1(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double max_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::RowVectorXd a = random_row(64, rng);
    const Eigen::RowVectorXd b = random_row(64, rng);
    const double loss = cosine_pair_loss(a, b);
    const double cosine = a.dot(b) / (a.norm() * b.norm());
    max_err = std::max(max_err, std::abs(loss - (2.0 - 2.0 * cosine)));
  }
  const Eigen::RowVectorXd v = random_row(64, rng);
  const double e_same = std::abs(cosine_pair_loss(v, v) - 0.0);
  const double e_anti = std::abs(cosine_pair_loss(v, Eigen::RowVectorXd(-v)) - 4.0);
  Eigen::RowVectorXd p = Eigen::RowVectorXd::Zero(64);
  Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(64);
  p(0) = 1.3;
  q(1) = 0.7;
  const double e_orth = std::abs(cosine_pair_loss(p, q) - 2.0);
  const double elapsed = seconds_since(t0);
  const bool pass = max_err <= 1e-6 && e_same <= 1e-9 && e_anti <= 1e-9 && e_orth <= 1e-9 &&
                    elapsed < 1.0;
  return {pass, fmt("identity err %.2e (<=1e-6); anchors 0/4/2 err %.1e/%.1e/%.1e (<=1e-9); %.2fs",
                    max_err, e_same, e_anti, e_orth, elapsed)};
}

std::pair<bool, std::string> criterion_2(Context&) {
  Rng rng(202);
  double max_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::RowVectorXd a = random_row(64, rng);
    const Eigen::RowVectorXd b = random_row(64, rng);
    const double c1 = std::exp(rng.uniform(-std::log(10.0), std::log(10.0)));
    const double c2 = std::exp(rng.uniform(-std::log(10.0), std::log(10.0)));
    const double base = cosine_pair_loss(a, b);
    const double scaled =
        cosine_pair_loss(Eigen::RowVectorXd(c1 * a), Eigen::RowVectorXd(c2 * b));
    max_err = std::max(max_err, std::abs(scaled - base));
  }
  return {max_err <= 1e-6, fmt("max |loss(c1 a, c2 b) - loss(a, b)| = %.2e (<=1e-6)", max_err)};
}

std::pair<bool, std::string> criterion_3(Context&) {
  const Mat z = random_mat(200, 64, 303, -3.0, 5.0);
  const Mat s = standardize_target(z, 1e-5);
  double max_mean = 0.0;
  double max_var_dev = 0.0;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mu = s.row(r).mean();
    const double var = (s.row(r).array() - mu).square().mean();
    max_mean = std::max(max_mean, std::abs(mu));
    max_var_dev = std::max(max_var_dev, std::abs(var - 1.0));
  }
  Mat c(3, 64);
  c.row(0).setConstant(2.5);
  c.row(1).setConstant(-7.0);
  c.row(2).setConstant(0.0);
  const double const_max = standardize_target(c, 1e-5).cwiseAbs().maxCoeff();
  const bool pass = max_mean <= 1e-6 && max_var_dev <= 1e-4 && const_max == 0.0;
  return {pass, fmt("row |mean| %.1e (<=1e-6), |var-1| %.1e (<=1e-4), constant rows -> %.1e",
                    max_mean, max_var_dev, const_max)};
}

// ---------------------------------------------------------------------------
// Criterion 4: end-to-end gradient check on the combined loss
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_4(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const EncoderConfig enc = EncoderConfig::tiny();  // depth 4, d=64
  PatchConfig patch;
  patch.embed_dim = enc.embed_dim;  // 80x4 -> 8 tokens on an 80x32 input
  const PredictorConfig pred;
  auto teacher = std::make_shared<MeanpoolTeacher>(80, 20.0);
  ModelState state = init_model(enc, patch, pred, teacher, 80, 404);

  TrainConfig cfg;
  cfg.objective.lambda_m2d = 1.0;
  cfg.objective.lambda_off = 1.0;

  std::vector<BatchItem> batch(1);
  batch[0].clip_id = "fd-item";
  batch[0].noisy = make_spec(80, 32, 405, true);
  batch[0].clean = make_spec(80, 32, 406, true);
  batch[0].mask_seed = 407;

  auto loss_value = [&]() {
    Graph g;
    StepGraph sg = build_step_graph(g, state, batch, cfg);
    return g.value(sg.l_total)(0, 0);
  };

  Graph g;
  StepGraph sg = build_step_graph(g, state, batch, cfg);
  g.backward(sg.l_total);
  std::map<std::string, Mat> analytic;
  for (const auto& [name, var] : bound_param_list(sg.bound, state.online))
    analytic[name] = g.grad(var);

  const double h = 1e-5;
  double max_rel = 0.0;
  std::string worst = "-";
  int groups = 0;
  bool saw_mask_token = false;
  bool saw_proj = false;
  bool names_aligned = true;
  for_each_param(state.online, "", [&](const std::string& name, Mat& m) {
    groups += 1;
    if (name == ".mask_token") saw_mask_token = true;
    if (name == ".proj_w") saw_proj = true;
    auto it = analytic.find(name);
    if (it == analytic.end()) {
      names_aligned = false;
      return;
    }
    Rng rng(derive_seed(909, "fd-pick", {static_cast<std::uint64_t>(groups)}));
    const int n_checks = static_cast<int>(std::min<Eigen::Index>(4, m.size()));
    for (int k = 0; k < n_checks; ++k) {
      const auto r = std::min<Eigen::Index>(
          static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(m.rows())), m.rows() - 1);
      const auto col = std::min<Eigen::Index>(
          static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(m.cols())), m.cols() - 1);
      const double orig = m(r, col);
      m(r, col) = orig + h;
      const double lp = loss_value();
      m(r, col) = orig - h;
      const double lm = loss_value();
      m(r, col) = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = it->second(r, col);
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4});
      if (rel > max_rel) {
        max_rel = rel;
        worst = name;
      }
    }
  });
  const double elapsed = seconds_since(t0);
  const bool pass =
      max_rel <= 1e-4 && saw_mask_token && saw_proj && names_aligned && elapsed < 120.0;
  return {pass, fmt("max rel err %.2e (<=1e-4, worst %s), %d groups incl. mask token and "
                    "projection, %.1fs (<120s)",
                    max_rel, worst.c_str(), groups, elapsed)};
}

// ---------------------------------------------------------------------------
// Criterion 5: stop-gradient, EMA identity, frozen teacher
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_5(Context&) {
  const EncoderConfig enc = EncoderConfig::tiny();
  PatchConfig patch;
  patch.embed_dim = enc.embed_dim;
  auto teacher = std::make_shared<RandomEncoderTeacher>(80);
  ModelState state = init_model(enc, patch, PredictorConfig{}, teacher, 80, 501);
  const std::uint64_t teacher_fp = state.teacher->fingerprint();
  EncoderParams xi_prev = state.target;

  TrainConfig cfg;
  cfg.objective.lambda_m2d = 1.0;
  cfg.objective.lambda_off = 1.0;

  std::vector<BatchItem> batch(2);
  for (int i = 0; i < 2; ++i) {
    batch[static_cast<std::size_t>(i)].clip_id = str_cat("item", i);
    batch[static_cast<std::size_t>(i)].noisy =
        make_spec(80, 32, 502 + static_cast<std::uint64_t>(i), true);
    batch[static_cast<std::size_t>(i)].clean =
        make_spec(80, 32, 504 + static_cast<std::uint64_t>(i), true);
    batch[static_cast<std::size_t>(i)].mask_seed = 506 + static_cast<std::uint64_t>(i);
  }

  std::vector<Mat*> slots;
  for (auto& kv : param_ptrs(state.online)) slots.push_back(kv.second);
  AdamWOptions opts;
  opts.weight_decay = cfg.weight_decay;
  opts.grad_clip = cfg.grad_clip;
  AdamW opt(slots, opts);
  train_step(state, opt, batch, cfg, 1e-3);

  const bool teacher_frozen = state.teacher->fingerprint() == teacher_fp;

  auto xi_new = param_ptrs(state.target);
  auto xi_old = param_ptrs(xi_prev);
  auto theta_new = param_ptrs(state.online.encoder);
  double max_ema_err = 0.0;
  for (std::size_t i = 0; i < xi_new.size(); ++i) {
    const Mat want = cfg.tau * (*xi_old[i].second) + (1.0 - cfg.tau) * (*theta_new[i].second);
    max_ema_err = std::max(max_ema_err, (*xi_new[i].second - want).cwiseAbs().maxCoeff());
  }

  TrainConfig cfg_m2d_only = cfg;
  cfg_m2d_only.objective.lambda_off = 0.0;
  Graph g;
  StepGraph sg = build_step_graph(g, state, batch, cfg_m2d_only);
  g.backward(sg.l_total);
  double proj_grad = -1.0;
  for (const auto& [name, var] : bound_param_list(sg.bound, state.online))
    if (name == ".proj_w" || name == ".proj_b")
      proj_grad = std::max(proj_grad, g.grad(var).cwiseAbs().maxCoeff());

  const bool pass = teacher_frozen && max_ema_err <= 1e-12 && proj_grad == 0.0;
  return {pass, fmt("teacher fingerprint %s; EMA err %.1e (<=1e-12); dL/dW_proj at "
                    "lambda_off=0 = %.1e (==0)",
                    teacher_frozen ? "unchanged" : "CHANGED", max_ema_err, proj_grad)};
}

// ---------------------------------------------------------------------------
// Criteria 6-10: masking, patching, mixing, reassembly, alignment
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_6(Context&) {
  const int n = 65;
  const double ratio = 0.6;
  const int n_plans = 10000;
  int wrong_count = 0;
  int incomplete = 0;
  std::vector<int> freq(static_cast<std::size_t>(n), 0);
  for (int s = 0; s < n_plans; ++s) {
    const MaskPlan plan = sample_mask(n, ratio, derive_seed(606, "plan", {static_cast<std::uint64_t>(s)}));
    if (static_cast<int>(plan.masked_idx.size()) != 39) wrong_count += 1;
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (int i : plan.visible_idx) seen[static_cast<std::size_t>(i)] += 1;
    for (int i : plan.masked_idx) {
      seen[static_cast<std::size_t>(i)] += 1;
      freq[static_cast<std::size_t>(i)] += 1;
    }
    for (int v : seen)
      if (v != 1) incomplete += 1;
  }
  double worst_freq_dev = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = static_cast<double>(freq[static_cast<std::size_t>(i)]) / n_plans;
    worst_freq_dev = std::max(worst_freq_dev, std::abs(f - ratio));
  }
  const bool pass = wrong_count == 0 && incomplete == 0 && worst_freq_dev <= 0.02;
  return {pass, fmt("39/65 masked in all %d plans (%d wrong); completeness violations %d; "
                    "per-index freq dev %.4f (<=0.02)",
                    n_plans, wrong_count, incomplete, worst_freq_dev)};
}

std::pair<bool, std::string> criterion_7(Context&) {
  const LogMelSpectrogram spec = make_spec(80, 208, 707, true);
  PatchConfig c16;
  c16.patch_freq = 16;
  c16.patch_time = 16;
  const PatchGrid g16 = patchify(spec, c16);
  const bool count_ok = g16.n() == 65 && g16.n_freq_patches == 5 && g16.n_time_patches == 13;

  const std::pair<int, int> sizes[] = {{80, 1}, {80, 2}, {80, 3}, {80, 4},
                                       {80, 6}, {40, 4}, {16, 16}};
  double max_rec_err = 0.0;
  for (const auto& [pf, pt] : sizes) {
    PatchConfig pc;
    pc.patch_freq = pf;
    pc.patch_time = pt;
    const PatchGrid grid = patchify(spec, pc);
    const Mat rec = unpatchify(grid);
    const int covered = (208 / pt) * pt;
    max_rec_err =
        std::max(max_rec_err, (rec - spec.values.leftCols(covered)).cwiseAbs().maxCoeff());
  }
  const bool pass = count_ok && max_rec_err == 0.0;
  return {pass, fmt("80x208 @16x16 -> %d patches (==65); unpatchify error over 7 sizes %.1e (==0)",
                    g16.n(), max_rec_err)};
}

std::pair<bool, std::string> criterion_8(Context&) {
  const LogMelSpectrogram speech = make_spec(80, 50, 801, false, -2.0, 1.0);
  const LogMelSpectrogram noise = make_spec(80, 50, 802, false, -2.0, 1.0);
  const double e0 = (mix_noisy(speech, noise, 0.0).values - speech.values).cwiseAbs().maxCoeff();
  const double e1 = (mix_noisy(speech, noise, 1.0).values - noise.values).cwiseAbs().maxCoeff();

  LogMelSpectrogram cs = speech, cn = noise;
  cs.values.setConstant(-1.2);
  cn.values.setConstant(0.4);
  const double want = std::log(0.3 * std::exp(0.4) + 0.7 * std::exp(-1.2));
  const double e_const =
      (mix_noisy(cs, cn, 0.3).values.array() - want).abs().maxCoeff();

  const Mat mixed = mix_noisy(speech, noise, 0.37).values;
  const Mat lin_want =
      0.37 * noise.values.array().exp() + 0.63 * speech.values.array().exp();
  const double e_lin =
      ((mixed.array().exp() - lin_want.array()) / lin_want.array()).abs().maxCoeff();

  const bool pass = e0 <= 1e-6 && e1 <= 1e-6 && e_const <= 1e-6 && e_lin <= 1e-6;
  return {pass, fmt("alpha=0 err %.1e, alpha=1 err %.1e, constant closed form %.1e, linear "
                    "identity %.1e (all <=1e-6)",
                    e0, e1, e_const, e_lin)};
}

std::pair<bool, std::string> criterion_9(Context&) {
  const int nF = 2, nT = 4, d = 3;
  const Mat full = random_mat(nF * nT, d, 901);
  const MaskPlan plan = sample_mask(nF * nT, 0.6, 902);
  Mat z_v(static_cast<Eigen::Index>(plan.visible_idx.size()), d);
  Mat z_m(static_cast<Eigen::Index>(plan.masked_idx.size()), d);
  for (std::size_t i = 0; i < plan.visible_idx.size(); ++i)
    z_v.row(static_cast<Eigen::Index>(i)) = full.row(plan.visible_idx[i]);
  for (std::size_t i = 0; i < plan.masked_idx.size(); ++i)
    z_m.row(static_cast<Eigen::Index>(i)) = full.row(plan.masked_idx[i]);

  const Mat out = reassemble_frame_order(z_v, z_m, plan, nF, nT);
  bool shape_ok = out.rows() == nT && out.cols() == nF * d;
  double max_err = 0.0;
  for (int t = 0; t < nT; ++t)
    for (int f = 0; f < nF; ++f)
      max_err = std::max(
          max_err, (out.block(t, f * d, 1, d) - full.row(t * nF + f)).cwiseAbs().maxCoeff());

  const MaskPlan plan1 = sample_mask(8, 0.6, 903);
  const Mat full1 = random_mat(8, d, 904);
  Mat v1(static_cast<Eigen::Index>(plan1.visible_idx.size()), d);
  Mat m1(static_cast<Eigen::Index>(plan1.masked_idx.size()), d);
  for (std::size_t i = 0; i < plan1.visible_idx.size(); ++i)
    v1.row(static_cast<Eigen::Index>(i)) = full1.row(plan1.visible_idx[i]);
  for (std::size_t i = 0; i < plan1.masked_idx.size(); ++i)
    m1.row(static_cast<Eigen::Index>(i)) = full1.row(plan1.masked_idx[i]);
  const double reorder_err =
      (reassemble_frame_order(v1, m1, plan1, 1, 8) - full1).cwiseAbs().maxCoeff();

  const bool pass = shape_ok && max_err == 0.0 && reorder_err == 0.0;
  return {pass, fmt("nF=2,d=3 width %ld (==6), scatter err %.1e (==0); nF=1 reorder err %.1e "
                    "(==0)",
                    static_cast<long>(out.cols()), max_err, reorder_err)};
}

std::pair<bool, std::string> criterion_10(Context&) {
  const Mat h = random_mat(13, 5, 1001);
  const Mat pooled = align_teacher(h, 60.0, 20.0);  // k = 3, trailing row dropped
  bool shape_ok = pooled.rows() == 4 && pooled.cols() == 5;
  double max_err = 0.0;
  for (Eigen::Index t = 0; t < 4; ++t) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(5);
    for (int i = 0; i < 3; ++i) mean += h.row(3 * t + i);
    mean /= 3.0;
    max_err = std::max(max_err, (pooled.row(t) - mean).cwiseAbs().maxCoeff());
  }
  const double ident_err = (align_teacher(h, 20.0, 20.0) - h).cwiseAbs().maxCoeff();
  const bool pass = shape_ok && max_err <= 1e-7 && ident_err == 0.0;
  return {pass, fmt("block-mean k=3 err %.1e (<=1e-7, 13 rows -> 4); equal strides err %.1e "
                    "(==0)",
                    max_err, ident_err)};
}

// ---------------------------------------------------------------------------
// Criteria 11-12: desk-scale training and probe quality
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_11(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  PretrainSetup setup;
  setup.enc = EncoderConfig::tiny();
  setup.patch.patch_freq = 80;
  setup.patch.patch_time = 4;
  setup.patch.embed_dim = setup.enc.embed_dim;
  setup.pred = PredictorConfig{};
  setup.frontend = FrontendConfig{};
  setup.train.epochs = 25;
  setup.train.warmup_epochs = 3;
  setup.train.batch_size = 32;
  setup.train.base_lr = 3e-4;
  setup.train.input_duration_s = 2.08;
  setup.train.alpha = 0.2;
  setup.train.objective.lambda_m2d = 1.0;
  setup.train.objective.lambda_off = 1.0;
  setup.train.seed = 1101;
  setup.teacher_spec = "meanpool";
  setup.teacher = make_teacher("meanpool", setup.frontend);

  const std::string out_dir = (ctx.work / "c11_run").string();
  const PretrainResult result = run_pretraining(setup, ctx.speech, ctx.toy.noise, out_dir);
  const double elapsed = seconds_since(t0);

  const std::size_t n = result.records.size();
  bool finite = n == 200;
  for (const auto& r : result.records)
    finite = finite && std::isfinite(r.losses.l_m2d) && std::isfinite(r.losses.l_off) &&
             std::isfinite(r.losses.l_total) && std::isfinite(r.grad_norm);
  double first10 = 0.0, last10 = 0.0;
  if (n == 200) {
    for (std::size_t i = 0; i < 10; ++i) first10 += result.records[i].losses.l_total;
    for (std::size_t i = 190; i < 200; ++i) last10 += result.records[i].losses.l_total;
    first10 /= 10.0;
    last10 /= 10.0;
  }
  const double drop = first10 > 0.0 ? (first10 - last10) / first10 : 0.0;
  ctx.trained = result.checkpoint;

  const bool pass = finite && drop >= 0.20 && elapsed <= 600.0;
  return {pass, fmt("%zu steps; mean l_total first10 %.4f -> last10 %.4f, drop %.1f%% (>=20%%); "
                    "all finite: %s; %.0fs (<=600s)",
                    n, first10, last10, 100.0 * drop, finite ? "yes" : "NO", elapsed)};
}

std::pair<bool, std::string> criterion_12(Context& ctx) {
  require(ctx.trained.has_value(), "criterion 11 did not produce a checkpoint");
  const Checkpoint& ckpt = *ctx.trained;
  const LayerFeatureSet features = extract_layer_features(
      ckpt.online.encoder, ckpt.enc_cfg, ckpt.patch_cfg, ckpt.frontend_cfg, ckpt.stats,
      ctx.toy.speech);
  const std::vector<int>& labels = ctx.toy.labels.at("pitch");

  ProbeConfig cfg;
  cfg.seed = derive_seed(1201, "probe", {0});
  cfg.mode = ProbeMode::kFinalLayer;
  const double acc_final = train_probe(features, labels, cfg, "pitch").accuracy;
  cfg.mode = ProbeMode::kWeightedSum;
  const double acc_weighted = train_probe(features, labels, cfg, "pitch").accuracy;
  cfg.mode = ProbeMode::kFinalLayer;
  cfg.shuffle_labels = true;
  const double acc_shuffled = train_probe(features, labels, cfg, "pitch").accuracy;

  const bool pass = acc_final >= 0.90 && acc_weighted >= acc_final - 0.05 &&
                    std::abs(acc_shuffled - 0.5) <= 0.10;
  return {pass, fmt("pitch final-layer %.3f (>=0.90); weighted-sum %.3f (>=final-0.05); "
                    "shuffled control %.3f (0.5+-0.10)",
                    acc_final, acc_weighted, acc_shuffled)};
}

// ---------------------------------------------------------------------------
// Criteria 13-14: CLI ablation grid and reproducibility
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_13(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path corpus_dir = ctx.work / "c13_corpus";
  const fs::path out_dir = ctx.work / "c13_grid";
  int rc = run_cli(ctx.cli,
                   fmt("make-toy-corpus --out \"%s\" --n-clips 32 --duration 4.2 --seed 1301",
                       corpus_dir.c_str()),
                   (ctx.work / "c13_corpus.log").string());
  require(rc == 0, fmt("make-toy-corpus exited with %d", rc));

  rc = run_cli(ctx.cli,
               fmt("ablate --speech \"%s/speech\" --noise \"%s/noise\" --out \"%s\" --seed 7 "
                   "--epochs 2 --warmup-epochs 1 --batch-size 8 --base-lr 3e-4 "
                   "--probe-epochs 120 --embed-dim 32 --depth 2 --heads 4 --pred-depth 1 "
                   "--parallel",
                   corpus_dir.c_str(), corpus_dir.c_str(), out_dir.c_str()),
               (ctx.work / "c13_grid.log").string());
  const bool exit_ok = rc == 0;

  const auto rows = read_csv((out_dir / "summary.csv").string());
  const std::vector<std::string> want_cells = {
      "alpha_0.0",     "alpha_0.2",       "alpha_1.0",          "patch_80x2",
      "patch_80x4",    "patch_40x4",      "duration_2.08s",     "duration_4.00s",
      "task_a_m2d",    "task_b_distill",  "task_d_m2d_distill", "task_e_full"};
  bool structure_ok = rows.size() == want_cells.size() + 1 && rows[0].size() == 6 &&
                      rows[0][0] == "sweep" && rows[0][1] == "cell" && rows[0][2] == "status" &&
                      rows[0][3] == "pitch" && rows[0][4] == "speaker" && rows[0][5] == "emotion";
  int ok_cells = 0;
  std::map<std::string, double> pitch_acc;
  for (std::size_t i = 1; structure_ok && i < rows.size(); ++i) {
    structure_ok = rows[i].size() == 6 && rows[i][1] == want_cells[i - 1];
    if (!structure_ok) break;
    if (rows[i][2] != "ok") continue;
    ok_cells += 1;
    for (std::size_t c = 3; c < 6; ++c) {
      const double v = std::stod(rows[i][c]);
      structure_ok = structure_ok && v >= 0.0 && v <= 1.0;
    }
    pitch_acc[rows[i][1]] = std::stod(rows[i][3]);
  }
  const double elapsed = seconds_since(t0);
  const bool pass = exit_ok && structure_ok && ok_cells == 12;
  std::string ordering = "n/a";
  if (pitch_acc.count("alpha_0.0") && pitch_acc.count("alpha_0.2") && pitch_acc.count("alpha_1.0"))
    ordering = fmt("pitch@alpha {0: %.2f, 0.2: %.2f, 1: %.2f} (recorded, not gated)",
                   pitch_acc["alpha_0.0"], pitch_acc["alpha_0.2"], pitch_acc["alpha_1.0"]);
  return {pass, fmt("exit %d; 12-cell grid, %d ok, row structure %s; %s; %.0fs", rc, ok_cells,
                    structure_ok ? "matches" : "WRONG", ordering.c_str(), elapsed)};
}

std::pair<bool, std::string> criterion_14(Context& ctx) {
  const fs::path corpus_dir = ctx.work / "c14_corpus";
  int rc = run_cli(ctx.cli,
                   fmt("make-toy-corpus --out \"%s\" --n-clips 16 --duration 1.3 --seed 1401",
                       corpus_dir.c_str()),
                   (ctx.work / "c14_corpus.log").string());
  require(rc == 0, fmt("make-toy-corpus exited with %d", rc));

  const std::string common_flags = fmt(
      "pretrain --speech \"%s/speech\" --noise \"%s/noise\" --teacher meanpool --alpha 0.2 "
      "--lambda-m2d 1 --lambda-off 1 --duration 1.04 --epochs 4 --warmup-epochs 1 "
      "--batch-size 4 --base-lr 3e-4 --embed-dim 32 --depth 2 --heads 4 --pred-depth 1 "
      "--seed 99 --checkpoint-every 2",
      corpus_dir.c_str(), corpus_dir.c_str());
  const fs::path run_a = ctx.work / "c14_a";
  const fs::path run_b = ctx.work / "c14_b";
  const fs::path run_c = ctx.work / "c14_resume";
  rc = run_cli(ctx.cli, common_flags + fmt(" --out \"%s\"", run_a.c_str()),
               (ctx.work / "c14_a.log").string());
  require(rc == 0, fmt("first pretrain exited with %d", rc));
  rc = run_cli(ctx.cli, common_flags + fmt(" --out \"%s\"", run_b.c_str()),
               (ctx.work / "c14_b.log").string());
  require(rc == 0, fmt("second pretrain exited with %d", rc));

  const bool ckpt_same = hash_file((run_a / "checkpoint_final.bin").string()) ==
                         hash_file((run_b / "checkpoint_final.bin").string());
  const bool mid_same = hash_file((run_a / "checkpoint_epoch_2.bin").string()) ==
                        hash_file((run_b / "checkpoint_epoch_2.bin").string());
  const bool log_same = hash_file((run_a / "train.log").string()) ==
                        hash_file((run_b / "train.log").string());

  const std::string probe_flags =
      fmt("probe --corpus \"%s/speech\" --epochs 80 --seed 5", corpus_dir.c_str());
  const fs::path probe_a = ctx.work / "c14_probe_a";
  const fs::path probe_b = ctx.work / "c14_probe_b";
  rc = run_cli(ctx.cli,
               probe_flags + fmt(" --checkpoint \"%s\" --out \"%s\"",
                                 (run_a / "checkpoint_final.bin").c_str(), probe_a.c_str()),
               (ctx.work / "c14_probe_a.log").string());
  require(rc == 0, fmt("first probe exited with %d", rc));
  rc = run_cli(ctx.cli,
               probe_flags + fmt(" --checkpoint \"%s\" --out \"%s\"",
                                 (run_b / "checkpoint_final.bin").c_str(), probe_b.c_str()),
               (ctx.work / "c14_probe_b.log").string());
  require(rc == 0, fmt("second probe exited with %d", rc));
  const bool csv_same = hash_file((probe_a / "results.csv").string()) ==
                        hash_file((probe_b / "results.csv").string());

  rc = run_cli(ctx.cli,
               common_flags + fmt(" --out \"%s\" --resume \"%s\"", run_c.c_str(),
                                  (run_a / "checkpoint_epoch_2.bin").c_str()),
               (ctx.work / "c14_resume.log").string());
  require(rc == 0, fmt("resumed pretrain exited with %d", rc));

  Checkpoint straight = load_checkpoint((run_a / "checkpoint_final.bin").string());
  Checkpoint resumed = load_checkpoint((run_c / "checkpoint_final.bin").string());
  auto ps = param_ptrs(straight.online);
  auto pr = param_ptrs(resumed.online);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    max_diff = std::max(max_diff, (*ps[i].second - *pr[i].second).cwiseAbs().maxCoeff());
  auto ts = param_ptrs(straight.target);
  auto tr = param_ptrs(resumed.target);
  for (std::size_t i = 0; i < ts.size(); ++i)
    max_diff = std::max(max_diff, (*ts[i].second - *tr[i].second).cwiseAbs().maxCoeff());

  const bool pass = ckpt_same && mid_same && log_same && csv_same && max_diff <= 1e-6;
  return {pass, fmt("rerun hashes: checkpoint %s, mid checkpoint %s, log %s, probe csv %s; "
                    "resume max param diff %.1e (<=1e-6)",
                    ckpt_same ? "equal" : "DIFFER", mid_same ? "equal" : "DIFFER",
                    log_same ? "equal" : "DIFFER", csv_same ? "equal" : "DIFFER", max_diff)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-maskspec-cli>\n");
    return 2;
  }
  Context ctx;
  ctx.cli = argv[1];
  ctx.work = fs::temp_directory_path() / "maskspec_acceptance";
  std::error_code ec;
  fs::remove_all(ctx.work, ec);
  fs::create_directories(ctx.work);
  std::fprintf(stderr, "[acceptance] work directory: %s\n", ctx.work.c_str());

  ToyCorpusSpec spec;
  spec.n_clips = 256;
  spec.seed = 1100;
  ctx.toy = generate_toy_corpus(spec);
  ctx.speech.clips = ctx.toy.speech;
  ctx.speech.task_names = ctx.toy.task_names;
  ctx.speech.labels = ctx.toy.labels;

  run_criterion(ctx, 1, "masked-prediction loss equals 2 - 2 cos with exact anchors", criterion_1);
  run_criterion(ctx, 2, "loss is invariant to per-side positive rescaling", criterion_2);
  run_criterion(ctx, 3, "targets are standardized per row, constant rows to zero", criterion_3);
  run_criterion(ctx, 4, "analytic gradients match finite differences end to end", criterion_4);
  run_criterion(ctx, 5, "teacher frozen, EMA target, no grad through projection at lambda_off=0",
                criterion_5);
  run_criterion(ctx, 6, "65-patch plans mask exactly 39 with 0.6 per-index frequency",
                criterion_6);
  run_criterion(ctx, 7, "80x208 yields 65 patches of 16x16; patchify inverts over 7 sizes",
                criterion_7);
  run_criterion(ctx, 8, "noisy mixing is linear-domain exact with identity endpoints",
                criterion_8);
  run_criterion(ctx, 9, "frequency concatenation matches the brute-force frame oracle",
                criterion_9);
  run_criterion(ctx, 10, "teacher alignment block-means by the stride ratio", criterion_10);
  run_criterion(ctx, 11, "200-step desk-scale run drops the loss by at least 20 percent",
                criterion_11);
  run_criterion(ctx, 12, "probes pass pitch quality and shuffled-label control thresholds",
                criterion_12);
  run_criterion(ctx, 13, "CLI ablation grid completes with the documented row structure",
                criterion_13);
  run_criterion(ctx, 14, "identical seeds are hash-identical and resume matches within 1e-6",
                criterion_14);

  std::printf("acceptance: %d/%d criteria passed\n", ctx.n_pass, ctx.n_total);
  return ctx.n_pass == ctx.n_total ? 0 : 1;
}
