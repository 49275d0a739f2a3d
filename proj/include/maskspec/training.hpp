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
// Joint pre-training loop: noisy batch for the online/target pair, clean
// batch for the frozen teacher, combined loss, optimizer step, EMA update,
// checkpointing. Every random draw is a pure function of (seed, purpose,
// epoch, position), which is what makes interrupted runs resumable.

#ifndef MASKSPEC_TRAINING_HPP_
#define MASKSPEC_TRAINING_HPP_

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "maskspec/checkpoint.hpp"
#include "maskspec/common.hpp"
#include "maskspec/corpus.hpp"
#include "maskspec/frontend.hpp"
#include "maskspec/model.hpp"
#include "maskspec/objectives.hpp"
#include "maskspec/optimizer.hpp"
#include "maskspec/patching.hpp"
#include "maskspec/rng.hpp"

namespace maskspec {

struct TrainConfig {
  int epochs = 25;
  int warmup_epochs = 3;
  int batch_size = 32;
  double base_lr = 3e-4;
  double weight_decay = 0.05;
  double grad_clip = 3.0;  // <= 0 disables
  double tau = 0.996;
  double input_duration_s = 2.08;
  double alpha = 0.2;
  double mask_ratio = 0.6;
  ObjectiveConfig objective;
  std::uint64_t seed = 0;
  int checkpoint_every_epochs = 0;  // 0: final checkpoint only

  int duration_samples(const FrontendConfig& fe) const {
    const double s = input_duration_s * fe.sample_rate;
    const long n = std::lround(s);
    require(std::abs(s - static_cast<double>(n)) < 1e-6,
            "TrainConfig: input_duration_s is not a whole number of samples");
    return static_cast<int>(n);
  }

  int duration_frames(const FrontendConfig& fe) const {
    const int n = duration_samples(fe);
    require(n % fe.hop_samples() == 0,
            "TrainConfig: input duration must map to a whole number of frames");
    return n / fe.hop_samples();
  }

  void validate(const FrontendConfig& fe) const {
    require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    require(warmup_epochs >= 0 && warmup_epochs < epochs,
            "TrainConfig: warmup_epochs must be < epochs");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(base_lr > 0, "TrainConfig: base_lr must be positive");
    require(weight_decay >= 0, "TrainConfig: weight_decay must be >= 0");
    require(tau >= 0 && tau <= 1, "TrainConfig: tau must lie in [0, 1]");
    require(alpha >= 0 && alpha <= 1, "TrainConfig: alpha must lie in [0, 1]");
    require(mask_ratio > 0 && mask_ratio < 1, "TrainConfig: mask_ratio must lie in (0, 1)");
    require(checkpoint_every_epochs >= 0, "TrainConfig: checkpoint_every_epochs must be >= 0");
    objective.validate();
    duration_frames(fe);
  }
};

struct TrainStepRecord {
  long step = 0;
  LossBreakdown losses;
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct BatchItem {
  std::string clip_id;
  LogMelSpectrogram noisy;  // normalized; online/target input
  LogMelSpectrogram clean;  // normalized; teacher input
  std::uint64_t mask_seed = 0;
};

/// Per-clip log-mel spectrograms computed once up front (unnormalized).
struct TrainData {
  std::vector<std::string> ids;
  std::vector<LogMelSpectrogram> speech;
  std::vector<LogMelSpectrogram> noise;
};

inline TrainData prepare_train_data(const Corpus& speech_corpus, const std::vector<Clip>& noise_clips,
                                    const FrontendConfig& fe) {
  require(!speech_corpus.clips.empty(), "prepare_train_data: empty speech corpus");
  require(!noise_clips.empty(), "prepare_train_data: empty noise corpus");
  TrainData data;
  data.ids.reserve(speech_corpus.clips.size());
  data.speech.reserve(speech_corpus.clips.size());
  for (const auto& clip : speech_corpus.clips) {
    data.ids.push_back(clip.id);
    data.speech.push_back(compute_logmel(clip.wav, fe));
  }
  data.noise.reserve(noise_clips.size());
  for (const auto& clip : noise_clips) data.noise.push_back(compute_logmel(clip.wav, fe));
  return data;
}

namespace training_detail {

inline LogMelSpectrogram crop_frames(const LogMelSpectrogram& spec, int offset, int len) {
  LogMelSpectrogram out;
  out.config = spec.config;
  out.normalized = spec.normalized;
  out.stats_id = spec.stats_id;
  out.values = spec.values.middleCols(offset, len);
  return out;
}

/// One epoch position -> (clean crop, noisy mixture), both unnormalized.
inline std::pair<LogMelSpectrogram, LogMelSpectrogram> draw_mixture(
    const TrainData& data, const TrainConfig& cfg, int t_frames, std::uint64_t item_seed,
    int clip_index) {
  const LogMelSpectrogram& full = data.speech[static_cast<std::size_t>(clip_index)];
  require(full.n_frames() >= t_frames,
          str_cat("build_batch: clip '", data.ids[static_cast<std::size_t>(clip_index)],
                  "' has ", full.n_frames(), " frames, need ", t_frames));
  Rng rng(item_seed);
  const int offset = static_cast<int>(
      rng.uniform_index(static_cast<std::size_t>(full.n_frames() - t_frames) + 1));
  LogMelSpectrogram clean = crop_frames(full, offset, t_frames);
  LogMelSpectrogram noise = sample_noise_segment(data.noise, t_frames, rng);
  LogMelSpectrogram noisy = mix_noisy(clean, noise, cfg.alpha);
  return {std::move(clean), std::move(noisy)};
}

inline std::vector<int> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  Rng rng(derive_seed(seed, "order", {static_cast<std::uint64_t>(epoch)}));
  rng.shuffle(order);
  return order;
}

}  // namespace training_detail

/// Deterministic in (cfg.seed, epoch, step_in_epoch); independent of any
/// call history.
inline std::vector<BatchItem> build_batch(const TrainData& data, const NormStats& stats,
                                          const TrainConfig& cfg, const FrontendConfig& fe,
                                          int epoch, int step_in_epoch) {
  const int t_frames = cfg.duration_frames(fe);
  const auto order = training_detail::epoch_order(data.speech.size(), cfg.seed, epoch);
  const std::size_t first = static_cast<std::size_t>(step_in_epoch) *
                            static_cast<std::size_t>(cfg.batch_size);
  require(first + static_cast<std::size_t>(cfg.batch_size) <= order.size(),
          "build_batch: step does not fit in the epoch");
  std::vector<BatchItem> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int b = 0; b < cfg.batch_size; ++b) {
    const std::size_t pos = first + static_cast<std::size_t>(b);
    const int clip_index = order[pos];
    const std::uint64_t item_seed = derive_seed(
        cfg.seed, "item", {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(pos)});
    auto [clean, noisy] = training_detail::draw_mixture(data, cfg, t_frames, item_seed, clip_index);
    BatchItem item;
    item.clip_id = data.ids[static_cast<std::size_t>(clip_index)];
    item.clean = normalize(clean, stats);
    item.noisy = normalize(noisy, stats);
    item.mask_seed = derive_seed(
        cfg.seed, "mask", {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(pos)});
    batch.push_back(std::move(item));
  }
  return batch;
}

/// Dataset statistics from a dedicated deterministic pass over mixtures
/// drawn with the same recipe as training batches (its own seed stream, so
/// resuming mid-run cannot change them).
inline NormStats compute_train_stats(const TrainData& data, const TrainConfig& cfg,
                                     const FrontendConfig& fe) {
  const int t_frames = cfg.duration_frames(fe);
  std::vector<LogMelSpectrogram> mixtures;
  mixtures.reserve(data.speech.size());
  for (std::size_t i = 0; i < data.speech.size(); ++i) {
    const std::uint64_t item_seed = derive_seed(cfg.seed, "stats", {static_cast<std::uint64_t>(i)});
    auto [clean, noisy] =
        training_detail::draw_mixture(data, cfg, t_frames, item_seed, static_cast<int>(i));
    (void)clean;
    mixtures.push_back(std::move(noisy));
  }
  const std::string corpus_id = str_cat(
      "train-", to_hex(derive_seed(cfg.seed, "stats-id",
                                   {static_cast<std::uint64_t>(data.speech.size()),
                                    static_cast<std::uint64_t>(std::llround(cfg.alpha * 1e6))})));
  return compute_dataset_stats(mixtures, corpus_id);
}

/// One optimizer step over a batch. Mutates online parameters, applies the
/// EMA update to the target encoder, and leaves the teacher untouched.
/// Handles into the per-step loss graph; l_off is unset when lambda_off = 0.
struct StepGraph {
  BoundOnline bound;
  Var l_m2d;
  Var l_off;
  Var l_total;
};

/// Builds the combined loss graph for one batch without touching optimizer,
/// EMA, or step state. train_step and the gradient checks share this path.
inline StepGraph build_step_graph(Graph& g, const ModelState& state,
                                  const std::vector<BatchItem>& batch, const TrainConfig& cfg) {
  require(!batch.empty(), "train_step: empty batch");
  cfg.objective.validate();
  const bool use_off = cfg.objective.lambda_off > 0.0;
  if (use_off) {
    require(state.teacher != nullptr, "train_step: lambda_off > 0 requires a teacher");
    require(state.online.has_projection(),
            "train_step: lambda_off > 0 requires the teacher projection");
  }

  BoundOnline bound = bind_online(g, state.online, true);
  const double item_weight = 1.0 / static_cast<double>(batch.size());
  std::vector<std::pair<double, Var>> m2d_terms, off_terms;
  PositionalEncoding pos;  // all items share one spectrogram shape

  for (const auto& item : batch) {
    require(item.noisy.normalized && item.clean.normalized,
            "train_step: batch items must be normalized");
    const PatchGrid grid = patchify(item.noisy, state.patch_cfg);
    if (pos.table.rows() != grid.n())
      pos = positional_encoding(grid.n_freq_patches, grid.n_time_patches,
                                state.enc_cfg.embed_dim);
    const MaskPlan plan = sample_mask(grid.n(), cfg.mask_ratio, item.mask_seed);

    Mat visible_patches(static_cast<Eigen::Index>(plan.visible_idx.size()), grid.patches.cols());
    Mat visible_pos(static_cast<Eigen::Index>(plan.visible_idx.size()), pos.table.cols());
    for (std::size_t i = 0; i < plan.visible_idx.size(); ++i) {
      visible_patches.row(static_cast<Eigen::Index>(i)) = grid.patches.row(plan.visible_idx[i]);
      visible_pos.row(static_cast<Eigen::Index>(i)) = pos.table.row(plan.visible_idx[i]);
    }
    EncoderForward online_fwd = encoder_forward(g, bound.encoder, state.enc_cfg,
                                                g.constant(visible_patches), visible_pos);
    Var z_v = online_fwd.final_out;
    Var z_hat_m = predictor_forward(g, bound.predictor, bound.mask_token, state.enc_cfg, z_v,
                                    plan, pos);

    Mat masked_patches(static_cast<Eigen::Index>(plan.masked_idx.size()), grid.patches.cols());
    Mat masked_pos(static_cast<Eigen::Index>(plan.masked_idx.size()), pos.table.cols());
    for (std::size_t i = 0; i < plan.masked_idx.size(); ++i) {
      masked_patches.row(static_cast<Eigen::Index>(i)) = grid.patches.row(plan.masked_idx[i]);
      masked_pos.row(static_cast<Eigen::Index>(i)) = pos.table.row(plan.masked_idx[i]);
    }
    EncoderActivations target_fwd =
        encoder_forward_plain(state.target, state.enc_cfg, masked_patches, masked_pos);
    const Mat z_tilde = standardize_target(target_fwd.final_out, cfg.objective.standardize_eps);
    m2d_terms.emplace_back(item_weight,
                           g.cosine_row_loss(z_hat_m, z_tilde, cfg.objective.l2_eps));

    if (use_off) {
      const Mat h = state.teacher->forward(item.clip_id, item.clean);
      const double patch_stride_ms = state.patch_cfg.patch_time * item.clean.config.hop_ms;
      const Mat h_aligned = align_teacher(h, patch_stride_ms, state.teacher->frame_stride_ms());
      Var full_seq = g.assemble_rows(grid.n(), z_v, plan.visible_idx, z_hat_m, plan.masked_idx);
      Var frames = g.frame_concat(full_seq, grid.n_freq_patches);
      Var h_hat = g.add_rowvec(g.matmul(frames, bound.proj_w), bound.proj_b);
      const Eigen::Index common =
          std::min(h_aligned.rows(), g.value(h_hat).rows());
      require(common >= 1, "train_step: teacher and prediction share no frames");
      if (g.value(h_hat).rows() != common) {
        std::vector<int> head(static_cast<std::size_t>(common));
        for (Eigen::Index i = 0; i < common; ++i) head[static_cast<std::size_t>(i)] = static_cast<int>(i);
        h_hat = g.gather_rows(h_hat, head);
      }
      off_terms.emplace_back(item_weight,
                             g.cosine_row_loss(h_hat, h_aligned.topRows(common),
                                               cfg.objective.l2_eps));
    }
  }

  StepGraph sg;
  sg.bound = bound;
  sg.l_m2d = g.add_scaled(m2d_terms);
  std::vector<std::pair<double, Var>> total_terms{{cfg.objective.lambda_m2d, sg.l_m2d}};
  if (use_off) {
    sg.l_off = g.add_scaled(off_terms);
    total_terms.emplace_back(cfg.objective.lambda_off, sg.l_off);
  }
  sg.l_total = g.add_scaled(total_terms);
  return sg;
}

inline TrainStepRecord train_step(ModelState& state, AdamW& opt,
                                  const std::vector<BatchItem>& batch, const TrainConfig& cfg,
                                  double lr) {
  const bool use_off = cfg.objective.lambda_off > 0.0;
  Graph g;
  StepGraph sg = build_step_graph(g, state, batch, cfg);

  TrainStepRecord rec;
  rec.losses = loss_total(cfg.objective, g.value(sg.l_m2d)(0, 0),
                          use_off ? g.value(sg.l_off)(0, 0) : 0.0);
  require(std::isfinite(rec.losses.l_total),
          str_cat("train_step: non-finite loss at step ", state.step + 1, " (l_m2d=",
                  rec.losses.l_m2d, ", l_off=", rec.losses.l_off, ")"));

  g.backward(sg.l_total);
  auto bound_list = bound_param_list(sg.bound, state.online);
  std::vector<Mat> grads;
  grads.reserve(bound_list.size());
  for (const auto& [name, var] : bound_list) grads.push_back(g.grad(var));

  rec.grad_norm = opt.step(grads, lr);
  rec.lr = lr;
  ema_update(state.target, state.online.encoder, cfg.tau);
  state.step += 1;
  rec.step = state.step;
  return rec;
}

struct PretrainSetup {
  EncoderConfig enc;
  PatchConfig patch;
  PredictorConfig pred;
  FrontendConfig frontend;
  TrainConfig train;
  std::shared_ptr<const Teacher> teacher;  // null when lambda_off = 0
  std::string teacher_spec = "none";
};

/// Builds the frozen teacher named by a spec string: "none", "meanpool",
/// "random", or "archive:PATH".
inline std::shared_ptr<const Teacher> make_teacher(const std::string& spec,
                                                   const FrontendConfig& fe) {
  if (spec.empty() || spec == "none") return nullptr;
  if (spec == "meanpool") return std::make_shared<MeanpoolTeacher>(fe.n_mels);
  if (spec == "random") return std::make_shared<RandomEncoderTeacher>(fe.n_mels);
  if (spec.rfind("archive:", 0) == 0)
    return std::make_shared<ArchiveTeacher>(FeatureArchive::load(spec.substr(8)));
  throw Error(str_cat("unknown teacher '", spec,
                      "' (expected none, meanpool, random, or archive:PATH)"));
}

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<TrainStepRecord> records;
  std::string checkpoint_path;
  std::string log_path;
};

inline Checkpoint make_checkpoint(const PretrainSetup& setup, const ModelState& state,
                                  const AdamW& opt, const NormStats& stats) {
  Checkpoint c;
  c.enc_cfg = setup.enc;
  c.patch_cfg = setup.patch;
  c.pred_cfg = setup.pred;
  c.frontend_cfg = setup.frontend;
  c.stats = stats;
  c.teacher_spec = setup.teacher_spec;
  c.teacher_dim = setup.teacher ? setup.teacher->feature_dim() : 0;
  c.online = state.online;
  c.target = state.target;
  c.adam_m = opt.m();
  c.adam_v = opt.v();
  c.step = state.step;
  c.seed = setup.train.seed;
  return c;
}

inline std::string format_step_line(const TrainStepRecord& r) {
  char buf[192];
  std::snprintf(buf, sizeof buf, "%ld %.10g %.10g %.10g %.10g %.10g", r.step, r.losses.l_m2d,
                r.losses.l_off, r.losses.l_total, r.lr, r.grad_norm);
  return std::string(buf);
}

inline PretrainResult run_pretraining(const PretrainSetup& setup, const Corpus& speech,
                                      const std::vector<Clip>& noise, const std::string& out_dir,
                                      const std::string& resume_from = "") {
  namespace fs = std::filesystem;
  setup.frontend.validate();
  setup.train.validate(setup.frontend);
  setup.enc.validate();
  setup.patch.validate(setup.frontend.n_mels);
  setup.pred.validate();
  if (setup.train.objective.lambda_off > 0.0)
    require(setup.teacher != nullptr,
            "run_pretraining: lambda_off > 0 requires a teacher (pass --teacher)");
  fs::create_directories(out_dir);

  TrainData data = prepare_train_data(speech, noise, setup.frontend);
  const std::size_t n_clips = data.speech.size();
  const long steps_per_epoch = static_cast<long>(n_clips) / setup.train.batch_size;
  require(steps_per_epoch >= 1, "run_pretraining: batch_size exceeds the corpus size");
  const long total_steps = steps_per_epoch * setup.train.epochs;
  const long warmup_steps = steps_per_epoch * setup.train.warmup_epochs;

  ModelState state;
  NormStats stats;
  std::vector<Mat> resume_m, resume_v;
  bool resuming = false;
  if (!resume_from.empty()) {
    Checkpoint c = load_checkpoint(resume_from);
    require(c.enc_cfg == setup.enc && c.patch_cfg == setup.patch && c.pred_cfg == setup.pred,
            "run_pretraining: checkpoint model config does not match the requested run");
    require(c.frontend_cfg == setup.frontend,
            "run_pretraining: checkpoint frontend config does not match the requested run");
    require(c.teacher_spec == setup.teacher_spec,
            "run_pretraining: checkpoint teacher does not match the requested run");
    require(c.seed == setup.train.seed,
            "run_pretraining: checkpoint seed does not match the requested run");
    state.enc_cfg = c.enc_cfg;
    state.patch_cfg = c.patch_cfg;
    state.pred_cfg = c.pred_cfg;
    state.online = std::move(c.online);
    state.target = std::move(c.target);
    state.teacher = setup.teacher;
    state.step = c.step;
    stats = c.stats;
    require(state.step % steps_per_epoch == 0,
            "run_pretraining: can only resume from an epoch-boundary checkpoint");
    require(state.step < total_steps, "run_pretraining: checkpoint is already past the final step");
    resume_m = std::move(c.adam_m);
    resume_v = std::move(c.adam_v);
    resuming = true;
  } else {
    state = init_model(setup.enc, setup.patch, setup.pred, setup.teacher,
                       setup.frontend.n_mels, setup.train.seed);
    stats = compute_train_stats(data, setup.train, setup.frontend);
  }

  std::vector<Mat*> param_slots;
  for (auto& kv : param_ptrs(state.online)) param_slots.push_back(kv.second);
  AdamWOptions opt_opts;
  opt_opts.weight_decay = setup.train.weight_decay;
  opt_opts.grad_clip = setup.train.grad_clip;
  AdamW opt(param_slots, opt_opts);
  if (resuming && !resume_m.empty())
    opt.restore(std::move(resume_m), std::move(resume_v), state.step);

  const std::string log_path = (fs::path(out_dir) / "train.log").string();
  std::ofstream log(log_path, resuming ? std::ios::app : std::ios::trunc);
  require(log.good(), str_cat("run_pretraining: cannot open '", log_path, "'"));

  PretrainResult result;
  const long start_epoch = state.step / steps_per_epoch;
  for (long epoch = start_epoch; epoch < setup.train.epochs; ++epoch) {
    for (long s = 0; s < steps_per_epoch; ++s) {
      const double lr = lr_schedule(state.step + 1, total_steps, warmup_steps,
                                    setup.train.base_lr);
      auto batch = build_batch(data, stats, setup.train, setup.frontend,
                               static_cast<int>(epoch), static_cast<int>(s));
      TrainStepRecord rec = train_step(state, opt, batch, setup.train, lr);
      log << format_step_line(rec) << "\n";
      result.records.push_back(rec);
    }
    log.flush();
    const bool last_epoch = epoch + 1 == setup.train.epochs;
    if (!last_epoch && setup.train.checkpoint_every_epochs > 0 &&
        (epoch + 1) % setup.train.checkpoint_every_epochs == 0) {
      const std::string path =
          (fs::path(out_dir) / str_cat("checkpoint_epoch_", epoch + 1, ".bin")).string();
      save_checkpoint(path, make_checkpoint(setup, state, opt, stats));
    }
  }

  result.checkpoint = make_checkpoint(setup, state, opt, stats);
  result.checkpoint_path = (fs::path(out_dir) / "checkpoint_final.bin").string();
  save_checkpoint(result.checkpoint_path, result.checkpoint);
  result.log_path = log_path;
  return result;
}

}  // namespace maskspec

#endif  // MASKSPEC_TRAINING_HPP_
