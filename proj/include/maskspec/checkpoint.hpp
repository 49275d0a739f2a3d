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
// Checkpoint container: online/target parameters, optimizer moments, step
// counter, and the exact model/frontend configs. Loads fail loudly on shape
// or config mismatch.

#ifndef MASKSPEC_CHECKPOINT_HPP_
#define MASKSPEC_CHECKPOINT_HPP_

#include <string>
#include <vector>

#include "maskspec/archive.hpp"
#include "maskspec/common.hpp"
#include "maskspec/frontend.hpp"
#include "maskspec/model.hpp"
#include "maskspec/patching.hpp"

namespace maskspec {

struct Checkpoint {
  EncoderConfig enc_cfg;
  PatchConfig patch_cfg;
  PredictorConfig pred_cfg;
  FrontendConfig frontend_cfg;
  NormStats stats;
  std::string teacher_spec = "none";  // none | meanpool | random | archive:PATH
  int teacher_dim = 0;                // 0 when no projection is allocated
  OnlineParams online;
  EncoderParams target;
  std::vector<Mat> adam_m;  // aligned with param_ptrs(online)
  std::vector<Mat> adam_v;
  long step = 0;
  std::uint64_t seed = 0;
};

namespace checkpoint_detail {

inline LayerNormParams zero_layer_norm(int d) { return {Mat::Zero(1, d), Mat::Zero(1, d)}; }

inline BlockParams zero_block(const EncoderConfig& cfg) {
  const int d = cfg.embed_dim;
  const int h = cfg.mlp_hidden();
  BlockParams b;
  b.ln1 = zero_layer_norm(d);
  b.attn = {Mat::Zero(d, d), Mat::Zero(1, d), Mat::Zero(d, d), Mat::Zero(1, d),
            Mat::Zero(d, d), Mat::Zero(1, d), Mat::Zero(d, d), Mat::Zero(1, d)};
  b.ln2 = zero_layer_norm(d);
  b.mlp = {Mat::Zero(d, h), Mat::Zero(1, h), Mat::Zero(h, d), Mat::Zero(1, d)};
  return b;
}

inline EncoderParams zero_encoder(const EncoderConfig& cfg, int patch_len) {
  EncoderParams p;
  p.patch_w = Mat::Zero(patch_len, cfg.embed_dim);
  p.patch_b = Mat::Zero(1, cfg.embed_dim);
  for (int i = 0; i < cfg.depth; ++i) p.blocks.push_back(zero_block(cfg));
  p.ln_final = zero_layer_norm(cfg.embed_dim);
  return p;
}

inline OnlineParams zero_online(const EncoderConfig& enc_cfg, const PatchConfig& patch_cfg,
                                const PredictorConfig& pred_cfg, int n_mels, int teacher_dim) {
  OnlineParams p;
  p.encoder = zero_encoder(enc_cfg, patch_cfg.patch_len());
  p.mask_token = Mat::Zero(1, enc_cfg.embed_dim);
  p.predictor.kind = pred_cfg.kind;
  if (pred_cfg.kind == PredictorKind::kTransformer) {
    for (int i = 0; i < pred_cfg.depth; ++i) p.predictor.blocks.push_back(zero_block(enc_cfg));
  } else {
    const int d = enc_cfg.embed_dim;
    const int h = enc_cfg.mlp_hidden();
    p.predictor.mlp = {Mat::Zero(d, h), Mat::Zero(1, h), Mat::Zero(h, d), Mat::Zero(1, d)};
  }
  p.predictor.ln_final = zero_layer_norm(enc_cfg.embed_dim);
  if (teacher_dim > 0) {
    const int n_freq = n_mels / patch_cfg.patch_freq;
    p.proj_w = Mat::Zero(n_freq * enc_cfg.embed_dim, teacher_dim);
    p.proj_b = Mat::Zero(1, teacher_dim);
  }
  return p;
}

}  // namespace checkpoint_detail

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  require(c.adam_m.size() == c.adam_v.size(), "save_checkpoint: moment slot mismatch");
  ArrayFile f;
  f.set_meta("kind", "checkpoint");
  f.set_meta("version", "1");
  f.set_meta("seed", str_cat(c.seed));
  f.set_meta("step", str_cat(c.step));
  f.set_meta("enc.depth", str_cat(c.enc_cfg.depth));
  f.set_meta("enc.embed_dim", str_cat(c.enc_cfg.embed_dim));
  f.set_meta("enc.n_heads", str_cat(c.enc_cfg.n_heads));
  f.set_meta("enc.mlp_ratio", fmt_double(c.enc_cfg.mlp_ratio));
  f.set_meta("enc.ln_eps", fmt_double(c.enc_cfg.ln_eps));
  f.set_meta("patch.freq", str_cat(c.patch_cfg.patch_freq));
  f.set_meta("patch.time", str_cat(c.patch_cfg.patch_time));
  f.set_meta("patch.embed_dim", str_cat(c.patch_cfg.embed_dim));
  f.set_meta("pred.kind", to_string(c.pred_cfg.kind));
  f.set_meta("pred.depth", str_cat(c.pred_cfg.depth));
  f.set_meta("frontend.sample_rate", str_cat(c.frontend_cfg.sample_rate));
  f.set_meta("frontend.window_ms", fmt_double(c.frontend_cfg.window_ms));
  f.set_meta("frontend.hop_ms", fmt_double(c.frontend_cfg.hop_ms));
  f.set_meta("frontend.n_mels", str_cat(c.frontend_cfg.n_mels));
  f.set_meta("frontend.fmin", fmt_double(c.frontend_cfg.fmin));
  f.set_meta("frontend.fmax", fmt_double(c.frontend_cfg.fmax));
  f.set_meta("frontend.log_floor", fmt_double(c.frontend_cfg.log_floor));
  f.set_meta("stats.mean", fmt_double(c.stats.mean));
  f.set_meta("stats.std", fmt_double(c.stats.std));
  f.set_meta("stats.n_frames_seen", str_cat(c.stats.n_frames_seen));
  f.set_meta("stats.corpus_id", c.stats.corpus_id);
  f.set_meta("teacher.spec", c.teacher_spec);
  f.set_meta("teacher.dim", str_cat(c.teacher_dim));

  for_each_param(c.online, "online", [&f](const std::string& name, const Mat& m) {
    f.add(name, m);
  });
  for_each_param(c.target, "target", [&f](const std::string& name, const Mat& m) {
    f.add(name, m);
  });
  if (!c.adam_m.empty()) {
    auto names = param_ptrs(c.online);
    require(c.adam_m.size() == names.size(), "save_checkpoint: moments misaligned with params");
    for (std::size_t i = 0; i < names.size(); ++i) {
      f.add("adam.m.online" + names[i].first, c.adam_m[i]);
      f.add("adam.v.online" + names[i].first, c.adam_v[i]);
    }
  }
  f.save(path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  ArrayFile f = ArrayFile::load(path);
  require(f.has_meta("kind") && f.meta("kind") == "checkpoint",
          str_cat("load_checkpoint: '", path, "' is not a checkpoint"));
  Checkpoint c;
  c.seed = static_cast<std::uint64_t>(std::stoull(f.meta("seed")));
  c.step = f.meta_long("step");
  c.enc_cfg.depth = static_cast<int>(f.meta_long("enc.depth"));
  c.enc_cfg.embed_dim = static_cast<int>(f.meta_long("enc.embed_dim"));
  c.enc_cfg.n_heads = static_cast<int>(f.meta_long("enc.n_heads"));
  c.enc_cfg.mlp_ratio = f.meta_double("enc.mlp_ratio");
  c.enc_cfg.ln_eps = f.meta_double("enc.ln_eps");
  c.patch_cfg.patch_freq = static_cast<int>(f.meta_long("patch.freq"));
  c.patch_cfg.patch_time = static_cast<int>(f.meta_long("patch.time"));
  c.patch_cfg.embed_dim = static_cast<int>(f.meta_long("patch.embed_dim"));
  c.pred_cfg.kind = predictor_kind_from_string(f.meta("pred.kind"));
  c.pred_cfg.depth = static_cast<int>(f.meta_long("pred.depth"));
  c.frontend_cfg.sample_rate = static_cast<int>(f.meta_long("frontend.sample_rate"));
  c.frontend_cfg.window_ms = f.meta_double("frontend.window_ms");
  c.frontend_cfg.hop_ms = f.meta_double("frontend.hop_ms");
  c.frontend_cfg.n_mels = static_cast<int>(f.meta_long("frontend.n_mels"));
  c.frontend_cfg.fmin = f.meta_double("frontend.fmin");
  c.frontend_cfg.fmax = f.meta_double("frontend.fmax");
  c.frontend_cfg.log_floor = f.meta_double("frontend.log_floor");
  c.stats.mean = f.meta_double("stats.mean");
  c.stats.std = f.meta_double("stats.std");
  c.stats.n_frames_seen = f.meta_long("stats.n_frames_seen");
  c.stats.corpus_id = f.meta("stats.corpus_id");
  c.teacher_spec = f.meta("teacher.spec");
  c.teacher_dim = static_cast<int>(f.meta_long("teacher.dim"));

  c.enc_cfg.validate();
  c.patch_cfg.validate(c.frontend_cfg.n_mels);
  c.pred_cfg.validate();
  c.frontend_cfg.validate();

  c.online = checkpoint_detail::zero_online(c.enc_cfg, c.patch_cfg, c.pred_cfg,
                                            c.frontend_cfg.n_mels, c.teacher_dim);
  c.target = checkpoint_detail::zero_encoder(c.enc_cfg, c.patch_cfg.patch_len());
  for_each_param(c.online, "online", [&f](const std::string& name, Mat& m) {
    m = f.get_shaped(name, m.rows(), m.cols());
  });
  for_each_param(c.target, "target", [&f](const std::string& name, Mat& m) {
    m = f.get_shaped(name, m.rows(), m.cols());
  });
  auto names = param_ptrs(c.online);
  if (f.has("adam.m.online" + names[0].first)) {
    c.adam_m.reserve(names.size());
    c.adam_v.reserve(names.size());
    for (const auto& [name, ptr] : names) {
      c.adam_m.push_back(f.get_shaped("adam.m.online" + name, ptr->rows(), ptr->cols()));
      c.adam_v.push_back(f.get_shaped("adam.v.online" + name, ptr->rows(), ptr->cols()));
    }
  }
  return c;
}

}  // namespace maskspec

#endif  // MASKSPEC_CHECKPOINT_HPP_
