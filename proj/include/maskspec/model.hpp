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
// Transformer encoder f, predictor g, mask token m, online/target parameter
// sets, EMA update, and the pluggable frozen teacher.

#ifndef MASKSPEC_MODEL_HPP_
#define MASKSPEC_MODEL_HPP_

#include <cmath>
#include <memory>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "maskspec/archive.hpp"
#include "maskspec/autodiff.hpp"
#include "maskspec/common.hpp"
#include "maskspec/frontend.hpp"
#include "maskspec/patching.hpp"
#include "maskspec/rng.hpp"

namespace maskspec {

struct EncoderConfig {
  int depth = 4;
  int embed_dim = 64;
  int n_heads = 4;
  double mlp_ratio = 4.0;
  double ln_eps = 1e-6;

  int head_dim() const { return embed_dim / n_heads; }
  int mlp_hidden() const { return static_cast<int>(std::lround(embed_dim * mlp_ratio)); }

  void validate() const {
    require(depth >= 1, "EncoderConfig: depth must be >= 1");
    require(n_heads >= 1, "EncoderConfig: n_heads must be >= 1");
    require(embed_dim >= 4 && embed_dim % n_heads == 0,
            "EncoderConfig: embed_dim must be divisible by n_heads");
    require(embed_dim % 4 == 0, "EncoderConfig: embed_dim must be a multiple of 4");
    require(mlp_hidden() >= 1, "EncoderConfig: mlp_ratio too small");
  }

  static EncoderConfig tiny() { return EncoderConfig{4, 64, 4, 4.0, 1e-6}; }
  static EncoderConfig vit_base() { return EncoderConfig{12, 768, 12, 4.0, 1e-6}; }
  static EncoderConfig preset(const std::string& name) {
    if (name == "tiny") return tiny();
    if (name == "base") return vit_base();
    throw Error(str_cat("EncoderConfig: unknown preset '", name, "'"));
  }

  bool operator==(const EncoderConfig&) const = default;
};

enum class PredictorKind { kTransformer, kMlp };

inline std::string to_string(PredictorKind k) {
  return k == PredictorKind::kTransformer ? "transformer" : "mlp";
}

inline PredictorKind predictor_kind_from_string(const std::string& s) {
  if (s == "transformer") return PredictorKind::kTransformer;
  if (s == "mlp") return PredictorKind::kMlp;
  throw Error(str_cat("predictor kind must be 'transformer' or 'mlp', got '", s, "'"));
}

struct PredictorConfig {
  PredictorKind kind = PredictorKind::kTransformer;
  int depth = 2;

  void validate() const { require(depth >= 1, "PredictorConfig: depth must be >= 1"); }

  bool operator==(const PredictorConfig&) const = default;
};

struct LayerNormParams {
  Mat gamma;  // [1 x d]
  Mat beta;   // [1 x d]
};

struct AttentionParams {
  Mat w_q, b_q;
  Mat w_k, b_k;
  Mat w_v, b_v;
  Mat w_o, b_o;
};

struct MlpParams {
  Mat w1, b1;  // [d x h], [1 x h]
  Mat w2, b2;  // [h x d], [1 x d]
};

struct BlockParams {
  LayerNormParams ln1;
  AttentionParams attn;
  LayerNormParams ln2;
  MlpParams mlp;
};

struct EncoderParams {
  Mat patch_w;  // [patch_len x d]
  Mat patch_b;  // [1 x d]
  std::vector<BlockParams> blocks;
  LayerNormParams ln_final;
};

struct PredictorParams {
  PredictorKind kind = PredictorKind::kTransformer;
  std::vector<BlockParams> blocks;  // transformer kind
  MlpParams mlp;                    // mlp kind
  LayerNormParams ln_final;
};

struct OnlineParams {
  EncoderParams encoder;
  Mat mask_token;  // [1 x d]
  PredictorParams predictor;
  Mat proj_w;  // [nF*d x d_teacher]; empty when no teacher is configured
  Mat proj_b;  // [1 x d_teacher]

  bool has_projection() const { return proj_w.size() > 0; }
};

/// Visits every parameter matrix in a stable, documented order; f receives
/// (name, Mat&). The order defines checkpoint array names and optimizer slot
/// alignment, so it must never change.
template <typename T, typename F>
void for_each_param(T& p, const std::string& prefix, F&& f) {
  using U = std::remove_cv_t<T>;
  if constexpr (std::is_same_v<U, LayerNormParams>) {
    f(prefix + ".gamma", p.gamma);
    f(prefix + ".beta", p.beta);
  } else if constexpr (std::is_same_v<U, AttentionParams>) {
    f(prefix + ".w_q", p.w_q);
    f(prefix + ".b_q", p.b_q);
    f(prefix + ".w_k", p.w_k);
    f(prefix + ".b_k", p.b_k);
    f(prefix + ".w_v", p.w_v);
    f(prefix + ".b_v", p.b_v);
    f(prefix + ".w_o", p.w_o);
    f(prefix + ".b_o", p.b_o);
  } else if constexpr (std::is_same_v<U, MlpParams>) {
    f(prefix + ".w1", p.w1);
    f(prefix + ".b1", p.b1);
    f(prefix + ".w2", p.w2);
    f(prefix + ".b2", p.b2);
  } else if constexpr (std::is_same_v<U, BlockParams>) {
    for_each_param(p.ln1, prefix + ".ln1", f);
    for_each_param(p.attn, prefix + ".attn", f);
    for_each_param(p.ln2, prefix + ".ln2", f);
    for_each_param(p.mlp, prefix + ".mlp", f);
  } else if constexpr (std::is_same_v<U, EncoderParams>) {
    f(prefix + ".patch_w", p.patch_w);
    f(prefix + ".patch_b", p.patch_b);
    for (std::size_t i = 0; i < p.blocks.size(); ++i)
      for_each_param(p.blocks[i], str_cat(prefix, ".block", i), f);
    for_each_param(p.ln_final, prefix + ".ln_final", f);
  } else if constexpr (std::is_same_v<U, PredictorParams>) {
    if (p.kind == PredictorKind::kTransformer) {
      for (std::size_t i = 0; i < p.blocks.size(); ++i)
        for_each_param(p.blocks[i], str_cat(prefix, ".block", i), f);
    } else {
      for_each_param(p.mlp, prefix + ".mlp", f);
    }
    for_each_param(p.ln_final, prefix + ".ln_final", f);
  } else if constexpr (std::is_same_v<U, OnlineParams>) {
    for_each_param(p.encoder, prefix + ".encoder", f);
    f(prefix + ".mask_token", p.mask_token);
    for_each_param(p.predictor, prefix + ".predictor", f);
    if (p.has_projection()) {
      f(prefix + ".proj_w", p.proj_w);
      f(prefix + ".proj_b", p.proj_b);
    }
  } else {
    static_assert(!sizeof(T*), "for_each_param: unsupported parameter struct");
  }
}

template <typename T>
auto param_ptrs(T& p) {
  using MatPtr = std::conditional_t<std::is_const_v<T>, const Mat*, Mat*>;
  std::vector<std::pair<std::string, MatPtr>> out;
  for_each_param(p, "", [&out](const std::string& name, auto& m) {
    out.emplace_back(name, &m);
  });
  return out;
}

template <typename T>
long count_params(const T& p) {
  long n = 0;
  for_each_param(p, "", [&n](const std::string&, const Mat& m) { n += m.size(); });
  return n;
}

template <typename T>
std::uint64_t params_fingerprint(const T& p) {
  std::uint64_t h = 1469598103934665603ull;
  for_each_param(p, "", [&h](const std::string& name, const Mat& m) {
    h = splitmix64(h ^ fnv1a64(name));
    h = splitmix64(h ^ fingerprint(m));
  });
  return h;
}

template <typename T>
void check_all_finite(const T& p, const std::string& what) {
  for_each_param(p, "", [&what](const std::string& name, const Mat& m) {
    require(m.allFinite(), str_cat(what, ": non-finite values in ", name));
  });
}

// --------------------------------------------------------------------------
// Initialization
// --------------------------------------------------------------------------

inline Mat init_weight(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std = 0.02) {
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.truncated_normal(std);
  return m;
}

inline LayerNormParams init_layer_norm(int d) {
  return {Mat::Ones(1, d), Mat::Zero(1, d)};
}

inline BlockParams init_block(const EncoderConfig& cfg, Rng& rng) {
  const int d = cfg.embed_dim;
  const int h = cfg.mlp_hidden();
  BlockParams b;
  b.ln1 = init_layer_norm(d);
  b.attn.w_q = init_weight(rng, d, d);
  b.attn.b_q = Mat::Zero(1, d);
  b.attn.w_k = init_weight(rng, d, d);
  b.attn.b_k = Mat::Zero(1, d);
  b.attn.w_v = init_weight(rng, d, d);
  b.attn.b_v = Mat::Zero(1, d);
  b.attn.w_o = init_weight(rng, d, d);
  b.attn.b_o = Mat::Zero(1, d);
  b.ln2 = init_layer_norm(d);
  b.mlp.w1 = init_weight(rng, d, h);
  b.mlp.b1 = Mat::Zero(1, h);
  b.mlp.w2 = init_weight(rng, h, d);
  b.mlp.b2 = Mat::Zero(1, d);
  return b;
}

inline EncoderParams init_encoder(const EncoderConfig& cfg, int patch_len, Rng& rng) {
  cfg.validate();
  require(patch_len >= 1, "init_encoder: patch_len must be >= 1");
  EncoderParams p;
  p.patch_w = init_weight(rng, patch_len, cfg.embed_dim);
  p.patch_b = Mat::Zero(1, cfg.embed_dim);
  p.blocks.reserve(static_cast<std::size_t>(cfg.depth));
  for (int i = 0; i < cfg.depth; ++i) p.blocks.push_back(init_block(cfg, rng));
  p.ln_final = init_layer_norm(cfg.embed_dim);
  return p;
}

inline PredictorParams init_predictor(const PredictorConfig& pcfg, const EncoderConfig& cfg,
                                      Rng& rng) {
  pcfg.validate();
  PredictorParams p;
  p.kind = pcfg.kind;
  if (pcfg.kind == PredictorKind::kTransformer) {
    p.blocks.reserve(static_cast<std::size_t>(pcfg.depth));
    for (int i = 0; i < pcfg.depth; ++i) p.blocks.push_back(init_block(cfg, rng));
  } else {
    const int d = cfg.embed_dim;
    const int h = cfg.mlp_hidden();
    p.mlp.w1 = init_weight(rng, d, h);
    p.mlp.b1 = Mat::Zero(1, h);
    p.mlp.w2 = init_weight(rng, h, d);
    p.mlp.b2 = Mat::Zero(1, d);
  }
  p.ln_final = init_layer_norm(cfg.embed_dim);
  return p;
}

// --------------------------------------------------------------------------
// Teachers
// --------------------------------------------------------------------------

/// Frozen offline feature extractor. Implementations must be deterministic
/// and must never be mutated after construction.
class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual std::string kind() const = 0;
  virtual double frame_stride_ms() const = 0;
  virtual int feature_dim() const = 0;
  /// One feature row per teacher frame, [n_teacher_frames x feature_dim].
  virtual Mat forward(const std::string& clip_id, const LogMelSpectrogram& clean) const = 0;
  /// Stable over the teacher's lifetime; used by freezing checks.
  virtual std::uint64_t fingerprint() const = 0;
};

/// Oracle teacher: h_t = mean of k consecutive input frames, where k is the
/// ratio of the teacher stride to the frontend hop.
class MeanpoolTeacher : public Teacher {
 public:
  explicit MeanpoolTeacher(int n_mels = 80, double stride_ms = 20.0)
      : n_mels_(n_mels), stride_ms_(stride_ms) {
    require(n_mels_ >= 1 && stride_ms_ > 0, "MeanpoolTeacher: bad configuration");
  }

  std::string kind() const override { return "meanpool"; }
  double frame_stride_ms() const override { return stride_ms_; }
  int feature_dim() const override { return n_mels_; }

  Mat forward(const std::string&, const LogMelSpectrogram& clean) const override {
    require(clean.n_mels() == n_mels_,
            str_cat("MeanpoolTeacher: expected ", n_mels_, " mel bins, got ", clean.n_mels()));
    const double hop_ms = clean.config.hop_ms;
    const double ratio = stride_ms_ / hop_ms;
    const int k = static_cast<int>(std::lround(ratio));
    require(k >= 1 && std::abs(ratio - k) < 1e-9,
            str_cat("MeanpoolTeacher: stride ", stride_ms_, " ms is not an integer multiple of hop ",
                    hop_ms, " ms"));
    const int n_out = clean.n_frames() / k;
    require(n_out >= 1, "MeanpoolTeacher: clip shorter than one teacher frame");
    Mat h(n_out, n_mels_);
    for (int t = 0; t < n_out; ++t)
      h.row(t) = clean.values.middleCols(t * k, k).rowwise().mean().transpose();
    return h;
  }

  std::uint64_t fingerprint() const override {
    return splitmix64(fnv1a64("meanpool") ^ static_cast<std::uint64_t>(n_mels_) ^
                      (static_cast<std::uint64_t>(std::llround(stride_ms_ * 1000)) << 16));
  }

 private:
  int n_mels_;
  double stride_ms_;
};

/// Frozen randomly initialized 2-block encoder applied per frame (each
/// spectrogram column is one token), block-mean pooled to the teacher stride.
class RandomEncoderTeacher : public Teacher {
 public:
  explicit RandomEncoderTeacher(int n_mels = 80, double stride_ms = 20.0,
                                std::uint64_t seed = 0x6d61736b73706563ull)
      : n_mels_(n_mels), stride_ms_(stride_ms), seed_(seed) {
    cfg_.depth = 2;
    cfg_.embed_dim = 64;
    cfg_.n_heads = 4;
    Rng rng(derive_seed(seed_, "random-teacher", {}));
    params_ = init_encoder(cfg_, n_mels_, rng);
    frozen_fingerprint_ = params_fingerprint(params_);
  }

  std::string kind() const override { return "random"; }
  double frame_stride_ms() const override { return stride_ms_; }
  int feature_dim() const override { return cfg_.embed_dim; }

  Mat forward(const std::string& clip_id, const LogMelSpectrogram& clean) const override;

  std::uint64_t fingerprint() const override { return params_fingerprint(params_); }

  const EncoderParams& params() const { return params_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  int n_mels_;
  double stride_ms_;
  std::uint64_t seed_;
  EncoderConfig cfg_;
  EncoderParams params_;
  std::uint64_t frozen_fingerprint_ = 0;
};

/// Serves pre-exported features from a FeatureArchive, keyed by clip id.
class ArchiveTeacher : public Teacher {
 public:
  explicit ArchiveTeacher(FeatureArchive archive) : archive_(std::move(archive)) {
    require(archive_.feature_dim > 0 && archive_.frame_stride_ms > 0,
            "ArchiveTeacher: archive missing stride/dim metadata");
  }

  static ArchiveTeacher from_file(const std::string& path) {
    return ArchiveTeacher(FeatureArchive::load(path));
  }

  std::string kind() const override { return "archive"; }
  double frame_stride_ms() const override { return archive_.frame_stride_ms; }
  int feature_dim() const override { return archive_.feature_dim; }

  Mat forward(const std::string& clip_id, const LogMelSpectrogram&) const override {
    return archive_.get(clip_id);
  }

  std::uint64_t fingerprint() const override {
    std::uint64_t h = fnv1a64("archive");
    for (const auto& kv : archive_.features) {
      h = splitmix64(h ^ fnv1a64(kv.first));
      h = splitmix64(h ^ fingerprint_mat(kv.second));
    }
    return h;
  }

 private:
  static std::uint64_t fingerprint_mat(const Mat& m) { return ::maskspec::fingerprint(m); }
  FeatureArchive archive_;
};

// --------------------------------------------------------------------------
// Model state
// --------------------------------------------------------------------------

struct ModelState {
  EncoderConfig enc_cfg;
  PatchConfig patch_cfg;
  PredictorConfig pred_cfg;
  OnlineParams online;    // theta
  EncoderParams target;   // xi, encoder only
  std::shared_ptr<const Teacher> teacher;  // may be null (no distillation)
  long step = 0;
};

/// d_teacher > 0 allocates the frame-level projection to teacher space; a
/// configured teacher must agree with it.
inline ModelState init_model(const EncoderConfig& enc_cfg, const PatchConfig& patch_cfg,
                             const PredictorConfig& pred_cfg,
                             std::shared_ptr<const Teacher> teacher, int n_mels,
                             std::uint64_t seed) {
  enc_cfg.validate();
  patch_cfg.validate(n_mels);
  pred_cfg.validate();
  require(patch_cfg.embed_dim == enc_cfg.embed_dim,
          "init_model: patch embed_dim must match encoder embed_dim");
  ModelState s;
  s.enc_cfg = enc_cfg;
  s.patch_cfg = patch_cfg;
  s.pred_cfg = pred_cfg;
  s.teacher = std::move(teacher);

  Rng rng(derive_seed(seed, "model-init", {}));
  s.online.encoder = init_encoder(enc_cfg, patch_cfg.patch_len(), rng);
  s.online.mask_token = init_weight(rng, 1, enc_cfg.embed_dim);
  s.online.predictor = init_predictor(pred_cfg, enc_cfg, rng);
  if (s.teacher) {
    const int d_teacher = s.teacher->feature_dim();
    require(d_teacher >= 1, "init_model: teacher feature_dim must be >= 1");
    const int n_freq_patches = n_mels / patch_cfg.patch_freq;
    s.online.proj_w = init_weight(rng, n_freq_patches * enc_cfg.embed_dim, d_teacher);
    s.online.proj_b = Mat::Zero(1, d_teacher);
  }
  s.target = s.online.encoder;
  return s;
}

/// xi <- tau*xi + (1-tau)*theta, elementwise over the encoder parameters.
inline void ema_update(EncoderParams& xi, const EncoderParams& theta, double tau) {
  require(tau >= 0.0 && tau <= 1.0, "ema_update: tau must lie in [0, 1]");
  auto xs = param_ptrs(xi);
  auto ts = param_ptrs(std::as_const(theta));
  require(xs.size() == ts.size(), "ema_update: parameter set mismatch");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Mat& x = *xs[i].second;
    const Mat& t = *ts[i].second;
    require(x.rows() == t.rows() && x.cols() == t.cols(),
            str_cat("ema_update: shape mismatch at ", xs[i].first));
    x = tau * x + (1.0 - tau) * t;
  }
}

// --------------------------------------------------------------------------
// Graph binding and forward passes
// --------------------------------------------------------------------------

struct BoundLayerNorm {
  Var gamma, beta;
};
struct BoundAttention {
  Var w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
};
struct BoundMlp {
  Var w1, b1, w2, b2;
};
struct BoundBlock {
  BoundLayerNorm ln1;
  BoundAttention attn;
  BoundLayerNorm ln2;
  BoundMlp mlp;
};
struct BoundEncoder {
  Var patch_w, patch_b;
  std::vector<BoundBlock> blocks;
  BoundLayerNorm ln_final;
};
struct BoundPredictor {
  PredictorKind kind = PredictorKind::kTransformer;
  std::vector<BoundBlock> blocks;
  BoundMlp mlp;
  BoundLayerNorm ln_final;
};
struct BoundOnline {
  BoundEncoder encoder;
  Var mask_token;
  BoundPredictor predictor;
  Var proj_w, proj_b;  // invalid Vars when no projection is allocated
};

namespace bind_detail {

inline Var bind(Graph& g, const Mat& m, bool trainable) {
  return trainable ? g.param(m) : g.constant(m);
}

inline BoundLayerNorm bind(Graph& g, const LayerNormParams& p, bool t) {
  return {bind(g, p.gamma, t), bind(g, p.beta, t)};
}

inline BoundAttention bind(Graph& g, const AttentionParams& p, bool t) {
  return {bind(g, p.w_q, t), bind(g, p.b_q, t), bind(g, p.w_k, t), bind(g, p.b_k, t),
          bind(g, p.w_v, t), bind(g, p.b_v, t), bind(g, p.w_o, t), bind(g, p.b_o, t)};
}

inline BoundMlp bind(Graph& g, const MlpParams& p, bool t) {
  return {bind(g, p.w1, t), bind(g, p.b1, t), bind(g, p.w2, t), bind(g, p.b2, t)};
}

inline BoundBlock bind(Graph& g, const BlockParams& p, bool t) {
  return {bind(g, p.ln1, t), bind(g, p.attn, t), bind(g, p.ln2, t), bind(g, p.mlp, t)};
}

}  // namespace bind_detail

inline BoundEncoder bind_encoder(Graph& g, const EncoderParams& p, bool trainable) {
  BoundEncoder b;
  b.patch_w = bind_detail::bind(g, p.patch_w, trainable);
  b.patch_b = bind_detail::bind(g, p.patch_b, trainable);
  b.blocks.reserve(p.blocks.size());
  for (const auto& blk : p.blocks) b.blocks.push_back(bind_detail::bind(g, blk, trainable));
  b.ln_final = bind_detail::bind(g, p.ln_final, trainable);
  return b;
}

inline BoundPredictor bind_predictor(Graph& g, const PredictorParams& p, bool trainable) {
  BoundPredictor b;
  b.kind = p.kind;
  if (p.kind == PredictorKind::kTransformer) {
    b.blocks.reserve(p.blocks.size());
    for (const auto& blk : p.blocks) b.blocks.push_back(bind_detail::bind(g, blk, trainable));
  } else {
    b.mlp = bind_detail::bind(g, p.mlp, trainable);
  }
  b.ln_final = bind_detail::bind(g, p.ln_final, trainable);
  return b;
}

inline BoundOnline bind_online(Graph& g, const OnlineParams& p, bool trainable) {
  BoundOnline b;
  b.encoder = bind_encoder(g, p.encoder, trainable);
  b.mask_token = bind_detail::bind(g, p.mask_token, trainable);
  b.predictor = bind_predictor(g, p.predictor, trainable);
  if (p.has_projection()) {
    b.proj_w = bind_detail::bind(g, p.proj_w, trainable);
    b.proj_b = bind_detail::bind(g, p.proj_b, trainable);
  }
  return b;
}

/// Bound Vars in exactly the order for_each_param visits the OnlineParams;
/// optimizer slots rely on this alignment (checked by tests).
inline std::vector<std::pair<std::string, Var>> bound_param_list(const BoundOnline& b,
                                                                 const OnlineParams& p) {
  std::vector<std::pair<std::string, Var>> out;
  auto add_ln = [&out](const std::string& prefix, const BoundLayerNorm& ln) {
    out.emplace_back(prefix + ".gamma", ln.gamma);
    out.emplace_back(prefix + ".beta", ln.beta);
  };
  auto add_block = [&out, &add_ln](const std::string& prefix, const BoundBlock& blk) {
    add_ln(prefix + ".ln1", blk.ln1);
    out.emplace_back(prefix + ".attn.w_q", blk.attn.w_q);
    out.emplace_back(prefix + ".attn.b_q", blk.attn.b_q);
    out.emplace_back(prefix + ".attn.w_k", blk.attn.w_k);
    out.emplace_back(prefix + ".attn.b_k", blk.attn.b_k);
    out.emplace_back(prefix + ".attn.w_v", blk.attn.w_v);
    out.emplace_back(prefix + ".attn.b_v", blk.attn.b_v);
    out.emplace_back(prefix + ".attn.w_o", blk.attn.w_o);
    out.emplace_back(prefix + ".attn.b_o", blk.attn.b_o);
    add_ln(prefix + ".ln2", blk.ln2);
    out.emplace_back(prefix + ".mlp.w1", blk.mlp.w1);
    out.emplace_back(prefix + ".mlp.b1", blk.mlp.b1);
    out.emplace_back(prefix + ".mlp.w2", blk.mlp.w2);
    out.emplace_back(prefix + ".mlp.b2", blk.mlp.b2);
  };
  out.emplace_back(".encoder.patch_w", b.encoder.patch_w);
  out.emplace_back(".encoder.patch_b", b.encoder.patch_b);
  for (std::size_t i = 0; i < b.encoder.blocks.size(); ++i)
    add_block(str_cat(".encoder.block", i), b.encoder.blocks[i]);
  add_ln(".encoder.ln_final", b.encoder.ln_final);
  out.emplace_back(".mask_token", b.mask_token);
  if (b.predictor.kind == PredictorKind::kTransformer) {
    for (std::size_t i = 0; i < b.predictor.blocks.size(); ++i)
      add_block(str_cat(".predictor.block", i), b.predictor.blocks[i]);
  } else {
    out.emplace_back(".predictor.mlp.w1", b.predictor.mlp.w1);
    out.emplace_back(".predictor.mlp.b1", b.predictor.mlp.b1);
    out.emplace_back(".predictor.mlp.w2", b.predictor.mlp.w2);
    out.emplace_back(".predictor.mlp.b2", b.predictor.mlp.b2);
  }
  add_ln(".predictor.ln_final", b.predictor.ln_final);
  if (p.has_projection()) {
    out.emplace_back(".proj_w", b.proj_w);
    out.emplace_back(".proj_b", b.proj_b);
  }
  return out;
}

inline Var attention_forward(Graph& g, const BoundAttention& p, int n_heads, Var x) {
  const int d = static_cast<int>(g.value(x).cols());
  require(d % n_heads == 0, "attention_forward: width not divisible by head count");
  const int dk = d / n_heads;
  Var q = g.add_rowvec(g.matmul(x, p.w_q), p.b_q);
  Var k = g.add_rowvec(g.matmul(x, p.w_k), p.b_k);
  Var v = g.add_rowvec(g.matmul(x, p.w_v), p.b_v);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    Var qh = g.slice_cols(q, h * dk, dk);
    Var kh = g.slice_cols(k, h * dk, dk);
    Var vh = g.slice_cols(v, h * dk, dk);
    Var scores = g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dk)));
    heads.push_back(g.matmul(g.softmax_rows(scores), vh));
  }
  Var merged = n_heads == 1 ? heads[0] : g.concat_cols(heads);
  return g.add_rowvec(g.matmul(merged, p.w_o), p.b_o);
}

inline Var mlp_forward(Graph& g, const BoundMlp& p, Var x) {
  Var h = g.gelu(g.add_rowvec(g.matmul(x, p.w1), p.b1));
  return g.add_rowvec(g.matmul(h, p.w2), p.b2);
}

/// Pre-LN transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
inline Var block_forward(Graph& g, const BoundBlock& blk, int n_heads, double ln_eps, Var x) {
  Var a = attention_forward(g, blk.attn, n_heads, g.layer_norm(x, blk.ln1.gamma, blk.ln1.beta, ln_eps));
  x = g.add(x, a);
  Var m = mlp_forward(g, blk.mlp, g.layer_norm(x, blk.ln2.gamma, blk.ln2.beta, ln_eps));
  return g.add(x, m);
}

struct EncoderForward {
  /// layers[0] is the embedding output; layers[i] is block i's output.
  std::vector<Var> layers;
  Var final_out;  // after the final layer norm
};

/// tokens: [N x patch_len] raw patch vectors; pos_rows: [N x d] positional
/// rows already gathered for exactly these tokens.
inline EncoderForward encoder_forward(Graph& g, const BoundEncoder& enc,
                                      const EncoderConfig& cfg, Var tokens,
                                      const Mat& pos_rows) {
  require(g.value(tokens).rows() == pos_rows.rows() && pos_rows.cols() == cfg.embed_dim,
          "encoder_forward: positional rows do not match the token set");
  EncoderForward out;
  Var x = g.add(g.add_rowvec(g.matmul(tokens, enc.patch_w), enc.patch_b), g.constant(pos_rows));
  out.layers.push_back(x);
  for (const auto& blk : enc.blocks) {
    x = block_forward(g, blk, cfg.n_heads, cfg.ln_eps, x);
    out.layers.push_back(x);
  }
  out.final_out = g.layer_norm(x, enc.ln_final.gamma, enc.ln_final.beta, cfg.ln_eps);
  return out;
}

/// Builds the full-length sequence (z_v at visible slots, mask token at
/// masked slots), adds positions by original index, runs g, and returns the
/// rows at masked_idx in plan order.
inline Var predictor_forward(Graph& g, const BoundPredictor& pred, Var mask_token,
                             const EncoderConfig& cfg, Var z_v, const MaskPlan& plan,
                             const PositionalEncoding& pos) {
  const int n = plan.n();
  require(pos.table.rows() == n && pos.table.cols() == cfg.embed_dim,
          "predictor_forward: positional table does not match the plan");
  require(g.value(z_v).rows() == static_cast<Eigen::Index>(plan.visible_idx.size()),
          "predictor_forward: |z_v| must equal |visible_idx|");
  Var seq = g.assemble_rows(n, z_v, plan.visible_idx, mask_token, plan.masked_idx);
  Var x = g.add(seq, g.constant(pos.table));
  if (pred.kind == PredictorKind::kTransformer) {
    for (const auto& blk : pred.blocks) x = block_forward(g, blk, cfg.n_heads, cfg.ln_eps, x);
  } else {
    x = g.add(x, mlp_forward(g, pred.mlp, x));
  }
  x = g.layer_norm(x, pred.ln_final.gamma, pred.ln_final.beta, cfg.ln_eps);
  return g.gather_rows(x, plan.masked_idx);
}

struct EncoderActivations {
  std::vector<Mat> layers;  // embedding output first, then block outputs
  Mat final_out;
};

/// Plain forward for probing and teachers: binds parameters as constants and
/// reuses the graph implementation so there is exactly one encoder codepath.
inline EncoderActivations encoder_forward_plain(const EncoderParams& params,
                                                const EncoderConfig& cfg, const Mat& tokens,
                                                const Mat& pos_rows) {
  Graph g;
  BoundEncoder enc = bind_encoder(g, params, false);
  EncoderForward fwd = encoder_forward(g, enc, cfg, g.constant(tokens), pos_rows);
  EncoderActivations acts;
  acts.layers.reserve(fwd.layers.size());
  for (Var v : fwd.layers) acts.layers.push_back(g.value(v));
  acts.final_out = g.value(fwd.final_out);
  return acts;
}

inline Mat random_teacher_forward(const EncoderParams& params, const EncoderConfig& cfg,
                                  int n_mels, double stride_ms,
                                  const LogMelSpectrogram& clean) {
  require(clean.n_mels() == n_mels,
          str_cat("RandomEncoderTeacher: expected ", n_mels, " mel bins, got ", clean.n_mels()));
  const double hop_ms = clean.config.hop_ms;
  const double ratio = stride_ms / hop_ms;
  const int k = static_cast<int>(std::lround(ratio));
  require(k >= 1 && std::abs(ratio - k) < 1e-9,
          "RandomEncoderTeacher: stride is not an integer multiple of the hop");
  const int n_frames = clean.n_frames();
  require(n_frames >= k, "RandomEncoderTeacher: clip shorter than one teacher frame");
  const Mat frames = clean.values.transpose();  // [n_frames x n_mels]
  const Mat pos = positional_encoding(1, n_frames, cfg.embed_dim).table;
  EncoderActivations acts = encoder_forward_plain(params, cfg, frames, pos);
  const int n_out = n_frames / k;
  Mat h(n_out, cfg.embed_dim);
  for (int t = 0; t < n_out; ++t)
    h.row(t) = acts.final_out.middleRows(t * k, k).colwise().mean();
  return h;
}

inline Mat RandomEncoderTeacher::forward(const std::string&,
                                         const LogMelSpectrogram& clean) const {
  require(params_fingerprint(params_) == frozen_fingerprint_,
          "RandomEncoderTeacher: parameters mutated after construction");
  return random_teacher_forward(params_, cfg_, n_mels_, stride_ms_, clean);
}

}  // namespace maskspec

#endif  // MASKSPEC_MODEL_HPP_
