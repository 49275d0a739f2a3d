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
// Frozen-encoder probing (weighted layer sum and final-layer linear probes)
// on deterministic synthetic tasks, plus the toy speech/noise generator the
// tasks are built from.

#ifndef MASKSPEC_EVALUATION_HPP_
#define MASKSPEC_EVALUATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "maskspec/autodiff.hpp"
#include "maskspec/checkpoint.hpp"
#include "maskspec/common.hpp"
#include "maskspec/corpus.hpp"
#include "maskspec/frontend.hpp"
#include "maskspec/model.hpp"
#include "maskspec/optimizer.hpp"
#include "maskspec/patching.hpp"
#include "maskspec/rng.hpp"
#include "maskspec/wav.hpp"

namespace maskspec {

// --------------------------------------------------------------------------
// Toy corpus
// --------------------------------------------------------------------------

struct ToyCorpusSpec {
  int n_clips = 256;
  int n_noise_clips = 0;  // 0: derived as max(4, n_clips/4)
  double duration_s = 4.2;  // leaves headroom for 4.00 s training crops
  int sample_rate = 16000;
  int n_pitch_classes = 2;    // octave-separated fundamentals
  int n_speaker_classes = 4;  // harmonic rolloff templates
  int n_emotion_classes = 3;  // modulation/energy profiles
  std::uint64_t seed = 0;

  int noise_clips() const {
    return n_noise_clips > 0 ? n_noise_clips : std::max(4, n_clips / 4);
  }

  void validate() const {
    require(n_clips >= 8, "ToyCorpusSpec: need at least 8 clips");
    require(duration_s >= 0.25, "ToyCorpusSpec: clips must be at least 0.25 s");
    require(sample_rate > 0, "ToyCorpusSpec: sample_rate must be positive");
    require(n_pitch_classes >= 2 && n_pitch_classes <= 3,
            "ToyCorpusSpec: pitch classes must be 2 or 3 (octave steps)");
    require(n_speaker_classes >= 2 && n_speaker_classes <= 8,
            "ToyCorpusSpec: speaker classes must lie in [2, 8]");
    require(n_emotion_classes >= 2 && n_emotion_classes <= 3,
            "ToyCorpusSpec: emotion classes must be 2 or 3");
  }
};

struct ToyCorpus {
  std::vector<Clip> speech;
  std::vector<std::string> task_names;  // pitch, speaker, emotion
  std::map<std::string, std::vector<int>> labels;
  std::vector<Clip> noise;
};

namespace toy_detail {

/// Exactly balanced label multiset (counts differ by at most one), shuffled.
inline std::vector<int> balanced_labels(int n, int n_classes, std::uint64_t seed) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % n_classes;
  Rng rng(seed);
  rng.shuffle(labels);
  return labels;
}

struct EmotionProfile {
  double attack_s;
  double tremolo_depth, tremolo_rate;
  double vibrato_depth, vibrato_rate;
  double pitch_drift;  // fractional drift over the whole clip
};

inline EmotionProfile emotion_profile(int e) {
  switch (e) {
    case 0: return {0.03, 0.0, 0.0, 0.0, 0.0, 0.0};
    case 1: return {0.03, 0.6, 5.0, 0.015, 6.0, 0.0};
    default: return {0.20, 0.3, 1.5, 0.0, 0.0, -0.02};
  }
}

inline std::vector<double> synth_speech(const ToyCorpusSpec& spec, int pitch, int speaker,
                                        int emotion, Rng& rng) {
  const int n = static_cast<int>(std::lround(spec.duration_s * spec.sample_rate));
  const double sr = spec.sample_rate;
  const double f0 =
      220.0 * std::pow(2.0, pitch) * (1.0 + (rng.uniform() * 2.0 - 1.0) * 0.03);
  const double rolloff =
      1.0 + 0.6 * static_cast<double>(speaker) / static_cast<double>(spec.n_speaker_classes - 1);
  const EmotionProfile prof = emotion_profile(emotion);
  constexpr int kPartials = 6;
  double phases[kPartials];
  for (int k = 0; k < kPartials; ++k) phases[k] = rng.uniform() * 2.0 * M_PI;
  const double tremolo_phase = rng.uniform() * 2.0 * M_PI;
  const double amp_target = 0.35 + 0.1 * rng.uniform();

  std::vector<double> x(static_cast<std::size_t>(n));
  const double release_s = 0.03;
  double phase = 0.0;
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = i / sr;
    const double f_inst =
        f0 * (1.0 + prof.vibrato_depth * std::sin(2.0 * M_PI * prof.vibrato_rate * t) +
              prof.pitch_drift * t / spec.duration_s);
    phase += 2.0 * M_PI * f_inst / sr;
    double s = 0.0;
    for (int k = 0; k < kPartials; ++k)
      s += std::pow(k + 1.0, -rolloff) * std::sin((k + 1.0) * phase + phases[k]);
    const double tremolo =
        1.0 - prof.tremolo_depth * 0.5 *
                  (1.0 + std::sin(2.0 * M_PI * prof.tremolo_rate * t + tremolo_phase));
    double env = 1.0;
    if (t < prof.attack_s) env *= 0.5 * (1.0 - std::cos(M_PI * t / prof.attack_s));
    const double tail = spec.duration_s - t;
    if (tail < release_s) env *= 0.5 * (1.0 - std::cos(M_PI * tail / release_s));
    const double v = s * tremolo * env;
    x[static_cast<std::size_t>(i)] = v;
    peak = std::max(peak, std::abs(v));
  }
  require(peak > 0, "synth_speech: silent clip");
  for (double& v : x) v *= amp_target / peak;
  return x;
}

inline std::vector<double> synth_noise(const ToyCorpusSpec& spec, Rng& rng) {
  const int n = static_cast<int>(std::lround(spec.duration_s * spec.sample_rate));
  const double a = 0.85 + 0.13 * rng.uniform();
  std::vector<double> x(static_cast<std::size_t>(n));
  double y = 0.0;
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    const double white = rng.uniform() * 2.0 - 1.0;
    y = a * y + (1.0 - a) * white;
    x[static_cast<std::size_t>(i)] = y;
    peak = std::max(peak, std::abs(y));
  }
  require(peak > 0, "synth_noise: silent clip");
  for (double& v : x) v *= 0.35 / peak;
  return x;
}

inline std::string clip_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d", prefix, i);
  return std::string(buf);
}

}  // namespace toy_detail

inline ToyCorpus generate_toy_corpus(const ToyCorpusSpec& spec) {
  spec.validate();
  ToyCorpus corpus;
  corpus.task_names = {"pitch", "speaker", "emotion"};
  corpus.labels["pitch"] = toy_detail::balanced_labels(
      spec.n_clips, spec.n_pitch_classes, derive_seed(spec.seed, "labels-pitch", {}));
  corpus.labels["speaker"] = toy_detail::balanced_labels(
      spec.n_clips, spec.n_speaker_classes, derive_seed(spec.seed, "labels-speaker", {}));
  corpus.labels["emotion"] = toy_detail::balanced_labels(
      spec.n_clips, spec.n_emotion_classes, derive_seed(spec.seed, "labels-emotion", {}));

  corpus.speech.reserve(static_cast<std::size_t>(spec.n_clips));
  for (int i = 0; i < spec.n_clips; ++i) {
    Rng rng(derive_seed(spec.seed, "speech-clip", {static_cast<std::uint64_t>(i)}));
    Clip clip;
    clip.id = toy_detail::clip_name("speech", i);
    clip.wav.sample_rate = spec.sample_rate;
    clip.wav.samples = toy_detail::synth_speech(
        spec, corpus.labels["pitch"][static_cast<std::size_t>(i)],
        corpus.labels["speaker"][static_cast<std::size_t>(i)],
        corpus.labels["emotion"][static_cast<std::size_t>(i)], rng);
    corpus.speech.push_back(std::move(clip));
  }
  const int n_noise = spec.noise_clips();
  corpus.noise.reserve(static_cast<std::size_t>(n_noise));
  for (int i = 0; i < n_noise; ++i) {
    Rng rng(derive_seed(spec.seed, "noise-clip", {static_cast<std::uint64_t>(i)}));
    Clip clip;
    clip.id = toy_detail::clip_name("noise", i);
    clip.wav.sample_rate = spec.sample_rate;
    clip.wav.samples = toy_detail::synth_noise(spec, rng);
    corpus.noise.push_back(std::move(clip));
  }
  return corpus;
}

/// Writes WAVs plus labels.tsv; 16-bit PCM on disk.
inline void write_toy_corpus(const ToyCorpus& corpus, const std::string& speech_dir,
                             const std::string& noise_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(speech_dir);
  fs::create_directories(noise_dir);
  std::vector<std::string> ids;
  for (const auto& clip : corpus.speech) {
    write_wav_pcm16((fs::path(speech_dir) / (clip.id + ".wav")).string(), clip.wav.samples,
                    clip.wav.sample_rate);
    ids.push_back(clip.id);
  }
  write_labels_tsv(speech_dir, ids, corpus.task_names, corpus.labels);
  for (const auto& clip : corpus.noise)
    write_wav_pcm16((fs::path(noise_dir) / (clip.id + ".wav")).string(), clip.wav.samples,
                    clip.wav.sample_rate);
}

// --------------------------------------------------------------------------
// Feature extraction
// --------------------------------------------------------------------------

struct LayerFeatureSet {
  std::vector<Mat> layers;  // one [n_clips x d] matrix per encoder block
  int n_clips = 0;
};

/// Frozen forward over clean clips: every patch visible, per-layer outputs
/// mean-pooled over token positions. Embedding output is excluded; entry i
/// is block i+1's output.
inline LayerFeatureSet extract_layer_features(const EncoderParams& params,
                                              const EncoderConfig& enc_cfg,
                                              const PatchConfig& patch_cfg,
                                              const FrontendConfig& fe, const NormStats& stats,
                                              const std::vector<Clip>& clips) {
  require(!clips.empty(), "extract_layer_features: empty corpus");
  LayerFeatureSet set;
  set.n_clips = static_cast<int>(clips.size());
  set.layers.assign(params.blocks.size(),
                    Mat::Zero(static_cast<Eigen::Index>(clips.size()), enc_cfg.embed_dim));
  PositionalEncoding pos;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const LogMelSpectrogram spec = normalize(compute_logmel(clips[c].wav, fe), stats);
    const PatchGrid grid = patchify(spec, patch_cfg);
    if (pos.table.rows() != grid.n())
      pos = positional_encoding(grid.n_freq_patches, grid.n_time_patches, enc_cfg.embed_dim);
    EncoderActivations acts = encoder_forward_plain(params, enc_cfg, grid.patches, pos.table);
    for (std::size_t l = 0; l + 1 < acts.layers.size(); ++l)
      set.layers[l].row(static_cast<Eigen::Index>(c)) = acts.layers[l + 1].colwise().mean();
  }
  return set;
}

// --------------------------------------------------------------------------
// Probes
// --------------------------------------------------------------------------

enum class ProbeMode { kWeightedSum, kFinalLayer };

inline std::string to_string(ProbeMode m) {
  return m == ProbeMode::kWeightedSum ? "weighted-sum" : "final-layer";
}

inline ProbeMode probe_mode_from_string(const std::string& s) {
  if (s == "weighted-sum") return ProbeMode::kWeightedSum;
  if (s == "final-layer") return ProbeMode::kFinalLayer;
  throw Error(str_cat("probe mode must be 'weighted-sum' or 'final-layer', got '", s, "'"));
}

struct ProbeConfig {
  ProbeMode mode = ProbeMode::kWeightedSum;
  int epochs = 300;  // full-batch gradient steps
  double lr = 0.05;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  bool shuffle_labels = false;              // chance-level control
  std::vector<double> fixed_layer_weights;  // diagnostic: skip weight learning

  void validate() const {
    require(epochs >= 1, "ProbeConfig: epochs must be >= 1");
    require(lr > 0, "ProbeConfig: lr must be positive");
    require(train_fraction > 0 && train_fraction < 1,
            "ProbeConfig: train_fraction must lie in (0, 1)");
  }
};

struct ProbeReport {
  std::string task;
  std::string mode;
  double accuracy = 0.0;
  int n_test = 0;
  std::vector<double> layer_weights;  // normalized; weighted-sum mode only
};

namespace probe_detail {

struct Split {
  std::vector<int> train_idx;
  std::vector<int> test_idx;
};

inline Split stratified_split(const std::vector<int>& labels, int n_classes,
                              double train_fraction, std::uint64_t seed) {
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
  Split split;
  for (int c = 0; c < n_classes; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    require(idx.size() >= 2,
            str_cat("train_probe: class ", c, " has ", idx.size(),
                    " clips; need at least one train and one test example"));
    Rng rng(derive_seed(seed, "split", {static_cast<std::uint64_t>(c)}));
    rng.shuffle(idx);
    std::size_t n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(idx.size())));
    n_train = std::min(std::max<std::size_t>(n_train, 1), idx.size() - 1);
    split.train_idx.insert(split.train_idx.end(), idx.begin(), idx.begin() + static_cast<long>(n_train));
    split.test_idx.insert(split.test_idx.end(), idx.begin() + static_cast<long>(n_train), idx.end());
  }
  std::sort(split.train_idx.begin(), split.train_idx.end());
  std::sort(split.test_idx.begin(), split.test_idx.end());
  return split;
}

inline Mat take_rows(const Mat& m, const std::vector<int>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

}  // namespace probe_detail

inline ProbeReport train_probe(const LayerFeatureSet& features, const std::vector<int>& labels,
                               const ProbeConfig& cfg, const std::string& task_name) {
  cfg.validate();
  require(!features.layers.empty(), "train_probe: no layer features");
  require(static_cast<std::size_t>(features.n_clips) == labels.size(),
          "train_probe: label count does not match the feature set");

  std::vector<int> y = labels;
  if (cfg.shuffle_labels) {
    Rng rng(derive_seed(cfg.seed, "shuffle-labels", {}));
    rng.shuffle(y);
  }
  int n_classes = 0;
  for (int v : y) {
    require(v >= 0, "train_probe: labels must be non-negative");
    n_classes = std::max(n_classes, v + 1);
  }
  require(n_classes >= 2, "train_probe: need at least two classes");

  const auto split = probe_detail::stratified_split(y, n_classes, cfg.train_fraction, cfg.seed);
  std::vector<int> y_train, y_test;
  for (int i : split.train_idx) y_train.push_back(y[static_cast<std::size_t>(i)]);
  for (int i : split.test_idx) y_test.push_back(y[static_cast<std::size_t>(i)]);

  const bool weighted = cfg.mode == ProbeMode::kWeightedSum;
  std::vector<Mat> train_layers, test_layers;
  if (weighted) {
    for (const Mat& layer : features.layers) {
      train_layers.push_back(probe_detail::take_rows(layer, split.train_idx));
      test_layers.push_back(probe_detail::take_rows(layer, split.test_idx));
    }
  } else {
    train_layers.push_back(probe_detail::take_rows(features.layers.back(), split.train_idx));
    test_layers.push_back(probe_detail::take_rows(features.layers.back(), split.test_idx));
  }
  const int n_layers = static_cast<int>(train_layers.size());

  // Per-dimension standardization from the train split only.
  for (int l = 0; l < n_layers; ++l) {
    const Eigen::RowVectorXd mean = train_layers[static_cast<std::size_t>(l)].colwise().mean();
    Eigen::RowVectorXd sd =
        ((train_layers[static_cast<std::size_t>(l)].rowwise() - mean).array().square().colwise().mean())
            .sqrt()
            .matrix();
    sd = sd.unaryExpr([](double v) { return v + 1e-8; });
    auto apply = [&mean, &sd](Mat& m) {
      m = ((m.rowwise() - mean).array().rowwise() / sd.array()).matrix();
    };
    apply(train_layers[static_cast<std::size_t>(l)]);
    apply(test_layers[static_cast<std::size_t>(l)]);
  }

  const int d = static_cast<int>(train_layers[0].cols());
  const bool learn_weights = weighted && cfg.fixed_layer_weights.empty() && n_layers > 1;
  std::vector<double> fixed_weights;
  if (weighted && !cfg.fixed_layer_weights.empty()) {
    require(static_cast<int>(cfg.fixed_layer_weights.size()) == n_layers,
            "train_probe: fixed_layer_weights length must match the layer count");
    double sum = 0.0;
    for (double w : cfg.fixed_layer_weights) {
      require(w >= 0, "train_probe: fixed layer weights must be >= 0");
      sum += w;
    }
    require(sum > 0, "train_probe: fixed layer weights must not all be zero");
    for (double w : cfg.fixed_layer_weights) fixed_weights.push_back(w / sum);
  }

  Mat w_cls = Mat::Zero(d, n_classes);
  Mat b_cls = Mat::Zero(1, n_classes);
  Mat layer_logits = Mat::Zero(1, n_layers);
  std::vector<Mat*> slots{&w_cls, &b_cls};
  if (learn_weights) slots.push_back(&layer_logits);
  AdamWOptions opts;
  opts.beta2 = 0.999;
  opts.weight_decay = 0.0;
  opts.grad_clip = 0.0;
  AdamW opt(slots, opts);

  auto combine_plain = [&](const std::vector<Mat>& layers,
                           const std::vector<double>& weights) {
    Mat combined = Mat::Zero(layers[0].rows(), layers[0].cols());
    for (int l = 0; l < n_layers; ++l)
      combined += weights[static_cast<std::size_t>(l)] * layers[static_cast<std::size_t>(l)];
    return combined;
  };
  auto softmax_weights = [&]() {
    std::vector<double> w(static_cast<std::size_t>(n_layers));
    const double m = layer_logits.maxCoeff();
    double z = 0.0;
    for (int l = 0; l < n_layers; ++l) z += std::exp(layer_logits(0, l) - m);
    for (int l = 0; l < n_layers; ++l)
      w[static_cast<std::size_t>(l)] = std::exp(layer_logits(0, l) - m) / z;
    return w;
  };
  auto current_weights = [&]() -> std::vector<double> {
    if (!weighted) return {1.0};
    if (!fixed_weights.empty()) return fixed_weights;
    if (n_layers == 1) return {1.0};
    return softmax_weights();
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Graph g;
    Var v_w = g.param(w_cls);
    Var v_b = g.param(b_cls);
    Var v_layer_logits;
    Var combined;
    if (learn_weights) {
      v_layer_logits = g.param(layer_logits);
      Var weights_var = g.softmax_rows(v_layer_logits);
      for (int l = 0; l < n_layers; ++l) {
        Var term = g.scale_var(g.constant(train_layers[static_cast<std::size_t>(l)]),
                               g.slice_cols(weights_var, l, 1));
        combined = l == 0 ? term : g.add(combined, term);
      }
    } else {
      combined = g.constant(combine_plain(train_layers, current_weights()));
    }
    Var logits = g.add_rowvec(g.matmul(combined, v_w), v_b);
    Var loss = g.cross_entropy_rows(logits, y_train);
    g.backward(loss);

    std::vector<Mat> grads;
    grads.push_back(g.grad(v_w));
    grads.push_back(g.grad(v_b));
    if (learn_weights) grads.push_back(g.grad(v_layer_logits));
    opt.step(grads, cfg.lr);
  }

  const std::vector<double> final_weights = current_weights();
  const Mat combined_test = combine_plain(test_layers, final_weights);
  const Mat logits_test = (combined_test * w_cls).rowwise() + b_cls.row(0);
  int correct = 0;
  for (Eigen::Index r = 0; r < logits_test.rows(); ++r) {
    Eigen::Index pred = 0;
    logits_test.row(r).maxCoeff(&pred);
    if (static_cast<int>(pred) == y_test[static_cast<std::size_t>(r)]) ++correct;
  }

  ProbeReport report;
  report.task = task_name;
  report.mode = to_string(cfg.mode);
  report.n_test = static_cast<int>(split.test_idx.size());
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n_test);
  if (weighted) report.layer_weights = final_weights;
  return report;
}

// --------------------------------------------------------------------------
// Suite
// --------------------------------------------------------------------------

struct EvalSuiteResult {
  std::vector<ProbeReport> reports;
  std::string csv;           // task,mode,accuracy,n_test
  std::string layer_weights;  // one JSON-like map per weighted-sum report
};

inline std::string probe_reports_csv(const std::vector<ProbeReport>& reports) {
  std::string csv = "task,mode,accuracy,n_test\n";
  char buf[64];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%.6f", r.accuracy);
    csv += str_cat(r.task, ",", r.mode, ",", buf, ",", r.n_test, "\n");
  }
  return csv;
}

inline std::string layer_weights_text(const std::vector<ProbeReport>& reports) {
  std::string out;
  char buf[64];
  for (const auto& r : reports) {
    if (r.layer_weights.empty()) continue;
    out += str_cat(r.task, " ", r.mode, " {");
    for (std::size_t l = 0; l < r.layer_weights.size(); ++l) {
      std::snprintf(buf, sizeof buf, "%.6f", r.layer_weights[l]);
      out += str_cat(l ? ", " : "", "\"layer", l + 1, "\": ", buf);
    }
    out += "}\n";
  }
  return out;
}

/// Probes every requested task under every requested mode on frozen online
/// encoder features. The encoder is fingerprinted before and after; any
/// mutation aborts the run.
inline EvalSuiteResult run_eval_suite(const Checkpoint& ckpt, const Corpus& corpus,
                                      const std::vector<std::string>& tasks,
                                      const std::vector<ProbeMode>& modes,
                                      const ProbeConfig& base_cfg) {
  EvalSuiteResult result;
  for (const auto& task : tasks)
    require(corpus.labels.count(task) > 0,
            str_cat("run_eval_suite: corpus has no labels for task '", task, "'"));
  if (!tasks.empty()) {
    const std::uint64_t before = params_fingerprint(ckpt.online);
    const LayerFeatureSet features =
        extract_layer_features(ckpt.online.encoder, ckpt.enc_cfg, ckpt.patch_cfg,
                               ckpt.frontend_cfg, ckpt.stats, corpus.clips);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      for (std::size_t m = 0; m < modes.size(); ++m) {
        ProbeConfig cfg = base_cfg;
        cfg.mode = modes[m];
        cfg.seed = derive_seed(base_cfg.seed, "probe", {static_cast<std::uint64_t>(t)});
        result.reports.push_back(
            train_probe(features, corpus.labels_for(tasks[t]), cfg, tasks[t]));
      }
    }
    require(params_fingerprint(ckpt.online) == before,
            "run_eval_suite: probing mutated the frozen encoder");
  }
  result.csv = probe_reports_csv(result.reports);
  result.layer_weights = layer_weights_text(result.reports);
  return result;
}

}  // namespace maskspec

#endif  // MASKSPEC_EVALUATION_HPP_
