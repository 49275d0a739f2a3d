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
// Single maskspec binary: make-toy-corpus, pretrain, probe, and ablate
// subcommands. Every run writes a resolved.cfg snapshot plus a manifest.json
// with artifact hashes; identical args and seed give hash-identical outputs.

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "maskspec/checkpoint.hpp"
#include "maskspec/common.hpp"
#include "maskspec/corpus.hpp"
#include "maskspec/evaluation.hpp"
#include "maskspec/model.hpp"
#include "maskspec/training.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  maskspec::require(out.good(), "cannot open '" + path + "' for writing");
  out << text;
  maskspec::require(out.good(), "write failed for '" + path + "'");
}

/// Hashes every named artifact into manifest["outputs"], then writes
/// manifest.json itself. Paths are relative to out_dir.
void write_manifest(const std::string& out_dir, json manifest,
                    const std::vector<std::string>& artifacts) {
  json outputs = json::object();
  for (const auto& rel : artifacts)
    outputs[rel] = maskspec::to_hex(maskspec::hash_file((fs::path(out_dir) / rel).string()));
  manifest["outputs"] = outputs;
  write_text((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// make-toy-corpus
// ---------------------------------------------------------------------------

struct ToyArgs {
  maskspec::ToyCorpusSpec spec;
  std::string out;
};

void add_toy_flags(CLI::App* cmd, ToyArgs& a) {
  cmd->add_option("--out", a.out, "Output directory (speech/ and noise/ created inside)")
      ->required();
  cmd->add_option("--n-clips", a.spec.n_clips, "Number of speech clips")->capture_default_str();
  cmd->add_option("--n-noise-clips", a.spec.n_noise_clips,
                  "Number of noise clips (0: n_clips/4, at least 4)")
      ->capture_default_str();
  cmd->add_option("--duration", a.spec.duration_s, "Clip duration in seconds")
      ->capture_default_str();
  cmd->add_option("--seed", a.spec.seed, "Corpus seed")->capture_default_str();
  cmd->add_option("--pitch-classes", a.spec.n_pitch_classes, "Pitch classes (octave steps)")
      ->capture_default_str();
  cmd->add_option("--speaker-classes", a.spec.n_speaker_classes, "Speaker timbre classes")
      ->capture_default_str();
  cmd->add_option("--emotion-classes", a.spec.n_emotion_classes, "Emotion profile classes")
      ->capture_default_str();
}

int run_make_toy_corpus(const CLI::App* app, const ToyArgs& a) {
  try {
    a.spec.validate();
  } catch (const maskspec::Error& e) {
    std::fprintf(stderr, "maskspec make-toy-corpus: %s\n", e.what());
    return kExitUsage;
  }
  try {
    const maskspec::ToyCorpus corpus = maskspec::generate_toy_corpus(a.spec);
    fs::create_directories(a.out);
    const std::string speech_dir = (fs::path(a.out) / "speech").string();
    const std::string noise_dir = (fs::path(a.out) / "noise").string();
    maskspec::write_toy_corpus(corpus, speech_dir, noise_dir);
    write_text((fs::path(a.out) / "resolved.cfg").string(), app->config_to_str(true, false));

    json manifest;
    manifest["command"] = "make-toy-corpus";
    manifest["seed"] = a.spec.seed;
    manifest["inputs"] = json::object();
    manifest["config"] = "resolved.cfg";
    manifest["directory_hashes"] = {
        {"speech", maskspec::to_hex(maskspec::hash_directory(speech_dir))},
        {"noise", maskspec::to_hex(maskspec::hash_directory(noise_dir))}};
    write_manifest(a.out, std::move(manifest), {"resolved.cfg"});
    std::printf("wrote %d speech clips and %d noise clips under %s\n", a.spec.n_clips,
                a.spec.noise_clips(), a.out.c_str());
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "maskspec make-toy-corpus: %s\n", e.what());
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

struct PretrainArgs {
  std::string speech, noise, out, resume;
  std::string teacher = "none";
  std::string pred_kind = "transformer";
  maskspec::EncoderConfig enc;
  maskspec::PatchConfig patch;
  maskspec::PredictorConfig pred;
  maskspec::FrontendConfig frontend;
  maskspec::TrainConfig train;
};

void add_pretrain_flags(CLI::App* cmd, PretrainArgs& a) {
  cmd->add_option("--speech", a.speech, "Speech corpus directory")->required();
  cmd->add_option("--noise", a.noise, "Noise corpus directory")->required();
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--resume", a.resume, "Checkpoint to resume from");
  cmd->add_option("--alpha", a.train.alpha, "Noise mixing ratio")->capture_default_str();
  cmd->add_option("--duration", a.train.input_duration_s, "Training crop T in seconds")
      ->capture_default_str();
  cmd->add_option("--lambda-m2d", a.train.objective.lambda_m2d, "Masked-prediction loss weight")
      ->capture_default_str();
  cmd->add_option("--lambda-off", a.train.objective.lambda_off, "Distillation loss weight")
      ->capture_default_str();
  cmd->add_option("--tau", a.train.tau, "EMA decay for the target encoder")
      ->capture_default_str();
  cmd->add_option("--mask-ratio", a.train.mask_ratio, "Fraction of patches masked")
      ->capture_default_str();
  cmd->add_option("--teacher", a.teacher,
                  "Frozen teacher: none, meanpool, random, or archive:PATH")
      ->capture_default_str();
  cmd->add_option("--epochs", a.train.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--warmup-epochs", a.train.warmup_epochs, "Linear warmup epochs")
      ->capture_default_str();
  cmd->add_option("--batch-size", a.train.batch_size, "Clips per step")->capture_default_str();
  cmd->add_option("--base-lr", a.train.base_lr, "Peak learning rate")->capture_default_str();
  cmd->add_option("--weight-decay", a.train.weight_decay, "Decoupled weight decay")
      ->capture_default_str();
  cmd->add_option("--grad-clip", a.train.grad_clip, "Global gradient-norm clip (<= 0 disables)")
      ->capture_default_str();
  cmd->add_option("--seed", a.train.seed, "Run seed")->capture_default_str();
  cmd->add_option("--checkpoint-every", a.train.checkpoint_every_epochs,
                  "Intermediate checkpoint period in epochs (0: final only)")
      ->capture_default_str();
  cmd->add_option("--patch-freq", a.patch.patch_freq, "Patch height in mel bins")
      ->capture_default_str();
  cmd->add_option("--patch-time", a.patch.patch_time, "Patch width in frames")
      ->capture_default_str();
  cmd->add_option("--embed-dim", a.enc.embed_dim, "Encoder width")->capture_default_str();
  cmd->add_option("--depth", a.enc.depth, "Encoder blocks")->capture_default_str();
  cmd->add_option("--heads", a.enc.n_heads, "Attention heads")->capture_default_str();
  cmd->add_option("--mlp-ratio", a.enc.mlp_ratio, "MLP hidden ratio")->capture_default_str();
  cmd->add_option("--pred-depth", a.pred.depth, "Predictor blocks")->capture_default_str();
  cmd->add_option("--pred-kind", a.pred_kind, "Predictor kind: transformer or mlp")
      ->capture_default_str();
}

maskspec::PretrainSetup build_setup(const PretrainArgs& a) {
  maskspec::PretrainSetup setup;
  setup.enc = a.enc;
  setup.patch = a.patch;
  setup.patch.embed_dim = a.enc.embed_dim;
  setup.pred = a.pred;
  setup.pred.kind = maskspec::predictor_kind_from_string(a.pred_kind);
  setup.frontend = a.frontend;
  setup.train = a.train;
  setup.teacher_spec = a.teacher;
  setup.teacher = maskspec::make_teacher(a.teacher, a.frontend);
  setup.enc.validate();
  setup.patch.validate(setup.frontend.n_mels);
  setup.pred.validate();
  setup.train.validate(setup.frontend);
  maskspec::require(!(setup.train.objective.lambda_off > 0.0 && setup.teacher == nullptr),
                    "--lambda-off > 0 requires --teacher (meanpool, random, or archive:PATH)");
  return setup;
}

int run_pretrain(const CLI::App* app, const PretrainArgs& a) {
  maskspec::PretrainSetup setup;
  try {
    setup = build_setup(a);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "maskspec pretrain: %s\n", e.what());
    return kExitUsage;
  }
  try {
    const maskspec::Corpus speech = maskspec::load_corpus(a.speech, a.frontend.sample_rate);
    const maskspec::Corpus noise = maskspec::load_corpus(a.noise, a.frontend.sample_rate);
    const maskspec::PretrainResult result =
        maskspec::run_pretraining(setup, speech, noise.clips, a.out, a.resume);
    write_text((fs::path(a.out) / "resolved.cfg").string(), app->config_to_str(true, false));

    std::vector<std::string> artifacts = {"resolved.cfg", "train.log"};
    for (const auto& entry : fs::directory_iterator(a.out)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("checkpoint_", 0) == 0 && name.size() >= 4 &&
          name.substr(name.size() - 4) == ".bin")
        artifacts.push_back(name);
    }
    std::sort(artifacts.begin(), artifacts.end());

    json manifest;
    manifest["command"] = "pretrain";
    manifest["seed"] = a.train.seed;
    manifest["inputs"] = {{"speech", a.speech}, {"noise", a.noise}};
    if (!a.resume.empty()) manifest["inputs"]["resume"] = a.resume;
    manifest["config"] = "resolved.cfg";
    write_manifest(a.out, std::move(manifest), artifacts);
    std::printf("trained %zu steps; final l_total %.6f; checkpoint %s\n", result.records.size(),
                result.records.empty() ? 0.0 : result.records.back().losses.l_total,
                result.checkpoint_path.c_str());
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "maskspec pretrain: %s\n", e.what());
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

struct ProbeArgs {
  std::string checkpoint, corpus, out;
  std::string mode = "both";
  std::vector<std::string> tasks;
  maskspec::ProbeConfig cfg;
};

void add_probe_flags(CLI::App* cmd, ProbeArgs& a) {
  cmd->add_option("--checkpoint", a.checkpoint, "Trained checkpoint file")->required();
  cmd->add_option("--corpus", a.corpus, "Labeled speech corpus directory")->required();
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--tasks", a.tasks, "Tasks to probe (default: all labeled tasks)")
      ->delimiter(',');
  cmd->add_option("--mode", a.mode, "weighted-sum, final-layer, or both")
      ->capture_default_str();
  cmd->add_option("--epochs", a.cfg.epochs, "Probe training steps (full batch)")
      ->capture_default_str();
  cmd->add_option("--lr", a.cfg.lr, "Probe learning rate")->capture_default_str();
  cmd->add_option("--train-fraction", a.cfg.train_fraction, "Train split fraction")
      ->capture_default_str();
  cmd->add_option("--seed", a.cfg.seed, "Probe seed")->capture_default_str();
  cmd->add_flag("--shuffle-labels", a.cfg.shuffle_labels,
                "Shuffle labels before the split (chance-level control)");
}

std::vector<maskspec::ProbeMode> parse_modes(const std::string& mode) {
  if (mode == "both")
    return {maskspec::ProbeMode::kWeightedSum, maskspec::ProbeMode::kFinalLayer};
  return {maskspec::probe_mode_from_string(mode)};
}

int run_probe(const CLI::App* app, const ProbeArgs& a) {
  std::vector<maskspec::ProbeMode> modes;
  try {
    a.cfg.validate();
    modes = parse_modes(a.mode);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "maskspec probe: %s\n", e.what());
    return kExitUsage;
  }
  try {
    const maskspec::Checkpoint ckpt = maskspec::load_checkpoint(a.checkpoint);
    const maskspec::Corpus corpus =
        maskspec::load_corpus(a.corpus, ckpt.frontend_cfg.sample_rate);
    std::vector<std::string> tasks = a.tasks.empty() ? corpus.task_names : a.tasks;
    const maskspec::EvalSuiteResult result =
        maskspec::run_eval_suite(ckpt, corpus, tasks, modes, a.cfg);

    fs::create_directories(a.out);
    write_text((fs::path(a.out) / "results.csv").string(), result.csv);
    write_text((fs::path(a.out) / "layer_weights.txt").string(), result.layer_weights);
    write_text((fs::path(a.out) / "resolved.cfg").string(), app->config_to_str(true, false));

    json manifest;
    manifest["command"] = "probe";
    manifest["seed"] = a.cfg.seed;
    manifest["inputs"] = {{"checkpoint", a.checkpoint},
                          {"checkpoint_hash", maskspec::to_hex(maskspec::hash_file(a.checkpoint))},
                          {"corpus", a.corpus}};
    manifest["config"] = "resolved.cfg";
    write_manifest(a.out, std::move(manifest),
                   {"results.csv", "layer_weights.txt", "resolved.cfg"});
    std::fputs(result.csv.c_str(), stdout);
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "maskspec probe: %s\n", e.what());
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string speech, noise, out;
  std::vector<std::string> sweeps = {"alpha", "patch", "duration", "task"};
  bool parallel = false;
  std::uint64_t seed = 0;
  int epochs = 4;
  int warmup_epochs = 1;
  int batch_size = 16;
  double base_lr = 3e-4;
  int probe_epochs = 300;
  double probe_lr = 0.05;
  PretrainArgs base;  // model-size defaults reused per cell
};

struct AblateCell {
  std::string sweep;
  std::string name;
  double alpha = 0.2;
  int patch_freq = 80;
  int patch_time = 4;
  double duration_s = 2.08;
  double lambda_m2d = 1.0;
  double lambda_off = 1.0;
  std::string teacher = "meanpool";
};

void add_ablate_flags(CLI::App* cmd, AblateArgs& a) {
  cmd->add_option("--speech", a.speech, "Speech corpus directory")->required();
  cmd->add_option("--noise", a.noise, "Noise corpus directory")->required();
  cmd->add_option("--out", a.out, "Output directory (one subdirectory per cell)")->required();
  cmd->add_option("--sweeps", a.sweeps, "Subset of alpha,patch,duration,task")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_flag("--parallel", a.parallel, "Run cells concurrently (independent seeds)");
  cmd->add_option("--seed", a.seed, "Grid seed; each cell derives its own")
      ->capture_default_str();
  cmd->add_option("--epochs", a.epochs, "Epochs per cell")->capture_default_str();
  cmd->add_option("--warmup-epochs", a.warmup_epochs, "Warmup epochs per cell")
      ->capture_default_str();
  cmd->add_option("--batch-size", a.batch_size, "Batch size per cell")->capture_default_str();
  cmd->add_option("--base-lr", a.base_lr, "Peak learning rate per cell")->capture_default_str();
  cmd->add_option("--probe-epochs", a.probe_epochs, "Probe training steps per cell")
      ->capture_default_str();
  cmd->add_option("--probe-lr", a.probe_lr, "Probe learning rate")->capture_default_str();
  cmd->add_option("--embed-dim", a.base.enc.embed_dim, "Encoder width")->capture_default_str();
  cmd->add_option("--depth", a.base.enc.depth, "Encoder blocks")->capture_default_str();
  cmd->add_option("--heads", a.base.enc.n_heads, "Attention heads")->capture_default_str();
  cmd->add_option("--pred-depth", a.base.pred.depth, "Predictor blocks")->capture_default_str();
}

std::vector<AblateCell> build_grid(const std::vector<std::string>& sweeps) {
  std::vector<AblateCell> grid;
  auto wants = [&sweeps](const std::string& s) {
    return std::find(sweeps.begin(), sweeps.end(), s) != sweeps.end();
  };
  for (const auto& s : sweeps)
    maskspec::require(s == "alpha" || s == "patch" || s == "duration" || s == "task",
                      "--sweeps entries must be among alpha,patch,duration,task, got '" + s +
                          "'");
  if (wants("alpha")) {
    for (double alpha : {0.0, 0.2, 1.0}) {
      AblateCell c;
      c.sweep = "alpha";
      char buf[32];
      std::snprintf(buf, sizeof buf, "alpha_%.1f", alpha);
      c.name = buf;
      c.alpha = alpha;
      grid.push_back(c);
    }
  }
  if (wants("patch")) {
    for (auto [pf, pt] : {std::pair{80, 2}, std::pair{80, 4}, std::pair{40, 4}}) {
      AblateCell c;
      c.sweep = "patch";
      c.name = maskspec::str_cat("patch_", pf, "x", pt);
      c.patch_freq = pf;
      c.patch_time = pt;
      grid.push_back(c);
    }
  }
  if (wants("duration")) {
    for (double t : {2.08, 4.00}) {
      AblateCell c;
      c.sweep = "duration";
      char buf[32];
      std::snprintf(buf, sizeof buf, "duration_%.2fs", t);
      c.name = buf;
      c.duration_s = t;
      grid.push_back(c);
    }
  }
  if (wants("task")) {
    // Rows: (a) masked prediction only, (b) distillation only,
    // (d) both on clean input, (e) both on noisy input.
    const struct {
      const char* name;
      double lambda_m2d, lambda_off, alpha;
      const char* teacher;
    } rows[] = {{"task_a_m2d", 1.0, 0.0, 0.0, "none"},
                {"task_b_distill", 0.0, 1.0, 0.0, "meanpool"},
                {"task_d_m2d_distill", 1.0, 1.0, 0.0, "meanpool"},
                {"task_e_full", 1.0, 1.0, 0.2, "meanpool"}};
    for (const auto& row : rows) {
      AblateCell c;
      c.sweep = "task";
      c.name = row.name;
      c.lambda_m2d = row.lambda_m2d;
      c.lambda_off = row.lambda_off;
      c.alpha = row.alpha;
      c.teacher = row.teacher;
      grid.push_back(c);
    }
  }
  maskspec::require(!grid.empty(), "--sweeps selected an empty grid");
  return grid;
}

struct CellResult {
  std::string status = "failed";
  std::string error;
  std::map<std::string, double> accuracy;  // task -> weighted-sum accuracy
};

CellResult run_cell(const AblateArgs& a, const AblateCell& cell, std::size_t cell_idx,
                    const maskspec::Corpus& speech, const maskspec::Corpus& noise) {
  CellResult res;
  const std::string cell_dir = (fs::path(a.out) / cell.name).string();
  try {
    maskspec::PretrainSetup setup;
    setup.enc = a.base.enc;
    setup.patch.patch_freq = cell.patch_freq;
    setup.patch.patch_time = cell.patch_time;
    setup.patch.embed_dim = a.base.enc.embed_dim;
    setup.pred = a.base.pred;
    setup.frontend = a.base.frontend;
    setup.train.epochs = a.epochs;
    setup.train.warmup_epochs = a.warmup_epochs;
    setup.train.batch_size = a.batch_size;
    setup.train.base_lr = a.base_lr;
    setup.train.alpha = cell.alpha;
    setup.train.input_duration_s = cell.duration_s;
    setup.train.objective.lambda_m2d = cell.lambda_m2d;
    setup.train.objective.lambda_off = cell.lambda_off;
    setup.train.seed = maskspec::derive_seed(a.seed, "ablate", {cell_idx});
    setup.teacher_spec = cell.teacher;
    setup.teacher = maskspec::make_teacher(cell.teacher, setup.frontend);

    const maskspec::PretrainResult trained =
        maskspec::run_pretraining(setup, speech, noise.clips, cell_dir);

    maskspec::ProbeConfig probe_cfg;
    probe_cfg.epochs = a.probe_epochs;
    probe_cfg.lr = a.probe_lr;
    probe_cfg.seed = maskspec::derive_seed(a.seed, "ablate-probe", {cell_idx});
    const maskspec::EvalSuiteResult eval = maskspec::run_eval_suite(
        trained.checkpoint, speech, speech.task_names,
        {maskspec::ProbeMode::kWeightedSum, maskspec::ProbeMode::kFinalLayer}, probe_cfg);
    write_text((fs::path(cell_dir) / "results.csv").string(), eval.csv);
    write_text((fs::path(cell_dir) / "layer_weights.txt").string(), eval.layer_weights);
    for (const auto& report : eval.reports)
      if (report.mode == "weighted-sum") res.accuracy[report.task] = report.accuracy;
    res.status = "ok";
  } catch (const std::exception& e) {
    res.error = e.what();
    std::error_code ec;
    fs::create_directories(cell_dir, ec);
    if (!ec) {
      std::ofstream out((fs::path(cell_dir) / "error.txt").string());
      out << res.error << "\n";
    }
  }
  return res;
}

int run_ablate(const CLI::App* app, const AblateArgs& a) {
  std::vector<AblateCell> grid;
  try {
    grid = build_grid(a.sweeps);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "maskspec ablate: %s\n", e.what());
    return kExitUsage;
  }
  try {
    const maskspec::Corpus speech = maskspec::load_corpus(a.speech, a.base.frontend.sample_rate);
    const maskspec::Corpus noise = maskspec::load_corpus(a.noise, a.base.frontend.sample_rate);
    std::vector<CellResult> results(grid.size());

    if (a.parallel) {
      std::atomic<std::size_t> next{0};
      const unsigned n_workers =
          std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                             static_cast<unsigned>(grid.size()));
      std::vector<std::thread> workers;
      for (unsigned w = 0; w < n_workers; ++w) {
        workers.emplace_back([&]() {
          for (std::size_t i = next.fetch_add(1); i < grid.size(); i = next.fetch_add(1))
            results[i] = run_cell(a, grid[i], i, speech, noise);
        });
      }
      for (auto& t : workers) t.join();
    } else {
      for (std::size_t i = 0; i < grid.size(); ++i) {
        std::printf("[%zu/%zu] %s\n", i + 1, grid.size(), grid[i].name.c_str());
        std::fflush(stdout);
        results[i] = run_cell(a, grid[i], i, speech, noise);
      }
    }

    std::string csv = "sweep,cell,status";
    for (const auto& task : speech.task_names) csv += "," + task;
    csv += "\n";
    char buf[64];
    bool any_failed = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      csv += grid[i].sweep + "," + grid[i].name + "," + results[i].status;
      for (const auto& task : speech.task_names) {
        auto it = results[i].accuracy.find(task);
        if (it == results[i].accuracy.end()) {
          csv += ",";
        } else {
          std::snprintf(buf, sizeof buf, "%.6f", it->second);
          csv += maskspec::str_cat(",", buf);
        }
      }
      csv += "\n";
      if (results[i].status != "ok") any_failed = true;
    }
    fs::create_directories(a.out);
    write_text((fs::path(a.out) / "summary.csv").string(), csv);
    write_text((fs::path(a.out) / "resolved.cfg").string(), app->config_to_str(true, false));

    json manifest;
    manifest["command"] = "ablate";
    manifest["seed"] = a.seed;
    manifest["inputs"] = {{"speech", a.speech}, {"noise", a.noise}};
    manifest["config"] = "resolved.cfg";
    json cells = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      json c = {{"sweep", grid[i].sweep}, {"cell", grid[i].name},
                {"status", results[i].status}};
      if (!results[i].error.empty()) c["error"] = results[i].error;
      cells.push_back(c);
    }
    manifest["cells"] = cells;
    write_manifest(a.out, std::move(manifest), {"summary.csv", "resolved.cfg"});
    std::fputs(csv.c_str(), stdout);
    if (any_failed) {
      std::fprintf(stderr, "maskspec ablate: one or more cells failed (see summary.csv)\n");
      return kExitRuntime;
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "maskspec ablate: %s\n", e.what());
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maskspec: masked-prediction speech pretraining at desk scale"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Config file with a section per subcommand; explicit flags win");

  ToyArgs toy_args;
  CLI::App* toy =
      app.add_subcommand("make-toy-corpus", "Generate the synthetic corpus")->configurable();
  add_toy_flags(toy, toy_args);

  PretrainArgs pre_args;
  CLI::App* pre = app.add_subcommand("pretrain", "Run joint pretraining")->configurable();
  add_pretrain_flags(pre, pre_args);

  ProbeArgs probe_args;
  CLI::App* probe = app.add_subcommand("probe", "Probe a frozen checkpoint")->configurable();
  add_probe_flags(probe, probe_args);

  AblateArgs ablate_args;
  CLI::App* ablate = app.add_subcommand("ablate", "Run the ablation grid")->configurable();
  add_ablate_flags(ablate, ablate_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (app.got_subcommand(toy)) return run_make_toy_corpus(&app, toy_args);
  if (app.got_subcommand(pre)) return run_pretrain(&app, pre_args);
  if (app.got_subcommand(probe)) return run_probe(&app, probe_args);
  if (app.got_subcommand(ablate)) return run_ablate(&app, ablate_args);
  return kExitUsage;
}
