#include "deitfake/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "deitfake/config.hpp"
#include "deitfake/errors.hpp"
#include "deitfake/experiment.hpp"
#include "deitfake/metrics.hpp"
#include "deitfake/train.hpp"

namespace deitfake {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::size_t> threads;
};

// Thrown from an epoch hook to end a run early on request.
struct StopRequested {
  std::uint32_t stage;
  std::size_t epoch;
};

RunConfig resolve_config(const GlobalOptions& g) {
  if (!g.config_path.empty() && !g.preset.empty()) {
    throw ValidationError("--preset cannot be combined with --config; set \"preset\" inside the file instead");
  }
  if (!g.config_path.empty() && !fs::exists(g.config_path)) {
    throw ValidationError("config file not found: " + g.config_path);
  }
  RunConfig c = g.config_path.empty() ? RunConfig::preset_named(g.preset.empty() ? "desk" : g.preset)
                                      : load_run_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  if (g.output_dir) c.output_dir = *g.output_dir;
  if (g.threads) c.threads = *g.threads;
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write " + tmp.string());
    os << text;
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Write-then-rename so an interrupted run never leaves a torn checkpoint.
void store_checkpoint(const fs::path& path, const Checkpoint& ck) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  save_checkpoint(tmp, ck);
  fs::rename(tmp, path);
}

Checkpoint fetch_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

std::string history_jsonl(const std::vector<EpochLog>& logs) {
  std::string s;
  for (const auto& l : logs) s += epoch_log_json(l) + "\n";
  return s;
}

std::string epoch_line(const EpochLog& l) {
  std::string s = format("stage %u epoch %zu  train loss %.4f  val loss %.4f  accuracy %.4f  f1 %.4f  auroc %.4f",
                         l.stage, l.epoch, l.train_loss, l.val_loss, l.accuracy, l.f1_macro, l.auroc);
  if (l.test_auroc) s += format("  test accuracy %.4f  test auroc %.4f", *l.test_accuracy, *l.test_auroc);
  return s;
}

std::string epoch_table(const std::vector<EpochLog>& logs) {
  std::string s = "Epoch  Train loss  Val loss  Accuracy  F1 macro   AUROC\n";
  for (const auto& l : logs) {
    s += format("%5zu  %10.4f  %8.4f  %8.4f  %8.4f  %6.4f\n", l.epoch, l.train_loss, l.val_loss, l.accuracy,
                l.f1_macro, l.auroc);
  }
  return s;
}

std::string report_text(const MetricsReport& r) {
  std::ostringstream os;
  write_report(os, r);
  return os.str();
}

StageHooks file_hooks(const fs::path& dir, std::uint32_t stage, std::optional<std::size_t> stop_after,
                      std::size_t epochs, std::ostream& out) {
  StageHooks hooks;
  hooks.on_epoch_end = [dir, stage, stop_after, epochs, &out](const EpochLog& log, const Checkpoint& last,
                                                              const Checkpoint* best) {
    write_text(dir / "epochs.jsonl", history_jsonl(last.history));
    if (best) store_checkpoint(dir / "best.ckpt", *best);
    store_checkpoint(dir / "last.ckpt", last);
    out << epoch_line(log) << '\n';
    if (stop_after && log.epoch >= *stop_after && log.epoch < epochs) throw StopRequested{stage, log.epoch};
  };
  return hooks;
}

// Scores the stage's selected weights on the test split (validation when the
// test split is empty) and writes the report next to the checkpoints.
MetricsReport stage_report(const DeitModel& model, const StageData& data, const fs::path& dir, std::ostream& out) {
  const bool test = data.test.has_value();
  const MetricsReport r = evaluate(model, test ? *data.test : data.validation);
  emit_report(r, dir, test ? "test" : "validation");
  out << format("%s %s: loss %.4f  accuracy %.4f  f1 %.4f  auroc %.4f\n", dir.filename().string().c_str(),
                test ? "test" : "validation", r.loss, r.accuracy, r.f1_macro, r.auroc);
  return r;
}

std::optional<MetricsReport> read_stage_report(const fs::path& dir) {
  for (const char* stem : {"test", "validation"}) {
    std::ifstream in(dir / (std::string(stem) + ".report"));
    if (in) return read_report(in);
  }
  return std::nullopt;
}

Checkpoint sibling_best(const fs::path& last_path) {
  const fs::path best = last_path.parent_path() / "best.ckpt";
  if (!fs::exists(best)) throw ValidationError("resume needs " + best.string() + " next to the last checkpoint");
  return load_checkpoint(best);
}

void check_model(const RunConfig& c, const Checkpoint& ck) {
  if (!(ck.config == c.model)) throw CompatibilityError("checkpoint model config differs from the run config");
}

// ---------------------------------------------------------------------------
// Commands

int cmd_prepare(const RunConfig& c, std::size_t dump_count, std::ostream& out, std::ostream& err) {
  const PreparedData pd = prepare_data(c);
  const fs::path dir = c.output_dir / "data";
  write_prepared(dir, pd);
  save_run_config(c.output_dir / "config.json", c);
  for (const auto& w : pd.warnings) err << "warning: " << w << '\n';
  for (auto [name, m] : {std::pair{"train", &pd.train}, std::pair{"validation", &pd.validation},
                         std::pair{"test", &pd.test}}) {
    const ClassCounts k = m->class_counts();
    out << format("%-10s %7zu  (fake %zu, real %zu)\n", name, k.total(), k.fake, k.real);
  }
  out << "manifests written to " << dir.string() << '\n';

  if (dump_count > 0) {
    ImageSource source = make_image_source(c);
    const fs::path dump_dir = c.output_dir / "augment_debug";
    const std::size_t n = std::min(dump_count, pd.train.size());
    for (std::size_t i = 0; i < n; ++i) {
      const fs::path sample_dir = dump_dir / format("sample_%04zu", i);
      fs::create_directories(sample_dir);
      const ImageBuffer& img = source.load(pd.train, pd.train.records[i]);
      save_png(sample_dir / "input.png", img);
      for (PipelineKind kind : {PipelineKind::Stage1, PipelineKind::Stage2}) {
        const std::string stage(pipeline_kind_name(kind));
        RngStream rng = RngStream::for_sample(c.seed, 0, i);
        build_pipeline(kind, c.augment).augment(img, rng, [&](std::size_t step, StepKind k, const ImageBuffer& im) {
          save_png(sample_dir / format("%s_%02zu_%s.png", stage.c_str(), step, std::string(step_name(k)).c_str()), im);
        });
      }
    }
    out << "augmentation steps for " << n << " samples written to " << dump_dir.string() << '\n';
  }
  return kExitOk;
}

int cmd_train(const RunConfig& c, const std::string& stage_arg, const std::string& resume_path,
              std::optional<std::size_t> stop_after, std::ostream& out) {
  const bool run1 = stage_arg == "1" || stage_arg == "both";
  const bool run2 = stage_arg == "2" || stage_arg == "both";
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = fetch_checkpoint(resume_path);
  if (stage_arg == "2" && !resume) {
    throw ValidationError("train --stage 2 needs --resume with a stage-1 or stage-2 checkpoint");
  }
  if (resume) {
    check_model(c, *resume);
    if (stage_arg == "1" && resume->stage != 1) throw CompatibilityError("--stage 1 cannot resume a stage-2 checkpoint");
    if (stage_arg == "both" && resume->stage != 1) {
      throw CompatibilityError("--stage both resumes stage-1 checkpoints only; use --stage 2 for a stage-2 checkpoint");
    }
  }

  const PreparedData pd = read_prepared(c.output_dir / "data");
  ImageSource source = make_image_source(c);
  const StageData data = load_stage_data(c, pd, source);
  const RunOptions options{c.threads, 64};
  const fs::path dir1 = c.output_dir / "stage1";
  const fs::path dir2 = c.output_dir / "stage2";

  DeitModel model(c.model, c.seed);
  std::optional<MetricsReport> report1;
  std::optional<MetricsReport> report2;
  try {
    if (run1) {
      std::optional<StageResume> sr;
      if (resume) sr = StageResume{*resume, sibling_best(resume_path)};
      const StageConfig cfg = c.stage_config(1);
      run_stage(model, data, c.augment, cfg, 1, sr, file_hooks(dir1, 1, stop_after, cfg.epochs, out), options);
      report1 = stage_report(model, data, dir1, out);
    }
    if (run2) {
      std::optional<StageResume> sr;
      if (!run1) {
        if (resume->stage == 1) {
          model = restore_model(*resume);
        } else {
          sr = StageResume{*resume, sibling_best(resume_path)};
        }
        report1 = read_stage_report(dir1);
      }
      const StageConfig cfg = c.stage_config(2);
      run_stage(model, data, c.augment, cfg, 2, sr, file_hooks(dir2, 2, stop_after, cfg.epochs, out), options);
      report2 = stage_report(model, data, dir2, out);
    }
  } catch (const StopRequested& stop) {
    out << "stopped after stage " << stop.stage << " epoch " << stop.epoch << "; resume with --resume "
        << ((stop.stage == 1 ? dir1 : dir2) / "last.ckpt").string() << '\n';
    return kExitOk;
  }
  if (report1 && report2) {
    const std::string table = render_stage_comparison(*report1, *report2);
    write_text(c.output_dir / "stage_comparison.txt", table);
    out << table;
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& c, const std::string& checkpoint_path, std::string manifest_path, bool perturbed,
             std::string name, std::ostream& out) {
  const Checkpoint ck = fetch_checkpoint(checkpoint_path);
  const DeitModel model = restore_model(ck);
  if (ck.config.image_size != c.augment.resize_to) {
    throw CompatibilityError("checkpoint expects " + std::to_string(ck.config.image_size) +
                             "px inputs but the config resizes to " + std::to_string(c.augment.resize_to) + "px");
  }
  if (manifest_path.empty()) manifest_path = (c.output_dir / "data" / "test.tsv").string();
  if (!fs::exists(manifest_path)) throw ValidationError("manifest not found: " + manifest_path);
  const SampleManifest manifest = load_manifest(manifest_path);
  if (manifest.empty()) throw ValidationError("manifest is empty: " + manifest_path);
  if (perturbed && !c.test_perturbation) throw ValidationError("--perturbed needs test_perturbation in the config");

  ImageSource source = make_image_source(c);
  const Pipeline pipeline = perturbed ? test_pipeline(c) : build_eval_pipeline(c.augment);
  const std::uint64_t seed = perturbed ? c.test_perturbation->seed : 0;
  const MetricsReport report = evaluate(model, materialize(manifest, source, pipeline, seed, c.threads));
  if (name.empty()) name = fs::path(manifest_path).stem().string();
  emit_report(report, c.output_dir / "eval", name);
  out << report_text(report);
  return kExitOk;
}

int cmd_infer(const RunConfig& c, const std::string& checkpoint_path, const std::vector<std::string>& images,
              std::ostream& out, std::ostream& err) {
  const Checkpoint ck = fetch_checkpoint(checkpoint_path);
  const DeitModel model = restore_model(ck);
  AugmentSpec spec = c.augment;
  spec.resize_to = ck.config.image_size;
  const Pipeline pipeline = build_eval_pipeline(spec);
  ImageSource source = make_image_source(c);

  std::size_t failures = 0;
  for (const auto& ref : images) {
    EvalSet one;
    try {
      RngStream rng;
      one.inputs.push_back(pipeline.apply(source.load(fs::path{}, ref), rng));
      one.labels.push_back(Label::Real);
    } catch (const std::exception& e) {
      err << ref << ": error: " << e.what() << '\n';
      ++failures;
      continue;
    }
    const double p = predict_scores(model, one, 1).front();
    out << ref << ", " << label_name(p >= 0.5 ? Label::Fake : Label::Real) << ", " << format("%.6f", p) << '\n';
  }
  return failures == images.size() ? kExitInvalidInput : kExitOk;
}

int cmd_ablate(const RunConfig& c, std::ostream& out) {
  const fs::path prepared = c.output_dir / "data";
  const PreparedData pd = fs::exists(prepared / "train.tsv") ? read_prepared(prepared) : prepare_data(c);
  ImageSource source = make_image_source(c);
  const StageData data = load_stage_data(c, pd, source);
  DeitModel model(c.model, c.seed);
  const AblationResult res =
      run_ablation(model, data, c.augment, c.stage_config(1), c.stage_config(2), RunOptions{c.threads, 64});

  const fs::path dir = c.output_dir / "ablation";
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const AblationRow& row = res.rows[i];
    emit_report(row.metrics, dir, row.test_case);
    write_text(dir / (row.test_case + "_epochs.jsonl"), history_jsonl(res.stages[i].logs));
    store_checkpoint(dir / (row.test_case + ".ckpt"), res.stages[i].best);
    rows.push_back({{"test_case", row.test_case},
                    {"description", row.description},
                    {"total_epochs", row.total_epochs},
                    {"affine", row.affine}});
  }
  write_text(dir / "rows.json", rows.dump(2) + "\n");
  const std::string table = render_ablation_table(res.rows);
  write_text(dir / "table.txt", table);
  out << table;
  return kExitOk;
}

std::vector<EpochLog> read_epoch_logs(const fs::path& path) {
  std::vector<EpochLog> logs;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) logs.push_back(parse_epoch_log(line));
  }
  return logs;
}

int cmd_report(const RunConfig& c, std::ostream& out) {
  std::string text;
  for (std::uint32_t stage : {1u, 2u}) {
    const fs::path log = c.output_dir / ("stage" + std::to_string(stage)) / "epochs.jsonl";
    if (!fs::exists(log)) continue;
    text += "Stage " + std::to_string(stage) + " training\n" + epoch_table(read_epoch_logs(log)) + "\n";
  }
  const auto r1 = read_stage_report(c.output_dir / "stage1");
  const auto r2 = read_stage_report(c.output_dir / "stage2");
  if (r1 && r2) text += "Stage comparison\n" + render_stage_comparison(*r1, *r2) + "\n";

  const fs::path rows_path = c.output_dir / "ablation" / "rows.json";
  if (fs::exists(rows_path)) {
    std::ifstream in(rows_path);
    const auto rows_json = nlohmann::json::parse(in);
    std::vector<AblationRow> rows;
    for (const auto& r : rows_json) {
      AblationRow row;
      row.test_case = r.at("test_case").get<std::string>();
      row.description = r.at("description").get<std::string>();
      row.total_epochs = r.at("total_epochs").get<std::string>();
      row.affine = r.at("affine").get<bool>();
      std::ifstream rin(c.output_dir / "ablation" / (row.test_case + ".report"));
      if (!rin) throw ValidationError("ablation report missing for " + row.test_case);
      row.metrics = read_report(rin);
      rows.push_back(std::move(row));
    }
    text += "Ablation\n" + render_ablation_table(rows) + "\n";
  }
  if (text.empty()) throw ValidationError("no training or ablation artifacts under " + c.output_dir.string());
  write_text(c.output_dir / "summary.txt", text);
  out << text;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage vision transformer training for real/fake face classification", "deitfake"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "deitfake 1.0");

  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON run config");
  app.add_option("--preset", g.preset, "Built-in config when --config is absent: desk, desk-ablation, full");
  app.add_option("--seed", g.seed, "Run seed (model init, splits, shuffling, augmentation)");
  app.add_option("--output-dir", g.output_dir, "Directory for manifests, checkpoints and reports");
  app.add_option("--threads", g.threads, "Augmentation workers")->check(CLI::PositiveNumber);

  std::size_t dump_count = 0;
  auto* prepare = app.add_subcommand("prepare", "Balance, split and write train/validation/test manifests");
  prepare->add_option("--dump-augment", dump_count, "Write per-step augmentation PNGs for the first N train images");

  std::string stage = "both";
  std::string resume;
  std::optional<std::size_t> stop_after;
  auto* train = app.add_subcommand("train", "Run stage 1, stage 2, or both");
  train->add_option("--stage", stage, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}));
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--stop-after-epoch", stop_after, "End each stage after this many epochs, keeping checkpoints")
      ->check(CLI::PositiveNumber);

  std::string checkpoint;
  std::string manifest;
  std::string name;
  bool perturbed = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--manifest", manifest, "Manifest to score (default: the prepared test split)");
  eval->add_flag("--perturbed", perturbed, "Apply the configured test perturbation");
  eval->add_option("--name", name, "Report file stem (default: manifest stem)");

  std::vector<std::string> images;
  auto* infer = app.add_subcommand("infer", "Classify images");
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("images", images, "Image paths or synth: references")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the T1/T2/T3 recipes and tabulate them");
  auto* report = app.add_subcommand("report", "Summarize training and ablation artifacts");
  auto* show = app.add_subcommand("config", "Print the resolved run config");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInvalidInput;
  }

  try {
    const RunConfig c = resolve_config(g);
    if (prepare->parsed()) return cmd_prepare(c, dump_count, out, err);
    if (train->parsed()) return cmd_train(c, stage, resume, stop_after, out);
    if (eval->parsed()) return cmd_eval(c, checkpoint, manifest, perturbed, name, out);
    if (infer->parsed()) return cmd_infer(c, checkpoint, images, out, err);
    if (ablate->parsed()) return cmd_ablate(c, out);
    if (report->parsed()) return cmd_report(c, out);
    if (show->parsed()) {
      out << run_config_json(c);
      return kExitOk;
    }
  } catch (const CompatibilityError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIncompatible;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIncompatible;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidInput;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidInput;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace deitfake
