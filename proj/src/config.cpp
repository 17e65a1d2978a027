#include "deitfake/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "deitfake/errors.hpp"

namespace deitfake {

using Json = nlohmann::ordered_json;

RunConfig RunConfig::desk() {
  RunConfig c;
  c.preset = "desk";
  c.model = ModelConfig::desk();
  c.augment = AugmentSpec::stage2(c.model.image_size);

  c.stage1.epochs = 5;
  c.stage1.batch_size = 32;
  c.stage1.learning_rate = 1e-3;
  c.stage1.weight_decay = 0.01;
  c.stage1.max_grad_norm = 1.0;
  c.stage1.pipeline = PipelineKind::Stage1;

  c.stage2 = c.stage1;
  c.stage2.epochs = 1;
  c.stage2.pipeline = PipelineKind::Stage2;
  c.stage2.freeze = FreezeSpec{0, c.model.num_layers / 2, false};

  c.data.synthetic = SyntheticSpec{};
  c.output_dir = "runs/desk";
  return c;
}

RunConfig RunConfig::desk_ablation() {
  RunConfig c = desk();
  c.preset = "desk-ablation";
  for (StageConfig* s : {&c.stage1, &c.stage2}) {
    s->batch_size = 16;
    s->max_grad_norm = 0.0;
  }
  // At 1e-3 stage 1 locks onto the banding artifact within two epochs.
  c.stage1.learning_rate = 3e-4;
  c.stage2.learning_rate = 1e-4;
  c.data.synthetic->real_count = 1000;
  c.data.synthetic->fake_count = 1000;
  c.test_perturbation = TestPerturbation{};
  c.output_dir = "runs/desk-ablation";
  return c;
}

RunConfig RunConfig::full() {
  RunConfig c;
  c.preset = "full";
  c.model = ModelConfig::full_scale();
  c.augment = AugmentSpec::stage2(c.model.image_size);

  c.stage1.epochs = 5;
  c.stage1.batch_size = 128;
  c.stage1.learning_rate = 2e-5;
  c.stage1.weight_decay = 0.01;
  c.stage1.pipeline = PipelineKind::Stage1;

  c.stage2 = c.stage1;
  c.stage2.epochs = 1;
  c.stage2.pipeline = PipelineKind::Stage2;
  c.stage2.freeze = FreezeSpec{0, c.model.num_layers / 2, false};

  c.output_dir = "runs/full";
  return c;
}

std::vector<std::string> RunConfig::preset_names() { return {"desk", "desk-ablation", "full"}; }

RunConfig RunConfig::preset_named(std::string_view name) {
  if (name == "desk") return desk();
  if (name == "desk-ablation") return desk_ablation();
  if (name == "full") return full();
  throw ValidationError("unknown preset '" + std::string(name) + "' (expected desk, desk-ablation or full)");
}

StageConfig RunConfig::stage_config(std::uint32_t stage) const {
  StageConfig s = stage == 1 ? stage1 : stage2;
  s.seed = seed;
  return s;
}

void RunConfig::validate() const {
  auto rethrow = [](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const ContractError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  };
  rethrow("model", [&] { model.validate(); });
  rethrow("augment", [&] { augment.validate(); });
  rethrow("stage1", [&] { stage1.validate(); });
  rethrow("stage2", [&] { stage2.validate(); });
  if (augment.resize_to != model.image_size) {
    throw ValidationError("augment.resize_to (" + std::to_string(augment.resize_to) + ") must equal model.image_size (" +
                          std::to_string(model.image_size) + ")");
  }
  for (const auto* s : {&stage1, &stage2}) {
    const char* name = s == &stage1 ? "stage1" : "stage2";
    if (s->freeze.block_end > model.num_layers) {
      throw ValidationError(std::string(name) + ".freeze.block_end exceeds model.num_layers");
    }
    if (s->pipeline == PipelineKind::Stage2 && (!augment.color_jitter || !augment.perspective || !augment.elastic)) {
      throw ValidationError(std::string(name) +
                            " uses the stage2 pipeline, which needs augment.color_jitter, perspective and elastic");
    }
  }
  if (data.manifest.has_value() == data.synthetic.has_value()) {
    throw ValidationError("data: set exactly one of manifest and synthetic");
  }
  if (data.manifest && !std::filesystem::exists(*data.manifest)) {
    throw ValidationError("data.manifest does not exist: " + data.manifest->string());
  }
  if (data.synthetic) {
    try {
      data.synthetic->validate();
    } catch (const ContractError& e) {
      throw ValidationError(std::string("data.synthetic: ") + e.what());
    }
  }
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
    throw ValidationError("data.train_fraction must lie strictly between 0 and 1");
  }
  if (!(data.validation_fraction > 0.0 && data.validation_fraction < 1.0)) {
    throw ValidationError("data.validation_fraction must lie strictly between 0 and 1");
  }
  if (test_perturbation) {
    const auto& t = *test_perturbation;
    if (!(t.perspective.distortion_scale >= 0.0 && t.perspective.distortion_scale <= 1.0)) {
      throw ValidationError("test_perturbation.perspective.distortion_scale must lie in [0, 1]");
    }
    if (!(t.perspective.p >= 0.0 && t.perspective.p <= 1.0)) {
      throw ValidationError("test_perturbation.perspective.p must lie in [0, 1]");
    }
    if (!(t.elastic.alpha >= 0.0) || !(t.elastic.sigma > 0.0)) {
      throw ValidationError("test_perturbation.elastic needs alpha >= 0 and sigma > 0");
    }
  }
  if (threads == 0) throw ValidationError("threads must be at least 1");
}

// ---------------------------------------------------------------------------
// Writing

namespace {

// Shortest decimal that reads back as the same float, so 1e-6f prints as 1e-06.
double float_value(float f) {
  char text[32];
  for (int digits = 1; digits < 9; ++digits) {
    std::snprintf(text, sizeof text, "%.*g", digits, static_cast<double>(f));
    if (std::strtof(text, nullptr) == f) return std::strtod(text, nullptr);
  }
  return static_cast<double>(f);  // 9 significant digits always round-trip
}

Json to_json(const ModelConfig& m) {
  return Json{{"image_size", m.image_size},         {"patch_size", m.patch_size},
              {"hidden_dim", m.hidden_dim},         {"num_layers", m.num_layers},
              {"num_heads", m.num_heads},           {"mlp_ratio", m.mlp_ratio},
              {"num_classes", m.num_classes},       {"distillation_token", m.use_distillation_token},
              {"layer_norm_eps", float_value(m.layer_norm_eps)}};
}

Json to_json(const AugmentSpec& a) {
  Json j{{"resize_to", a.resize_to}, {"hflip_p", a.hflip_p}, {"rotation_max_deg", a.rotation_max_deg}};
  j["color_jitter"] = a.color_jitter ? Json{{"brightness", a.color_jitter->brightness},
                                            {"contrast", a.color_jitter->contrast},
                                            {"saturation", a.color_jitter->saturation},
                                            {"hue", a.color_jitter->hue}}
                                     : Json(nullptr);
  j["perspective"] = a.perspective ? Json{{"distortion_scale", a.perspective->distortion_scale}, {"p", a.perspective->p}}
                                   : Json(nullptr);
  j["elastic"] = a.elastic ? Json{{"alpha", a.elastic->alpha}, {"sigma", a.elastic->sigma}} : Json(nullptr);
  j["normalize_mean"] = Json::array();
  j["normalize_std"] = Json::array();
  for (std::size_t i = 0; i < 3; ++i) {
    j["normalize_mean"].push_back(float_value(a.normalize_mean[i]));
    j["normalize_std"].push_back(float_value(a.normalize_std[i]));
  }
  return j;
}

Json to_json(const StageConfig& s) {
  return Json{{"epochs", s.epochs},
              {"batch_size", s.batch_size},
              {"learning_rate", s.learning_rate},
              {"weight_decay", s.weight_decay},
              {"betas", {s.beta1, s.beta2}},
              {"eps", s.eps},
              {"max_grad_norm", s.max_grad_norm},
              {"pipeline", std::string(pipeline_kind_name(s.pipeline))},
              {"freeze",
               {{"block_begin", s.freeze.block_begin},
                {"block_end", s.freeze.block_end},
                {"embeddings", s.freeze.freeze_embeddings}}},
              {"early_stopping", {{"metric", "auroc"}, {"mode", "max"}, {"patience", s.early_stopping.patience}}}};
}

Json to_json(const SyntheticSpec& s) {
  return Json{{"real_count", s.real_count},
              {"fake_count", s.fake_count},
              {"image_size", s.image_size},
              {"artifact_amplitude", s.artifact_amplitude},
              {"artifact_period", s.artifact_period},
              {"tone_shift", s.tone_shift},
              {"noise_std", s.noise_std},
              {"seed", s.seed}};
}

Json to_json(const DataConfig& d) {
  Json j;
  j["manifest"] = d.manifest ? Json(d.manifest->generic_string()) : Json(nullptr);
  j["synthetic"] = d.synthetic ? to_json(*d.synthetic) : Json(nullptr);
  j["train_fraction"] = d.train_fraction;
  j["validation_fraction"] = d.validation_fraction;
  j["balance"] = d.balance;
  j["split_before_balance"] = d.split_before_balance;
  return j;
}

Json to_json(const std::optional<TestPerturbation>& t) {
  if (!t) return Json(nullptr);
  return Json{{"perspective", {{"distortion_scale", t->perspective.distortion_scale}, {"p", t->perspective.p}}},
              {"elastic", {{"alpha", t->elastic.alpha}, {"sigma", t->elastic.sigma}}},
              {"seed", t->seed}};
}

}  // namespace

std::string run_config_json(const RunConfig& c) {
  Json j;
  j["preset"] = c.preset;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir.generic_string();
  j["threads"] = c.threads;
  j["model"] = to_json(c.model);
  j["augment"] = to_json(c.augment);
  j["stage1"] = to_json(c.stage1);
  j["stage2"] = to_json(c.stage2);
  j["data"] = to_json(c.data);
  j["test_perturbation"] = to_json(c.test_perturbation);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Reading

namespace {

// Reads known keys of one JSON object into existing values and rejects the
// rest once finish() is called.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(where() + " must be an object");
  }

  const Json* find(const std::string& key) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void count(const std::string& key, std::size_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ValidationError(key_path(key) + " must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void u64(const std::string& key, std::uint64_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ValidationError(key_path(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  template <class F>
  void real(const std::string& key, F& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) throw ValidationError(key_path(key) + " must be a number");
      out = v->get<F>();
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw ValidationError(key_path(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  void text(const std::string& key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw ValidationError(key_path(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  void triple(const std::string& key, std::array<float, 3>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array() || v->size() != 3 || !std::all_of(v->begin(), v->end(), [](const Json& e) { return e.is_number(); })) {
        throw ValidationError(key_path(key) + " must be an array of 3 numbers");
      }
      for (std::size_t i = 0; i < 3; ++i) out[i] = (*v)[i].get<float>();
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ValidationError("unknown config key " + key_path(key));
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const Json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

void read(const Json& j, const std::string& path, ModelConfig& m) {
  ObjectReader r(j, path);
  r.count("image_size", m.image_size);
  r.count("patch_size", m.patch_size);
  r.count("hidden_dim", m.hidden_dim);
  r.count("num_layers", m.num_layers);
  r.count("num_heads", m.num_heads);
  r.count("mlp_ratio", m.mlp_ratio);
  r.count("num_classes", m.num_classes);
  r.boolean("distillation_token", m.use_distillation_token);
  r.real("layer_norm_eps", m.layer_norm_eps);
  r.finish();
}

// null clears an optional section; an object edits it, starting from the
// current value or the type's defaults.
template <class T, class Fn>
void read_optional(ObjectReader& parent, const std::string& key, std::optional<T>& out, Fn&& fn) {
  const Json* v = parent.find(key);
  if (!v) return;
  if (v->is_null()) {
    out.reset();
    return;
  }
  T value = out.value_or(T{});
  fn(*v, parent.key_path(key), value);
  out = value;
}

void read(const Json& j, const std::string& path, AugmentSpec& a) {
  ObjectReader r(j, path);
  r.count("resize_to", a.resize_to);
  r.real("hflip_p", a.hflip_p);
  r.real("rotation_max_deg", a.rotation_max_deg);
  read_optional(r, "color_jitter", a.color_jitter, [](const Json& v, const std::string& p, ColorJitterSpec& s) {
    ObjectReader o(v, p);
    o.real("brightness", s.brightness);
    o.real("contrast", s.contrast);
    o.real("saturation", s.saturation);
    o.real("hue", s.hue);
    o.finish();
  });
  read_optional(r, "perspective", a.perspective, [](const Json& v, const std::string& p, PerspectiveSpec& s) {
    ObjectReader o(v, p);
    o.real("distortion_scale", s.distortion_scale);
    o.real("p", s.p);
    o.finish();
  });
  read_optional(r, "elastic", a.elastic, [](const Json& v, const std::string& p, ElasticSpec& s) {
    ObjectReader o(v, p);
    o.real("alpha", s.alpha);
    o.real("sigma", s.sigma);
    o.finish();
  });
  r.triple("normalize_mean", a.normalize_mean);
  r.triple("normalize_std", a.normalize_std);
  r.finish();
}

void read(const Json& j, const std::string& path, StageConfig& s) {
  ObjectReader r(j, path);
  r.count("epochs", s.epochs);
  r.count("batch_size", s.batch_size);
  r.real("learning_rate", s.learning_rate);
  r.real("weight_decay", s.weight_decay);
  if (const Json* v = r.find("betas")) {
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
      throw ValidationError(r.key_path("betas") + " must be an array of 2 numbers");
    }
    s.beta1 = (*v)[0].get<double>();
    s.beta2 = (*v)[1].get<double>();
  }
  r.real("eps", s.eps);
  r.real("max_grad_norm", s.max_grad_norm);
  std::string pipeline(pipeline_kind_name(s.pipeline));
  r.text("pipeline", pipeline);
  if (pipeline == "stage1") {
    s.pipeline = PipelineKind::Stage1;
  } else if (pipeline == "stage2") {
    s.pipeline = PipelineKind::Stage2;
  } else {
    throw ValidationError(r.key_path("pipeline") + " must be \"stage1\" or \"stage2\"");
  }
  if (const Json* v = r.find("freeze")) {
    ObjectReader o(*v, r.key_path("freeze"));
    o.count("block_begin", s.freeze.block_begin);
    o.count("block_end", s.freeze.block_end);
    o.boolean("embeddings", s.freeze.freeze_embeddings);
    o.finish();
  }
  if (const Json* v = r.find("early_stopping")) {
    ObjectReader o(*v, r.key_path("early_stopping"));
    std::string metric = "auroc";
    std::string mode = "max";
    o.text("metric", metric);
    o.text("mode", mode);
    if (metric != "auroc" || mode != "max") {
      throw ValidationError(r.key_path("early_stopping") + " supports only metric \"auroc\" with mode \"max\"");
    }
    o.count("patience", s.early_stopping.patience);
    o.finish();
  }
  r.finish();
}

void read(const Json& j, const std::string& path, SyntheticSpec& s) {
  ObjectReader r(j, path);
  r.count("real_count", s.real_count);
  r.count("fake_count", s.fake_count);
  r.count("image_size", s.image_size);
  r.real("artifact_amplitude", s.artifact_amplitude);
  r.real("artifact_period", s.artifact_period);
  r.real("tone_shift", s.tone_shift);
  r.real("noise_std", s.noise_std);
  r.u64("seed", s.seed);
  r.finish();
}

void read(const Json& j, const std::string& path, DataConfig& d, const std::filesystem::path& base_dir) {
  ObjectReader r(j, path);
  if (const Json* v = r.find("manifest")) {
    if (v->is_null()) {
      d.manifest.reset();
    } else if (v->is_string()) {
      std::filesystem::path p = v->get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      d.manifest = p;
      // A manifest replaces the preset's synthetic source unless the file
      // sets both, which validation rejects.
      if (!j.contains("synthetic")) d.synthetic.reset();
    } else {
      throw ValidationError(r.key_path("manifest") + " must be a path string or null");
    }
  }
  read_optional(r, "synthetic", d.synthetic,
                [](const Json& v, const std::string& p, SyntheticSpec& s) { read(v, p, s); });
  if (d.synthetic && j.contains("synthetic") && !j.contains("manifest")) d.manifest.reset();
  r.real("train_fraction", d.train_fraction);
  r.real("validation_fraction", d.validation_fraction);
  r.boolean("balance", d.balance);
  r.boolean("split_before_balance", d.split_before_balance);
  r.finish();
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  Json j;
  try {
    j = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");

  std::string preset = "desk";
  if (const auto it = j.find("preset"); it != j.end()) {
    if (!it->is_string()) throw ValidationError("preset must be a string");
    preset = it->get<std::string>();
  }
  RunConfig c = RunConfig::preset_named(preset);

  ObjectReader r(j, "");
  r.text("preset", c.preset);
  r.u64("seed", c.seed);
  if (const Json* v = r.find("output_dir")) {
    if (!v->is_string()) throw ValidationError("output_dir must be a string");
    c.output_dir = v->get<std::string>();
  }
  r.count("threads", c.threads);
  if (const Json* v = r.find("model")) read(*v, "model", c.model);
  if (const Json* v = r.find("augment")) read(*v, "augment", c.augment);
  if (const Json* v = r.find("stage1")) read(*v, "stage1", c.stage1);
  if (const Json* v = r.find("stage2")) read(*v, "stage2", c.stage2);
  if (const Json* v = r.find("data")) read(*v, "data", c.data, base_dir);
  read_optional(r, "test_perturbation", c.test_perturbation,
                [](const Json& v, const std::string& p, TestPerturbation& t) {
                  ObjectReader o(v, p);
                  if (const Json* pv = o.find("perspective")) {
                    ObjectReader q(*pv, o.key_path("perspective"));
                    q.real("distortion_scale", t.perspective.distortion_scale);
                    q.real("p", t.perspective.p);
                    q.finish();
                  }
                  if (const Json* ev = o.find("elastic")) {
                    ObjectReader q(*ev, o.key_path("elastic"));
                    q.real("alpha", t.elastic.alpha);
                    q.real("sigma", t.elastic.sigma);
                    q.finish();
                  }
                  o.u64("seed", t.seed);
                  o.finish();
                });
  r.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << run_config_json(config);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace deitfake
