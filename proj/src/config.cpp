#include "imc/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>

#include "imc/io.hpp"
#include "json.hpp"

namespace imc {

using ordered_json = nlohmann::ordered_json;

namespace {

const std::set<std::string> kKnownKeys = {
    "schema_version", "output_dir",  "seed",        "workers",
    "deterministic",  "tau_s",       "tau_r",       "plant",
    "excitation",     "identification", "model",    "controller",
    "references",     "equilibrium", "closed_loop",
};

ordered_json train_to_json(const TrainConfig& t) {
  ordered_json j;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.learning_rate;
  j["rmsprop_decay"] = t.rmsprop_decay;
  j["rmsprop_eps"] = t.rmsprop_eps;
  j["washout"] = t.washout;
  j["max_epochs"] = t.max_epochs;
  j["patience"] = t.patience;
  j["nu_target"] = t.nu_target;
  j["penalty_slope"] = t.penalty_slope;
  j["clip_norm"] = t.clip_norm;
  return j;
}

TrainConfig train_from_json(const ordered_json& j, TrainConfig base) {
  base.batch_size = j.value("batch_size", base.batch_size);
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.rmsprop_decay = j.value("rmsprop_decay", base.rmsprop_decay);
  base.rmsprop_eps = j.value("rmsprop_eps", base.rmsprop_eps);
  base.washout = j.value("washout", base.washout);
  base.max_epochs = j.value("max_epochs", base.max_epochs);
  base.patience = j.value("patience", base.patience);
  base.nu_target = j.value("nu_target", base.nu_target);
  base.penalty_slope = j.value("penalty_slope", base.penalty_slope);
  base.clip_norm = j.value("clip_norm", base.clip_norm);
  return base;
}

}  // namespace

TankParams ExperimentConfig::plant_params() const {
  return plant_params_path.empty() ? TankParams::benchmark()
                                   : load_tank_params(plant_params_path);
}

void ExperimentConfig::validate() const {
  if (schema_version != 1)
    throw std::invalid_argument("config: unsupported schema_version");
  if (tau_s <= 0 || tau_r <= 0)
    throw std::invalid_argument("config: time constants must be positive");
  if (model_layers.empty() || controller_layers.empty())
    throw std::invalid_argument("config: empty topology");
  for (int w : model_layers)
    if (w < 1) throw std::invalid_argument("config: bad model width");
  for (int w : controller_layers)
    if (w < 1) throw std::invalid_argument("config: bad controller width");
  if (id_windows < 1 || id_window_length < 2 || id_stride < 1)
    throw std::invalid_argument("config: bad identification settings");
  if (model_train.washout >= id_window_length)
    throw std::invalid_argument("config: washout must be below the window length");
  if (controller_train.washout >= references.length)
    throw std::invalid_argument("config: washout must be below the reference length");
  if (!plant_params_path.empty()) {
    std::ifstream f(plant_params_path);
    if (!f)
      throw std::invalid_argument("config: plant params file not found: " +
                                  plant_params_path);
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  ordered_json doc;
  f >> doc;

  for (const auto& [key, value] : doc.items()) {
    if (!kKnownKeys.count(key))
      throw std::runtime_error("config: unknown key \"" + key + "\"");
    (void)value;
  }
  // environment overrides: IMC_SEED=7, IMC_OUTPUT_DIR='"run2"', ...
  for (const auto& key : kKnownKeys) {
    std::string env = "IMC_" + key;
    for (auto& c : env) c = static_cast<char>(std::toupper(c));
    if (const char* v = std::getenv(env.c_str())) {
      doc[key] = ordered_json::parse(v, nullptr, true);
    }
  }

  ExperimentConfig cfg;
  cfg.schema_version = doc.value("schema_version", 1);
  cfg.output_dir = doc.value("output_dir", cfg.output_dir);
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.workers = doc.value("workers", cfg.workers);
  cfg.deterministic = doc.value("deterministic", cfg.deterministic);
  cfg.tau_s = doc.value("tau_s", cfg.tau_s);
  cfg.tau_r = doc.value("tau_r", cfg.tau_r);

  if (doc.contains("plant")) {
    const auto& p = doc["plant"];
    cfg.plant_params_path = p.value("params_path", cfg.plant_params_path);
    cfg.measurement_noise_std = p.value("noise_std", cfg.measurement_noise_std);
  }
  if (doc.contains("excitation")) {
    const auto& e = doc["excitation"];
    cfg.excitation.levels = e.value("levels", cfg.excitation.levels);
    cfg.excitation.hold_min = e.value("hold_min", cfg.excitation.hold_min);
    cfg.excitation.hold_max = e.value("hold_max", cfg.excitation.hold_max);
    if (e.contains("amplitude")) {
      cfg.excitation.amplitude.clear();
      for (const auto& pair : e["amplitude"])
        cfg.excitation.amplitude.emplace_back(pair.at(0).get<double>(),
                                              pair.at(1).get<double>());
    }
  }
  if (cfg.excitation.amplitude.empty())
    cfg.excitation.amplitude = {{-1.0, 1.0}, {-1.0, 1.0}};
  cfg.excitation.seed = cfg.seed;

  if (doc.contains("identification")) {
    const auto& i = doc["identification"];
    cfg.id_windows = i.value("windows", cfg.id_windows);
    cfg.id_window_length = i.value("window_length", cfg.id_window_length);
    cfg.id_stride = i.value("stride", cfg.id_stride);
    cfg.id_val_windows = i.value("val_windows", cfg.id_val_windows);
    cfg.id_test_length = i.value("test_length", cfg.id_test_length);
  }
  if (doc.contains("model")) {
    const auto& m = doc["model"];
    if (m.contains("layers")) cfg.model_layers = m["layers"].get<std::vector<int>>();
    if (m.contains("train")) cfg.model_train = train_from_json(m["train"], cfg.model_train);
  }
  if (doc.contains("controller")) {
    const auto& c = doc["controller"];
    if (c.contains("layers"))
      cfg.controller_layers = c["layers"].get<std::vector<int>>();
    if (c.contains("train"))
      cfg.controller_train = train_from_json(c["train"], cfg.controller_train);
  }
  cfg.model_train.seed = cfg.seed;
  cfg.model_train.workers = cfg.workers;
  cfg.controller_train.seed = cfg.seed + 1;
  cfg.controller_train.workers = cfg.workers;

  if (doc.contains("references")) {
    const auto& r = doc["references"];
    cfg.references.n_train = r.value("train", cfg.references.n_train);
    cfg.references.n_val = r.value("val", cfg.references.n_val);
    cfg.references.n_test = r.value("test", cfg.references.n_test);
    cfg.references.length = r.value("length", cfg.references.length);
    cfg.references.hold_min = r.value("hold_min", cfg.references.hold_min);
    cfg.references.hold_max = r.value("hold_max", cfg.references.hold_max);
    cfg.references.inset = r.value("inset", cfg.references.inset);
  }
  cfg.references.seed = cfg.seed + 2;
  cfg.references.sample_period = cfg.tau_s;

  if (doc.contains("equilibrium")) {
    const auto& e = doc["equilibrium"];
    cfg.equilibrium.settle_tol = e.value("settle_tol", cfg.equilibrium.settle_tol);
    cfg.equilibrium.output_tol = e.value("output_tol", cfg.equilibrium.output_tol);
    cfg.equilibrium.settle_cap = e.value("settle_cap", cfg.equilibrium.settle_cap);
    cfg.equilibrium.grid = e.value("grid", cfg.equilibrium.grid);
    cfg.equilibrium.refine_evals = e.value("refine_evals", cfg.equilibrium.refine_evals);
  }
  if (doc.contains("closed_loop")) {
    const auto& c = doc["closed_loop"];
    cfg.schedule_setpoints = c.value("setpoints", cfg.schedule_setpoints);
    cfg.schedule_hold = c.value("hold", cfg.schedule_hold);
  }

  cfg.validate();
  return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  ordered_json doc;
  doc["schema_version"] = cfg.schema_version;
  doc["output_dir"] = cfg.output_dir;
  doc["seed"] = cfg.seed;
  doc["workers"] = cfg.workers;
  doc["deterministic"] = cfg.deterministic;
  doc["tau_s"] = cfg.tau_s;
  doc["tau_r"] = cfg.tau_r;
  doc["plant"] = {{"params_path", cfg.plant_params_path},
                  {"noise_std", cfg.measurement_noise_std}};
  ordered_json amp = ordered_json::array();
  for (const auto& [lo, hi] : cfg.excitation.amplitude) amp.push_back({lo, hi});
  doc["excitation"] = {{"levels", cfg.excitation.levels},
                       {"hold_min", cfg.excitation.hold_min},
                       {"hold_max", cfg.excitation.hold_max},
                       {"amplitude", amp}};
  doc["identification"] = {{"windows", cfg.id_windows},
                           {"window_length", cfg.id_window_length},
                           {"stride", cfg.id_stride},
                           {"val_windows", cfg.id_val_windows},
                           {"test_length", cfg.id_test_length}};
  doc["model"] = {{"layers", cfg.model_layers},
                  {"train", train_to_json(cfg.model_train)}};
  doc["controller"] = {{"layers", cfg.controller_layers},
                       {"train", train_to_json(cfg.controller_train)}};
  doc["references"] = {{"train", cfg.references.n_train},
                       {"val", cfg.references.n_val},
                       {"test", cfg.references.n_test},
                       {"length", cfg.references.length},
                       {"hold_min", cfg.references.hold_min},
                       {"hold_max", cfg.references.hold_max},
                       {"inset", cfg.references.inset}};
  doc["equilibrium"] = {{"settle_tol", cfg.equilibrium.settle_tol},
                        {"output_tol", cfg.equilibrium.output_tol},
                        {"settle_cap", cfg.equilibrium.settle_cap},
                        {"grid", cfg.equilibrium.grid},
                        {"refine_evals", cfg.equilibrium.refine_evals}};
  doc["closed_loop"] = {{"setpoints", cfg.schedule_setpoints},
                        {"hold", cfg.schedule_hold}};

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write config " + path);
  f << doc.dump(1) << '\n';
}

}  // namespace imc
