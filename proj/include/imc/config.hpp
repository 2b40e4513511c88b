#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imc/datagen.hpp"
#include "imc/plant.hpp"
#include "imc/training.hpp"

namespace imc {

// Everything a full pipeline run needs, serialized as versioned JSON.
// The loader rejects unknown top-level keys and applies IMC_<KEY> environment
// overrides (values parsed as JSON) for every top-level key.
struct ExperimentConfig {
  int schema_version = 1;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  int workers = 1;
  bool deterministic = true;

  double tau_s = 25.0;   // control/sampling period, s
  double tau_r = 2000.0; // reference-model and feedback-filter time constant, s

  // plant
  std::string plant_params_path;  // empty = embedded benchmark table
  double measurement_noise_std = 0.01;  // normalized units

  // excitation + identification dataset
  MprsConfig excitation;
  int id_windows = 100;       // training windows extracted from the experiment
  int id_window_length = 300; // steps per window
  int id_stride = 150;
  int id_val_windows = 25;    // from an independent experiment
  int id_test_length = 700;   // single independent test record

  // topologies
  std::vector<int> model_layers = {10, 10};
  std::vector<int> controller_layers = {5, 5, 5};

  TrainConfig model_train;
  TrainConfig controller_train;

  // controller references
  ReferenceDatasetConfig references;
  EquilibriumOptions equilibrium;

  // closed-loop experiment
  int schedule_setpoints = 4;
  int schedule_hold = 500;  // periods per set-point

  TankParams plant_params() const;
  void validate() const;
};

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace imc
