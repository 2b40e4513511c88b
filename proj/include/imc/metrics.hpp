#pragma once

#include <string>
#include <vector>

#include "imc/gru.hpp"

namespace imc {

// Goodness-of-fit percent against the mean predictor:
//   100 * (1 - sqrt(MSE(y_model, y_plant) / MSE(y_plant, y_avg)))
// The washout is excluded from both MSEs and from the output mean.
// Throws when the reference has no variance.
double fit_index(const std::vector<VectorXd>& y_model,
                 const std::vector<VectorXd>& y_plant, int washout = 0);

// Root-mean-square tracking error over the whole run, in the units the
// series are given in (callers denormalize first to report meters):
//   ||ref - y||_{2,2} / sqrt(T)
double tracking_rmse(const std::vector<VectorXd>& ref,
                     const std::vector<VectorXd>& y);

struct SetpointError {
  VectorXd setpoint;  // meters
  VectorXd settled;   // mean plant output over the settle window, meters
  double error = 0.0; // ||setpoint - settled||_2
  bool settled_flag = true;  // false when the window still drifts
  int start = 0, length = 0;
};

struct SteadyStateErrors {
  double mean_error = 0.0;  // over set-points
  double max_error = 0.0;
  std::vector<SetpointError> table;
};

// Splits a noise-free run into the holds of its piecewise-constant set-point
// series, averages the plant output over the final `settle_window` periods of
// each hold, and reports per-set-point steady-state errors. Segments whose
// window still drifts more than drift_tol per period are flagged.
SteadyStateErrors steady_state_errors(const std::vector<VectorXd>& setpoints,
                                      const std::vector<VectorXd>& y_plant,
                                      int settle_window = 10,
                                      double drift_tol = 1e-4);

struct EvalReport {
  double fit = 0.0;                // percent, model vs plant over the run
  double tracking_rmse_m = 0.0;    // meters
  double mean_ss_error_m = 0.0;    // meters
  double max_ss_error_m = 0.0;
  SteadyStateErrors steady_state;  // physical units throughout
  std::string log_path, schedule_path;
};

// Plain-text table of the headline numbers.
std::string render_report(const EvalReport& report);

}  // namespace imc
