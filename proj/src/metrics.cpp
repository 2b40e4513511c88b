#include "imc/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "imc/training.hpp"

namespace imc {

double fit_index(const std::vector<VectorXd>& y_model,
                 const std::vector<VectorXd>& y_plant, int washout) {
  const double mse = mse_washout(y_model, y_plant, washout);
  const int T = static_cast<int>(y_plant.size());
  VectorXd avg = VectorXd::Zero(y_plant.front().size());
  for (int k = washout; k < T; ++k) avg += y_plant[k];
  avg /= (T - washout);
  double var = 0.0;
  for (int k = washout; k < T; ++k) var += (y_plant[k] - avg).squaredNorm();
  var /= (T - washout);
  if (var <= 0.0)
    throw std::invalid_argument("fit_index: reference output has zero variance");
  return 100.0 * (1.0 - std::sqrt(mse / var));
}

double tracking_rmse(const std::vector<VectorXd>& ref,
                     const std::vector<VectorXd>& y) {
  if (ref.size() != y.size())
    throw std::invalid_argument("tracking_rmse: length mismatch, " +
                                std::to_string(ref.size()) + " vs " +
                                std::to_string(y.size()));
  if (ref.empty()) throw std::invalid_argument("tracking_rmse: empty series");
  double acc = 0.0;
  for (size_t k = 0; k < ref.size(); ++k) acc += (ref[k] - y[k]).squaredNorm();
  return std::sqrt(acc / static_cast<double>(ref.size()));
}

SteadyStateErrors steady_state_errors(const std::vector<VectorXd>& setpoints,
                                      const std::vector<VectorXd>& y_plant,
                                      int settle_window, double drift_tol) {
  if (setpoints.size() != y_plant.size())
    throw std::invalid_argument("steady_state_errors: length mismatch");
  if (setpoints.empty())
    throw std::invalid_argument("steady_state_errors: empty run");

  SteadyStateErrors out;
  const int T = static_cast<int>(setpoints.size());
  int start = 0;
  for (int k = 1; k <= T; ++k) {
    if (k < T && setpoints[k] == setpoints[start]) continue;
    const int len = k - start;
    SetpointError e;
    e.setpoint = setpoints[start];
    e.start = start;
    e.length = len;
    const int w = std::min(settle_window, len);
    VectorXd mean = VectorXd::Zero(y_plant[start].size());
    for (int j = k - w; j < k; ++j) mean += y_plant[j];
    mean /= w;
    e.settled = mean;
    e.error = (e.setpoint - mean).norm();
    for (int j = k - w + 1; j < k; ++j) {
      if ((y_plant[j] - y_plant[j - 1]).lpNorm<Eigen::Infinity>() > drift_tol) {
        e.settled_flag = false;
        break;
      }
    }
    out.table.push_back(std::move(e));
    start = k;
  }

  for (const auto& e : out.table) {
    out.mean_error += e.error;
    out.max_error = std::max(out.max_error, e.error);
  }
  out.mean_error /= static_cast<double>(out.table.size());
  return out;
}

std::string render_report(const EvalReport& r) {
  char buf[512];
  std::string s;
  s += "metric                              value\n";
  s += "-----------------------------------------\n";
  std::snprintf(buf, sizeof buf, "FIT index [%%]                  %10.2f\n", r.fit);
  s += buf;
  std::snprintf(buf, sizeof buf, "tracking RMSE [m]              %10.4f\n",
                r.tracking_rmse_m);
  s += buf;
  std::snprintf(buf, sizeof buf, "average steady-state error [m] %10.4f\n",
                r.mean_ss_error_m);
  s += buf;
  std::snprintf(buf, sizeof buf, "maximum steady-state error [m] %10.4f\n",
                r.max_ss_error_m);
  s += buf;
  std::snprintf(buf, sizeof buf, "set-points evaluated           %10zu\n",
                r.steady_state.table.size());
  s += buf;
  return s;
}

}  // namespace imc
