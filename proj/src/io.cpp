#include "imc/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace imc {

using ordered_json = nlohmann::ordered_json;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return f;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

ordered_json matrix_to_json(const MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json vector_to_json(const VectorXd& v) {
  ordered_json out = ordered_json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

MatrixXd matrix_from_json(const ordered_json& j, int rows, int cols,
                          const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw std::runtime_error(what + ": expected " + std::to_string(rows) + " rows");
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto& row = j.at(i);
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw std::runtime_error(what + ": row " + std::to_string(i) + " expected " +
                               std::to_string(cols) + " columns");
    for (int c = 0; c < cols; ++c) m(i, c) = row.at(c).get<double>();
  }
  return m;
}

VectorXd vector_from_json(const ordered_json& j, int size, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != size)
    throw std::runtime_error(what + ": expected " + std::to_string(size) + " entries");
  VectorXd v(size);
  for (int i = 0; i < size; ++i) v(i) = j.at(i).get<double>();
  return v;
}

}  // namespace

void save_network(const GruNetwork& net, const std::string& role,
                  const std::string& path) {
  net.validate();
  if (role != "model" && role != "controller")
    throw std::invalid_argument("save_network: role must be model or controller");

  ordered_json doc;
  doc["format_version"] = 1;
  doc["role"] = role;
  ordered_json dims;
  dims["input"] = net.input_dim();
  ordered_json widths = ordered_json::array();
  for (const auto& l : net.layers) widths.push_back(l.units());
  dims["layers"] = widths;
  dims["output"] = net.output_dim();
  doc["dims"] = dims;

  ordered_json layers = ordered_json::array();
  for (const auto& l : net.layers) {
    ordered_json jl;
    jl["W_z"] = matrix_to_json(l.W_z);
    jl["U_z"] = matrix_to_json(l.U_z);
    jl["b_z"] = vector_to_json(l.b_z);
    jl["W_f"] = matrix_to_json(l.W_f);
    jl["U_f"] = matrix_to_json(l.U_f);
    jl["b_f"] = vector_to_json(l.b_f);
    jl["W_r"] = matrix_to_json(l.W_r);
    jl["U_r"] = matrix_to_json(l.U_r);
    jl["b_r"] = vector_to_json(l.b_r);
    layers.push_back(std::move(jl));
  }
  doc["layers"] = layers;

  ordered_json om;
  om["U_o"] = matrix_to_json(net.output.U_o);
  om["b_o"] = vector_to_json(net.output.b_o);
  om["activation"] =
      net.output.activation == OutputActivation::Tanh ? "tanh" : "identity";
  doc["output_map"] = om;

  auto f = open_out(path);
  f << doc.dump(1) << '\n';
}

GruNetwork load_network(const std::string& path, std::string* role_out) {
  auto f = open_in(path);
  ordered_json doc;
  f >> doc;

  if (doc.value("format_version", 0) != 1)
    throw std::runtime_error(path + ": unsupported weight format version");
  const std::string role = doc.at("role").get<std::string>();
  if (role != "model" && role != "controller")
    throw std::runtime_error(path + ": unknown role " + role);
  if (role_out) *role_out = role;

  const auto& dims = doc.at("dims");
  const int input = dims.at("input").get<int>();
  std::vector<int> widths;
  for (const auto& w : dims.at("layers")) widths.push_back(w.get<int>());
  const int output = dims.at("output").get<int>();
  if (widths.empty() || input < 1 || output < 1)
    throw std::runtime_error(path + ": degenerate dims");

  const std::string act = doc.at("output_map").at("activation").get<std::string>();
  GruNetwork net = GruNetwork::zeros(
      input, widths, output,
      act == "tanh" ? OutputActivation::Tanh : OutputActivation::Identity);
  if (act != "tanh" && act != "identity")
    throw std::runtime_error(path + ": unknown output activation " + act);

  const auto& layers = doc.at("layers");
  if (static_cast<int>(layers.size()) != static_cast<int>(widths.size()))
    throw std::runtime_error(path + ": layer count mismatch");
  int in = input;
  for (size_t l = 0; l < widths.size(); ++l) {
    const auto& jl = layers.at(l);
    const int n = widths[l];
    const std::string tag = path + ": layer " + std::to_string(l);
    auto& w = net.layers[l];
    w.W_z = matrix_from_json(jl.at("W_z"), n, in, tag + " W_z");
    w.U_z = matrix_from_json(jl.at("U_z"), n, n, tag + " U_z");
    w.b_z = vector_from_json(jl.at("b_z"), n, tag + " b_z");
    w.W_f = matrix_from_json(jl.at("W_f"), n, in, tag + " W_f");
    w.U_f = matrix_from_json(jl.at("U_f"), n, n, tag + " U_f");
    w.b_f = vector_from_json(jl.at("b_f"), n, tag + " b_f");
    w.W_r = matrix_from_json(jl.at("W_r"), n, in, tag + " W_r");
    w.U_r = matrix_from_json(jl.at("U_r"), n, n, tag + " U_r");
    w.b_r = vector_from_json(jl.at("b_r"), n, tag + " b_r");
    in = n;
  }
  net.output.U_o = matrix_from_json(doc.at("output_map").at("U_o"), output,
                                    widths.back(), path + ": U_o");
  net.output.b_o = vector_from_json(doc.at("output_map").at("b_o"), output,
                                    path + ": b_o");
  net.validate();
  return net;
}

void write_ndjson(const std::string& path,
                  const std::vector<SequenceRecord>& records) {
  auto f = open_out(path);
  for (const auto& rec : records) {
    ordered_json j;
    j["id"] = rec.id;
    j["kind"] = rec.kind;
    j["sample_period"] = rec.sample_period;
    j["channels"] = rec.channels;
    ordered_json data = ordered_json::array();
    for (const auto& row : rec.rows) data.push_back(vector_to_json(row));
    j["data"] = data;
    f << j.dump() << '\n';
  }
}

std::vector<SequenceRecord> read_ndjson(const std::string& path) {
  auto f = open_in(path);
  std::vector<SequenceRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, true);
    SequenceRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.kind = j.at("kind").get<std::string>();
    rec.sample_period = j.at("sample_period").get<double>();
    rec.channels = j.at("channels").get<std::vector<std::string>>();
    const auto& data = j.at("data");
    const int width = static_cast<int>(rec.channels.size());
    for (const auto& row : data) {
      if (static_cast<int>(row.size()) != width)
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": row width does not match channels");
      VectorXd v(width);
      for (int c = 0; c < width; ++c) v(c) = row.at(c).get<double>();
      rec.rows.push_back(std::move(v));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

SequenceRecord to_record(const IoSequence& seq,
                         const std::vector<std::string>& input_names,
                         const std::vector<std::string>& output_names) {
  SequenceRecord rec;
  rec.id = seq.id;
  rec.kind = "io";
  rec.sample_period = seq.sample_period;
  rec.channels = input_names;
  rec.channels.insert(rec.channels.end(), output_names.begin(), output_names.end());
  const int m = static_cast<int>(input_names.size());
  const int p = static_cast<int>(output_names.size());
  for (size_t k = 0; k < seq.inputs.size(); ++k) {
    VectorXd row(m + p);
    row.head(m) = seq.inputs[k];
    row.tail(p) = seq.outputs[k];
    rec.rows.push_back(std::move(row));
  }
  return rec;
}

SequenceRecord to_record(const RefSequence& seq) {
  SequenceRecord rec;
  rec.id = seq.id;
  rec.kind = "reference";
  rec.sample_period = seq.sample_period;
  const int p = static_cast<int>(seq.setpoints.front().size());
  for (int c = 0; c < p; ++c) rec.channels.push_back("y0_" + std::to_string(c + 1));
  for (int c = 0; c < p; ++c) rec.channels.push_back("ref_" + std::to_string(c + 1));
  for (size_t k = 0; k < seq.setpoints.size(); ++k) {
    VectorXd row(2 * p);
    row.head(p) = seq.setpoints[k];
    row.tail(p) = seq.refs[k];
    rec.rows.push_back(std::move(row));
  }
  return rec;
}

IoSequence io_from_record(const SequenceRecord& rec, int input_dim) {
  if (rec.kind != "io")
    throw std::runtime_error("sequence " + rec.id + " is not an io record");
  const int width = static_cast<int>(rec.channels.size());
  if (input_dim < 1 || input_dim >= width)
    throw std::runtime_error("sequence " + rec.id + ": bad input split");
  IoSequence seq;
  seq.id = rec.id;
  seq.sample_period = rec.sample_period;
  for (const auto& row : rec.rows) {
    seq.inputs.push_back(row.head(input_dim));
    seq.outputs.push_back(row.tail(width - input_dim));
  }
  return seq;
}

RefSequence ref_from_record(const SequenceRecord& rec) {
  if (rec.kind != "reference")
    throw std::runtime_error("sequence " + rec.id + " is not a reference record");
  const int width = static_cast<int>(rec.channels.size());
  if (width % 2 != 0)
    throw std::runtime_error("sequence " + rec.id + ": odd channel count");
  const int p = width / 2;
  RefSequence seq;
  seq.id = rec.id;
  seq.sample_period = rec.sample_period;
  for (const auto& row : rec.rows) {
    seq.setpoints.push_back(row.head(p));
    seq.refs.push_back(row.tail(p));
  }
  return seq;
}

namespace {

void append_block(std::string& header, const char* prefix, int n) {
  for (int i = 0; i < n; ++i)
    header += "," + std::string(prefix) + "_" + std::to_string(i + 1);
}

void append_values(std::string& line, const VectorXd& v) {
  char buf[40];
  for (int i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.17g", v(i));
    line += buf;
  }
}

}  // namespace

void write_closed_loop_csv(const std::string& path, const ClosedLoopLog& log) {
  if (log.size() == 0) throw std::invalid_argument("empty closed-loop log");
  auto f = open_out(path);
  const int p = static_cast<int>(log.setpoint.front().size());
  const int m = static_cast<int>(log.control.front().size());
  const int nc = static_cast<int>(log.xi_c.front().size());
  const int nm = static_cast<int>(log.xi_m.front().size());

  std::string header = "k,t";
  append_block(header, "y0", p);
  append_block(header, "ref", p);
  append_block(header, "emf", p);
  append_block(header, "cin", p);
  append_block(header, "u", m);
  append_block(header, "yp", p);
  append_block(header, "ym", p);
  append_block(header, "xc", nc);
  append_block(header, "xm", nm);
  f << header << '\n';

  char buf[64];
  for (size_t k = 0; k < log.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g", k, k * log.sample_period);
    std::string line = buf;
    append_values(line, log.setpoint[k]);
    append_values(line, log.ref[k]);
    append_values(line, log.em_filtered[k]);
    append_values(line, log.ctrl_input[k]);
    append_values(line, log.control[k]);
    append_values(line, log.y_plant[k]);
    append_values(line, log.y_model[k]);
    append_values(line, log.xi_c[k]);
    append_values(line, log.xi_m[k]);
    f << line << '\n';
  }
}

ClosedLoopLog read_closed_loop_csv(const std::string& path) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path + ": empty file");

  // column layout from the header
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  auto count_prefix = [&](const std::string& prefix) {
    int n = 0;
    for (const auto& c : cols)
      if (c.rfind(prefix + "_", 0) == 0) ++n;
    return n;
  };
  const int p = count_prefix("y0");
  const int m = count_prefix("u");
  const int nc = count_prefix("xc");
  const int nm = count_prefix("xm");
  if (p < 1 || m < 1) throw std::runtime_error(path + ": unrecognized header");

  ClosedLoopLog log;
  bool period_set = false;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != static_cast<int>(cols.size()))
      throw std::runtime_error(path + ": row width mismatch");
    size_t at = 1;  // skip k
    const double t = vals[at++];
    if (!period_set && log.size() == 1) {
      log.sample_period = t;  // t of row 1 equals one period
      period_set = true;
    }
    auto take = [&](int n) {
      VectorXd v(n);
      for (int i = 0; i < n; ++i) v(i) = vals[at++];
      return v;
    };
    log.setpoint.push_back(take(p));
    log.ref.push_back(take(p));
    log.em_filtered.push_back(take(p));
    log.ctrl_input.push_back(take(p));
    log.control.push_back(take(m));
    log.y_plant.push_back(take(p));
    log.y_model.push_back(take(p));
    log.xi_c.push_back(take(nc));
    log.xi_m.push_back(take(nm));
  }
  return log;
}

void save_train_report(const TrainReport& report, const std::string& path) {
  ordered_json doc;
  doc["train_loss"] = report.train_loss;
  doc["val_mse"] = report.val_mse;
  doc["residuals"] = report.residuals;
  doc["best_epoch"] = report.best_epoch;
  doc["stopped_epoch"] = report.stopped_epoch;
  doc["diverged"] = report.diverged;
  doc["clip_events"] = report.clip_events;
  ordered_json cert;
  cert["certified"] = report.final_certificate.certified;
  cert["margin"] = report.final_certificate.margin;
  ordered_json layers = ordered_json::array();
  for (const auto& l : report.final_certificate.layers) {
    ordered_json jl;
    jl["layer"] = l.layer;
    jl["sigma_z"] = l.bounds.sigma_z;
    jl["sigma_f"] = l.bounds.sigma_f;
    jl["phi_r"] = l.bounds.phi_r;
    jl["lhs"] = l.lhs;
    jl["rhs"] = l.rhs;
    jl["residual"] = l.residual;
    layers.push_back(std::move(jl));
  }
  cert["layers"] = layers;
  doc["certificate"] = cert;
  auto f = open_out(path);
  f << doc.dump(1) << '\n';
}

void save_tank_params(const TankParams& p, const std::string& path) {
  ordered_json doc;
  doc["a"] = {p.a1, p.a2, p.a3, p.a4};
  doc["S"] = p.S;
  doc["gamma_a"] = p.gamma_a;
  doc["gamma_b"] = p.gamma_b;
  doc["g"] = p.g;
  doc["h_min"] = p.h_min;
  doc["h_max"] = p.h_max;
  doc["q_min"] = p.q_min;
  doc["q_max"] = p.q_max;
  auto f = open_out(path);
  f << doc.dump(1) << '\n';
}

TankParams load_tank_params(const std::string& path) {
  auto f = open_in(path);
  ordered_json doc;
  f >> doc;
  TankParams p;
  const auto a = doc.at("a");
  p.a1 = a.at(0).get<double>();
  p.a2 = a.at(1).get<double>();
  p.a3 = a.at(2).get<double>();
  p.a4 = a.at(3).get<double>();
  p.S = doc.at("S").get<double>();
  p.gamma_a = doc.at("gamma_a").get<double>();
  p.gamma_b = doc.at("gamma_b").get<double>();
  p.g = doc.value("g", 9.81);
  p.h_min = doc.at("h_min").get<std::array<double, 4>>();
  p.h_max = doc.at("h_max").get<std::array<double, 4>>();
  p.q_min = doc.at("q_min").get<std::array<double, 2>>();
  p.q_max = doc.at("q_max").get<std::array<double, 2>>();
  p.validate();
  return p;
}

std::string hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::uint64_t h = 14695981039346656037ULL;
  char buf[4096];
  while (f.read(buf, sizeof buf) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016" PRIx64, h);
  return hex;
}

std::string certificate_to_text(const StabilityCertificate& cert) {
  std::string s;
  char buf[160];
  for (const auto& l : cert.layers) {
    std::snprintf(buf, sizeof buf,
                  "layer %d: nu = %+.6f  (lhs %.6f, rhs %.6f, sigma_z %.4f, "
                  "sigma_f %.4f, phi_r %.4f)\n",
                  l.layer, l.residual, l.lhs, l.rhs, l.bounds.sigma_z,
                  l.bounds.sigma_f, l.bounds.phi_r);
    s += buf;
  }
  std::snprintf(buf, sizeof buf, "%s (margin %.6f; condition is sufficient, not necessary)\n",
                cert.certified ? "CERTIFIED contracting" : "NOT certified",
                cert.margin);
  s += buf;
  return s;
}

}  // namespace imc
