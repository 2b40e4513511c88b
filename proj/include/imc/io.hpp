#pragma once

#include <string>
#include <vector>

#include "imc/gru.hpp"
#include "imc/imc_loop.hpp"
#include "imc/plant.hpp"
#include "imc/stability.hpp"
#include "imc/training.hpp"

namespace imc {

// Versioned weight files. The writer emits a canonical key order; the reader
// validates every dimension before accepting. role is "model" or
// "controller".
void save_network(const GruNetwork& net, const std::string& role,
                  const std::string& path);
GruNetwork load_network(const std::string& path, std::string* role_out = nullptr);

// One line per sequence: {id, kind, sample_period, channels, data rows}.
struct SequenceRecord {
  std::string id;
  std::string kind;  // "io", "reference", "schedule"
  double sample_period = 0.0;
  std::vector<std::string> channels;
  std::vector<VectorXd> rows;
};

void write_ndjson(const std::string& path,
                  const std::vector<SequenceRecord>& records);
std::vector<SequenceRecord> read_ndjson(const std::string& path);

SequenceRecord to_record(const IoSequence& seq,
                         const std::vector<std::string>& input_names,
                         const std::vector<std::string>& output_names);
SequenceRecord to_record(const RefSequence& seq);
IoSequence io_from_record(const SequenceRecord& rec, int input_dim);
RefSequence ref_from_record(const SequenceRecord& rec);

// Closed-loop logs as CSV, one row per control period, full double precision.
void write_closed_loop_csv(const std::string& path, const ClosedLoopLog& log);
ClosedLoopLog read_closed_loop_csv(const std::string& path);

void save_train_report(const TrainReport& report, const std::string& path);

// Tank parameters as a JSON file mirroring the benchmark table.
void save_tank_params(const TankParams& params, const std::string& path);
TankParams load_tank_params(const std::string& path);

// 64-bit FNV-1a of the file bytes, as 16 hex digits.
std::string hash_file(const std::string& path);

std::string certificate_to_text(const StabilityCertificate& cert);

}  // namespace imc
