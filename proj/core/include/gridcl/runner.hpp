#pragma once

#include <string>
#include <vector>

#include "gridcl/config.hpp"
#include "gridcl/eval.hpp"

namespace gridcl {

struct Dataset {
  DatasetSplit split;
  std::string hash;  // content hash of the split, keys the Joint cache
};

struct RunResult {
  Method method;
  int scenario = 0;
  std::uint64_t seed = 0;
  AccuracyMatrix matrix;
  std::vector<double> task_accuracy;  // seen-so-far test accuracy after each task
  double final_acc = 0.0;
  double joint_acc = 0.0;
  double gap = 0.0;
  MemoryAccounting memory;
  double wall_seconds = 0.0;
  std::string dataset_hash;
  std::string config_echo;  // JSON of the RunConfig that produced this cell
};

// load rows (csv or synthetic), split, hash
Dataset prepare_dataset(const RunConfig& cfg);

// one (scenario, method, seed) cell; joint_acc from the paired Joint run
RunResult run_cell(const Dataset& data, const RunConfig& cfg, int scenario,
                   Method method, std::uint64_t seed, double joint_acc);

// Executes every requested cell, Joint first per (scenario, seed) group
// (cached by dataset hash), writes one JSON per cell atomically plus the
// aggregate CSVs. Independent groups run on worker threads.
void run_all(const RunConfig& cfg);

std::string result_filename(int scenario, Method method, std::uint64_t seed);
void write_result_json(const RunResult& r, const std::string& path);  // write+rename
RunResult read_result_json(const std::string& path);

// aggregate summary.csv + per-scenario curve CSVs from all results in dir
void write_report(const std::string& results_dir);

}  // namespace gridcl
