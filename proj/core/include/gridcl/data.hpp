#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridcl/rng.hpp"

namespace gridcl {

inline constexpr int kNumFeatures = 51;
inline constexpr int kNumFaultTypes = 11;
inline constexpr int kNumZones = 4;
inline constexpr int kWindowLen = 12;
inline constexpr int kWindowStride = 6;

struct SampleRow {
  std::array<float, kNumFeatures> features;
  int fault_type = 0;     // 0..10
  int zone = 0;           // 0..3
  int resistance_id = 0;  // provenance tag, unused by training
};

struct TimeWindow {
  std::array<float, kWindowLen * kNumFeatures> matrix;  // 12 x 51, row-major
  int fault_type = 0;
  int zone = 0;
};

struct ZScoreStats {
  std::array<float, kNumFeatures> mean;
  std::array<float, kNumFeatures> std_dev;          // population convention
  std::array<bool, kNumFeatures> constant_column;   // std < 1e-9, mapped to 0
};

struct DatasetSplit {
  std::vector<TimeWindow> train;
  std::vector<TimeWindow> test;
  ZScoreStats normalization;
};

struct ScenarioTask {
  std::vector<int> class_set;    // labels introduced/active in this task
  std::vector<int> zone_filter;  // nonempty only for scenario 3
};

struct ScenarioPlan {
  int scenario_id = 0;                  // 1..4
  bool target_is_zone = false;          // scenario 4 predicts zones
  std::vector<ScenarioTask> tasks;
};

// indices into DatasetSplit.train, one stream per task
using TaskStreams = std::vector<std::vector<int>>;

struct SyntheticConfig {
  int rows_per_cell = 276;     // rows per (fault_type, zone) cell
  std::uint64_t seed = 1;
  double noise_scale = 1.0;
  double class_sep = 1.0;      // scales the class-mean offsets
  double zone_sep = 1.0;       // scales the zone shifts
};

// predicted label of a window under a scenario (fault type, or zone for 4)
inline int window_label(const TimeWindow& w, const ScenarioPlan& plan) {
  return plan.target_is_zone ? w.zone : w.fault_type;
}

// Deterministic synthetic rows with the real dataset's schema. Each
// (fault_type, zone) cell is a distinct signal family: class-dependent
// sinusoid mixtures plus class/zone mean shifts and zone noise, generated in
// contiguous 12-row runs so windows carry temporal structure.
std::vector<SampleRow> generate_synthetic(const SyntheticConfig& cfg);

// Z-score fit on `rows` (population std) and application in place; constant
// columns (std < 1e-9) map to 0 and are flagged.
ZScoreStats zscore_fit(const std::vector<SampleRow>& rows,
                       const std::vector<int>* subset = nullptr);
void zscore_apply(const ZScoreStats& stats, std::vector<SampleRow>& rows);
std::pair<std::vector<SampleRow>, ZScoreStats> zscore_fit_apply(std::vector<SampleRow> rows);

// Number of windows for a group of n rows after trimming to a multiple of 12.
int window_count_for_group(int n);

// Rows grouped by (fault_type, zone) in input order, trimmed per group,
// windowized with stride 6. Rows are consumed as-is (normalize first).
std::vector<TimeWindow> windowize(const std::vector<SampleRow>& rows);

// Full pipeline: group, windowize, stratified window-level split (train
// fraction per (fault_type, zone) cell, +-1 window), Z-score fitted on
// train-window rows only, applied everywhere.
DatasetSplit make_split(const std::vector<SampleRow>& rows, double train_fraction,
                        std::uint64_t seed);

ScenarioPlan scenario_plan(int scenario_id);

// Per-task train streams per the plan; indices into split.train.
TaskStreams build_scenario(const DatasetSplit& split, const ScenarioPlan& plan);

// Per-task test subsets (indices into split.test): zone slices for
// scenario 3, class slices otherwise.
TaskStreams build_test_partition(const DatasetSplit& split, const ScenarioPlan& plan);

// CSV with header f0..f50,fault_type,zone[,resistance_id]
std::vector<SampleRow> load_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<SampleRow>& rows);

}  // namespace gridcl
