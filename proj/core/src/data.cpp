#include "gridcl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace gridcl {

namespace {

// fixed (seed-independent) per-class / per-zone structure so the class
// geometry of the synthetic dataset is stable across run seeds
double structure_gauss(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  Rng r(0xA5E17C0DULL ^ (a * 1000003ULL) ^ (b * 7919ULL) ^ (c * 50331653ULL));
  return r.gaussian();
}

struct WindowRef {
  int fault_type;
  int zone;
  std::array<int, kWindowLen> row_idx;
};

std::vector<WindowRef> group_windows(const std::vector<SampleRow>& rows) {
  std::map<std::pair<int, int>, std::vector<int>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i)
    groups[{rows[i].fault_type, rows[i].zone}].push_back(static_cast<int>(i));
  std::vector<WindowRef> refs;
  for (auto& [key, idx] : groups) {
    int trimmed = kWindowLen * (static_cast<int>(idx.size()) / kWindowLen);
    for (int start = 0; start + kWindowLen <= trimmed; start += kWindowStride) {
      WindowRef w;
      w.fault_type = key.first;
      w.zone = key.second;
      for (int t = 0; t < kWindowLen; ++t) w.row_idx[t] = idx[start + t];
      refs.push_back(w);
    }
  }
  return refs;
}

TimeWindow materialize(const WindowRef& ref, const std::vector<SampleRow>& rows) {
  TimeWindow w;
  w.fault_type = ref.fault_type;
  w.zone = ref.zone;
  for (int t = 0; t < kWindowLen; ++t)
    std::copy_n(rows[ref.row_idx[t]].features.data(), kNumFeatures,
                w.matrix.data() + t * kNumFeatures);
  return w;
}

}  // namespace

std::vector<SampleRow> generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.rows_per_cell <= 0)
    throw std::invalid_argument("generate_synthetic: rows_per_cell must be positive");
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  std::vector<SampleRow> rows;
  rows.reserve(static_cast<std::size_t>(cfg.rows_per_cell) * kNumFaultTypes * kNumZones);
  for (int c = 0; c < kNumFaultTypes; ++c) {
    for (int z = 0; z < kNumZones; ++z) {
      Rng noise(derive_seed(cfg.seed, "synthetic-cell",
                            static_cast<std::uint64_t>(c * kNumZones + z)));
      double zone_sigma = 0.8 + 0.2 * z;
      std::array<double, kNumFeatures> ar{};  // AR(1) noise state per channel
      double common = 0.0;  // slow cross-channel disturbance (unit variance)
      double f1 = 1.0 + c % 3;
      double f2 = 2.0 + (2 * c) % 5;
      for (int t = 0; t < cfg.rows_per_cell; ++t) {
        SampleRow row;
        row.fault_type = c;
        row.zone = z;
        row.resistance_id = (t / kWindowLen) % 22;
        // persists across most of a 12-row window, so unlike the per-channel
        // term it does not average out under temporal pooling
        common = 0.9 * common + 0.4358898944 * noise.gaussian();  // sqrt(1-0.9^2)
        for (int j = 0; j < kNumFeatures; ++j) {
          double a1 = 0.7 * structure_gauss(c, j, 1);
          double a2 = 0.5 * structure_gauss(c, j, 2);
          double p1 = kTwoPi * 0.5 * (structure_gauss(c, j, 3) - std::floor(structure_gauss(c, j, 3)));
          double p2 = kTwoPi * 0.5 * (structure_gauss(c, j, 4) - std::floor(structure_gauss(c, j, 4)));
          double class_mean = cfg.class_sep * 0.35 * structure_gauss(c, j, 5);
          double zone_shift = cfg.zone_sep * 0.9 * structure_gauss(1000 + z, j, 6);
          double load = structure_gauss(2000, j, 7);  // channel loading, class-free
          ar[j] = 0.55 * ar[j] + 0.8352245899 * noise.gaussian();  // sqrt(1-0.55^2)
          double v = class_mean + zone_shift +
                     a1 * std::sin(kTwoPi * f1 * t / 12.0 + p1) +
                     a2 * std::sin(kTwoPi * f2 * t / 12.0 + p2) +
                     cfg.noise_scale * zone_sigma * (0.6 * load * common + 0.8 * ar[j]);
          row.features[j] = static_cast<float>(v);
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

ZScoreStats zscore_fit(const std::vector<SampleRow>& rows, const std::vector<int>* subset) {
  std::size_t n = subset ? subset->size() : rows.size();
  if (n < 2) throw std::runtime_error("zscore: need at least 2 rows");
  ZScoreStats s{};
  std::array<double, kNumFeatures> mean{}, var{};
  auto row_at = [&](std::size_t i) -> const SampleRow& {
    return subset ? rows[(*subset)[i]] : rows[i];
  };
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < kNumFeatures; ++j) mean[j] += row_at(i).features[j];
  for (int j = 0; j < kNumFeatures; ++j) mean[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < kNumFeatures; ++j) {
      double d = row_at(i).features[j] - mean[j];
      var[j] += d * d;
    }
  for (int j = 0; j < kNumFeatures; ++j) {
    double sd = std::sqrt(var[j] / static_cast<double>(n));  // population
    s.mean[j] = static_cast<float>(mean[j]);
    s.std_dev[j] = static_cast<float>(sd);
    s.constant_column[j] = sd < 1e-9;
  }
  return s;
}

void zscore_apply(const ZScoreStats& stats, std::vector<SampleRow>& rows) {
  for (auto& row : rows)
    for (int j = 0; j < kNumFeatures; ++j)
      row.features[j] = stats.constant_column[j]
                            ? 0.0f
                            : (row.features[j] - stats.mean[j]) / stats.std_dev[j];
}

std::pair<std::vector<SampleRow>, ZScoreStats> zscore_fit_apply(std::vector<SampleRow> rows) {
  if (rows.empty()) throw std::runtime_error("zscore: empty input");
  ZScoreStats s = zscore_fit(rows);
  zscore_apply(s, rows);
  return {std::move(rows), s};
}

int window_count_for_group(int n) {
  int trimmed = kWindowLen * (n / kWindowLen);
  if (trimmed < kWindowLen) return 0;
  return (trimmed - kWindowLen) / kWindowStride + 1;
}

std::vector<TimeWindow> windowize(const std::vector<SampleRow>& rows) {
  std::vector<TimeWindow> out;
  for (const auto& ref : group_windows(rows)) out.push_back(materialize(ref, rows));
  return out;
}

DatasetSplit make_split(const std::vector<SampleRow>& rows, double train_fraction,
                        std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw std::invalid_argument("make_split: train_fraction must be in (0,1)");
  auto refs = group_windows(rows);
  if (refs.empty()) throw std::runtime_error("make_split: no windows");

  // stratified window-level split per (fault_type, zone) cell
  std::map<std::pair<int, int>, std::vector<int>> by_cell;
  for (std::size_t i = 0; i < refs.size(); ++i)
    by_cell[{refs[i].fault_type, refs[i].zone}].push_back(static_cast<int>(i));

  std::vector<int> train_refs, test_refs;
  for (auto& [key, idx] : by_cell) {
    Rng r(derive_seed(seed, "split-cell",
                      static_cast<std::uint64_t>(key.first * kNumZones + key.second)));
    r.shuffle(idx);
    auto train_n = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < train_n ? train_refs : test_refs).push_back(idx[i]);
  }

  // normalization fitted on rows covered by train windows only
  std::vector<int> train_rows;
  for (int wi : train_refs)
    for (int ri : refs[wi].row_idx) train_rows.push_back(ri);
  std::sort(train_rows.begin(), train_rows.end());
  train_rows.erase(std::unique(train_rows.begin(), train_rows.end()), train_rows.end());

  DatasetSplit split;
  split.normalization = zscore_fit(rows, &train_rows);
  std::vector<SampleRow> normalized = rows;
  zscore_apply(split.normalization, normalized);
  for (int wi : train_refs) split.train.push_back(materialize(refs[wi], normalized));
  for (int wi : test_refs) split.test.push_back(materialize(refs[wi], normalized));
  return split;
}

ScenarioPlan scenario_plan(int scenario_id) {
  ScenarioPlan plan;
  plan.scenario_id = scenario_id;
  switch (scenario_id) {
    case 1:
      plan.tasks = {{{0, 1, 2}, {}}, {{3, 4}, {}}, {{5, 6}, {}}, {{7, 8}, {}}, {{9, 10}, {}}};
      break;
    case 2:
      plan.tasks = {{{0, 1, 2}, {}}};
      for (int c = 3; c <= 10; ++c) plan.tasks.push_back({{c}, {}});
      break;
    case 3: {
      std::vector<int> all;
      for (int c = 0; c < kNumFaultTypes; ++c) all.push_back(c);
      for (int z = 0; z < kNumZones; ++z) plan.tasks.push_back({all, {z}});
      break;
    }
    case 4:
      plan.target_is_zone = true;
      plan.tasks = {{{0, 1}, {}}, {{2}, {}}, {{3}, {}}};
      break;
    default:
      throw std::invalid_argument("scenario_plan: unknown scenario " +
                                  std::to_string(scenario_id));
  }
  return plan;
}

namespace {

TaskStreams partition_windows(const std::vector<TimeWindow>& windows,
                              const ScenarioPlan& plan) {
  TaskStreams streams(plan.tasks.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const TimeWindow& w = windows[i];
    for (std::size_t t = 0; t < plan.tasks.size(); ++t) {
      const auto& task = plan.tasks[t];
      bool class_ok = std::find(task.class_set.begin(), task.class_set.end(),
                                window_label(w, plan)) != task.class_set.end();
      bool zone_ok = task.zone_filter.empty() ||
                     std::find(task.zone_filter.begin(), task.zone_filter.end(),
                               w.zone) != task.zone_filter.end();
      if (class_ok && zone_ok && task.zone_filter.empty()) {
        streams[t].push_back(static_cast<int>(i));
        break;  // class-incremental: class sets are disjoint
      }
      if (class_ok && zone_ok && !task.zone_filter.empty()) {
        streams[t].push_back(static_cast<int>(i));
        break;  // domain-incremental: zones partition the data
      }
    }
  }
  return streams;
}

}  // namespace

TaskStreams build_scenario(const DatasetSplit& split, const ScenarioPlan& plan) {
  return partition_windows(split.train, plan);
}

TaskStreams build_test_partition(const DatasetSplit& split, const ScenarioPlan& plan) {
  return partition_windows(split.test, plan);
}

// ---- CSV -------------------------------------------------------------------

std::vector<SampleRow> load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("load_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) header.push_back(cell);

  bool has_resistance = false;
  std::size_t expected = kNumFeatures + 2;
  if (header.size() == expected + 1 && header.back() == "resistance_id") {
    has_resistance = true;
  } else if (header.size() != expected) {
    throw std::runtime_error("load_csv: expected " + std::to_string(expected) +
                             " or " + std::to_string(expected + 1) + " columns, got " +
                             std::to_string(header.size()));
  }
  for (int j = 0; j < kNumFeatures; ++j)
    if (header[j] != "f" + std::to_string(j))
      throw std::runtime_error("load_csv: column " + std::to_string(j) +
                               " should be f" + std::to_string(j) + ", got " + header[j]);
  if (header[kNumFeatures] != "fault_type" || header[kNumFeatures + 1] != "zone")
    throw std::runtime_error("load_csv: missing fault_type/zone columns");

  std::vector<SampleRow> rows;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ls(line);
    SampleRow row;
    auto next_field = [&](const char* what) {
      if (!std::getline(ls, cell, ','))
        throw std::runtime_error("load_csv: row " + std::to_string(line_no) +
                                 ": missing " + what);
      return cell;
    };
    auto parse_num = [&](const std::string& s, const char* what) {
      try {
        std::size_t pos;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw std::runtime_error("load_csv: row " + std::to_string(line_no) +
                                 ": non-numeric " + what + " '" + s + "'");
      }
    };
    for (int j = 0; j < kNumFeatures; ++j)
      row.features[j] = static_cast<float>(
          parse_num(next_field("feature"), ("f" + std::to_string(j)).c_str()));
    row.fault_type = static_cast<int>(parse_num(next_field("fault_type"), "fault_type"));
    row.zone = static_cast<int>(parse_num(next_field("zone"), "zone"));
    if (has_resistance)
      row.resistance_id = static_cast<int>(parse_num(next_field("resistance_id"), "resistance_id"));
    if (row.fault_type < 0 || row.fault_type >= kNumFaultTypes)
      throw std::runtime_error("load_csv: row " + std::to_string(line_no) +
                               ": fault_type " + std::to_string(row.fault_type) +
                               " out of range 0..10");
    if (row.zone < 0 || row.zone >= kNumZones)
      throw std::runtime_error("load_csv: row " + std::to_string(line_no) + ": zone " +
                               std::to_string(row.zone) + " out of range 0..3");
    rows.push_back(row);
  }
  return rows;
}

void write_csv(const std::string& path, const std::vector<SampleRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_csv: cannot open " + path + " for write");
  for (int j = 0; j < kNumFeatures; ++j) f << 'f' << j << ',';
  f << "fault_type,zone,resistance_id\n";
  f.precision(9);
  for (const auto& row : rows) {
    for (int j = 0; j < kNumFeatures; ++j) f << row.features[j] << ',';
    f << row.fault_type << ',' << row.zone << ',' << row.resistance_id << '\n';
  }
  if (!f) throw std::runtime_error("write_csv: write failed for " + path);
}

}  // namespace gridcl
