#include "gridcl/replay.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace gridcl {

std::vector<int> ReplayBuffer::present_labels() const {
  std::vector<int> labels;
  for (const auto& e : entries) labels.push_back(e.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

std::vector<int> ReplayBuffer::class_counts() const {
  std::map<int, int> counts;
  for (const auto& e : entries) counts[e.label]++;
  std::vector<int> out;
  for (auto& [label, n] : counts) out.push_back(n);
  return out;
}

std::vector<int> quota(int capacity, int seen_classes) {
  if (seen_classes < 1) throw std::invalid_argument("quota: seen_classes must be >= 1");
  std::vector<int> q(seen_classes, capacity / seen_classes);
  int remainder = capacity % seen_classes;
  for (int i = 0; i < remainder; ++i) q[i] += 1;
  return q;
}

std::vector<int> quota_with_availability(int capacity, const std::vector<int>& avail) {
  std::vector<int> target = quota(capacity, static_cast<int>(avail.size()));
  for (;;) {
    int overflow = 0;
    for (std::size_t i = 0; i < target.size(); ++i)
      if (target[i] > avail[i]) {
        overflow += target[i] - avail[i];
        target[i] = avail[i];
      }
    if (overflow == 0) break;
    bool placed = false;
    while (overflow > 0) {
      bool any = false;
      for (std::size_t i = 0; i < target.size() && overflow > 0; ++i)
        if (target[i] < avail[i]) {
          target[i] += 1;
          --overflow;
          any = true;
          placed = true;
        }
      if (!any) break;  // everything is saturated; buffer stays short
    }
    if (!placed || overflow > 0) break;
  }
  return target;
}

HybridSelection select_hybrid(std::vector<Candidate> candidates, int k, double rho) {
  if (k < 0) throw std::invalid_argument("select_hybrid: negative K");
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("select_hybrid: rho outside [0,1]");
  HybridSelection sel;
  int n = static_cast<int>(candidates.size());
  if (n <= k) {
    for (const auto& c : candidates) sel.chosen.push_back(c.id);
    sel.shortfall = k - n;
    return sel;
  }
  // total order: distance, then stream index, then id
  auto less = [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.stream_index != b.stream_index) return a.stream_index < b.stream_index;
    return a.id < b.id;
  };
  int near = static_cast<int>(std::floor(rho * k));
  int far = k - near;
  // two partial selections rather than a full sort
  if (near > 0)
    std::nth_element(candidates.begin(), candidates.begin() + (near - 1),
                     candidates.end(), less);
  for (int i = 0; i < near; ++i) sel.chosen.push_back(candidates[i].id);
  if (far > 0) {
    auto first_far = candidates.begin() + near;
    std::nth_element(first_far, candidates.end() - far, candidates.end(), less);
    for (auto it = candidates.end() - far; it != candidates.end(); ++it)
      sel.chosen.push_back(it->id);
  }
  return sel;
}

std::vector<float> prototype_distances(const std::vector<float>& features, int rows,
                                       const std::vector<float>& prototype) {
  if (rows <= 0 || features.size() % rows != 0)
    throw std::invalid_argument("prototype_distances: bad row count");
  std::size_t dim = features.size() / rows;
  if (dim != prototype.size())
    throw std::invalid_argument("prototype_distances: feature dim " + std::to_string(dim) +
                                " vs prototype dim " + std::to_string(prototype.size()));
  std::vector<float> out(rows);
  for (int i = 0; i < rows; ++i) {
    float s = 0.0f;
    const float* f = features.data() + static_cast<std::size_t>(i) * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      float d = f[j] - prototype[j];
      s += d * d;
    }
    out[i] = s;
  }
  return out;
}

MemoryAccounting memory_bytes(const ReplayBuffer& buffer, int prototype_count) {
  MemoryAccounting m;
  m.entry_count = buffer.entries.size();
  m.window_bytes = static_cast<std::size_t>(kWindowLen) * kNumFeatures * 4;  // float32
  m.label_bytes = 8;                                                        // int64
  for (const auto& e : buffer.entries) m.logits_bytes += e.logits.size() * 4;
  m.buffer_bytes = m.entry_count * (m.window_bytes + m.label_bytes) + m.logits_bytes;
  m.prototype_bytes = static_cast<std::size_t>(prototype_count) * 300 * 4;
  m.total_bytes = m.buffer_bytes + m.prototype_bytes;
  m.total_kib = static_cast<double>(m.total_bytes) / 1024.0;
  return m;
}

void dump_buffer(const ReplayBuffer& buffer, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("dump_buffer: cannot open " + path + " for write");
  f << "index,label,sel_distance,inserted_task\n";
  for (std::size_t i = 0; i < buffer.entries.size(); ++i) {
    const auto& e = buffer.entries[i];
    f << i << ',' << e.label << ',' << e.sel_distance << ',' << e.inserted_task << '\n';
  }
}

}  // namespace gridcl
