#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridcl/data.hpp"
#include "gridcl/rng.hpp"

namespace gridcl {

inline constexpr int kDefaultBufferCapacity = 363;

enum class ReplayPolicy { Uniform, PrototypeAware };

struct ReplayEntry {
  TimeWindow window;
  int label = 0;
  std::vector<float> logits;  // head width at insertion; empty for plain ER
  int stream_index = 0;       // position in the task stream at insertion
  int inserted_task = 0;
  float sel_distance = 0.0f;  // distance at selection (prototype-aware only)
};

struct ReplayBuffer {
  int capacity = kDefaultBufferCapacity;
  ReplayPolicy policy = ReplayPolicy::Uniform;
  std::vector<ReplayEntry> entries;

  std::vector<int> class_counts() const;  // per present label, ascending labels
  std::vector<int> present_labels() const;
};

// base = floor(capacity / seen_classes); the remainder goes one slot each to
// the lowest-numbered classes. Aligned with `labels` sorted ascending.
std::vector<int> quota(int capacity, int seen_classes);

// Quotas adjusted for per-class availability: capped classes hand their
// unused slots to classes with spare candidates, ascending label order.
std::vector<int> quota_with_availability(int capacity, const std::vector<int>& avail);

struct Candidate {
  int id = 0;            // caller-side handle
  float distance = 0.0f;
  int stream_index = 0;  // tie-breaker, ascending
};

struct HybridSelection {
  std::vector<int> chosen;  // candidate ids
  int shortfall = 0;        // K - candidates when the pool is too small
};

// floor(rho*K) smallest-distance candidates plus K - floor(rho*K) largest,
// under the total order (distance, stream_index) ascending.
HybridSelection select_hybrid(std::vector<Candidate> candidates, int k, double rho);

// squared Euclidean distances of each feature row to the prototype
std::vector<float> prototype_distances(const std::vector<float>& features, int rows,
                                       const std::vector<float>& prototype);

struct MemoryAccounting {
  std::size_t entry_count = 0;
  std::size_t window_bytes = 0;     // per entry
  std::size_t label_bytes = 0;      // per entry
  std::size_t logits_bytes = 0;     // total over entries
  std::size_t buffer_bytes = 0;     // windows + labels + logits
  std::size_t prototype_bytes = 0;  // prototype_count * 300 * 4
  std::size_t total_bytes = 0;
  double total_kib = 0.0;
};

MemoryAccounting memory_bytes(const ReplayBuffer& buffer, int prototype_count);

// diagnostic dump: per-entry class, selection distance, insertion task
void dump_buffer(const ReplayBuffer& buffer, const std::string& path);

}  // namespace gridcl
