#pragma once

#include <vector>

#include "gridcl/data.hpp"
#include "gridcl/trainer.hpp"

namespace gridcl {

// Lower-triangular accuracy matrix: rows()[t][j] is accuracy on task j's test
// subset after training through task t, j <= t.
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;
};

// argmax predictions, ties broken by lowest class index
std::vector<int> predict(ModelF& model, const std::vector<const TimeWindow*>& windows,
                         int batch = 64);

// fraction of windows whose argmax logit equals the label (eval mode)
double evaluate_full(ModelF& model, const std::vector<TimeWindow>& windows,
                     const ScenarioPlan& plan);

// one matrix row after task t: accuracy on each task-j test subset, j <= t
std::vector<double> evaluate_matrix_row(ModelF& model, const DatasetSplit& split,
                                        const TaskStreams& test_partition,
                                        const ScenarioPlan& plan, int task_index);

// gap = acc_joint - acc_cl, reported as-is (may be negative)
inline double compute_gap(double acc_cl, double acc_joint) { return acc_joint - acc_cl; }

}  // namespace gridcl
