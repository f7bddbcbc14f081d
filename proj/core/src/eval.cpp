#include "gridcl/eval.hpp"

#include <algorithm>
#include <stdexcept>

namespace gridcl {

std::vector<int> predict(ModelF& model, const std::vector<const TimeWindow*>& windows,
                         int batch) {
  std::vector<int> preds;
  preds.reserve(windows.size());
  bool was_train = model.train_mode();
  model.set_train_mode(false);
  for (std::size_t i = 0; i < windows.size(); i += batch) {
    std::vector<const TimeWindow*> chunk(
        windows.begin() + i, windows.begin() + std::min(windows.size(), i + batch));
    Tensor<float> logits = model.forward(nullptr, make_batch(chunk), nullptr).logits;
    int c = logits.cols();
    for (int r = 0; r < logits.rows(); ++r) {
      const float* row = logits.data() + static_cast<std::size_t>(r) * c;
      int best = 0;
      for (int j = 1; j < c; ++j)
        if (row[j] > row[best]) best = j;  // ties keep the lowest index
      preds.push_back(best);
    }
  }
  model.set_train_mode(was_train);
  return preds;
}

double evaluate_full(ModelF& model, const std::vector<TimeWindow>& windows,
                     const ScenarioPlan& plan) {
  if (windows.empty()) throw std::runtime_error("evaluate_full: empty test set");
  std::vector<const TimeWindow*> ptrs;
  for (const auto& w : windows) {
    if (window_label(w, plan) >= model.classes())
      throw std::runtime_error("evaluate_full: label " +
                               std::to_string(window_label(w, plan)) +
                               " not covered by head of size " +
                               std::to_string(model.classes()));
    ptrs.push_back(&w);
  }
  std::vector<int> preds = predict(model, ptrs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < windows.size(); ++i)
    if (preds[i] == window_label(windows[i], plan)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(windows.size());
}

std::vector<double> evaluate_matrix_row(ModelF& model, const DatasetSplit& split,
                                        const TaskStreams& test_partition,
                                        const ScenarioPlan& plan, int task_index) {
  std::vector<double> row;
  for (int j = 0; j <= task_index; ++j) {
    const auto& subset = test_partition[j];
    if (subset.empty()) {
      row.push_back(0.0);
      continue;
    }
    std::vector<const TimeWindow*> ptrs;
    for (int i : subset) ptrs.push_back(&split.test[i]);
    std::vector<int> preds = predict(model, ptrs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ptrs.size(); ++i)
      if (preds[i] == window_label(*ptrs[i], plan)) ++correct;
    row.push_back(static_cast<double>(correct) / static_cast<double>(ptrs.size()));
  }
  return row;
}

}  // namespace gridcl
