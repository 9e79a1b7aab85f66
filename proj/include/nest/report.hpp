#pragma once

#include <vector>

namespace nest {

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;  // mean batch log-likelihood (MLE) or estimated MMD^2 (IL)
  double grad_norm = 0.0;
  double seconds = 0.0;    // wall time since the start of training
};

template <class Params>
struct TrainReport {
  std::vector<IterationRecord> records;
  Params params;
};

}  // namespace nest
