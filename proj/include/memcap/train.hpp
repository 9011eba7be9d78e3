#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "memcap/adam.hpp"
#include "memcap/dataset.hpp"
#include "memcap/model.hpp"

namespace memcap::model {

class TrainDivergence : public std::runtime_error {
 public:
  explicit TrainDivergence(const std::string& what) : std::runtime_error(what) {}
};

struct TrainOptions {
  int batch_size = 64;
  int64_t max_steps = 20000;
  nn::AdamOptions adam;           // lr 1e-3, betas 0.9/0.999, constant schedule
  int grad_accum = 1;             // micro-batches per optimizer step
  bool epoch_exact = false;       // shuffled epochs instead of sampling with replacement
  double eps_stop_bits = 1e-3;    // windowed improvement threshold, bits/token
  int patience_window = 2000;     // steps per early-stop window
  double divergence_margin_bits = 2.0;
  uint64_t seed = 1;
};

struct TrajectoryPoint {
  int64_t step;
  double window_nll_bits;  // mean train nll over the trailing window, bits/token
};

struct TrainResult {
  int64_t steps = 0;
  bool early_stopped = false;
  double final_window_nll_bits = 0.0;
  std::vector<TrajectoryPoint> trajectory;
};

// Trains until max_steps or until the windowed mean train nll stops
// improving by eps_stop_bits. A window that sits above log2(V) by the
// divergence margin aborts the run.
template <typename T>
TrainResult train_to_saturation(TransformerModel<T>& model, const data::TokenDataset& dataset,
                                const TrainOptions& opts);

extern template TrainResult train_to_saturation<float>(TransformerModel<float>&,
                                                       const data::TokenDataset&,
                                                       const TrainOptions&);
extern template TrainResult train_to_saturation<double>(TransformerModel<double>&,
                                                        const data::TokenDataset&,
                                                        const TrainOptions&);

}  // namespace memcap::model
