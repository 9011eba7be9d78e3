#include "memcap/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "memcap/rng.hpp"

namespace memcap::model {

namespace {
constexpr double kLn2 = 0.6931471805599453;
}

template <typename T>
TrainResult train_to_saturation(TransformerModel<T>& model, const data::TokenDataset& dataset,
                                const TrainOptions& opts) {
  const int64_t n = dataset.n_sequences();
  if (n == 0) throw std::invalid_argument("train: dataset is empty");
  if (dataset.vocab_size != model.config().vocab_size)
    throw std::invalid_argument("train: dataset vocabulary does not match model");
  if (dataset.seq_len > model.config().seq_len)
    throw std::invalid_argument("train: dataset sequences longer than model seq_len");

  const int time = dataset.seq_len;
  const int batch = static_cast<int>(std::min<int64_t>(opts.batch_size, n));
  auto tg = model.build_train_graph(batch, time, nn::Reduction::kMean);
  nn::AdamState<T> adam(model.params(), opts.adam);

  Rng rng(Rng::mix(opts.seed, 0x747261696eull));
  std::vector<int64_t> epoch_order(opts.epoch_exact ? static_cast<size_t>(n) : 0);
  if (opts.epoch_exact) std::iota(epoch_order.begin(), epoch_order.end(), int64_t{0});
  int64_t epoch_cursor = 0;

  auto next_index = [&]() -> int64_t {
    if (!opts.epoch_exact) return static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n)));
    if (epoch_cursor == 0) {
      for (int64_t i = n - 1; i > 0; --i) {
        const int64_t j = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(i + 1)));
        std::swap(epoch_order[i], epoch_order[j]);
      }
    }
    const int64_t idx = epoch_order[epoch_cursor];
    epoch_cursor = (epoch_cursor + 1) % n;
    return idx;
  };

  auto fill_batch = [&]() {
    for (int b = 0; b < batch; ++b) {
      const int64_t si = next_index();
      const int32_t* seq = dataset.tokens.data() + si * time;
      int32_t* in = tg.input_ids->data() + static_cast<size_t>(b) * time;
      int32_t* ta = tg.target_ids->data() + static_cast<size_t>(b) * time;
      in[0] = static_cast<int32_t>(model.bos_id());
      for (int t = 1; t < time; ++t) in[t] = seq[t - 1];
      for (int t = 0; t < time; ++t) ta[t] = seq[t];
    }
  };

  TrainResult result;
  const int window = std::max(1, opts.patience_window);
  double window_sum = 0.0;
  int window_count = 0;
  double prev_window_mean = std::numeric_limits<double>::infinity();
  const double log2v = std::log2(static_cast<double>(model.config().vocab_size));

  for (int64_t step = 1; step <= opts.max_steps; ++step) {
    for (auto* p : model.params()) {
      p->alloc_grad();
      p->zero_grad();
    }
    double step_loss_nats = 0.0;
    for (int micro = 0; micro < opts.grad_accum; ++micro) {
      fill_batch();
      tg.graph->forward();
      tg.graph->backward(tg.loss);
      step_loss_nats += static_cast<double>(tg.loss->value[0]);
    }
    if (opts.grad_accum > 1) {
      const T scale = T(1) / static_cast<T>(opts.grad_accum);
      for (auto* p : model.params())
        for (auto& g : p->grad) g *= scale;
      step_loss_nats /= opts.grad_accum;
    }
    adam.step(model.params());
    result.steps = step;

    window_sum += step_loss_nats / kLn2;
    ++window_count;
    if (window_count == window) {
      const double window_mean = window_sum / window;
      result.trajectory.push_back({step, window_mean});
      result.final_window_nll_bits = window_mean;
      window_sum = 0.0;
      window_count = 0;
      if (window_mean > log2v + opts.divergence_margin_bits) {
        std::ostringstream os;
        os << "training diverged: window mean " << window_mean << " bits/token at step " << step
           << " exceeds log2(V)=" << log2v << " + margin " << opts.divergence_margin_bits;
        throw TrainDivergence(os.str());
      }
      if (prev_window_mean - window_mean < opts.eps_stop_bits) {
        result.early_stopped = true;
        break;
      }
      prev_window_mean = window_mean;
    }
  }
  if (result.trajectory.empty() && window_count > 0)
    result.final_window_nll_bits = window_sum / window_count;
  return result;
}

template TrainResult train_to_saturation<float>(TransformerModel<float>&,
                                                const data::TokenDataset&, const TrainOptions&);
template TrainResult train_to_saturation<double>(TransformerModel<double>&,
                                                 const data::TokenDataset&, const TrainOptions&);

}  // namespace memcap::model
