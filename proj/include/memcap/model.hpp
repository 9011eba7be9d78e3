#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "memcap/tensor.hpp"

namespace memcap::model {

enum class Precision { kF32, kF64 };

struct ModelConfig {
  int n_layer = 1;
  int d_model = 32;
  int n_head = 2;
  int vocab_size = 256;  // data vocabulary; a BOS slot is added internally
  int seq_len = 16;
  bool tie_embeddings = true;
  Precision precision = Precision::kF32;
  uint64_t seed = 0;

  void validate() const;
};

// Exact number of stored scalars:
//   (V+1)*d   token embedding incl. the internal BOS row (output head tied)
//   S*d       learned positional embedding
//   per layer 12*d^2 + 13*d   (ln1, qkv, attn proj, ln2, mlp in/out)
//   2*d       final layernorm
int64_t param_count(const ModelConfig& config);

// GPT-2 style decoder-only model. Sequences are scored by prepending a
// reserved BOS token (vocabulary slot V), so position t of the logits
// predicts token t of the sequence for all t including the first.
template <typename T>
class TransformerModel {
 public:
  explicit TransformerModel(const ModelConfig& config);
  TransformerModel(const TransformerModel&) = delete;
  TransformerModel& operator=(const TransformerModel&) = delete;
  TransformerModel(TransformerModel&&) = default;

  const ModelConfig& config() const { return config_; }
  const std::vector<nn::TensorNode<T>*>& params() const { return param_ptrs_; }
  int bos_id() const { return config_.vocab_size; }

  // Training graph over `batch` sequences of `time` tokens. Fill `input_ids`
  // (BOS-shifted) and `target_ids` through the returned handles, then run
  // graph.forward()/backward(loss).
  struct TrainGraph {
    std::unique_ptr<nn::Graph<T>> graph;
    std::unique_ptr<std::vector<int32_t>> input_ids;
    std::unique_ptr<std::vector<int32_t>> target_ids;
    std::unique_ptr<std::vector<int32_t>> pos_ids;
    nn::TensorNode<T>* loss = nullptr;
    int batch = 0;
    int time = 0;
  };
  TrainGraph build_train_graph(int batch, int time, nn::Reduction reduction) const;

  struct LogitsGraph {
    std::unique_ptr<nn::Graph<T>> graph;
    std::unique_ptr<std::vector<int32_t>> input_ids;
    std::unique_ptr<std::vector<int32_t>> pos_ids;
    nn::TensorNode<T>* logits = nullptr;  // [batch*time, V]
    int batch = 0;
    int time = 0;
  };
  LogitsGraph build_logits_graph(int batch, int time) const;

  // Per-token code lengths -log2 p(x_t | x_<t) in bits. T <= seq_len.
  std::vector<double> forward_nll(std::span<const int32_t> sequence) const;

  // Per-sequence total NLL in bits over `n` sequences of `time` tokens laid
  // out contiguously. Batched; used by measurement sweeps.
  std::vector<double> batch_sequence_nll(std::span<const int32_t> tokens, int time,
                                         int batch_hint = 64) const;

  // Greedy continuation of `prefix` to `total_len` tokens; ties broken
  // toward the lowest token id.
  std::vector<int32_t> greedy_decode(std::span<const int32_t> prefix, int total_len) const;

  void init_parameters(uint64_t seed);

  nn::TensorNode<T>* find_param(const std::string& name);
  const nn::TensorNode<T>* find_param(const std::string& name) const;

 private:
  nn::TensorNode<T>* make_param(std::vector<int> shape, const std::string& name);
  nn::TensorNode<T>* build_trunk(nn::Graph<T>& g, const std::vector<int32_t>* input_ids,
                                 const std::vector<int32_t>* pos_ids, int batch, int time) const;

  ModelConfig config_;
  std::vector<std::unique_ptr<nn::TensorNode<T>>> param_store_;
  std::vector<nn::TensorNode<T>*> param_ptrs_;
};

// Validates sequence tokens against the data vocabulary.
void check_tokens(std::span<const int32_t> sequence, int vocab_size, int seq_len);

extern template class TransformerModel<float>;
extern template class TransformerModel<double>;

}  // namespace memcap::model
