#include "memcap/model.hpp"

#include <cmath>
#include <stdexcept>

#include "memcap/rng.hpp"

namespace memcap::model {

void ModelConfig::validate() const {
  if (n_layer < 1) throw std::invalid_argument("config: n_layer must be >= 1");
  if (n_head < 1) throw std::invalid_argument("config: n_head must be >= 1");
  if (d_model < 1 || d_model % n_head != 0)
    throw std::invalid_argument("config: d_model must be a positive multiple of n_head");
  if (vocab_size < 2) throw std::invalid_argument("config: vocab_size must be >= 2");
  if (seq_len < 2) throw std::invalid_argument("config: seq_len must be >= 2");
}

int64_t param_count(const ModelConfig& c) {
  const int64_t d = c.d_model;
  const int64_t per_layer = 12 * d * d + 13 * d;
  return (static_cast<int64_t>(c.vocab_size) + 1) * d + static_cast<int64_t>(c.seq_len) * d +
         c.n_layer * per_layer + 2 * d;
}

void check_tokens(std::span<const int32_t> sequence, int vocab_size, int seq_len) {
  if (sequence.empty()) throw nn::InputError("sequence is empty");
  if (static_cast<int>(sequence.size()) > seq_len)
    throw nn::InputError("sequence of length " + std::to_string(sequence.size()) +
                         " exceeds model seq_len " + std::to_string(seq_len));
  for (size_t i = 0; i < sequence.size(); ++i)
    if (sequence[i] < 0 || sequence[i] >= vocab_size)
      throw nn::InputError("token " + std::to_string(sequence[i]) + " at position " +
                           std::to_string(i) + " out of vocabulary [0," +
                           std::to_string(vocab_size) + ")");
}

template <typename T>
TransformerModel<T>::TransformerModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int d = config_.d_model;
  const int v1 = config_.vocab_size + 1;  // BOS row at index V
  make_param({v1, d}, "tok_emb");
  make_param({config_.seq_len, d}, "pos_emb");
  for (int l = 0; l < config_.n_layer; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    make_param({d}, p + "ln1_g");
    make_param({d}, p + "ln1_b");
    make_param({d, 3 * d}, p + "attn_qkv_w");
    make_param({3 * d}, p + "attn_qkv_b");
    make_param({d, d}, p + "attn_proj_w");
    make_param({d}, p + "attn_proj_b");
    make_param({d}, p + "ln2_g");
    make_param({d}, p + "ln2_b");
    make_param({d, 4 * d}, p + "mlp_fc_w");
    make_param({4 * d}, p + "mlp_fc_b");
    make_param({4 * d, d}, p + "mlp_proj_w");
    make_param({d}, p + "mlp_proj_b");
  }
  make_param({d}, "lnf_g");
  make_param({d}, "lnf_b");

  int64_t stored = 0;
  for (const auto& t : param_store_) stored += t->numel();
  if (stored != param_count(config_))
    throw std::logic_error("parameter store does not match param_count closed form");

  init_parameters(config_.seed);
}

template <typename T>
nn::TensorNode<T>* TransformerModel<T>::make_param(std::vector<int> shape,
                                                   const std::string& name) {
  param_store_.push_back(
      std::make_unique<nn::TensorNode<T>>(std::move(shape), true, name));
  param_ptrs_.push_back(param_store_.back().get());
  return param_store_.back().get();
}

template <typename T>
void TransformerModel<T>::init_parameters(uint64_t seed) {
  Rng rng(Rng::mix(seed, 0x6d656d63617030ull));
  for (auto& t : param_store_) {
    if (t->shape.size() == 1) {
      // layernorm gains start at 1, every other vector is a bias
      t->fill(t->name.ends_with("_g") ? T(1) : T(0));
    } else {
      for (auto& x : t->value) x = static_cast<T>(0.02 * rng.next_normal());
    }
  }
}

template <typename T>
nn::TensorNode<T>* TransformerModel<T>::find_param(const std::string& name) {
  for (auto* p : param_ptrs_)
    if (p->name == name) return p;
  return nullptr;
}

template <typename T>
const nn::TensorNode<T>* TransformerModel<T>::find_param(const std::string& name) const {
  for (auto* p : param_ptrs_)
    if (p->name == name) return p;
  return nullptr;
}

template <typename T>
nn::TensorNode<T>* TransformerModel<T>::build_trunk(nn::Graph<T>& g,
                                                    const std::vector<int32_t>* input_ids,
                                                    const std::vector<int32_t>* pos_ids,
                                                    int batch, int time) const {
  auto* self = const_cast<TransformerModel<T>*>(this);
  const int n = batch * time;
  auto* tok = g.lookup(self->find_param("tok_emb"), input_ids, n);
  auto* pos = g.lookup(self->find_param("pos_emb"), pos_ids, n);
  auto* h = g.add(tok, pos);
  for (int l = 0; l < config_.n_layer; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    auto* ln1 = g.layernorm(h, self->find_param(p + "ln1_g"), self->find_param(p + "ln1_b"));
    auto* qkv = g.add_bias(g.matmul(ln1, self->find_param(p + "attn_qkv_w")),
                           self->find_param(p + "attn_qkv_b"));
    auto* att = g.causal_self_attention(qkv, batch, time, config_.n_head);
    auto* proj = g.add_bias(g.matmul(att, self->find_param(p + "attn_proj_w")),
                            self->find_param(p + "attn_proj_b"));
    h = g.add(h, proj);
    auto* ln2 = g.layernorm(h, self->find_param(p + "ln2_g"), self->find_param(p + "ln2_b"));
    auto* fc = g.add_bias(g.matmul(ln2, self->find_param(p + "mlp_fc_w")),
                          self->find_param(p + "mlp_fc_b"));
    auto* act = g.gelu(fc);
    auto* mlp = g.add_bias(g.matmul(act, self->find_param(p + "mlp_proj_w")),
                           self->find_param(p + "mlp_proj_b"));
    h = g.add(h, mlp);
  }
  return g.layernorm(h, self->find_param("lnf_g"), self->find_param("lnf_b"));
}

template <typename T>
typename TransformerModel<T>::TrainGraph TransformerModel<T>::build_train_graph(
    int batch, int time, nn::Reduction reduction) const {
  if (time < 1 || time > config_.seq_len)
    throw nn::InputError("train graph time must be in [1, seq_len]");
  TrainGraph tg;
  tg.batch = batch;
  tg.time = time;
  tg.graph = std::make_unique<nn::Graph<T>>();
  tg.input_ids = std::make_unique<std::vector<int32_t>>(static_cast<size_t>(batch) * time, 0);
  tg.target_ids = std::make_unique<std::vector<int32_t>>(static_cast<size_t>(batch) * time, 0);
  tg.pos_ids = std::make_unique<std::vector<int32_t>>(static_cast<size_t>(batch) * time, 0);
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < time; ++t) (*tg.pos_ids)[static_cast<size_t>(b) * time + t] = t;
  auto* self = const_cast<TransformerModel<T>*>(this);
  auto* trunk = build_trunk(*tg.graph, tg.input_ids.get(), tg.pos_ids.get(), batch, time);
  auto* logits = tg.graph->matmul_nt(trunk, self->find_param("tok_emb"), config_.vocab_size);
  tg.loss = tg.graph->softmax_cross_entropy(logits, tg.target_ids.get(), reduction);
  return tg;
}

template <typename T>
typename TransformerModel<T>::LogitsGraph TransformerModel<T>::build_logits_graph(
    int batch, int time) const {
  if (time < 1 || time > config_.seq_len)
    throw nn::InputError("logits graph time must be in [1, seq_len]");
  LogitsGraph lg;
  lg.batch = batch;
  lg.time = time;
  lg.graph = std::make_unique<nn::Graph<T>>();
  lg.input_ids = std::make_unique<std::vector<int32_t>>(static_cast<size_t>(batch) * time, 0);
  lg.pos_ids = std::make_unique<std::vector<int32_t>>(static_cast<size_t>(batch) * time, 0);
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < time; ++t) (*lg.pos_ids)[static_cast<size_t>(b) * time + t] = t;
  auto* self = const_cast<TransformerModel<T>*>(this);
  auto* trunk = build_trunk(*lg.graph, lg.input_ids.get(), lg.pos_ids.get(), batch, time);
  lg.logits = lg.graph->matmul_nt(trunk, self->find_param("tok_emb"), config_.vocab_size);
  return lg;
}

namespace {

constexpr double kLn2 = 0.6931471805599453;

// -log2 p(target) of one logits row, accumulated in double.
template <typename T>
double row_nll_bits(const T* logits, int v, int32_t target) {
  double mx = static_cast<double>(logits[0]);
  for (int j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(logits[j]));
  double z = 0.0;
  for (int j = 0; j < v; ++j) z += std::exp(static_cast<double>(logits[j]) - mx);
  const double lse = mx + std::log(z);
  return (lse - static_cast<double>(logits[target])) / kLn2;
}

}  // namespace

template <typename T>
std::vector<double> TransformerModel<T>::forward_nll(std::span<const int32_t> sequence) const {
  check_tokens(sequence, config_.vocab_size, config_.seq_len);
  const int time = static_cast<int>(sequence.size());
  auto lg = build_logits_graph(1, time);
  (*lg.input_ids)[0] = bos_id();
  for (int t = 1; t < time; ++t) (*lg.input_ids)[t] = sequence[t - 1];
  lg.graph->forward();
  std::vector<double> bits(time);
  const int v = config_.vocab_size;
  for (int t = 0; t < time; ++t)
    bits[t] = row_nll_bits(lg.logits->value.data() + static_cast<size_t>(t) * v, v, sequence[t]);
  return bits;
}

template <typename T>
std::vector<double> TransformerModel<T>::batch_sequence_nll(std::span<const int32_t> tokens,
                                                            int time, int batch_hint) const {
  if (time < 1 || time > config_.seq_len)
    throw nn::InputError("sequence length must be in [1, seq_len]");
  if (tokens.size() % static_cast<size_t>(time) != 0)
    throw nn::InputError("token buffer is not a whole number of sequences");
  const int64_t n_seq = static_cast<int64_t>(tokens.size()) / time;
  std::vector<double> out(n_seq, 0.0);
  const int v = config_.vocab_size;

  auto run_chunk = [&](LogitsGraph& lg, int64_t first, int count) {
    for (int b = 0; b < count; ++b) {
      const int32_t* seq = tokens.data() + (first + b) * time;
      int32_t* in = lg.input_ids->data() + static_cast<size_t>(b) * time;
      in[0] = static_cast<int32_t>(bos_id());
      for (int t = 1; t < time; ++t) in[t] = seq[t - 1];
    }
    lg.graph->forward();
    for (int b = 0; b < count; ++b) {
      const int32_t* seq = tokens.data() + (first + b) * time;
      double total = 0.0;
      for (int t = 0; t < time; ++t) {
        const T* lrow =
            lg.logits->value.data() + (static_cast<size_t>(b) * time + t) * v;
        total += row_nll_bits(lrow, v, seq[t]);
      }
      out[first + b] = total;
    }
  };

  const int chunk = static_cast<int>(std::min<int64_t>(batch_hint, n_seq));
  if (chunk == 0) return out;
  auto lg = build_logits_graph(chunk, time);
  int64_t i = 0;
  for (; i + chunk <= n_seq; i += chunk) run_chunk(lg, i, chunk);
  if (i < n_seq) {
    const int rest = static_cast<int>(n_seq - i);
    auto tail = build_logits_graph(rest, time);
    run_chunk(tail, i, rest);
  }
  return out;
}

template <typename T>
std::vector<int32_t> TransformerModel<T>::greedy_decode(std::span<const int32_t> prefix,
                                                        int total_len) const {
  if (total_len > config_.seq_len || total_len <= static_cast<int>(prefix.size()))
    throw nn::InputError("greedy_decode: need prefix_len < total_len <= seq_len");
  check_tokens(prefix, config_.vocab_size, config_.seq_len);
  auto lg = build_logits_graph(1, total_len);
  std::vector<int32_t> seq(prefix.begin(), prefix.end());
  seq.resize(total_len, 0);
  const int v = config_.vocab_size;
  for (int t = static_cast<int>(prefix.size()); t < total_len; ++t) {
    (*lg.input_ids)[0] = bos_id();
    for (int j = 1; j < total_len; ++j)
      (*lg.input_ids)[j] = j - 1 < t ? seq[j - 1] : 0;
    lg.graph->forward();
    const T* row = lg.logits->value.data() + static_cast<size_t>(t) * v;
    int best = 0;
    for (int j = 1; j < v; ++j)
      if (row[j] > row[best]) best = j;
    seq[t] = best;
  }
  return seq;
}

template class TransformerModel<float>;
template class TransformerModel<double>;

}  // namespace memcap::model
