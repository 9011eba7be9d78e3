#include "memcap/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace memcap::model {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'M', 'C', 'A', 'P', '0', '1'};
constexpr uint32_t kVersion = 1;

template <typename V>
void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw std::runtime_error("checkpoint truncated");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto n = read_pod<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint truncated");
  return s;
}

void write_config(std::ostream& os, const ModelConfig& c) {
  write_pod<int32_t>(os, c.n_layer);
  write_pod<int32_t>(os, c.d_model);
  write_pod<int32_t>(os, c.n_head);
  write_pod<int32_t>(os, c.vocab_size);
  write_pod<int32_t>(os, c.seq_len);
  write_pod<uint8_t>(os, c.tie_embeddings ? 1 : 0);
  write_pod<uint8_t>(os, c.precision == Precision::kF32 ? 0 : 1);
  write_pod<uint64_t>(os, c.seed);
}

ModelConfig read_config(std::istream& is) {
  ModelConfig c;
  c.n_layer = read_pod<int32_t>(is);
  c.d_model = read_pod<int32_t>(is);
  c.n_head = read_pod<int32_t>(is);
  c.vocab_size = read_pod<int32_t>(is);
  c.seq_len = read_pod<int32_t>(is);
  c.tie_embeddings = read_pod<uint8_t>(is) != 0;
  c.precision = read_pod<uint8_t>(is) == 0 ? Precision::kF32 : Precision::kF64;
  c.seed = read_pod<uint64_t>(is);
  return c;
}

void check_magic(std::istream& is, const std::string& path) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("'" + path + "' is not a MEMCAP01 checkpoint");
  const auto version = read_pod<uint32_t>(is);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version");
}

}  // namespace

template <typename T>
void save_checkpoint(const TransformerModel<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, kVersion);
  write_config(os, model.config());
  write_pod<uint32_t>(os, static_cast<uint32_t>(model.params().size()));
  for (const auto* p : model.params()) {
    write_string(os, p->name);
    write_pod<uint32_t>(os, static_cast<uint32_t>(p->shape.size()));
    for (int d : p->shape) write_pod<int64_t>(os, d);
  }
  for (const auto* p : model.params())
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(T)));
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

ModelConfig checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  check_magic(is, path);
  return read_config(is);
}

template <typename T>
std::unique_ptr<TransformerModel<T>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  check_magic(is, path);
  const ModelConfig config = read_config(is);
  if ((config.precision == Precision::kF32) != (sizeof(T) == 4))
    throw std::runtime_error("checkpoint precision does not match requested type");
  auto model = std::make_unique<TransformerModel<T>>(config);
  const auto n_tensors = read_pod<uint32_t>(is);
  if (n_tensors != model->params().size())
    throw std::runtime_error("checkpoint manifest size mismatch");
  for (auto* p : model->params()) {
    const std::string name = read_string(is);
    if (name != p->name)
      throw std::runtime_error("checkpoint manifest order mismatch at '" + name + "'");
    const auto ndim = read_pod<uint32_t>(is);
    if (ndim != p->shape.size()) throw std::runtime_error("checkpoint shape mismatch");
    for (int d : p->shape)
      if (read_pod<int64_t>(is) != d)
        throw std::runtime_error("checkpoint dims mismatch for '" + name + "'");
  }
  for (auto* p : model->params()) {
    is.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(T)));
    if (!is) throw std::runtime_error("checkpoint truncated in tensor '" + p->name + "'");
  }
  return model;
}

template void save_checkpoint<float>(const TransformerModel<float>&, const std::string&);
template void save_checkpoint<double>(const TransformerModel<double>&, const std::string&);
template std::unique_ptr<TransformerModel<float>> load_checkpoint<float>(const std::string&);
template std::unique_ptr<TransformerModel<double>> load_checkpoint<double>(const std::string&);

}  // namespace memcap::model
