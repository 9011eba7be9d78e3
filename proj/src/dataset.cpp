#include "memcap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "memcap/rng.hpp"

namespace memcap::data {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'D', 'A', 'T', 'A', '0', '1'};

struct SeqHash {
  size_t operator()(const std::vector<int32_t>& s) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (int32_t t : s) {
      h ^= static_cast<uint32_t>(t);
      h *= 0x100000001b3ull;
    }
    return static_cast<size_t>(h);
  }
};

template <typename V>
void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw std::runtime_error("dataset file truncated");
  return v;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_sequences < 1) throw std::invalid_argument("spec: n_sequences must be >= 1");
  if (seq_len < 1) throw std::invalid_argument("spec: seq_len must be >= 1");
  if (vocab_size < 2) throw std::invalid_argument("spec: vocab_size must be >= 2");
}

double dataset_entropy_bits(int64_t n_sequences, int seq_len, int vocab_size) {
  const int64_t ns = n_sequences * static_cast<int64_t>(seq_len);
  // powers of two stay in integer arithmetic so e.g. 16384*64*11 is exact
  if ((vocab_size & (vocab_size - 1)) == 0) {
    int log2v = 0;
    for (int v = vocab_size; v > 1; v >>= 1) ++log2v;
    return static_cast<double>(ns * log2v);
  }
  return static_cast<double>(ns) * std::log2(static_cast<double>(vocab_size));
}

double TokenDataset::entropy_bits() const {
  if (exact_entropy_bits) return *exact_entropy_bits;
  return dataset_entropy_bits(n_sequences(), seq_len, vocab_size);
}

TokenDataset sample_uniform(const SyntheticSpec& spec) {
  spec.validate();
  const double log2_space = static_cast<double>(spec.seq_len) * std::log2(spec.vocab_size);
  if (log2_space < 62.0 && static_cast<double>(spec.n_sequences) > std::exp2(log2_space))
    throw std::invalid_argument("spec: more distinct sequences requested than V^S allows");

  Rng rng(spec.seed);
  TokenDataset ds;
  ds.seq_len = spec.seq_len;
  ds.vocab_size = spec.vocab_size;
  ds.provenance = Provenance::kSynthetic;
  ds.seed = spec.seed;
  ds.tokens.reserve(static_cast<size_t>(spec.n_sequences) * spec.seq_len);

  std::unordered_set<std::vector<int32_t>, SeqHash> seen;
  seen.reserve(static_cast<size_t>(spec.n_sequences) * 2);
  std::vector<int32_t> seq(spec.seq_len);
  for (int64_t i = 0; i < spec.n_sequences;) {
    for (int t = 0; t < spec.seq_len; ++t)
      seq[t] = static_cast<int32_t>(rng.next_below(static_cast<uint64_t>(spec.vocab_size)));
    if (!seen.insert(seq).second) continue;  // collision: resample
    ds.tokens.insert(ds.tokens.end(), seq.begin(), seq.end());
    ++i;
  }
  ds.exact_entropy_bits = dataset_entropy_bits(spec.n_sequences, spec.seq_len, spec.vocab_size);
  return ds;
}

TokenDataset dedup_exact(const TokenDataset& dataset, int64_t* n_removed) {
  TokenDataset out;
  out.seq_len = dataset.seq_len;
  out.vocab_size = dataset.vocab_size;
  out.provenance = dataset.provenance;
  out.seed = dataset.seed;
  std::unordered_set<std::vector<int32_t>, SeqHash> seen;
  const int64_t n = dataset.n_sequences();
  seen.reserve(static_cast<size_t>(n) * 2);
  int64_t removed = 0;
  std::vector<int32_t> seq(dataset.seq_len);
  for (int64_t i = 0; i < n; ++i) {
    auto s = dataset.sequence(i);
    seq.assign(s.begin(), s.end());
    if (seen.insert(seq).second) {
      out.tokens.insert(out.tokens.end(), s.begin(), s.end());
    } else {
      ++removed;
    }
  }
  if (n_removed) *n_removed = removed;
  if (out.n_sequences() == dataset.n_sequences() && dataset.exact_entropy_bits)
    out.exact_entropy_bits = dataset.exact_entropy_bits;
  else if (dataset.exact_entropy_bits)
    out.exact_entropy_bits =
        dataset_entropy_bits(out.n_sequences(), out.seq_len, out.vocab_size);
  return out;
}

std::pair<TokenDataset, TokenDataset> split(const TokenDataset& dataset, int64_t n_test,
                                            uint64_t seed) {
  const int64_t n = dataset.n_sequences();
  if (n_test < 0 || n_test >= n)
    throw std::invalid_argument("split: n_test must be in [0, n_sequences)");
  std::vector<int64_t> order(n);
  for (int64_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::mix(seed, 0x73706c6974ull));
  for (int64_t i = 0; i < n_test; ++i) {
    const int64_t j = i + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n - i)));
    std::swap(order[i], order[j]);
  }
  std::vector<bool> is_test(n, false);
  for (int64_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

  auto make_part = [&](bool test_part) {
    TokenDataset part;
    part.seq_len = dataset.seq_len;
    part.vocab_size = dataset.vocab_size;
    part.provenance = dataset.provenance;
    part.seed = dataset.seed;
    for (int64_t i = 0; i < n; ++i) {
      if (is_test[i] != test_part) continue;
      auto s = dataset.sequence(i);
      part.tokens.insert(part.tokens.end(), s.begin(), s.end());
    }
    if (dataset.exact_entropy_bits)
      part.exact_entropy_bits =
          dataset_entropy_bits(part.n_sequences(), part.seq_len, part.vocab_size);
    return part;
  };
  return {make_part(false), make_part(true)};
}

std::vector<double> tfidf_scores(const TokenDataset& corpus) {
  const int64_t n_docs = corpus.n_sequences();
  if (n_docs == 0) throw std::invalid_argument("tfidf: corpus is empty");
  std::vector<int64_t> tf(corpus.vocab_size, 0);
  for (int32_t t : corpus.tokens) ++tf[t];
  std::vector<double> scores(n_docs, 0.0);
  const double nd = static_cast<double>(n_docs);
  for (int64_t i = 0; i < n_docs; ++i) {
    double s = 0.0;
    for (int32_t t : corpus.sequence(i)) s += std::log(nd / static_cast<double>(tf[t]));
    scores[i] = s / static_cast<double>(corpus.seq_len);
  }
  return scores;
}

void save_dataset(const TokenDataset& dataset, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, 1);  // version
  write_pod<int64_t>(os, dataset.n_sequences());
  write_pod<int32_t>(os, dataset.seq_len);
  write_pod<int32_t>(os, dataset.vocab_size);
  write_pod<uint8_t>(os, dataset.provenance == Provenance::kSynthetic ? 0 : 1);
  write_pod<uint64_t>(os, dataset.seed);
  write_pod<uint8_t>(os, dataset.exact_entropy_bits ? 1 : 0);
  write_pod<double>(os, dataset.exact_entropy_bits.value_or(0.0));
  os.write(reinterpret_cast<const char*>(dataset.tokens.data()),
           static_cast<std::streamsize>(dataset.tokens.size() * sizeof(int32_t)));
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

TokenDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("'" + path + "' is not a dataset file");
  const auto version = read_pod<uint32_t>(is);
  if (version != 1) throw std::runtime_error("unsupported dataset version");
  TokenDataset ds;
  const auto n = read_pod<int64_t>(is);
  ds.seq_len = read_pod<int32_t>(is);
  ds.vocab_size = read_pod<int32_t>(is);
  ds.provenance = read_pod<uint8_t>(is) == 0 ? Provenance::kSynthetic : Provenance::kText;
  ds.seed = read_pod<uint64_t>(is);
  const bool has_entropy = read_pod<uint8_t>(is) != 0;
  const double entropy = read_pod<double>(is);
  if (has_entropy) ds.exact_entropy_bits = entropy;
  ds.tokens.resize(static_cast<size_t>(n) * ds.seq_len);
  is.read(reinterpret_cast<char*>(ds.tokens.data()),
          static_cast<std::streamsize>(ds.tokens.size() * sizeof(int32_t)));
  if (!is) throw std::runtime_error("dataset file truncated");
  return ds;
}

TokenDataset load_raw_tokens(const std::string& tokens_path, const std::string& manifest_path) {
  std::ifstream ms(manifest_path);
  if (!ms) throw std::runtime_error("cannot open manifest '" + manifest_path + "'");
  nlohmann::json manifest = nlohmann::json::parse(ms);
  TokenDataset ds;
  const int64_t n = manifest.at("n_sequences").get<int64_t>();
  ds.seq_len = manifest.at("seq_len").get<int>();
  ds.vocab_size = manifest.at("vocab_size").get<int>();
  ds.provenance = Provenance::kText;
  ds.seed = manifest.value("seed", 0ull);
  std::ifstream ts(tokens_path, std::ios::binary);
  if (!ts) throw std::runtime_error("cannot open tokens '" + tokens_path + "'");
  ds.tokens.resize(static_cast<size_t>(n) * ds.seq_len);
  ts.read(reinterpret_cast<char*>(ds.tokens.data()),
          static_cast<std::streamsize>(ds.tokens.size() * sizeof(int32_t)));
  if (!ts) throw std::runtime_error("token file shorter than manifest claims");
  for (size_t i = 0; i < ds.tokens.size(); ++i)
    if (ds.tokens[i] < 0 || ds.tokens[i] >= ds.vocab_size)
      throw std::runtime_error("token id " + std::to_string(ds.tokens[i]) + " at offset " +
                               std::to_string(i) + " outside vocabulary");
  return ds;
}

std::string describe(const TokenDataset& dataset) {
  std::ostringstream os;
  os << "sequences: " << dataset.n_sequences() << "\n"
     << "seq_len: " << dataset.seq_len << "\n"
     << "vocab_size: " << dataset.vocab_size << "\n"
     << "provenance: " << (dataset.provenance == Provenance::kSynthetic ? "synthetic" : "text")
     << "\n"
     << "seed: " << dataset.seed << "\n";
  if (dataset.exact_entropy_bits)
    os << "exact_entropy_bits: " << *dataset.exact_entropy_bits << "\n";
  return os.str();
}

}  // namespace memcap::data
