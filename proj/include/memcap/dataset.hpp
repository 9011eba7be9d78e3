#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace memcap::data {

enum class Provenance { kSynthetic, kText };

struct SyntheticSpec {
  int64_t n_sequences = 1;
  int seq_len = 1;
  int vocab_size = 2;
  uint64_t seed = 0;

  void validate() const;
};

// N sequences of S tokens over a vocabulary of V ids. Synthetic datasets
// carry their exact information content N*S*log2(V).
struct TokenDataset {
  int seq_len = 0;
  int vocab_size = 0;
  std::vector<int32_t> tokens;  // row-major, n_sequences * seq_len
  Provenance provenance = Provenance::kSynthetic;
  uint64_t seed = 0;
  std::optional<double> exact_entropy_bits;

  int64_t n_sequences() const {
    return seq_len == 0 ? 0 : static_cast<int64_t>(tokens.size()) / seq_len;
  }
  std::span<const int32_t> sequence(int64_t i) const {
    return {tokens.data() + i * seq_len, static_cast<size_t>(seq_len)};
  }
  double entropy_bits() const;  // exact value when synthetic
};

// H = N*S*log2(V) bits; exact integer arithmetic when V is a power of two.
double dataset_entropy_bits(int64_t n_sequences, int seq_len, int vocab_size);

// Seeded uniform i.i.d. tokens. Exact duplicate sequences are resampled so
// the result is fully deduplicated.
TokenDataset sample_uniform(const SyntheticSpec& spec);

// Removes exact duplicate sequences, keeping first occurrences in order.
TokenDataset dedup_exact(const TokenDataset& dataset, int64_t* n_removed = nullptr);

// Seeded disjoint split into (train, test) with n_test test sequences.
std::pair<TokenDataset, TokenDataset> split(const TokenDataset& dataset, int64_t n_test,
                                            uint64_t seed);

// Mean over token occurrences of ln(n_docs / corpus_count(token)), one score
// per sequence; rare-token sequences score higher.
std::vector<double> tfidf_scores(const TokenDataset& corpus);

// Binary dataset file: fixed header plus u32 little-endian token ids.
void save_dataset(const TokenDataset& dataset, const std::string& path);
TokenDataset load_dataset(const std::string& path);

// Pre-tokenized text ingestion: raw u32 ids plus a JSON manifest holding
// n_sequences, seq_len and vocab_size.
TokenDataset load_raw_tokens(const std::string& tokens_path, const std::string& manifest_path);

std::string describe(const TokenDataset& dataset);

}  // namespace memcap::data
