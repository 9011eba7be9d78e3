#pragma once

#include <memory>
#include <string>

#include "memcap/model.hpp"

namespace memcap::model {

// Checkpoint layout: magic "MEMCAP01", header (config fields, precision,
// tensor manifest with names and shapes), then raw little-endian arrays in
// manifest order. Round-trips are bit-exact within a precision mode.
template <typename T>
void save_checkpoint(const TransformerModel<T>& model, const std::string& path);

template <typename T>
std::unique_ptr<TransformerModel<T>> load_checkpoint(const std::string& path);

// Peeks at the stored config without loading arrays.
ModelConfig checkpoint_config(const std::string& path);

extern template void save_checkpoint<float>(const TransformerModel<float>&, const std::string&);
extern template void save_checkpoint<double>(const TransformerModel<double>&, const std::string&);
extern template std::unique_ptr<TransformerModel<float>> load_checkpoint<float>(
    const std::string&);
extern template std::unique_ptr<TransformerModel<double>> load_checkpoint<double>(
    const std::string&);

}  // namespace memcap::model
