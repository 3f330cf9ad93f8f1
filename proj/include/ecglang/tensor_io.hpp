#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>

#include "ecglang/error.hpp"

namespace ecglang::io {

using Mat = Eigen::MatrixXd;

// Named-tensor container ("TNS1"): magic, u32 tensor count, then for each
// tensor u16 name length + name bytes, u32 rows, u32 cols, and rows*cols
// float64 values, everything little-endian and row-major. Used for feature
// caches and checkpoints; the map ordering makes writes deterministic.
using TensorMap = std::map<std::string, Mat>;

void save_tensors(const TensorMap& tensors, const std::string& path);
TensorMap load_tensors(const std::string& path);

// Token-embedding table ("EMB1"): magic, u32 row count, u32 dim,
// little-endian, then rows of float32. Row i is the embedding of vocab id i.
void save_embedding_file(const Eigen::MatrixXf& table, const std::string& path);
Eigen::MatrixXf load_embedding_file(const std::string& path);

// FNV-1a over tensor bytes in map order; detects any drift in frozen
// parameters.
std::uint64_t tensor_checksum(const TensorMap& tensors);

std::string hex64(std::uint64_t v);

} // namespace ecglang::io
