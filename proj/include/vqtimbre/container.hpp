// SPDX-License-Identifier: Apache-2.0
/**
 * @file   container.hpp
 * @brief  Versioned binary container for named tensors plus string metadata.
 *
 * Layout (all integers little-endian):
 *   "VQTC" | u32 version | u32 n_meta | n_meta x (str key, str value)
 *   | u32 n_tensors | n_tensors x (str name, u8 dtype, u32 rank, u64 dims[rank], data)
 *   | u64 FNV-1a checksum of every preceding byte
 * where str = u32 length + bytes and dtype 0 = f32, 1 = f64 (IEEE-754 LE).
 */
#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqtimbre/tensor.hpp"

namespace vqt {

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct TensorRecord {
  std::string name;
  Shape shape;
  DType dtype = DType::kF64;
  std::vector<double> values;  // f32 records are widened on load
};

struct Container {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> metadata;
  std::vector<TensorRecord> tensors;

  void add(std::string name, const Tensor& t, DType dtype = DType::kF64);
  void add(std::string name, Shape shape, std::vector<double> values,
           DType dtype = DType::kF64);
  const TensorRecord* find(const std::string& name) const;
  const TensorRecord& at(const std::string& name) const;
  std::string meta(const std::string& key) const;  // throws when missing
  std::string meta_or(const std::string& key, const std::string& fallback) const;

  std::vector<std::uint8_t> serialize() const;
  static Container deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::string& path) const;
  static Container load(const std::string& path);
};

}  // namespace vqt
