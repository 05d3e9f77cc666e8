/*
 * Copyright 2026 The stainvar Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Versioned tensor container shared by every training stage.
//
// Layout (little-endian):
//   "SVCK" | version u32 | metadata_len u32 | metadata JSON | metadata crc32 |
//   tensor_count u32 | per tensor:
//     name_len u16 | name | ndim u8 | dims u32 x ndim | float32 payload |
//     crc32 over name, dims and payload bytes

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

namespace stainvar {

inline constexpr std::uint32_t kCheckpointVersion = 2;

class Checkpoint {
 public:
  nlohmann::json metadata = nlohmann::json::object();

  // Stores a float32 copy.
  void put(const std::string& name, const torch::Tensor& tensor);
  bool has(const std::string& name) const { return tensors_.count(name) != 0; }
  // Throws FormatError(kMalformed) when absent.
  const torch::Tensor& get(const std::string& name) const;
  const std::map<std::string, torch::Tensor>& tensors() const noexcept { return tensors_; }

  // Every parameter and buffer of `module`, keyed "<prefix>.<name>".
  void put_module(const std::string& prefix, const torch::nn::Module& module);
  // Copies stored values back; throws FormatError on missing names or shape
  // disagreement.
  void load_module(const std::string& prefix, torch::nn::Module& module) const;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);

 private:
  std::map<std::string, torch::Tensor> tensors_;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
// Throws FormatError: kBadMagic, kUnsupportedVersion, kTruncated,
// kChecksumMismatch, kTrailingBytes, kMalformed.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Throws MissingPrerequisiteError when the file does not exist.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

// SHA-256 over the float32 little-endian bytes of every named parameter and
// buffer, in registration order. Identifies frozen weights across stages.
std::string module_digest(const torch::nn::Module& module);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace stainvar
