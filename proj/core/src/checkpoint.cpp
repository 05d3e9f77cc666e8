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

#include "stainvar/checkpoint.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "stainvar/error.hpp"

namespace stainvar {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'C', 'K'};

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  for (int b = 0; b < 2; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void append_floats(std::vector<std::uint8_t>& out, const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous().cpu();
  const auto* p = c.data_ptr<float>();
  for (int64_t i = 0; i < c.numel(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, p + i, 4);
    put_u32(out, bits);
  }
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw FormatError(FormatErrorKind::kTruncated, std::string("checkpoint ends inside ") + what);
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(std::size_t width, const char* what) {
    auto s = take(width, what);
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < width; ++b) v |= static_cast<std::uint64_t>(s[b]) << (8 * b);
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(const std::string& name, const torch::Tensor& tensor) {
  tensors_[name] = tensor.detach().to(torch::kFloat32).contiguous().clone();
}

const torch::Tensor& Checkpoint::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    throw FormatError(FormatErrorKind::kMalformed, "checkpoint has no tensor '" + name + "'");
  }
  return it->second;
}

void Checkpoint::put_module(const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    put(prefix + "." + item.key(), item.value());
  }
  for (const auto& item : module.named_buffers(/*recurse=*/true)) {
    put(prefix + "." + item.key(), item.value());
  }
}

void Checkpoint::load_module(const std::string& prefix, torch::nn::Module& module) const {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& key, torch::Tensor& target) {
    const auto& src = get(prefix + "." + key);
    if (src.sizes() != target.sizes()) {
      throw FormatError(FormatErrorKind::kMalformed, "shape mismatch for '" + prefix + "." + key + "'");
    }
    target.copy_(src.to(target.scalar_type()));
  };
  for (auto& item : module.named_parameters(true)) assign(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) assign(item.key(), item.value());
}

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  if (a.metadata != b.metadata || a.tensors_.size() != b.tensors_.size()) return false;
  for (const auto& [name, t] : a.tensors_) {
    auto it = b.tensors_.find(name);
    if (it == b.tensors_.end() || !t.sizes().equals(it->second.sizes()) ||
        !torch::equal(t, it->second)) {
      return false;
    }
  }
  return true;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  const std::string meta = checkpoint.metadata.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put_u32(out, crc_of({reinterpret_cast<const std::uint8_t*>(meta.data()), meta.size()}));
  put_u32(out, static_cast<std::uint32_t>(checkpoint.tensors().size()));
  for (const auto& [name, t] : checkpoint.tensors()) {
    const std::size_t start = out.size();
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u8(out, static_cast<std::uint8_t>(t.dim()));
    for (int64_t d = 0; d < t.dim(); ++d) put_u32(out, static_cast<std::uint32_t>(t.size(d)));
    append_floats(out, t);
    const auto crc = crc_of({out.data() + start, out.size() - start});
    put_u32(out, crc);
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "not a stainvar checkpoint");
  }
  const auto version = in.uint(4, "version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::kUnsupportedVersion,
                      "checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  const auto meta_len = in.uint(4, "metadata length");
  auto meta = in.take(meta_len, "metadata");
  if (crc_of(meta) != in.uint(4, "metadata checksum")) {
    throw FormatError(FormatErrorKind::kChecksumMismatch, "metadata block");
  }
  try {
    ck.metadata = nlohmann::json::parse(meta.begin(), meta.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformed, std::string("metadata: ") + e.what());
  }
  const auto count = in.uint(4, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t start = in.pos();
    const auto name_len = in.uint(2, "tensor name length");
    auto name_bytes = in.take(name_len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto ndim = in.uint(1, "tensor rank");
    std::vector<int64_t> shape;
    std::uint64_t numel = 1;
    for (std::uint64_t d = 0; d < ndim; ++d) {
      shape.push_back(static_cast<int64_t>(in.uint(4, "tensor dims")));
      numel *= static_cast<std::uint64_t>(shape.back());
    }
    auto payload = in.take(numel * 4, "tensor payload");
    const std::size_t end = in.pos();
    if (crc_of(bytes.subspan(start, end - start)) != in.uint(4, "tensor checksum")) {
      throw FormatError(FormatErrorKind::kChecksumMismatch, "tensor '" + name + "'");
    }
    auto t = torch::empty(shape, torch::kFloat32);
    auto* dst = t.data_ptr<float>();
    for (std::uint64_t j = 0; j < numel; ++j) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[4 * j + b]) << (8 * b);
      std::memcpy(dst + j, &bits, 4);
    }
    ck.put(name, t);
  }
  if (in.remaining() != 0) {
    throw FormatError(FormatErrorKind::kTrailingBytes, "data after the last tensor");
  }
  return ck;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingPrerequisiteError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("short write to " + path.string());
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingPrerequisiteError("missing checkpoint " + path.string());
  }
  return decode_checkpoint(read_file_bytes(path));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string module_digest(const torch::nn::Module& module) {
  std::vector<std::uint8_t> bytes;
  for (const auto& item : module.named_parameters(true)) {
    bytes.insert(bytes.end(), item.key().begin(), item.key().end());
    append_floats(bytes, item.value());
  }
  for (const auto& item : module.named_buffers(true)) {
    bytes.insert(bytes.end(), item.key().begin(), item.key().end());
    append_floats(bytes, item.value());
  }
  return sha256_hex(bytes);
}

}  // namespace stainvar
