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

#include <cstring>

#include "stainvar/error.hpp"
#include "stainvar/rvq.hpp"

namespace stainvar {

namespace {

constexpr char kMagic[4] = {'R', 'V', 'Q', 'P'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(FormatErrorKind::kTruncated,
                        std::string("stream ends inside ") + what + " at byte " +
                            std::to_string(pos_));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 8;
    return v;
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_pyramid(const TokenPyramid& pyramid) {
  const auto& schedule = pyramid.schedule();
  if (schedule.size() < 1 || schedule.size() > 255) {
    throw InvalidArgument("pyramid depth must be in [1,255] to serialize");
  }
  if (pyramid.max_index() > 0xFFFF) {
    throw InvalidArgument("token index does not fit in u16 storage");
  }
  std::vector<std::uint8_t> out;
  out.reserve(4 + 2 + 4 * schedule.size() + 8 + 2 * schedule.total_cells());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kPyramidFormatVersion);
  out.push_back(static_cast<std::uint8_t>(schedule.size()));
  for (const auto& e : schedule.scales()) {
    if (e.h < 1 || e.w < 1 || e.h > 0xFFFF || e.w > 0xFFFF) {
      throw InvalidArgument("scale extent does not fit in u16 storage");
    }
    put_u16(out, static_cast<std::uint16_t>(e.h));
    put_u16(out, static_cast<std::uint16_t>(e.w));
  }
  put_u64(out, pyramid.codebook_hash());
  for (const auto& g : pyramid.grids()) {
    for (auto idx : g.indices) put_u16(out, static_cast<std::uint16_t>(idx));
  }
  return out;
}

TokenPyramid deserialize_pyramid(std::span<const std::uint8_t> bytes,
                                 std::optional<int> vocab_size) {
  Reader in(bytes);
  in.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "expected \"RVQP\"");
  }
  for (int i = 0; i < 4; ++i) in.u8("magic");
  const auto version = in.u8("version");
  if (version != kPyramidFormatVersion) {
    throw FormatError(FormatErrorKind::kUnsupportedVersion,
                      "pyramid format version " + std::to_string(version));
  }
  const auto depth = in.u8("scale count");
  if (depth == 0) throw FormatError(FormatErrorKind::kInvalidSchedule, "zero scales");
  std::vector<Extent> scales;
  for (int k = 0; k < depth; ++k) {
    const int h = in.u16("scale header");
    const int w = in.u16("scale header");
    if (h == 0 || w == 0) {
      throw FormatError(FormatErrorKind::kInvalidSchedule,
                        "scale " + std::to_string(k + 1) + " is empty");
    }
    scales.push_back({h, w});
  }
  const auto hash = in.u64("codebook hash");
  std::vector<IndexGrid> grids;
  for (const auto& e : scales) {
    IndexGrid g{e.h, e.w, {}};
    const std::size_t n = static_cast<std::size_t>(e.h) * e.w;
    in.need(2 * n, "token payload");
    g.indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int idx = in.u16("token payload");
      if (vocab_size && idx >= *vocab_size) {
        throw FormatError(FormatErrorKind::kIndexOutOfRange,
                          "token " + std::to_string(idx) + " >= vocabulary size " +
                              std::to_string(*vocab_size));
      }
      g.indices[i] = idx;
    }
    grids.push_back(std::move(g));
  }
  if (in.remaining() != 0) {
    throw FormatError(FormatErrorKind::kTrailingBytes,
                      std::to_string(in.remaining()) + " bytes after the last scale");
  }
  return TokenPyramid(ScaleSchedule(std::move(scales)), std::move(grids), hash);
}

}  // namespace stainvar
