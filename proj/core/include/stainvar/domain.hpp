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

// Shared value types. Everything here is immutable once constructed and
// carries no torch dependency; the network code converts through
// tensor_bridge.hpp.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stainvar {

struct Extent {
  int h = 0;
  int w = 0;

  friend bool operator==(const Extent&, const Extent&) = default;
};

// 3-channel raster in [0,1], channel-major (all of R, then G, then B), each
// plane row-major.
class Image {
 public:
  static constexpr int kChannels = 3;
  static constexpr int kMinSide = 8;

  Image() = default;
  // Validates shape, finiteness and range; throws ShapeError/InvalidArgument.
  Image(int height, int width, std::vector<float> data);

  static Image filled(int height, int width, float value);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  Extent extent() const noexcept { return {height_, width_}; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }
  const std::vector<float>& data() const noexcept { return data_; }
  float at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Dense C x H x W latent grid.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, std::vector<float> data);

  static FeatureMap zeros(int channels, int height, int width);

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  Extent extent() const noexcept { return {height_, width_}; }
  const std::vector<float>& data() const noexcept { return data_; }
  float at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

class ScaleSchedule {
 public:
  ScaleSchedule() = default;
  explicit ScaleSchedule(std::vector<Extent> scales) : scales_(std::move(scales)) {}

  // Square scales lo, lo+1, ..., hi.
  static ScaleSchedule dense(int lo, int hi);
  // Square scales from an explicit side list, e.g. {1, 2, 4, 8, 16}.
  static ScaleSchedule squares(const std::vector<int>& sides);
  // Nine square scales 8x8 .. 16x16 for a 16x16 latent grid.
  static ScaleSchedule default_schedule() { return dense(8, 16); }

  std::size_t size() const noexcept { return scales_.size(); }
  bool empty() const noexcept { return scales_.empty(); }
  const Extent& operator[](std::size_t k) const { return scales_.at(k); }
  const Extent& first() const { return scales_.at(0); }
  const Extent& last() const { return scales_.at(scales_.size() - 1); }
  const std::vector<Extent>& scales() const noexcept { return scales_; }
  // Sum over scales of h_k * w_k.
  std::size_t total_cells() const noexcept;
  std::string to_string() const;

  friend bool operator==(const ScaleSchedule&, const ScaleSchedule&) = default;

 private:
  std::vector<Extent> scales_;
};

struct ScheduleViolation {
  enum class Kind { kEmpty, kNonPositive, kNonMonotone, kExceedsGrid };
  Kind kind;
  std::size_t index;
  std::string message;
};

// Total: returns every violated invariant, empty when the schedule is usable
// against a latent grid of the given extent.
std::vector<ScheduleViolation> validate_schedule(const ScaleSchedule& schedule, Extent grid);

// Throws ScheduleError listing all violations.
void require_valid_schedule(const ScaleSchedule& schedule, Extent grid);

// Order-sensitive FNV-1a 64 digest of the float32 little-endian bytes.
std::uint64_t content_hash(std::span<const float> values) noexcept;

class Codebook {
 public:
  Codebook() = default;
  Codebook(int size, int dim, std::vector<float> entries);

  int size() const noexcept { return size_; }
  int dim() const noexcept { return dim_; }
  const std::vector<float>& entries() const noexcept { return entries_; }
  std::span<const float> row(int index) const {
    return {entries_.data() + static_cast<std::size_t>(index) * dim_,
            static_cast<std::size_t>(dim_)};
  }
  std::uint64_t content_hash() const noexcept { return hash_; }
  // True when two rows are within max-abs tolerance of each other.
  bool has_duplicate_rows(double tolerance = 1e-9) const;

  friend bool operator==(const Codebook& a, const Codebook& b) {
    return a.size_ == b.size_ && a.dim_ == b.dim_ && a.entries_ == b.entries_;
  }

 private:
  int size_ = 0;
  int dim_ = 0;
  std::vector<float> entries_;
  std::uint64_t hash_ = 0;
};

struct IndexGrid {
  int h = 0;
  int w = 0;
  std::vector<std::int32_t> indices;  // row-major, h * w entries

  std::int32_t at(int y, int x) const { return indices[static_cast<std::size_t>(y) * w + x]; }
  friend bool operator==(const IndexGrid&, const IndexGrid&) = default;
};

// Ordered token grids r_1..r_K bound to the codebook that produced them.
class TokenPyramid {
 public:
  TokenPyramid() = default;
  // Throws ShapeError when grid k does not have shape schedule[k].
  TokenPyramid(ScaleSchedule schedule, std::vector<IndexGrid> grids, std::uint64_t codebook_hash);

  const ScaleSchedule& schedule() const noexcept { return schedule_; }
  const std::vector<IndexGrid>& grids() const noexcept { return grids_; }
  const IndexGrid& grid(std::size_t k) const { return grids_.at(k); }
  std::size_t depth() const noexcept { return grids_.size(); }
  std::uint64_t codebook_hash() const noexcept { return codebook_hash_; }
  std::int32_t max_index() const noexcept;

  friend bool operator==(const TokenPyramid&, const TokenPyramid&) = default;

 private:
  ScaleSchedule schedule_;
  std::vector<IndexGrid> grids_;
  std::uint64_t codebook_hash_ = 0;
};

// Per-scale 1x1 linear map C -> C plus bias.
class ScaleProjection {
 public:
  ScaleProjection() = default;
  ScaleProjection(int scales, int channels, std::vector<float> weights, std::vector<float> bias);

  static ScaleProjection identity(int scales, int channels);

  int scales() const noexcept { return scales_; }
  int channels() const noexcept { return channels_; }
  // Weight matrix of scale k, row-major [out][in].
  std::span<const float> weight(int k) const;
  std::span<const float> bias(int k) const;
  const std::vector<float>& weights() const noexcept { return weights_; }
  const std::vector<float>& biases() const noexcept { return bias_; }

 private:
  int scales_ = 0;
  int channels_ = 0;
  std::vector<float> weights_;
  std::vector<float> bias_;
};

struct LossWeights {
  double lambda_p = 1.0;
  double lambda_adv = 0.3;
  double lambda_trans = 3.0;
  double lambda_1 = 1.0;
  double lambda_2 = 0.3;

  // Throws InvalidArgument on negative or non-finite weights.
  void validate() const;
};

}  // namespace stainvar
