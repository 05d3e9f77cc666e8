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

#include "stainvar/domain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "stainvar/error.hpp"

namespace stainvar {

namespace {

void require_finite(const std::vector<float>& data, const char* what) {
  for (float v : data) {
    if (!std::isfinite(v)) {
      throw InvalidArgument(std::string(what) + " contains non-finite values");
    }
  }
}

}  // namespace

Image::Image(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height_ < kMinSide || width_ < kMinSide) {
    throw ShapeError("image sides must be >= " + std::to_string(kMinSide) + ", got " +
                     std::to_string(height_) + "x" + std::to_string(width_));
  }
  if (data_.size() != static_cast<std::size_t>(kChannels) * height_ * width_) {
    throw ShapeError("image payload size does not match 3x" + std::to_string(height_) + "x" +
                     std::to_string(width_));
  }
  for (float v : data_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw InvalidArgument("image values must be finite and within [0,1]");
    }
  }
}

Image Image::filled(int height, int width, float value) {
  return Image(height, width,
               std::vector<float>(static_cast<std::size_t>(kChannels) * height * width, value));
}

FeatureMap::FeatureMap(int channels, int height, int width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels_ < 1 || height_ < 1 || width_ < 1) {
    throw ShapeError("feature map dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(channels_) * height_ * width_) {
    throw ShapeError("feature map payload size mismatch");
  }
  require_finite(data_, "feature map");
}

FeatureMap FeatureMap::zeros(int channels, int height, int width) {
  return FeatureMap(channels, height, width,
                    std::vector<float>(static_cast<std::size_t>(channels) * height * width, 0.0f));
}

ScaleSchedule ScaleSchedule::dense(int lo, int hi) {
  std::vector<Extent> scales;
  for (int s = lo; s <= hi; ++s) scales.push_back({s, s});
  return ScaleSchedule(std::move(scales));
}

ScaleSchedule ScaleSchedule::squares(const std::vector<int>& sides) {
  std::vector<Extent> scales;
  scales.reserve(sides.size());
  for (int s : sides) scales.push_back({s, s});
  return ScaleSchedule(std::move(scales));
}

std::size_t ScaleSchedule::total_cells() const noexcept {
  std::size_t n = 0;
  for (const auto& e : scales_) n += static_cast<std::size_t>(e.h) * e.w;
  return n;
}

std::string ScaleSchedule::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < scales_.size(); ++k) {
    if (k) os << ',';
    os << '(' << scales_[k].h << ',' << scales_[k].w << ')';
  }
  os << ']';
  return os.str();
}

std::vector<ScheduleViolation> validate_schedule(const ScaleSchedule& schedule, Extent grid) {
  using Kind = ScheduleViolation::Kind;
  std::vector<ScheduleViolation> out;
  if (schedule.empty()) {
    out.push_back({Kind::kEmpty, 0, "schedule has no scales"});
    return out;
  }
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const Extent& e = schedule[k];
    if (e.h < 1 || e.w < 1) {
      out.push_back({Kind::kNonPositive, k, "scale " + std::to_string(k + 1) + " is empty"});
    }
    if (k > 0) {
      const Extent& prev = schedule[k - 1];
      if (e.h < prev.h || e.w < prev.w) {
        out.push_back({Kind::kNonMonotone, k,
                       "scale " + std::to_string(k + 1) + " is smaller than scale " +
                           std::to_string(k)});
      }
    }
    if (e.h > grid.h || e.w > grid.w) {
      out.push_back({Kind::kExceedsGrid, k,
                     "scale " + std::to_string(k + 1) + " exceeds latent grid " +
                         std::to_string(grid.h) + "x" + std::to_string(grid.w)});
    }
  }
  return out;
}

void require_valid_schedule(const ScaleSchedule& schedule, Extent grid) {
  auto violations = validate_schedule(schedule, grid);
  if (violations.empty()) return;
  std::string msg = "invalid scale schedule " + schedule.to_string() + ":";
  for (const auto& v : violations) msg += " " + v.message + ";";
  throw ScheduleError(msg);
}

std::uint64_t content_hash(std::span<const float> values) noexcept {
  constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  std::uint64_t h = kOffset;
  for (float v : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 4; ++b) {
      h ^= static_cast<std::uint8_t>(bits >> (8 * b));
      h *= kPrime;
    }
  }
  return h;
}

Codebook::Codebook(int size, int dim, std::vector<float> entries)
    : size_(size), dim_(dim), entries_(std::move(entries)) {
  if (size_ < 2) throw InvalidArgument("codebook needs at least 2 entries");
  if (dim_ < 1) throw InvalidArgument("codebook dimension must be positive");
  if (entries_.size() != static_cast<std::size_t>(size_) * dim_) {
    throw ShapeError("codebook payload size mismatch");
  }
  require_finite(entries_, "codebook");
  hash_ = stainvar::content_hash(entries_);
}

bool Codebook::has_duplicate_rows(double tolerance) const {
  for (int i = 0; i < size_; ++i) {
    for (int j = i + 1; j < size_; ++j) {
      auto a = row(i);
      auto b = row(j);
      double worst = 0.0;
      for (int c = 0; c < dim_ && worst <= tolerance; ++c) {
        worst = std::max(worst, std::abs(static_cast<double>(a[c]) - b[c]));
      }
      if (worst <= tolerance) return true;
    }
  }
  return false;
}

TokenPyramid::TokenPyramid(ScaleSchedule schedule, std::vector<IndexGrid> grids,
                           std::uint64_t codebook_hash)
    : schedule_(std::move(schedule)), grids_(std::move(grids)), codebook_hash_(codebook_hash) {
  if (grids_.size() != schedule_.size()) {
    throw ShapeError("token pyramid has " + std::to_string(grids_.size()) + " grids for " +
                     std::to_string(schedule_.size()) + " scales");
  }
  for (std::size_t k = 0; k < grids_.size(); ++k) {
    const auto& g = grids_[k];
    const auto& e = schedule_[k];
    if (g.h != e.h || g.w != e.w ||
        g.indices.size() != static_cast<std::size_t>(e.h) * e.w) {
      throw ShapeError("token grid " + std::to_string(k + 1) + " does not match its scale");
    }
    for (auto idx : g.indices) {
      if (idx < 0) throw InvalidArgument("negative token index");
    }
  }
}

std::int32_t TokenPyramid::max_index() const noexcept {
  std::int32_t m = -1;
  for (const auto& g : grids_) {
    for (auto idx : g.indices) m = std::max(m, idx);
  }
  return m;
}

ScaleProjection::ScaleProjection(int scales, int channels, std::vector<float> weights,
                                 std::vector<float> bias)
    : scales_(scales), channels_(channels), weights_(std::move(weights)), bias_(std::move(bias)) {
  if (scales_ < 1 || channels_ < 1) throw InvalidArgument("projection dimensions must be positive");
  if (weights_.size() != static_cast<std::size_t>(scales_) * channels_ * channels_ ||
      bias_.size() != static_cast<std::size_t>(scales_) * channels_) {
    throw ShapeError("projection payload size mismatch");
  }
  require_finite(weights_, "projection weights");
  require_finite(bias_, "projection bias");
}

ScaleProjection ScaleProjection::identity(int scales, int channels) {
  std::vector<float> w(static_cast<std::size_t>(scales) * channels * channels, 0.0f);
  for (int k = 0; k < scales; ++k) {
    for (int c = 0; c < channels; ++c) {
      w[(static_cast<std::size_t>(k) * channels + c) * channels + c] = 1.0f;
    }
  }
  return ScaleProjection(scales, channels, std::move(w),
                         std::vector<float>(static_cast<std::size_t>(scales) * channels, 0.0f));
}

std::span<const float> ScaleProjection::weight(int k) const {
  const std::size_t n = static_cast<std::size_t>(channels_) * channels_;
  return {weights_.data() + static_cast<std::size_t>(k) * n, n};
}

std::span<const float> ScaleProjection::bias(int k) const {
  return {bias_.data() + static_cast<std::size_t>(k) * channels_,
          static_cast<std::size_t>(channels_)};
}

void LossWeights::validate() const {
  const std::pair<const char*, double> items[] = {
      {"lambda_p", lambda_p},         {"lambda_adv", lambda_adv}, {"lambda_trans", lambda_trans},
      {"lambda_1", lambda_1},         {"lambda_2", lambda_2}};
  for (const auto& [name, v] : items) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidArgument(std::string(name) + " must be a finite nonnegative weight");
    }
  }
}

}  // namespace stainvar
