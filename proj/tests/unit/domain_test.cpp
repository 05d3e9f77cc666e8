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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "stainvar/domain.hpp"
#include "stainvar/error.hpp"

namespace stainvar {
namespace {

using Kind = ScheduleViolation::Kind;

bool has(const std::vector<ScheduleViolation>& v, Kind k) {
  for (const auto& x : v) {
    if (x.kind == k) return true;
  }
  return false;
}

TEST(Schedule, DefaultIsNineSquares) {
  const auto s = ScaleSchedule::default_schedule();
  ASSERT_EQ(s.size(), 9u);
  for (int k = 0; k < 9; ++k) EXPECT_EQ(s[k], (Extent{8 + k, 8 + k}));
  EXPECT_TRUE(validate_schedule(s, {16, 16}).empty());
  std::size_t cells = 0;
  for (int side = 8; side <= 16; ++side) cells += static_cast<std::size_t>(side) * side;
  EXPECT_EQ(s.total_cells(), cells);
}

TEST(Schedule, Violations) {
  EXPECT_TRUE(has(validate_schedule(ScaleSchedule(), {4, 4}), Kind::kEmpty));
  EXPECT_TRUE(has(validate_schedule(ScaleSchedule({{0, 2}}), {4, 4}), Kind::kNonPositive));
  EXPECT_TRUE(has(validate_schedule(ScaleSchedule({{4, 4}, {2, 2}}), {4, 4}), Kind::kNonMonotone));
  EXPECT_TRUE(
      has(validate_schedule(ScaleSchedule({{8, 8}, {32, 32}}), {16, 16}), Kind::kExceedsGrid));
  const auto both = validate_schedule(ScaleSchedule({{4, 4}, {2, 9}}), {4, 4});
  EXPECT_TRUE(has(both, Kind::kNonMonotone));
  EXPECT_TRUE(has(both, Kind::kExceedsGrid));
  EXPECT_THROW(require_valid_schedule(ScaleSchedule({{5, 5}}), {4, 4}), ScheduleError);
}

TEST(Schedule, Squares) {
  const auto s = ScaleSchedule::squares({1, 2, 4, 8});
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s.last(), (Extent{8, 8}));
}

TEST(ContentHash, OrderSensitive) {
  const std::vector<float> a = {1.f, 2.f}, b = {2.f, 1.f};
  EXPECT_NE(content_hash(a), content_hash(b));
  EXPECT_EQ(content_hash(a), content_hash(std::vector<float>{1.f, 2.f}));
  EXPECT_EQ(content_hash(std::vector<float>{}), 0xcbf29ce484222325ULL);
}

TEST(Codebook, HashAndDuplicates) {
  Codebook a(2, 2, {0.f, 0.f, 1.f, 1.f});
  Codebook b(2, 2, {0.f, 0.f, 1.f, 1.0000001f});
  EXPECT_NE(a.content_hash(), b.content_hash());
  EXPECT_FALSE(a.has_duplicate_rows());
  EXPECT_TRUE(Codebook(3, 1, {1.f, 2.f, 1.f}).has_duplicate_rows());
  EXPECT_THROW(Codebook(1, 2, {0.f, 0.f}), InvalidArgument);
  EXPECT_THROW(Codebook(2, 2, {0.f}), ShapeError);
}

TEST(Image, Validation) {
  EXPECT_THROW(Image(4, 4, std::vector<float>(48, 0.f)), ShapeError);
  EXPECT_THROW(Image(8, 8, std::vector<float>(10, 0.f)), ShapeError);
  std::vector<float> v(192, 0.f);
  v[3] = 1.5f;
  EXPECT_THROW(Image(8, 8, v), InvalidArgument);
  v[3] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(Image(8, 8, v), InvalidArgument);
  EXPECT_EQ(Image::filled(8, 8, 0.5f).at(2, 7, 7), 0.5f);
}

TEST(TokenPyramid, ShapeChecked) {
  IndexGrid g{2, 2, {0, 0, 0, 0}};
  EXPECT_THROW(TokenPyramid(ScaleSchedule({{2, 3}}), {g}, 0), ShapeError);
  TokenPyramid p(ScaleSchedule({{2, 2}}), {IndexGrid{2, 2, {0, 5, 2, 1}}}, 0);
  EXPECT_EQ(p.max_index(), 5);
}

TEST(ScaleProjection, IdentityLayout) {
  const auto p = ScaleProjection::identity(2, 3);
  auto w = p.weight(1);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_EQ(w[i * 3 + j], i == j ? 1.f : 0.f);
  }
  for (float b : p.bias(0)) EXPECT_EQ(b, 0.f);
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.lambda_adv = -0.1;
  EXPECT_THROW(w.validate(), InvalidArgument);
  w = {};
  w.lambda_p = std::numeric_limits<double>::infinity();
  EXPECT_THROW(w.validate(), InvalidArgument);
}

}  // namespace
}  // namespace stainvar
