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
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stainvar/error.hpp"
#include "stainvar/rvq.hpp"

namespace stainvar {
namespace {

Codebook two_points() { return Codebook(2, 2, {0.f, 0.f, 1.f, 1.f}); }

TEST(QuantizeNearest, PicksCloserCodeword) {
  FeatureMap f(2, 1, 1, {0.9f, 0.8f});
  EXPECT_EQ(quantize_nearest(f, two_points()).at(0, 0), 1);
}

TEST(QuantizeNearest, ExactMatchAndTie) {
  FeatureMap exact(2, 1, 1, {1.f, 1.f});
  EXPECT_EQ(quantize_nearest(exact, two_points()).at(0, 0), 1);
  FeatureMap tie(2, 1, 1, {0.5f, 0.5f});
  EXPECT_EQ(quantize_nearest(tie, two_points()).at(0, 0), 0);
}

TEST(QuantizeNearest, DuplicateRowsResolveLow) {
  Codebook cb(3, 1, {2.f, 0.f, 0.f});
  FeatureMap f(1, 1, 2, {0.1f, -0.1f});
  const auto g = quantize_nearest(f, cb);
  EXPECT_EQ(g.at(0, 0), 1);
  EXPECT_EQ(g.at(0, 1), 1);
}

TEST(QuantizeNearest, ChannelMismatchThrows) {
  FeatureMap f(3, 1, 1, {0.f, 0.f, 0.f});
  EXPECT_THROW(quantize_nearest(f, two_points()), ShapeError);
}

TEST(QuantizeNearest, MatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const int c = fixtures::uniform_int(rng, 1, 6);
    const int v = fixtures::uniform_int(rng, 2, 64);
    auto f = fixtures::random_features(rng, c, 5, 4);
    auto cb = fixtures::random_codebook(rng, v, c);
    const auto g = quantize_nearest(f, cb);
    const auto rows = fixtures::to_rows(cb);
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 4; ++x) {
        std::vector<double> feat(c);
        for (int k = 0; k < c; ++k) feat[k] = f.at(k, y, x);
        ASSERT_EQ(g.at(y, x), oracle::nearest(feat, rows));
      }
    }
  }
}

TEST(Interpolate, TwoByTwoToOne) {
  FeatureMap f(1, 2, 2, {0.f, 1.f, 2.f, 3.f});
  const auto out = interpolate(f, 1, 1);
  EXPECT_FLOAT_EQ(out.at(0, 0, 0), 1.5f);
}

TEST(Interpolate, ConstantStaysConstant) {
  FeatureMap f(2, 3, 5, std::vector<float>(30, 0.25f));
  for (auto [h, w] : {std::pair{1, 1}, {7, 2}, {3, 5}, {16, 16}}) {
    const auto out = interpolate(f, h, w);
    for (float v : out.data()) EXPECT_FLOAT_EQ(v, 0.25f);
  }
}

TEST(Interpolate, SameSizeIsIdentity) {
  std::mt19937_64 rng(3);
  auto f = fixtures::random_features(rng, 3, 6, 4);
  EXPECT_EQ(interpolate(f, 6, 4), f);
}

TEST(Interpolate, MatchesOracle) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 30; ++t) {
    auto f = fixtures::random_features(rng, 2, fixtures::uniform_int(rng, 1, 9),
                                       fixtures::uniform_int(rng, 1, 9));
    const int h = fixtures::uniform_int(rng, 1, 12), w = fixtures::uniform_int(rng, 1, 12);
    const auto got = interpolate(f, h, w);
    const auto want = oracle::resize(fixtures::to_grid(f), h, w);
    for (std::size_t i = 0; i < want.v.size(); ++i) ASSERT_NEAR(got.data()[i], want.v[i], 1e-5);
  }
}

TEST(InterpolationMatrix, RowsSumToOne) {
  for (int in : {1, 2, 5, 16}) {
    for (int out : {1, 3, 8, 16}) {
      auto m = rvq::interpolation_matrix(in, out, torch::kFloat64);
      auto sums = m.sum(1);
      EXPECT_TRUE(torch::allclose(sums, torch::ones_like(sums)));
    }
  }
}

TEST(EncodeMultiscale, ExactCodebookLeavesZeroResidual) {
  std::mt19937_64 rng(8);
  auto cb = fixtures::random_codebook(rng, 8, 2);
  std::vector<float> data(2 * 3 * 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      const int j = fixtures::uniform_int(rng, 0, 7);
      for (int c = 0; c < 2; ++c) data[(c * 3 + y) * 3 + x] = cb.row(j)[c];
    }
  }
  FeatureMap f(2, 3, 3, data);
  const auto enc = encode_multiscale(f, cb, ScaleSchedule({{3, 3}}), ScaleProjection::identity(1, 2));
  for (float v : enc.final_residual.data()) EXPECT_EQ(v, 0.f);
}

TEST(EncodeMultiscale, MatchesStraightLineOracle) {
  std::mt19937_64 rng(21);
  auto f = fixtures::random_features(rng, 2, 4, 4);
  auto cb = fixtures::random_codebook(rng, 8, 2);
  const ScaleSchedule s({{2, 2}, {4, 4}});
  auto proj = fixtures::random_projection(rng, 2, 2);
  const auto enc = encode_multiscale(f, cb, s, proj);
  const auto want = oracle::encode(fixtures::to_grid(f), fixtures::to_rows(cb),
                                   fixtures::to_pairs(s), fixtures::to_oracle(proj));
  for (std::size_t k = 0; k < s.size(); ++k) {
    for (std::size_t i = 0; i < want.indices[k].size(); ++i) {
      EXPECT_EQ(enc.pyramid.grid(k).indices[i], want.indices[k][i]);
    }
  }
  for (std::size_t i = 0; i < want.aggregate.v.size(); ++i) {
    EXPECT_NEAR(enc.aggregate.data()[i], want.aggregate.v[i], 1e-5);
    EXPECT_NEAR(enc.final_residual.data()[i], want.residual.v[i], 1e-5);
  }
}

TEST(EncodeMultiscale, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 40; ++t) {
    const int c = fixtures::uniform_int(rng, 1, 4);
    const int h = fixtures::uniform_int(rng, 1, 8), w = fixtures::uniform_int(rng, 1, 8);
    auto f = fixtures::random_features(rng, c, h, w);
    auto cb = fixtures::random_codebook(rng, fixtures::uniform_int(rng, 2, 32), c);
    auto s = fixtures::random_schedule(rng, h, w, 4);
    auto proj = fixtures::random_projection(rng, static_cast<int>(s.size()), c);
    const auto enc = encode_multiscale(f, cb, s, proj);
    const auto want = oracle::encode(fixtures::to_grid(f), fixtures::to_rows(cb),
                                     fixtures::to_pairs(s), fixtures::to_oracle(proj));
    for (std::size_t k = 0; k < s.size(); ++k) {
      for (std::size_t i = 0; i < want.indices[k].size(); ++i) {
        ASSERT_EQ(enc.pyramid.grid(k).indices[i], want.indices[k][i]) << "instance " << t;
      }
    }
  }
}

TEST(EncodeMultiscale, ResidualIsMonotoneWithZeroCodeword) {
  std::mt19937_64 rng(4);
  auto f = fixtures::random_features(rng, 3, 6, 6);
  auto entries = fixtures::uniform(rng, 16 * 3, -1.f, 1.f);
  std::fill(entries.begin(), entries.begin() + 3, 0.f);
  Codebook cb(16, 3, entries);
  const ScaleSchedule s({{6, 6}, {6, 6}, {6, 6}});
  double prev = 0.0;
  for (float v : f.data()) prev += static_cast<double>(v) * v;
  for (std::size_t k = 1; k <= s.size(); ++k) {
    ScaleSchedule prefix(std::vector<Extent>(s.scales().begin(), s.scales().begin() + k));
    const auto enc = encode_multiscale(f, cb, prefix, ScaleProjection::identity(static_cast<int>(k), 3));
    double norm = 0.0;
    for (float v : enc.final_residual.data()) norm += static_cast<double>(v) * v;
    EXPECT_LE(norm, prev + 1e-9);
    prev = norm;
  }
}

TEST(EncodeMultiscale, RejectsInvalidSchedule) {
  std::mt19937_64 rng(1);
  auto f = fixtures::random_features(rng, 2, 4, 4);
  auto cb = fixtures::random_codebook(rng, 4, 2);
  EXPECT_THROW(encode_multiscale(f, cb, ScaleSchedule({{4, 4}, {2, 2}}),
                                 ScaleProjection::identity(2, 2)),
               ScheduleError);
  EXPECT_THROW(encode_multiscale(f, cb, ScaleSchedule({{5, 5}}), ScaleProjection::identity(1, 2)),
               ScheduleError);
  EXPECT_THROW(encode_multiscale(f, fixtures::random_codebook(rng, 4, 3), ScaleSchedule({{2, 2}}),
                                 ScaleProjection::identity(1, 2)),
               ShapeError);
}

TEST(AggregateReconstruct, EqualsInputMinusResidual) {
  std::mt19937_64 rng(17);
  auto f = fixtures::random_features(rng, 3, 8, 8);
  auto cb = fixtures::random_codebook(rng, 32, 3);
  const auto s = ScaleSchedule::dense(2, 8);
  auto proj = fixtures::random_projection(rng, static_cast<int>(s.size()), 3);
  const auto enc = encode_multiscale(f, cb, s, proj);
  const auto rec = aggregate_reconstruct(enc.pyramid, cb, proj, f.extent());
  const auto again = aggregate_reconstruct(enc.pyramid, cb, proj, f.extent());
  EXPECT_EQ(rec, again);
  for (std::size_t i = 0; i < rec.data().size(); ++i) {
    EXPECT_NEAR(rec.data()[i], f.data()[i] - enc.final_residual.data()[i], 1e-5);
  }
}

TEST(AggregateReconstruct, SingleScaleConstant) {
  Codebook cb(3, 2, {0.f, 0.f, 0.3f, -0.7f, 1.f, 1.f});
  IndexGrid g{2, 2, {1, 1, 1, 1}};
  TokenPyramid p(ScaleSchedule({{2, 2}}), {g}, cb.content_hash());
  const auto out = aggregate_reconstruct(p, cb, ScaleProjection::identity(1, 2), {5, 5});
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      EXPECT_FLOAT_EQ(out.at(0, y, x), 0.3f);
      EXPECT_FLOAT_EQ(out.at(1, y, x), -0.7f);
    }
  }
}

TEST(AggregateReconstruct, HashMismatchThrows) {
  std::mt19937_64 rng(2);
  auto cb = fixtures::random_codebook(rng, 4, 2);
  auto other = fixtures::random_codebook(rng, 4, 2);
  IndexGrid g{1, 1, {0}};
  TokenPyramid p(ScaleSchedule({{1, 1}}), {g}, cb.content_hash());
  EXPECT_THROW(aggregate_reconstruct(p, other, ScaleProjection::identity(1, 2), {2, 2}),
               HashMismatchError);
  TokenPyramid bad(ScaleSchedule({{1, 1}}), {IndexGrid{1, 1, {9}}}, cb.content_hash());
  try {
    aggregate_reconstruct(bad, cb, ScaleProjection::identity(1, 2), {2, 2});
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::kIndexOutOfRange);
  }
}

FormatErrorKind kind_of(const std::vector<std::uint8_t>& bytes, std::optional<int> vocab = {}) {
  try {
    deserialize_pyramid(bytes, vocab);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "stream was accepted";
  return FormatErrorKind::kMalformed;
}

TEST(PyramidFormat, SingleScaleLength) {
  IndexGrid g{8, 8, std::vector<std::int32_t>(64, 3)};
  TokenPyramid p(ScaleSchedule({{8, 8}}), {g}, 0x1234);
  EXPECT_EQ(serialize_pyramid(p).size(), 4u + 1 + 1 + 4 + 8 + 128);
}

TEST(PyramidFormat, HeaderLayout) {
  IndexGrid g{1, 2, {1, 258}};
  TokenPyramid p(ScaleSchedule({{1, 2}}), {g}, 0x0102030405060708ULL);
  const auto b = serialize_pyramid(p);
  const std::vector<std::uint8_t> want = {'R', 'V', 'Q', 'P', 1, 1, 1, 0, 2, 0,
                                          8,   7,   6,   5,   4, 3, 2, 1, 1, 0, 2, 1};
  EXPECT_EQ(b, want);
}

TEST(PyramidFormat, RoundTrip) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 50; ++t) {
    const auto p = fixtures::random_pyramid(rng, 4096, 16, 5);
    EXPECT_EQ(deserialize_pyramid(serialize_pyramid(p)), p);
  }
}

TEST(PyramidFormat, ErrorClasses) {
  IndexGrid g{2, 2, {0, 1, 2, 3}};
  TokenPyramid p(ScaleSchedule({{2, 2}}), {g}, 7);
  const auto good = serialize_pyramid(p);

  auto b = good;
  b[0] = 'X';
  EXPECT_EQ(kind_of(b), FormatErrorKind::kBadMagic);
  b = good;
  b[4] = 2;
  EXPECT_EQ(kind_of(b), FormatErrorKind::kUnsupportedVersion);
  b = good;
  b.pop_back();
  EXPECT_EQ(kind_of(b), FormatErrorKind::kTruncated);
  EXPECT_EQ(kind_of({'R', 'V'}), FormatErrorKind::kTruncated);
  b = good;
  b.push_back(0);
  EXPECT_EQ(kind_of(b), FormatErrorKind::kTrailingBytes);
  b = good;
  b[5] = 0;
  EXPECT_EQ(kind_of(b), FormatErrorKind::kInvalidSchedule);
  b = good;
  b[6] = 0;
  EXPECT_EQ(kind_of(b), FormatErrorKind::kInvalidSchedule);
  EXPECT_EQ(kind_of(good, 3), FormatErrorKind::kIndexOutOfRange);
  EXPECT_NO_THROW(deserialize_pyramid(good, 4));
}

}  // namespace
}  // namespace stainvar
