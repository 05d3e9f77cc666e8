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

// Random instance generators shared by the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <random>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "stainvar/domain.hpp"

namespace fixtures {

inline std::vector<float> uniform(std::mt19937_64& rng, std::size_t n, float lo, float hi) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline stainvar::FeatureMap random_features(std::mt19937_64& rng, int c, int h, int w) {
  return stainvar::FeatureMap(c, h, w, uniform(rng, static_cast<std::size_t>(c) * h * w, -1.f, 1.f));
}

inline stainvar::Codebook random_codebook(std::mt19937_64& rng, int v, int c) {
  return stainvar::Codebook(v, c, uniform(rng, static_cast<std::size_t>(v) * c, -1.f, 1.f));
}

// Near-identity projections with a small random perturbation.
inline stainvar::ScaleProjection random_projection(std::mt19937_64& rng, int k, int c) {
  std::vector<float> w = uniform(rng, static_cast<std::size_t>(k) * c * c, -0.2f, 0.2f);
  for (int s = 0; s < k; ++s) {
    for (int i = 0; i < c; ++i) w[(static_cast<std::size_t>(s) * c + i) * c + i] += 1.f;
  }
  return stainvar::ScaleProjection(k, c, std::move(w),
                                   uniform(rng, static_cast<std::size_t>(k) * c, -0.1f, 0.1f));
}

// Monotone schedule of 1..max_k scales inside the grid.
inline stainvar::ScaleSchedule random_schedule(std::mt19937_64& rng, int gh, int gw, int max_k) {
  const int k = uniform_int(rng, 1, max_k);
  std::vector<stainvar::Extent> s;
  int h = 1, w = 1;
  for (int i = 0; i < k; ++i) {
    h = uniform_int(rng, h, gh);
    w = uniform_int(rng, w, gw);
    s.push_back({h, w});
  }
  return stainvar::ScaleSchedule(std::move(s));
}

inline oracle::Grid to_grid(const stainvar::FeatureMap& f) {
  oracle::Grid g(f.channels(), f.height(), f.width());
  for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] = f.data()[i];
  return g;
}

inline std::vector<std::vector<double>> to_rows(const stainvar::Codebook& cb) {
  std::vector<std::vector<double>> out;
  for (int j = 0; j < cb.size(); ++j) {
    auto r = cb.row(j);
    out.emplace_back(r.begin(), r.end());
  }
  return out;
}

inline oracle::Projection to_oracle(const stainvar::ScaleProjection& p) {
  oracle::Projection o;
  const int c = p.channels();
  for (int k = 0; k < p.scales(); ++k) {
    auto w = p.weight(k);
    auto b = p.bias(k);
    std::vector<std::vector<double>> m(c, std::vector<double>(c));
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < c; ++j) m[i][j] = w[static_cast<std::size_t>(i) * c + j];
    }
    o.weight.push_back(std::move(m));
    o.bias.emplace_back(b.begin(), b.end());
  }
  return o;
}

inline std::vector<std::pair<int, int>> to_pairs(const stainvar::ScaleSchedule& s) {
  std::vector<std::pair<int, int>> out;
  for (const auto& e : s.scales()) out.emplace_back(e.h, e.w);
  return out;
}

inline stainvar::TokenPyramid random_pyramid(std::mt19937_64& rng, int vocab, int max_side,
                                             int max_k) {
  const int g = uniform_int(rng, 1, max_side);
  auto schedule = random_schedule(rng, g, g, max_k);
  std::vector<stainvar::IndexGrid> grids;
  for (const auto& e : schedule.scales()) {
    stainvar::IndexGrid grid{e.h, e.w, {}};
    grid.indices.resize(static_cast<std::size_t>(e.h) * e.w);
    for (auto& i : grid.indices) i = uniform_int(rng, 0, vocab - 1);
    grids.push_back(std::move(grid));
  }
  return stainvar::TokenPyramid(std::move(schedule), std::move(grids), rng());
}

// Image with values drawn from [lo, hi].
inline stainvar::Image random_image(std::mt19937_64& rng, int h, int w, float lo = 0.f,
                                    float hi = 1.f) {
  return stainvar::Image(h, w, uniform(rng, static_cast<std::size_t>(3) * h * w, lo, hi));
}

}  // namespace fixtures
