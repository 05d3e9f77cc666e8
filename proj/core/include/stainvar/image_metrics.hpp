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

#pragma once

#include <limits>

#include "stainvar/domain.hpp"

namespace stainvar {

// Returned by psnr() for identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mean_squared_error(const Image& a, const Image& b);
double mean_absolute_error(const Image& a, const Image& b);

// Data range 1.0. Identical images give kPsnrIdentical.
double psnr(const Image& a, const Image& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Gaussian-windowed SSIM averaged over every fully contained window and all
// channels. Throws ShapeError when either side is smaller than the window.
double ssim(const Image& a, const Image& b, const SsimOptions& options = {});

// Fixed-filter perceptual distance ("perceptual-proxy"). Not LPIPS: no
// learned weights. L1 distance between 3-level Gaussian pyramid stacks with
// band-pass and oriented-gradient channels; a metric on images.
double perceptual_proxy(const Image& a, const Image& b);

}  // namespace stainvar
