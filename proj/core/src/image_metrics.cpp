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

#include "stainvar/image_metrics.hpp"

#include <cmath>
#include <vector>

#include "stainvar/error.hpp"
#include "stainvar/perceptual.hpp"
#include "stainvar/tensor_bridge.hpp"

namespace stainvar {

namespace {

void require_same_shape(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("images differ in shape: " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()));
  }
}

std::vector<double> gaussian_taps(int window, double sigma) {
  std::vector<double> taps(window);
  const double centre = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - centre;
    taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += taps[i];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += taps[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += taps[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double mean_squared_error(const Image& a, const Image& b) {
  require_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data().size());
}

double mean_absolute_error(const Image& a, const Image& b) {
  require_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    s += std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
  }
  return s / static_cast<double>(a.data().size());
}

double psnr(const Image& a, const Image& b) {
  const double mse = mean_squared_error(a, b);
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b, const SsimOptions& options) {
  require_same_shape(a, b);
  const int h = a.height(), w = a.width();
  if (h < options.window || w < options.window) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) +
                     " is smaller than the SSIM window " + std::to_string(options.window));
  }
  const double c1 = options.k1 * options.k1;
  const double c2 = options.k2 * options.k2;
  const auto taps = gaussian_taps(options.window, options.sigma);
  const std::size_t plane = a.plane_size();

  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < Image::kChannels; ++c) {
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = a.data()[c * plane + i];
      y[i] = b.data()[c * plane + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    auto mx = filter_valid(x, h, w, taps);
    auto my = filter_valid(y, h, w, taps);
    auto sxx = filter_valid(xx, h, w, taps);
    auto syy = filter_valid(yy, h, w, taps);
    auto sxy = filter_valid(xy, h, w, taps);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    count += mx.size();
  }
  return total / static_cast<double>(count);
}

double perceptual_proxy(const Image& a, const Image& b) {
  require_same_shape(a, b);
  torch::NoGradGuard no_grad;
  auto ta = to_tensor(a).unsqueeze(0).to(torch::kFloat64);
  auto tb = to_tensor(b).unsqueeze(0).to(torch::kFloat64);
  return perceptual::distance(ta, tb).item<double>();
}

}  // namespace stainvar
