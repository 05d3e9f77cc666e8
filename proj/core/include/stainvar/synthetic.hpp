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

// Seeded paired pseudo-H&E / pseudo-IHC patches with known expression maps
// and exact nucleus counts, misalignment injection, and dataset storage.
//
// Nuclei are grouped into clusters. Each cluster is either negative or
// carries one intensity class (1+, 2+, 3+); a nucleus's DAB intensity is
// drawn inside its cluster's class band. The H&E rendering sees expression
// only through `morphology_coupling`, so appearance alone under-determines
// the stain.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stainvar/domain.hpp"
#include "stainvar/scoring.hpp"

namespace stainvar {

struct SyntheticParams {
  int image_size = 64;
  int n_nuclei = 24;
  double positivity_rate = 0.5;  // probability that a cluster is positive
  double texture_scale = 0.01;   // amplitude of the smooth background texture
  int clusters = 3;
  double morphology_coupling = 0.5;  // 0: H&E carries no expression cue
  DabThresholds thresholds;

  void validate() const;
};

struct Nucleus {
  double cy = 0.0, cx = 0.0;
  double ry = 0.0, rx = 0.0;
  double angle = 0.0;
  int cluster = 0;
  int intensity_class = 0;
  double dab = 0.0;  // expression level, in [0,1]
};

struct SyntheticPair {
  Image x_he;
  Image x_ihc;
  std::vector<float> molecular_map;  // H*W, row-major, in [0,1]
  NucleiCounts counts;               // recorded by the generator
  std::vector<Nucleus> nuclei;
  std::uint64_t seed = 0;
  SyntheticParams params;

  std::vector<double> dab_intensities() const;
};

// Throws InvalidArgument unless image_size is a positive multiple of 16 and
// n_nuclei >= 0. Pixel values lie on the 1/65535 grid so 16-bit storage is
// lossless.
SyntheticPair generate_pair(std::uint64_t seed, const SyntheticParams& params);

// IHC colour of a pixel whose nucleus coverage is `alpha` and expression is
// `dab`; brown weight is monotone in dab.
void ihc_nucleus_colour(double dab, double out[3]) noexcept;

// Expression estimate from an IHC colour: projection onto the blue-to-brown
// axis, clamped to [0,1]. Inverts ihc_nucleus_colour on fully covered pixels.
double dab_from_colour(const double rgb[3]) noexcept;

// Mean DAB estimate over the core (half radius) of each nucleus.
std::vector<double> measure_dab(const Image& ihc, const std::vector<Nucleus>& nuclei);

// Per-pixel displacement: output(p) = input(p + d(p)), in pixels.
struct DisplacementField {
  int h = 0;
  int w = 0;
  std::vector<float> dy;
  std::vector<float> dx;

  static DisplacementField zeros(int h, int w);
  double mean_magnitude() const;
  double max_magnitude() const;
};

// Bilinear resampling with edge clamping.
Image warp_image(const Image& image, const DisplacementField& field);

struct Misalignment {
  SyntheticPair pair;         // x_ihc warped, everything else unchanged
  DisplacementField forward;  // applied to x_ihc
  DisplacementField inverse;  // warp_image(pair.x_ihc, inverse) re-aligns
};

// Smooth random affine plus low-frequency jitter, rescaled so that no pixel
// moves farther than `magnitude`. magnitude 0 is the identity.
Misalignment inject_misalignment(const SyntheticPair& pair, double magnitude, std::uint64_t seed);

// 16-bit binary PPM (P6, maxval 65535); reading also accepts maxval 255.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

struct DatasetSpec {
  int train_pairs = 64;
  int eval_pairs = 16;
  std::uint64_t seed = 7;
  SyntheticParams params;
};

// Per-pair seed derived from the dataset seed and split/index.
std::uint64_t pair_seed(std::uint64_t dataset_seed, int split, int index) noexcept;

// Layout: <dir>/dataset.json, <dir>/{train,eval}/pair_NNNN_{he,ihc}.ppm and
// pair_NNNN.json (seed, params, counts, nuclei).
void write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);

// Throws MissingPrerequisiteError when the directory or a file is missing.
std::vector<SyntheticPair> read_split(const std::filesystem::path& dir, const std::string& split);
DatasetSpec read_dataset_spec(const std::filesystem::path& dir);

}  // namespace stainvar
