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

#include "stainvar/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "stainvar/error.hpp"

namespace stainvar {

namespace {

using json = nlohmann::json;

constexpr double kPi = 3.14159265358979323846;
constexpr double kHeBackground[3] = {0.94, 0.78, 0.86};
constexpr double kHematoxylin[3] = {0.32, 0.20, 0.55};
constexpr double kIhcBackground[3] = {0.93, 0.93, 0.96};
constexpr double kCounterstain[3] = {0.40, 0.45, 0.75};
constexpr double kDab[3] = {0.55, 0.33, 0.12};

float quantize16(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::round(v * 65535.0) / 65535.0);
}

// Corner-aligned bilinear upsampling of a g x g grid to n x n.
std::vector<double> upsample_grid(const std::vector<double>& grid, int g, int n) {
  std::vector<double> out(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y) {
    const double fy = n == 1 ? 0.0 : static_cast<double>(y) * (g - 1) / (n - 1);
    const int y0 = std::min(static_cast<int>(fy), g - 2);
    const double ay = fy - y0;
    for (int x = 0; x < n; ++x) {
      const double fx = n == 1 ? 0.0 : static_cast<double>(x) * (g - 1) / (n - 1);
      const int x0 = std::min(static_cast<int>(fx), g - 2);
      const double ax = fx - x0;
      const double v00 = grid[y0 * g + x0], v01 = grid[y0 * g + x0 + 1];
      const double v10 = grid[(y0 + 1) * g + x0], v11 = grid[(y0 + 1) * g + x0 + 1];
      out[static_cast<std::size_t>(y) * n + x] =
          (1 - ay) * ((1 - ax) * v00 + ax * v01) + ay * ((1 - ax) * v10 + ax * v11);
    }
  }
  return out;
}

std::vector<double> smooth_noise(std::mt19937_64& rng, int grid, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> g(static_cast<std::size_t>(grid) * grid);
  for (auto& v : g) v = normal(rng);
  return upsample_grid(g, grid, n);
}

// Normalised elliptical radius of pixel centre (y, x) for nucleus n.
double ellipse_radius(const Nucleus& n, double y, double x) {
  const double dy = y - n.cy, dx = x - n.cx;
  const double c = std::cos(n.angle), s = std::sin(n.angle);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::sqrt((u / n.rx) * (u / n.rx) + (v / n.ry) * (v / n.ry));
}

double coverage(double rho) { return std::clamp((1.0 - rho) / 0.25, 0.0, 1.0); }

double sample_plane(const std::vector<float>& plane, int h, int w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int y0 = std::min(static_cast<int>(y), h - 1);
  const int x0 = std::min(static_cast<int>(x), w - 1);
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double ay = y - y0, ax = x - x0;
  auto at = [&](int yy, int xx) { return static_cast<double>(plane[yy * w + xx]); };
  return (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x1)) +
         ay * ((1 - ax) * at(y1, x0) + ax * at(y1, x1));
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void SyntheticParams::validate() const {
  if (image_size < 16 || image_size % 16 != 0) {
    throw InvalidArgument("image_size must be a positive multiple of 16");
  }
  if (n_nuclei < 0) throw InvalidArgument("n_nuclei must be >= 0");
  if (!(positivity_rate >= 0.0 && positivity_rate <= 1.0)) {
    throw InvalidArgument("positivity_rate must be in [0,1]");
  }
  if (!(texture_scale >= 0.0)) throw InvalidArgument("texture_scale must be >= 0");
  if (clusters < 1) throw InvalidArgument("clusters must be >= 1");
  if (!(morphology_coupling >= 0.0 && morphology_coupling <= 1.0)) {
    throw InvalidArgument("morphology_coupling must be in [0,1]");
  }
  thresholds.validate();
}

std::vector<double> SyntheticPair::dab_intensities() const {
  std::vector<double> out;
  out.reserve(nuclei.size());
  for (const auto& n : nuclei) out.push_back(n.dab);
  return out;
}

void ihc_nucleus_colour(double dab, double out[3]) noexcept {
  for (int c = 0; c < 3; ++c) out[c] = kCounterstain[c] + dab * (kDab[c] - kCounterstain[c]);
}

double dab_from_colour(const double rgb[3]) noexcept {
  double num = 0.0, den = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double axis = kDab[c] - kCounterstain[c];
    num += (rgb[c] - kCounterstain[c]) * axis;
    den += axis * axis;
  }
  return std::clamp(num / den, 0.0, 1.0);
}

SyntheticPair generate_pair(std::uint64_t seed, const SyntheticParams& params) {
  params.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = params.image_size;
  const double scale = n / 64.0;
  const auto& t = params.thresholds;
  const double bands[5] = {0.0, t.t1, t.t2, t.t3, 1.0};

  struct Cluster {
    double cy, cx;
    int cls;
  };
  std::vector<Cluster> clusters;
  for (int k = 0; k < params.clusters; ++k) {
    Cluster c{};
    c.cy = (0.2 + 0.6 * unif(rng)) * n;
    c.cx = (0.2 + 0.6 * unif(rng)) * n;
    c.cls = unif(rng) < params.positivity_rate ? 1 + static_cast<int>(unif(rng) * 3.0) : 0;
    c.cls = std::min(c.cls, 3);
    clusters.push_back(c);
  }

  SyntheticPair pair;
  pair.seed = seed;
  pair.params = params;
  const double coupling = params.morphology_coupling;
  for (int i = 0; i < params.n_nuclei; ++i) {
    Nucleus nu;
    nu.cluster = static_cast<int>(unif(rng) * params.clusters) % params.clusters;
    const auto& cl = clusters[nu.cluster];
    nu.intensity_class = cl.cls;
    // Keep clear of the band edges so the class is unambiguous.
    const double lo = bands[cl.cls], hi = bands[cl.cls + 1];
    nu.dab = cl.cls == 0 ? 0.0 : lo + (0.05 + 0.9 * unif(rng)) * (hi - lo);
    const double grow = 1.0 + coupling * 0.35 * nu.dab;
    nu.ry = (2.2 + 1.0 * unif(rng)) * scale * grow;
    nu.rx = (2.2 + 1.0 * unif(rng)) * scale * grow;
    nu.angle = unif(rng) * kPi;
    const double spread = 0.15 * n;
    nu.cy = std::clamp(cl.cy + spread * normal(rng), 3.0 * scale, n - 1 - 3.0 * scale);
    nu.cx = std::clamp(cl.cx + spread * normal(rng), 3.0 * scale, n - 1 - 3.0 * scale);
    pair.nuclei.push_back(nu);
  }
  for (const auto& nu : pair.nuclei) {
    switch (nu.intensity_class) {
      case 0: ++pair.counts.n0; break;
      case 1: ++pair.counts.n1; break;
      case 2: ++pair.counts.n2; break;
      default: ++pair.counts.n3; break;
    }
  }
  pair.counts.n_total = params.n_nuclei;

  std::vector<double> shade(pair.nuclei.size());
  for (std::size_t i = 0; i < shade.size(); ++i) {
    shade[i] = 1.0 + 0.15 * (1.0 - coupling) * (2.0 * unif(rng) - 1.0) -
               0.35 * coupling * pair.nuclei[i].dab;
  }
  const auto tex_he = smooth_noise(rng, 6, n);
  const auto tex_ihc = smooth_noise(rng, 6, n);

  const std::size_t plane = static_cast<std::size_t>(n) * n;
  std::vector<float> he(3 * plane), ihc(3 * plane);
  pair.molecular_map.assign(plane, 0.0f);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * n + x;
      double he_px[3], ihc_px[3], mol = 0.0;
      for (int c = 0; c < 3; ++c) {
        he_px[c] = kHeBackground[c] + params.texture_scale * tex_he[p];
        ihc_px[c] = kIhcBackground[c] + params.texture_scale * tex_ihc[p];
      }
      for (std::size_t i = 0; i < pair.nuclei.size(); ++i) {
        const auto& nu = pair.nuclei[i];
        const double a = coverage(ellipse_radius(nu, y, x));
        if (a <= 0.0) continue;
        double stain[3];
        ihc_nucleus_colour(nu.dab, stain);
        for (int c = 0; c < 3; ++c) {
          he_px[c] += a * (kHematoxylin[c] * shade[i] - he_px[c]);
          ihc_px[c] += a * (stain[c] - ihc_px[c]);
        }
        mol += a * (nu.dab - mol);
      }
      for (int c = 0; c < 3; ++c) {
        he[c * plane + p] = quantize16(he_px[c]);
        ihc[c * plane + p] = quantize16(ihc_px[c]);
      }
      pair.molecular_map[p] = static_cast<float>(mol);
    }
  }
  pair.x_he = Image(n, n, std::move(he));
  pair.x_ihc = Image(n, n, std::move(ihc));
  return pair;
}

std::vector<double> measure_dab(const Image& ihc, const std::vector<Nucleus>& nuclei) {
  std::vector<double> out;
  const int h = ihc.height(), w = ihc.width();
  for (const auto& nu : nuclei) {
    double acc[3] = {0, 0, 0};
    int count = 0;
    const int r = static_cast<int>(std::ceil(std::max(nu.rx, nu.ry)));
    for (int y = std::max(0, static_cast<int>(nu.cy) - r); y <= std::min(h - 1, static_cast<int>(nu.cy) + r); ++y) {
      for (int x = std::max(0, static_cast<int>(nu.cx) - r); x <= std::min(w - 1, static_cast<int>(nu.cx) + r); ++x) {
        if (ellipse_radius(nu, y, x) > 0.5) continue;
        for (int c = 0; c < 3; ++c) acc[c] += ihc.at(c, y, x);
        ++count;
      }
    }
    if (count == 0) {
      const int y = std::clamp(static_cast<int>(std::lround(nu.cy)), 0, h - 1);
      const int x = std::clamp(static_cast<int>(std::lround(nu.cx)), 0, w - 1);
      for (int c = 0; c < 3; ++c) acc[c] = ihc.at(c, y, x);
      count = 1;
    }
    for (double& v : acc) v /= count;
    out.push_back(dab_from_colour(acc));
  }
  return out;
}

DisplacementField DisplacementField::zeros(int h, int w) {
  DisplacementField f;
  f.h = h;
  f.w = w;
  f.dy.assign(static_cast<std::size_t>(h) * w, 0.0f);
  f.dx.assign(static_cast<std::size_t>(h) * w, 0.0f);
  return f;
}

double DisplacementField::mean_magnitude() const {
  if (dy.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < dy.size(); ++i) s += std::hypot(dy[i], dx[i]);
  return s / static_cast<double>(dy.size());
}

double DisplacementField::max_magnitude() const {
  double m = 0.0;
  for (std::size_t i = 0; i < dy.size(); ++i) m = std::max(m, std::hypot<double>(dy[i], dx[i]));
  return m;
}

Image warp_image(const Image& image, const DisplacementField& field) {
  const int h = image.height(), w = image.width();
  if (field.h != h || field.w != w) throw ShapeError("displacement field size differs from image");
  const std::size_t plane = image.plane_size();
  std::vector<float> out(3 * plane);
  for (int c = 0; c < 3; ++c) {
    std::vector<float> src(image.data().begin() + c * plane, image.data().begin() + (c + 1) * plane);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const double v = sample_plane(src, h, w, y + field.dy[p], x + field.dx[p]);
        out[c * plane + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return Image(h, w, std::move(out));
}

Misalignment inject_misalignment(const SyntheticPair& pair, double magnitude, std::uint64_t seed) {
  if (!(magnitude >= 0.0)) throw InvalidArgument("misalignment magnitude must be >= 0");
  const int h = pair.x_ihc.height(), w = pair.x_ihc.width();
  Misalignment m{pair, DisplacementField::zeros(h, w), DisplacementField::zeros(h, w)};
  if (magnitude == 0.0) return m;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const double theta = 0.05 * unif(rng);
  const double s = 1.0 + 0.03 * unif(rng);
  const double ty = 0.5 * unif(rng), tx = 0.5 * unif(rng);
  const auto jy = smooth_noise(rng, 4, std::max(h, w));
  const auto jx = smooth_noise(rng, 4, std::max(h, w));
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double a00 = s * std::cos(theta) - 1.0, a01 = -s * std::sin(theta);
  const double a10 = s * std::sin(theta), a11 = s * std::cos(theta) - 1.0;
  auto& f = m.forward;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const std::size_t q = static_cast<std::size_t>(y) * std::max(h, w) + x;
      const double ry = y - cy, rx = x - cx;
      f.dy[p] = static_cast<float>(a10 * rx + a11 * ry + ty + 0.3 * jy[q]);
      f.dx[p] = static_cast<float>(a00 * rx + a01 * ry + tx + 0.3 * jx[q]);
    }
  }
  const double peak = f.max_magnitude();
  if (peak > 0.0) {
    const double k = magnitude / peak;
    for (auto& v : f.dy) v = static_cast<float>(v * k);
    for (auto& v : f.dx) v = static_cast<float>(v * k);
  }
  // Fixed point of p = q - d(p) gives the inverse displacement at q.
  auto& inv = m.inverse;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double py = y, px = x;
      for (int it = 0; it < 50; ++it) {
        py = y - sample_plane(f.dy, h, w, py, px);
        px = x - sample_plane(f.dx, h, w, py, px);
      }
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      inv.dy[p] = static_cast<float>(py - y);
      inv.dx[p] = static_cast<float>(px - x);
    }
  }
  m.pair.x_ihc = warp_image(pair.x_ihc, f);
  return m;
}

namespace {

void write_netpbm(const std::filesystem::path& path, const char* magic, int h, int w, int channels,
                  const std::vector<float>& planar) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << magic << '\n' << w << ' ' << h << "\n65535\n";
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<unsigned char> buf;
  buf.reserve(plane * channels * 2);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < channels; ++c) {
      const double v = std::clamp(static_cast<double>(planar[c * plane + p]), 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * 65535.0));
      buf.push_back(static_cast<unsigned char>(q >> 8));
      buf.push_back(static_cast<unsigned char>(q & 0xff));
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<float> read_netpbm(const std::filesystem::path& path, const std::string& magic,
                               int channels, int& h, int& w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingPrerequisiteError("missing image " + path.string());
  std::string m;
  int maxval = 0;
  in >> m;
  auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
  };
  skip_comments();
  in >> w;
  skip_comments();
  in >> h;
  skip_comments();
  in >> maxval;
  in.get();
  if (m != magic || !in || w < 1 || h < 1 || (maxval != 255 && maxval != 65535)) {
    throw FormatError(FormatErrorKind::kMalformed, "unsupported image header in " + path.string());
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int bytes = maxval == 65535 ? 2 : 1;
  std::vector<unsigned char> buf(plane * channels * bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw FormatError(FormatErrorKind::kTruncated, "short image payload in " + path.string());
  }
  std::vector<float> planar(plane * channels);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t i = (p * channels + c) * bytes;
      const unsigned v = bytes == 2 ? (buf[i] << 8) | buf[i + 1] : buf[i];
      planar[c * plane + p] = static_cast<float>(v / static_cast<double>(maxval));
    }
  }
  return planar;
}

json params_to_json(const SyntheticParams& p) {
  return {{"image_size", p.image_size},
          {"n_nuclei", p.n_nuclei},
          {"positivity_rate", p.positivity_rate},
          {"texture_scale", p.texture_scale},
          {"clusters", p.clusters},
          {"morphology_coupling", p.morphology_coupling},
          {"dab_thresholds", {p.thresholds.t1, p.thresholds.t2, p.thresholds.t3}}};
}

SyntheticParams params_from_json(const json& j) {
  SyntheticParams p;
  p.image_size = j.at("image_size").get<int>();
  p.n_nuclei = j.at("n_nuclei").get<int>();
  p.positivity_rate = j.at("positivity_rate").get<double>();
  p.texture_scale = j.at("texture_scale").get<double>();
  p.clusters = j.at("clusters").get<int>();
  p.morphology_coupling = j.at("morphology_coupling").get<double>();
  const auto& t = j.at("dab_thresholds");
  p.thresholds = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
  return p;
}

std::string pair_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%04d", index);
  return buf;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingPrerequisiteError("missing " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformed, path.string() + ": " + e.what());
  }
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& image) {
  write_netpbm(path, "P6", image.height(), image.width(), 3, image.data());
}

Image read_ppm(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto planar = read_netpbm(path, "P6", 3, h, w);
  return Image(h, w, std::move(planar));
}

std::uint64_t pair_seed(std::uint64_t dataset_seed, int split, int index) noexcept {
  return splitmix64(splitmix64(dataset_seed) ^ (static_cast<std::uint64_t>(split) << 32) ^
                    static_cast<std::uint64_t>(index));
}

void write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec) {
  spec.params.validate();
  if (spec.train_pairs < 1 || spec.eval_pairs < 0) {
    throw InvalidArgument("dataset needs at least one training pair");
  }
  std::filesystem::create_directories(dir);
  const char* splits[2] = {"train", "eval"};
  const int sizes[2] = {spec.train_pairs, spec.eval_pairs};
  for (int s = 0; s < 2; ++s) {
    const auto sub = dir / splits[s];
    std::filesystem::create_directories(sub);
    for (int i = 0; i < sizes[s]; ++i) {
      const auto seed = pair_seed(spec.seed, s, i);
      const auto pair = generate_pair(seed, spec.params);
      const auto stem = pair_stem(i);
      write_ppm(sub / (stem + "_he.ppm"), pair.x_he);
      write_ppm(sub / (stem + "_ihc.ppm"), pair.x_ihc);
      write_netpbm(sub / (stem + "_mol.pgm"), "P5", pair.x_he.height(), pair.x_he.width(), 1,
                   pair.molecular_map);
      json nuclei = json::array();
      for (const auto& n : pair.nuclei) {
        nuclei.push_back({{"cy", n.cy}, {"cx", n.cx}, {"ry", n.ry}, {"rx", n.rx},
                          {"angle", n.angle}, {"cluster", n.cluster},
                          {"class", n.intensity_class}, {"dab", n.dab}});
      }
      json side = {{"seed", seed},
                   {"params", params_to_json(pair.params)},
                   {"counts",
                    {{"n0", pair.counts.n0}, {"n1", pair.counts.n1}, {"n2", pair.counts.n2},
                     {"n3", pair.counts.n3}, {"n_total", pair.counts.n_total}}},
                   {"nuclei", nuclei}};
      std::ofstream out(sub / (stem + ".json"));
      out << side.dump(1) << '\n';
    }
  }
  json meta = {{"seed", spec.seed},
               {"train_pairs", spec.train_pairs},
               {"eval_pairs", spec.eval_pairs},
               {"params", params_to_json(spec.params)}};
  std::ofstream out(dir / "dataset.json");
  out << meta.dump(1) << '\n';
}

DatasetSpec read_dataset_spec(const std::filesystem::path& dir) {
  const auto j = read_json(dir / "dataset.json");
  DatasetSpec s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_pairs = j.at("train_pairs").get<int>();
    s.eval_pairs = j.at("eval_pairs").get<int>();
    s.params = params_from_json(j.at("params"));
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformed, std::string("dataset.json: ") + e.what());
  }
  return s;
}

std::vector<SyntheticPair> read_split(const std::filesystem::path& dir, const std::string& split) {
  if (split != "train" && split != "eval") throw InvalidArgument("split must be train or eval");
  const auto spec = read_dataset_spec(dir);
  const int count = split == "train" ? spec.train_pairs : spec.eval_pairs;
  std::vector<SyntheticPair> out;
  for (int i = 0; i < count; ++i) {
    const auto stem = pair_stem(i);
    const auto sub = dir / split;
    SyntheticPair p;
    p.x_he = read_ppm(sub / (stem + "_he.ppm"));
    p.x_ihc = read_ppm(sub / (stem + "_ihc.ppm"));
    int h = 0, w = 0;
    p.molecular_map = read_netpbm(sub / (stem + "_mol.pgm"), "P5", 1, h, w);
    const auto side = read_json(sub / (stem + ".json"));
    try {
      p.seed = side.at("seed").get<std::uint64_t>();
      p.params = params_from_json(side.at("params"));
      const auto& c = side.at("counts");
      p.counts = {c.at("n0").get<std::int64_t>(), c.at("n1").get<std::int64_t>(),
                  c.at("n2").get<std::int64_t>(), c.at("n3").get<std::int64_t>(),
                  c.at("n_total").get<std::int64_t>()};
      for (const auto& n : side.at("nuclei")) {
        Nucleus nu;
        nu.cy = n.at("cy").get<double>();
        nu.cx = n.at("cx").get<double>();
        nu.ry = n.at("ry").get<double>();
        nu.rx = n.at("rx").get<double>();
        nu.angle = n.at("angle").get<double>();
        nu.cluster = n.at("cluster").get<int>();
        nu.intensity_class = n.at("class").get<int>();
        nu.dab = n.at("dab").get<double>();
        p.nuclei.push_back(nu);
      }
    } catch (const json::exception& e) {
      throw FormatError(FormatErrorKind::kMalformed, stem + ".json: " + e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace stainvar
