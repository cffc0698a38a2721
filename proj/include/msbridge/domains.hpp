#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "msbridge/metrics.hpp"
#include "msbridge/rng.hpp"
#include "msbridge/tensor.hpp"

namespace msbridge {

// ---------------------------------------------------------------------------
// 2D point-cloud domains

/// Named 2D toy distribution. Samples are standardized with the analytic
/// mean/variance of the noiseless base shape (not per-draw statistics), so
/// the map from raw to standardized coordinates is a fixed affine
/// transform independent of seed, count and noise.
struct PointCloudDomain {
  std::string generator;  // two_moons | two_rings | checkerboard | gaussian_mixture
  float noise_sigma = 0.05f;
  int n = 0;
  uint64_t seed = 0;
};

namespace detail {

constexpr double kPi = 3.14159265358979323846;

struct Affine2 {
  double mean_x, mean_y, std_x, std_y;
};

/// Analytic first/second moments of each noiseless generator.
inline Affine2 generator_moments(const std::string& g) {
  if (g == "two_moons") {
    // upper arc (cos a, sin a), lower arc (1 - cos a, 0.5 - sin a), a ~ U(0, pi)
    const double var_x = 1.0 - 0.25;            // E[x^2] = 1, mean 0.5
    const double var_y = 0.5625 - 1.0 / kPi;    // E[y^2] = 0.625 - 1/pi, mean 0.25
    return {0.5, 0.25, std::sqrt(var_x), std::sqrt(var_y)};
  }
  if (g == "two_rings") {
    // concentric circles, radii 1 and 0.5, uniform angle
    const double var = 0.5 * (1.0 + 0.25) / 2.0;  // E[r^2 cos^2] = r^2/2 averaged
    return {0.0, 0.0, std::sqrt(var), std::sqrt(var)};
  }
  if (g == "checkerboard") {
    // dark cells of a 4x4 board on [-2,2]^2; marginals are U(-2,2)
    const double var = 16.0 / 12.0;
    return {0.0, 0.0, std::sqrt(var), std::sqrt(var)};
  }
  if (g == "gaussian_mixture") {
    // 8 modes equally spaced on a circle of radius 2
    const double var = 2.0 * 2.0 / 2.0;
    return {0.0, 0.0, std::sqrt(var), std::sqrt(var)};
  }
  throw ConfigError("unknown point generator '" + g + "'");
}

inline void base_point(const std::string& g, Rng& rng, float& x, float& y) {
  if (g == "two_moons") {
    const float a = rng.uniform(0.0f, static_cast<float>(kPi));
    if (rng.bernoulli(0.5)) {
      x = std::cos(a);
      y = std::sin(a);
    } else {
      x = 1.0f - std::cos(a);
      y = 0.5f - std::sin(a);
    }
    return;
  }
  if (g == "two_rings") {
    const float a = rng.uniform(0.0f, static_cast<float>(2.0 * kPi));
    const float r = rng.bernoulli(0.5) ? 1.0f : 0.5f;
    x = r * std::cos(a);
    y = r * std::sin(a);
    return;
  }
  if (g == "checkerboard") {
    // pick one of the 8 dark cells, then uniform inside it
    const int cell = rng.index(8);
    const int row = cell / 2;
    const int col_in_row = cell % 2;
    const int col = 2 * col_in_row + (row % 2);
    x = -2.0f + col * 1.0f + rng.uniform(0.0f, 1.0f);
    y = -2.0f + row * 1.0f + rng.uniform(0.0f, 1.0f);
    return;
  }
  if (g == "gaussian_mixture") {
    const int mode = rng.index(8);
    const float a = static_cast<float>(2.0 * kPi * mode / 8.0);
    x = 2.0f * std::cos(a);
    y = 2.0f * std::sin(a);
    return;
  }
  throw ConfigError("unknown point generator '" + g + "'");
}

}  // namespace detail

/// The fixed standardizing transform of a generator, exposed so callers
/// can map standardized points back to raw shape coordinates.
inline void generator_affine(const std::string& generator, double& mean_x, double& mean_y,
                             double& std_x, double& std_y) {
  const detail::Affine2 a = detail::generator_moments(generator);
  mean_x = a.mean_x;
  mean_y = a.mean_y;
  std_x = a.std_x;
  std_y = a.std_y;
}

/// Seeded draw of n standardized samples from the named 2D distribution,
/// with isotropic Gaussian jitter of noise_sigma applied in raw
/// coordinates before standardization.
inline SampleSet gen_points(const PointCloudDomain& dom) {
  if (dom.n < 1) throw ContractError("gen_points: n must be >= 1");
  if (dom.noise_sigma < 0.0f) throw ConfigError("gen_points: noise_sigma must be non-negative");
  const detail::Affine2 aff = detail::generator_moments(dom.generator);
  Rng rng(dom.seed);
  SampleSet s;
  s.domain = dom.generator;
  s.items.reserve(static_cast<size_t>(dom.n));
  for (int i = 0; i < dom.n; ++i) {
    float x = 0.0f, y = 0.0f;
    detail::base_point(dom.generator, rng, x, y);
    if (dom.noise_sigma > 0.0f) {
      x += rng.normal(0.0f, dom.noise_sigma);
      y += rng.normal(0.0f, dom.noise_sigma);
    }
    Tensor t = Tensor::zeros({1, 2});
    t.data[0] = static_cast<float>((x - aff.mean_x) / aff.std_x);
    t.data[1] = static_cast<float>((y - aff.mean_y) / aff.std_y);
    s.items.push_back(std::move(t));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Phantom image domains

/// Viewing pose: three rotation-like angles in degrees, each restricted to
/// [-40, 40] in 10-degree increments.
struct Pose {
  int rx = 0;
  int ry = 0;
  int rz = 0;

  bool operator==(const Pose& o) const { return rx == o.rx && ry == o.ry && rz == o.rz; }

  void validate() const {
    for (int a : {rx, ry, rz}) {
      if (a < -40 || a > 40 || a % 10 != 0) {
        throw ConfigError("pose angle " + std::to_string(a) +
                          " outside the [-40,40] grid in 10 degree steps");
      }
    }
  }

  /// Stable file-system identifier, e.g. "rx+00_ry-10_rz+40".
  std::string id() const {
    auto part = [](const char* axis, int v) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%s%c%02d", axis, v < 0 ? '-' : '+', std::abs(v));
      return std::string(buf);
    };
    return part("rx", rx) + "_" + part("ry", ry) + "_" + part("rz", rz);
  }

  /// Dense index on the 9x9x9 grid; pins the per-pose rng stream.
  int grid_key() const {
    validate();
    return ((rx / 10 + 4) * 9 + (ry / 10 + 4)) * 9 + (rz / 10 + 4);
  }
};

enum class PhantomStyle { kSynthetic, kReal };
enum class Dose { kLow, kNormal, kHigh };

inline float dose_factor(Dose d) {
  switch (d) {
    case Dose::kLow: return 2.0f;
    case Dose::kNormal: return 1.0f;
    case Dose::kHigh: return 0.5f;
  }
  throw ConfigError("unknown dose");
}

inline std::string dose_name(Dose d) {
  switch (d) {
    case Dose::kLow: return "low";
    case Dose::kNormal: return "normal";
    case Dose::kHigh: return "high";
  }
  throw ConfigError("unknown dose");
}

inline Dose dose_from_name(const std::string& s) {
  if (s == "low") return Dose::kLow;
  if (s == "normal") return Dose::kNormal;
  if (s == "high") return Dose::kHigh;
  throw ConfigError("unknown dose '" + s + "'");
}

/// Degradation knobs of the realistic style. The default values produce
/// the intended domain gap; the all-neutral setting collapses the real
/// style onto the synthetic rendering pixel for pixel.
struct RealStyleParams {
  int blur_passes = 1;          // 3x3 binomial passes
  float halo_strength = 0.05f;  // soft-tissue glow outside the outer ring
  float halo_width = 0.10f;     // decay length in ellipse-coordinate units
  float contrast_floor = 0.10f;
  float contrast_gain = 0.70f;
  float contrast_gamma = 0.75f;
  float noise_alpha = 0.04f;  // signal-dependent (Poisson-like) term
  float noise_beta = 0.015f;  // signal-independent (read-noise) term

  static RealStyleParams neutral() {
    RealStyleParams p;
    p.blur_passes = 0;
    p.halo_strength = 0.0f;
    p.contrast_floor = 0.0f;
    p.contrast_gain = 1.0f;
    p.contrast_gamma = 1.0f;
    p.noise_alpha = 0.0f;
    p.noise_beta = 0.0f;
    return p;
  }
};

struct PhantomImageDomain {
  int resolution = 32;
  PhantomStyle style = PhantomStyle::kSynthetic;
  Dose dose = Dose::kNormal;
  uint64_t seed = 0;
};

namespace detail {

// Tissue values of the noiseless phantom.
constexpr float kExterior = 0.04f;
constexpr float kBone = 0.92f;
constexpr float kBrain = 0.40f;
constexpr float kCavityLeft = 0.22f;
constexpr float kCavityRight = 0.25f;

/// Noiseless tissue value at canonical phantom coordinates (after the
/// pose transform has been inverted). Returns the squared outer-ellipse
/// coordinate as well, for the halo.
inline float tissue_value(float qx, float qy, float& e_out) {
  auto ell = [](float x, float y, float cx, float cy, float ax, float ay) {
    const float dx = (x - cx) / ax;
    const float dy = (y - cy) / ay;
    return dx * dx + dy * dy;
  };
  e_out = ell(qx, qy, 0.0f, 0.0f, 0.80f, 0.65f);
  if (e_out > 1.0f) return kExterior;
  if (ell(qx, qy, 0.0f, 0.0f, 0.62f, 0.48f) > 1.0f) return kBone;
  if (ell(qx, qy, -0.22f, 0.10f, 0.10f, 0.13f) <= 1.0f) return kCavityLeft;
  if (ell(qx, qy, 0.22f, 0.10f, 0.10f, 0.13f) <= 1.0f) return kCavityRight;
  return kBrain;
}

inline Tensor blur3x3(const Tensor& img) {
  const int h = img.rows(), w = img.cols();
  Tensor out = Tensor::zeros({h, w});
  auto clamp = [](int v, int hi) { return std::min(std::max(v, 0), hi - 1); };
  static const float k[3] = {0.25f, 0.5f, 0.25f};
  // separable binomial kernel, replicate borders
  Tensor tmp = Tensor::zeros({h, w});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      float acc = 0.0f;
      for (int d = -1; d <= 1; ++d) acc += k[d + 1] * img.at(i, clamp(j + d, w));
      tmp.at(i, j) = acc;
    }
  }
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      float acc = 0.0f;
      for (int d = -1; d <= 1; ++d) acc += k[d + 1] * tmp.at(clamp(i + d, h), j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Renders one phantom image. The two styles of a pose share the same
/// underlying geometry; the realistic style additionally applies halo,
/// blur, contrast compression and dose-scaled Poisson-Gaussian noise.
/// `shot` distinguishes repeated noisy acquisitions of one pose.
inline Tensor gen_phantom(const PhantomImageDomain& dom, Pose pose, int shot = 0,
                          const RealStyleParams& params = {}) {
  if (dom.resolution < 1) throw ConfigError("phantom resolution must be positive");
  if (shot < 0) throw ConfigError("shot index must be non-negative");
  pose.validate();

  const int res = dom.resolution;
  const float rad = static_cast<float>(detail::kPi / 180.0);
  const float cz = std::cos(pose.rz * rad), sz = std::sin(pose.rz * rad);
  // foreshortening: ry compresses the horizontal axis, rx the vertical
  const float fx = std::cos(pose.ry * rad);
  const float fy = std::cos(pose.rx * rad);

  Tensor geo = Tensor::zeros({res, res});
  Tensor excess = Tensor::zeros({res, res});  // outer-ellipse coordinate beyond 1
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const float u = 2.0f * (static_cast<float>(j) + 0.5f) / res - 1.0f;
      const float v = 1.0f - 2.0f * (static_cast<float>(i) + 0.5f) / res;
      // invert pose: un-rotate, then un-foreshorten
      const float ru = cz * u + sz * v;
      const float rv = -sz * u + cz * v;
      const float qx = ru / fx;
      const float qy = rv / fy;
      float e_out = 0.0f;
      geo.at(i, j) = detail::tissue_value(qx, qy, e_out);
      excess.at(i, j) = std::max(e_out - 1.0f, 0.0f);
    }
  }

  if (dom.style == PhantomStyle::kSynthetic) return geo;

  Tensor img = geo;
  if (params.halo_strength != 0.0f) {
    for (int i = 0; i < res; ++i) {
      for (int j = 0; j < res; ++j) {
        if (excess.at(i, j) > 0.0f) {
          img.at(i, j) += params.halo_strength * std::exp(-excess.at(i, j) / params.halo_width);
        }
      }
    }
  }
  for (int p = 0; p < params.blur_passes; ++p) img = detail::blur3x3(img);
  if (!(params.contrast_floor == 0.0f && params.contrast_gain == 1.0f &&
        params.contrast_gamma == 1.0f)) {
    for (float& v : img.data) {
      v = params.contrast_floor +
          params.contrast_gain * std::pow(std::max(v, 0.0f), params.contrast_gamma);
    }
  }
  if (params.noise_alpha != 0.0f || params.noise_beta != 0.0f) {
    const float f = dose_factor(dom.dose);
    Rng rng(Rng::derive(dom.seed, static_cast<uint64_t>(pose.grid_key()) * 1000003ull +
                                      static_cast<uint64_t>(shot)));
    for (float& v : img.data) {
      const float signal = std::max(v, 0.0f);
      v += params.noise_alpha * std::sqrt(signal) * f * rng.normal() +
           params.noise_beta * rng.normal();
    }
  }
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

// ---------------------------------------------------------------------------
// Geometry masks

/// Mid-edge threshold separating the bright outer ring from everything
/// else, per style (the realistic style shifts levels through its
/// contrast curve).
inline float mask_threshold(PhantomStyle style) {
  return style == PhantomStyle::kSynthetic ? 0.48f : 0.52f;
}

/// Foreground footprint: pixels above the threshold, plus every enclosed
/// hole. Filling holes turns the bright outer ring into the full object
/// footprint, so the mask boundary sits at the ring's outer edge where
/// blur preserves the 50% crossing.
inline std::vector<uint8_t> foreground_mask(const Tensor& img, float threshold) {
  img.require_2d();
  const int h = img.rows(), w = img.cols();
  std::vector<uint8_t> mask(static_cast<size_t>(h) * w, 0);
  for (int64_t i = 0; i < img.numel(); ++i) {
    mask[static_cast<size_t>(i)] = img.data[static_cast<size_t>(i)] > threshold ? 1 : 0;
  }
  // flood-fill background from the border; unreached off pixels are holes
  std::vector<uint8_t> outside(mask.size(), 0);
  std::vector<int> stack;
  auto push = [&](int i, int j) {
    const size_t k = static_cast<size_t>(i) * w + j;
    if (!mask[k] && !outside[k]) {
      outside[k] = 1;
      stack.push_back(static_cast<int>(k));
    }
  };
  for (int j = 0; j < w; ++j) {
    push(0, j);
    push(h - 1, j);
  }
  for (int i = 0; i < h; ++i) {
    push(i, 0);
    push(i, w - 1);
  }
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    const int i = k / w, j = k % w;
    if (i > 0) push(i - 1, j);
    if (i + 1 < h) push(i + 1, j);
    if (j > 0) push(i, j - 1);
    if (j + 1 < w) push(i, j + 1);
  }
  for (size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k] && !outside[k]) mask[k] = 1;
  }
  return mask;
}

/// Intersection-over-union of two binary masks of equal size.
inline double mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  if (a.size() != b.size()) throw DimensionError("mask_iou: size mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    inter += (a[k] && b[k]) ? 1 : 0;
    uni += (a[k] || b[k]) ? 1 : 0;
  }
  if (uni == 0) throw ContractError("mask_iou: both masks empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Pose grids and splits

/// The full legal 9x9x9 pose grid.
inline std::vector<Pose> pose_grid() {
  std::vector<Pose> out;
  out.reserve(729);
  for (int rx = -40; rx <= 40; rx += 10) {
    for (int ry = -40; ry <= 40; ry += 10) {
      for (int rz = -40; rz <= 40; rz += 10) out.push_back(Pose{rx, ry, rz});
    }
  }
  return out;
}

/// In-plane sweep: rz covers the grid, rx = ry = 0.
inline std::vector<Pose> rz_sweep() {
  std::vector<Pose> out;
  for (int rz = -40; rz <= 40; rz += 10) out.push_back(Pose{0, 0, rz});
  return out;
}

struct SplitSpec {
  float test_fraction = 0.15f;
};

struct PoseSplit {
  std::vector<Pose> train;
  std::vector<Pose> test;
};

/// Uniformly samples whole poses into the test side until the fraction is
/// met (rounded, but both sides stay non-empty). Train and test pose sets
/// are disjoint by construction.
inline PoseSplit split_poses(const std::vector<Pose>& poses, const SplitSpec& spec,
                             uint64_t seed) {
  if (!(spec.test_fraction > 0.0f && spec.test_fraction < 1.0f)) {
    throw ConfigError("test_fraction must lie in (0,1)");
  }
  std::vector<Pose> unique;
  for (const Pose& p : poses) {
    p.validate();
    if (std::find(unique.begin(), unique.end(), p) == unique.end()) unique.push_back(p);
  }
  if (unique.size() < 2) throw ContractError("split needs at least 2 distinct poses");

  const int n = static_cast<int>(unique.size());
  int n_test = static_cast<int>(std::llround(static_cast<double>(spec.test_fraction) * n));
  n_test = std::clamp(n_test, 1, n - 1);

  std::vector<int> order(unique.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(seed);
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<size_t>(rng.index(static_cast<int>(i)))]);
  }

  PoseSplit out;
  for (int i = 0; i < n; ++i) {
    (i < n_test ? out.test : out.train).push_back(unique[static_cast<size_t>(order[i])]);
  }
  return out;
}

}  // namespace msbridge
