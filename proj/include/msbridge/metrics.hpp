#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "msbridge/rng.hpp"
#include "msbridge/tensor.hpp"

namespace msbridge {

/// A homogeneous collection of samples (images or point rows) tagged with
/// the domain they belong to.
struct SampleSet {
  std::vector<Tensor> items;
  std::string domain;

  void validate() const {
    if (items.empty()) throw ContractError("sample set '" + domain + "' is empty");
    for (size_t i = 1; i < items.size(); ++i) {
      if (items[i].shape != items[0].shape) {
        throw DimensionError("sample set '" + domain + "': item " + std::to_string(i) +
                             " has shape " + shape_str(items[i].shape) + ", expected " +
                             shape_str(items[0].shape));
      }
    }
  }

  static SampleSet from_matrix(const Tensor& m, std::string domain) {
    m.require_2d();
    SampleSet s;
    s.domain = std::move(domain);
    s.items.reserve(static_cast<size_t>(m.rows()));
    for (int i = 0; i < m.rows(); ++i) s.items.push_back(m.row(i));
    return s;
  }

  /// Flattens every item into one row: |items| x numel(item).
  Tensor matrix() const {
    validate();
    const int n = static_cast<int>(items.size());
    const int d = static_cast<int>(items[0].numel());
    Tensor m = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i) {
      std::copy(items[static_cast<size_t>(i)].data.begin(),
                items[static_cast<size_t>(i)].data.end(),
                m.data.begin() + static_cast<size_t>(i) * static_cast<size_t>(d));
    }
    return m;
  }
};

// ---------------------------------------------------------------------------
// SSIM

namespace detail {

inline void check_unit_range(const Tensor& img, const char* which) {
  for (float v : img.data) {
    if (!(v >= -1e-6f && v <= 1.0f + 1e-6f)) {
      throw ContractError(std::string("ssim: ") + which + " has value " + std::to_string(v) +
                          " outside [0,1]");
    }
  }
}

}  // namespace detail

/// Mean local structural similarity over all valid 7x7 uniform windows.
/// Unit dynamic range; C1 = 0.01^2, C2 = 0.03^2; window statistics use the
/// biased (divide by window size) variance. Symmetric in its arguments.
inline double ssim(const Tensor& a, const Tensor& b) {
  a.require_2d();
  b.require_2d();
  if (a.shape != b.shape) {
    throw DimensionError("ssim: shapes " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
  constexpr int kWin = 7;
  const int h = a.rows(), w = a.cols();
  if (h < kWin || w < kWin) {
    throw ContractError("ssim: image " + shape_str(a.shape) + " smaller than the 7x7 window");
  }
  detail::check_unit_range(a, "first image");
  detail::check_unit_range(b, "second image");

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  constexpr double inv_n = 1.0 / (kWin * kWin);

  double total = 0.0;
  int windows = 0;
  for (int i = 0; i + kWin <= h; ++i) {
    for (int j = 0; j + kWin <= w; ++j) {
      double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (int di = 0; di < kWin; ++di) {
        for (int dj = 0; dj < kWin; ++dj) {
          const double x = a.at(i + di, j + dj);
          const double y = b.at(i + di, j + dj);
          sa += x;
          sb += y;
          saa += x * x;
          sbb += y * y;
          sab += x * y;
        }
      }
      const double mx = sa * inv_n, my = sb * inv_n;
      const double vx = saa * inv_n - mx * mx;
      const double vy = sbb * inv_n - my * my;
      const double cxy = sab * inv_n - mx * my;
      const double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
      const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      total += num / den;
      ++windows;
    }
  }
  return total / windows;
}

// ---------------------------------------------------------------------------
// RBF-MMD

namespace detail {

inline Eigen::MatrixXd to_eigen(const Tensor& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) out(i, j) = m.at(i, j);
  }
  return out;
}

inline double sq_dist(const Tensor& m, int i, const Tensor& n, int j) {
  double acc = 0.0;
  for (int k = 0; k < m.cols(); ++k) {
    const double d = static_cast<double>(m.at(i, k)) - static_cast<double>(n.at(j, k));
    acc += d * d;
  }
  return acc;
}

inline double kernel_mix(double d2, const std::vector<float>& bandwidths) {
  double k = 0.0;
  for (float s : bandwidths) {
    k += std::exp(-d2 / (2.0 * static_cast<double>(s) * static_cast<double>(s)));
  }
  return k;
}

inline void check_bandwidths(const std::vector<float>& bandwidths) {
  if (bandwidths.empty()) throw ContractError("mmd: empty bandwidth list");
  for (float s : bandwidths) {
    if (!(s > 0.0f)) throw ContractError("mmd: bandwidth " + std::to_string(s) + " not positive");
  }
}

/// Sums the multiset in ascending order, making the result independent of
/// the order the terms were produced in (so MMD is exactly permutation
/// invariant).
inline double canonical_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

inline double mmd_from_matrices(const Tensor& x, const Tensor& y,
                                const std::vector<float>& bandwidths, bool biased) {
  const int m = x.rows(), n = y.rows();
  std::vector<double> terms;

  terms.clear();
  terms.reserve(static_cast<size_t>(m) * static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (!biased && i == j) continue;
      terms.push_back(kernel_mix(sq_dist(x, i, x, j), bandwidths));
    }
  }
  const double kxx = canonical_sum(terms);

  terms.clear();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!biased && i == j) continue;
      terms.push_back(kernel_mix(sq_dist(y, i, y, j), bandwidths));
    }
  }
  const double kyy = canonical_sum(terms);

  terms.clear();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) terms.push_back(kernel_mix(sq_dist(x, i, y, j), bandwidths));
  }
  const double kxy = canonical_sum(terms);

  // consistent division form: for identical multisets the biased variant
  // cancels to exactly zero (doubling commutes with the shared rounding)
  const double dxx = static_cast<double>(m) * (biased ? m : m - 1);
  const double dyy = static_cast<double>(n) * (biased ? n : n - 1);
  return kxx / dxx + kyy / dyy - 2.0 * kxy / (static_cast<double>(m) * n);
}

}  // namespace detail

/// Median pairwise distance over the pooled samples, scaled by
/// {0.5, 1, 2}. Degenerate (all-identical) pools fall back to bandwidth 1.
inline std::vector<float> median_heuristic_bandwidths(const SampleSet& xs, const SampleSet& ys) {
  const Tensor x = xs.matrix();
  const Tensor y = ys.matrix();
  if (x.cols() != y.cols()) {
    throw DimensionError("bandwidths: sample widths " + std::to_string(x.cols()) + " vs " +
                         std::to_string(y.cols()));
  }
  Tensor pool = Tensor::zeros({x.rows() + y.rows(), x.cols()});
  std::copy(x.data.begin(), x.data.end(), pool.data.begin());
  std::copy(y.data.begin(), y.data.end(), pool.data.begin() + x.data.size());
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(pool.rows()) * (pool.rows() - 1) / 2);
  for (int i = 0; i < pool.rows(); ++i) {
    for (int j = i + 1; j < pool.rows(); ++j) {
      dists.push_back(std::sqrt(detail::sq_dist(pool, i, pool, j)));
    }
  }
  double med = 1.0;
  if (!dists.empty()) {
    const size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<ptrdiff_t>(mid), dists.end());
    med = dists[mid];
  }
  if (!(med > 0.0)) med = 1.0;
  const float m = static_cast<float>(med);
  return {0.5f * m, m, 2.0f * m};
}

/// Unbiased U-statistic estimate of squared MMD under an RBF kernel
/// mixture (may be slightly negative). Both sets need at least 2 samples.
inline double mmd_rbf(const SampleSet& xs, const SampleSet& ys,
                      std::vector<float> bandwidths = {}) {
  const Tensor x = xs.matrix();
  const Tensor y = ys.matrix();
  if (x.cols() != y.cols()) {
    throw DimensionError("mmd: sample widths " + std::to_string(x.cols()) + " vs " +
                         std::to_string(y.cols()));
  }
  if (x.rows() < 2 || y.rows() < 2) {
    throw ContractError("mmd: the unbiased estimator needs at least 2 samples per set");
  }
  if (bandwidths.empty()) bandwidths = median_heuristic_bandwidths(xs, ys);
  detail::check_bandwidths(bandwidths);
  return detail::mmd_from_matrices(x, y, bandwidths, /*biased=*/false);
}

/// Biased V-statistic variant (self-pairs included): non-negative, exactly
/// zero for identical multisets, defined for singletons.
inline double mmd_rbf_biased(const SampleSet& xs, const SampleSet& ys,
                             std::vector<float> bandwidths = {}) {
  const Tensor x = xs.matrix();
  const Tensor y = ys.matrix();
  if (x.cols() != y.cols()) {
    throw DimensionError("mmd: sample widths " + std::to_string(x.cols()) + " vs " +
                         std::to_string(y.cols()));
  }
  if (bandwidths.empty()) bandwidths = median_heuristic_bandwidths(xs, ys);
  detail::check_bandwidths(bandwidths);
  return detail::mmd_from_matrices(x, y, bandwidths, /*biased=*/true);
}

/// Standard error of the unbiased MMD via bootstrap resampling of both
/// sets. Used to judge separation results against sampling noise.
inline double mmd_bootstrap_se(const SampleSet& xs, const SampleSet& ys,
                               std::vector<float> bandwidths, int resamples, Rng& rng) {
  if (resamples < 2) throw ContractError("bootstrap: need at least 2 resamples");
  if (bandwidths.empty()) bandwidths = median_heuristic_bandwidths(xs, ys);
  const Tensor x = xs.matrix();
  const Tensor y = ys.matrix();
  std::vector<double> stats;
  stats.reserve(static_cast<size_t>(resamples));
  Tensor xb = x, yb = y;
  for (int r = 0; r < resamples; ++r) {
    for (int i = 0; i < x.rows(); ++i) {
      const int src = rng.index(x.rows());
      for (int j = 0; j < x.cols(); ++j) xb.at(i, j) = x.at(src, j);
    }
    for (int i = 0; i < y.rows(); ++i) {
      const int src = rng.index(y.rows());
      for (int j = 0; j < y.cols(); ++j) yb.at(i, j) = y.at(src, j);
    }
    stats.push_back(detail::mmd_from_matrices(xb, yb, bandwidths, /*biased=*/false));
  }
  double mean = 0.0;
  for (double s : stats) mean += s;
  mean /= stats.size();
  double var = 0.0;
  for (double s : stats) var += (s - mean) * (s - mean);
  var /= (stats.size() - 1);
  return std::sqrt(var);
}

// ---------------------------------------------------------------------------
// Frechet distance over a fixed feature projection

/// Maps flattened samples into a fixed feature space: identity when the
/// sample is already at most out_dim wide, otherwise a seeded random
/// Gaussian projection with entries N(0, 1/sqrt(D)). The projection for a
/// given input width never changes, so scores are comparable across runs.
struct FeatureExtractor {
  int out_dim = 64;
  uint64_t seed = 0x10F3A6D2C4B5E897ull;

  Tensor project(const SampleSet& s) const {
    const Tensor m = s.matrix();
    if (m.cols() <= out_dim) return m;
    const int d = m.cols();
    Rng rng(Rng::derive(seed, static_cast<uint64_t>(d)));
    Tensor g = Tensor::zeros({d, out_dim});
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    for (float& v : g.data) v = rng.normal(0.0f, scale);
    return matmul(m, g);
  }
};

/// Frechet distance between Gaussian fits from explicit statistics:
/// d^2 = |mu_x - mu_y|^2 + tr(Sx + Sy - 2 (Sx Sy)^{1/2}), the square root
/// taken through the symmetrized product sqrt(Sx) Sy sqrt(Sx).
inline double frechet_from_stats(const Eigen::VectorXd& mu_x, const Eigen::MatrixXd& cov_x,
                                 const Eigen::VectorXd& mu_y, const Eigen::MatrixXd& cov_y) {
  const double mean_term = (mu_x - mu_y).squaredNorm();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_x(cov_x);
  if (es_x.info() != Eigen::Success) throw NumericError("frechet: eigendecomposition failed");
  Eigen::VectorXd ev_x = es_x.eigenvalues();
  for (int i = 0; i < ev_x.size(); ++i) {
    if (ev_x(i) < -1e-8) throw NumericError("frechet: covariance not positive semidefinite");
    ev_x(i) = std::sqrt(std::max(0.0, ev_x(i)));
  }
  const Eigen::MatrixXd sqrt_x =
      es_x.eigenvectors() * ev_x.asDiagonal() * es_x.eigenvectors().transpose();

  const Eigen::MatrixXd prod = sqrt_x * cov_y * sqrt_x;
  // symmetrize against round-off before the second decomposition
  const Eigen::MatrixXd sym = 0.5 * (prod + prod.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_p(sym);
  if (es_p.info() != Eigen::Success) throw NumericError("frechet: eigendecomposition failed");
  double tr_sqrt = 0.0;
  for (int i = 0; i < sym.rows(); ++i) {
    const double lambda = es_p.eigenvalues()(i);
    if (lambda < -1e-6) throw NumericError("frechet: covariance product not positive semidefinite");
    tr_sqrt += std::sqrt(std::max(0.0, lambda));
  }
  return mean_term + cov_x.trace() + cov_y.trace() - 2.0 * tr_sqrt;
}

/// "rFID": Frechet distance between Gaussian fits of the two sets in the
/// extractor's feature space. Covariances are unbiased and regularized by
/// +1e-6 I.
inline double frechet_gaussian(const SampleSet& xs, const SampleSet& ys,
                               const FeatureExtractor& features = {}) {
  const Tensor fx = features.project(xs);
  const Tensor fy = features.project(ys);
  if (fx.cols() != fy.cols()) {
    throw DimensionError("frechet: feature widths " + std::to_string(fx.cols()) + " vs " +
                         std::to_string(fy.cols()));
  }
  if (fx.rows() < 2 || fy.rows() < 2) {
    throw ContractError("frechet: need at least 2 samples per set for a covariance");
  }
  auto stats = [](const Tensor& f) {
    const Eigen::MatrixXd m = detail::to_eigen(f);
    const Eigen::VectorXd mu = m.colwise().mean();
    const Eigen::MatrixXd centered = m.rowwise() - mu.transpose();
    Eigen::MatrixXd cov = (centered.transpose() * centered) / (m.rows() - 1.0);
    cov += 1e-6 * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
    return std::make_pair(mu, cov);
  };
  const auto [mu_x, cov_x] = stats(fx);
  const auto [mu_y, cov_y] = stats(fy);
  return frechet_from_stats(mu_x, cov_x, mu_y, cov_y);
}

// ---------------------------------------------------------------------------
// Coverage

/// Fraction of real samples whose k-nearest-neighbor ball (radius =
/// distance to the k-th nearest other real sample, closed) contains at
/// least one generated sample. Computed in the extractor's feature space.
inline double coverage(const SampleSet& gen, const SampleSet& real, int k = 5,
                       const FeatureExtractor& features = {}) {
  if (k < 1) throw ContractError("coverage: k must be positive");
  const Tensor g = features.project(gen);
  const Tensor r = features.project(real);
  if (g.cols() != r.cols()) {
    throw DimensionError("coverage: feature widths " + std::to_string(g.cols()) + " vs " +
                         std::to_string(r.cols()));
  }
  const int nr = r.rows();
  if (nr <= k) {
    throw ContractError("coverage: need more than k=" + std::to_string(k) +
                        " real samples, got " + std::to_string(nr));
  }
  int covered = 0;
  std::vector<double> d2(static_cast<size_t>(nr));
  for (int i = 0; i < nr; ++i) {
    size_t m = 0;
    for (int j = 0; j < nr; ++j) {
      if (j == i) continue;
      d2[m++] = detail::sq_dist(r, i, r, j);
    }
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.begin() + static_cast<ptrdiff_t>(m));
    const double radius2 = d2[static_cast<size_t>(k - 1)];
    for (int j = 0; j < g.rows(); ++j) {
      if (detail::sq_dist(g, j, r, i) <= radius2) {
        ++covered;
        break;
      }
    }
  }
  return static_cast<double>(covered) / nr;
}

// ---------------------------------------------------------------------------
// Rank aggregation

/// Raw metric values for one method. Keys: rfid, mmd, coverage, ssim,
/// source_l2.
using MethodScores = std::map<std::string, double>;

struct MethodReport {
  double rfid = 0.0;
  double mmd = 0.0;
  double coverage = 0.0;
  double ssim = 0.0;
  double source_l2 = 0.0;
  double realism_rank = 0.0;
  double structure_rank = 0.0;
  double average_rank = 0.0;
};

struct MetricsReport {
  std::map<std::string, MethodReport> methods;
};

namespace detail {

/// Competition-free ranking: rank 1 is best; tied values share the mean of
/// the positions they span.
inline std::map<std::string, double> rank_metric(
    const std::vector<std::pair<std::string, double>>& values, bool higher_is_better) {
  std::vector<std::pair<std::string, double>> sorted = values;
  std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
    return higher_is_better ? a.second > b.second : a.second < b.second;
  });
  std::map<std::string, double> ranks;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1].second == sorted[i].second) ++j;
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t p = i; p <= j; ++p) ranks[sorted[p].first] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

inline double fetch(const MethodScores& scores, const std::string& method,
                    const std::string& metric) {
  auto it = scores.find(metric);
  if (it == scores.end() || std::isnan(it->second)) {
    throw ContractError("rank_methods: method '" + method + "' missing metric '" + metric + "'");
  }
  return it->second;
}

}  // namespace detail

/// Aggregates per-method metric values into realism / structure / average
/// ranks. Realism: rfid (lower better), coverage (higher), mmd (lower).
/// Structure: ssim (higher), source_l2 (lower). Ties share the mean rank;
/// the output does not depend on method listing order.
inline MetricsReport rank_methods(const std::map<std::string, MethodScores>& inputs) {
  if (inputs.size() < 2) throw ContractError("rank_methods: need at least 2 methods");

  struct Axis {
    const char* metric;
    bool higher_is_better;
  };
  const std::vector<Axis> realism{{"rfid", false}, {"coverage", true}, {"mmd", false}};
  const std::vector<Axis> structure{{"ssim", true}, {"source_l2", false}};

  auto mean_rank_over = [&](const std::vector<Axis>& axes) {
    std::map<std::string, double> acc;
    for (const Axis& ax : axes) {
      std::vector<std::pair<std::string, double>> column;
      for (const auto& [method, scores] : inputs) {
        column.emplace_back(method, detail::fetch(scores, method, ax.metric));
      }
      for (const auto& [method, rank] : detail::rank_metric(column, ax.higher_is_better)) {
        acc[method] += rank;
      }
    }
    for (auto& [method, sum] : acc) sum /= static_cast<double>(axes.size());
    return acc;
  };

  const auto realism_ranks = mean_rank_over(realism);
  const auto structure_ranks = mean_rank_over(structure);

  MetricsReport report;
  for (const auto& [method, scores] : inputs) {
    MethodReport r;
    r.rfid = detail::fetch(scores, method, "rfid");
    r.mmd = detail::fetch(scores, method, "mmd");
    r.coverage = detail::fetch(scores, method, "coverage");
    r.ssim = detail::fetch(scores, method, "ssim");
    r.source_l2 = detail::fetch(scores, method, "source_l2");
    r.realism_rank = realism_ranks.at(method);
    r.structure_rank = structure_ranks.at(method);
    r.average_rank = 0.5 * (r.realism_rank + r.structure_rank);
    report.methods[method] = r;
  }
  return report;
}

/// Mean relative L2 distance between paired sample sets: the structure
/// axis companion to SSIM.
inline double mean_relative_l2(const SampleSet& produced, const SampleSet& source) {
  const Tensor p = produced.matrix();
  const Tensor s = source.matrix();
  if (p.shape != s.shape) {
    throw DimensionError("relative L2: shapes " + shape_str(p.shape) + " vs " +
                         shape_str(s.shape));
  }
  double total = 0.0;
  for (int i = 0; i < p.rows(); ++i) {
    double num = 0.0, den = 0.0;
    for (int j = 0; j < p.cols(); ++j) {
      const double d = static_cast<double>(p.at(i, j)) - static_cast<double>(s.at(i, j));
      num += d * d;
      den += static_cast<double>(s.at(i, j)) * static_cast<double>(s.at(i, j));
    }
    total += std::sqrt(num / std::max(den, 1e-12));
  }
  return total / p.rows();
}

}  // namespace msbridge
