#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <string>
#include <vector>

#include "msbridge/bridge.hpp"
#include "msbridge/errors.hpp"
#include "msbridge/metrics.hpp"
#include "msbridge/model.hpp"

namespace msbridge {

/// Domain separation in latent space as a function of the encoding depth
/// tau, measured as MMD between the two encoded sets. Bootstrap standard
/// errors are present only when requested.
struct OverlapCurve {
  std::vector<float> taus;  // strictly descending, each in (0,1]
  std::vector<double> mmd_values;
  std::vector<double> bootstrap_se;  // empty or one entry per tau
  int samples_per_domain = 0;

  void validate() const {
    if (taus.empty()) throw ContractError("overlap curve is empty");
    if (taus.size() != mmd_values.size()) {
      throw DimensionError("overlap curve: " + std::to_string(taus.size()) + " taus vs " +
                           std::to_string(mmd_values.size()) + " values");
    }
    if (!bootstrap_se.empty() && bootstrap_se.size() != taus.size()) {
      throw DimensionError("overlap curve: standard-error list length mismatch");
    }
    for (size_t i = 0; i < taus.size(); ++i) {
      if (!(taus[i] > 0.0f && taus[i] <= 1.0f)) {
        throw ConfigError("overlap tau " + std::to_string(taus[i]) + " outside (0,1]");
      }
      if (i > 0 && !(taus[i] < taus[i - 1])) {
        throw ConfigError("overlap taus must be strictly descending");
      }
    }
  }
};

namespace detail {

inline void require_descending_taus(const std::vector<float>& taus) {
  if (taus.empty()) throw ConfigError("need at least one tau");
  for (size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0f && taus[i] <= 1.0f)) {
      throw ConfigError("tau " + std::to_string(taus[i]) + " outside (0,1]");
    }
    if (i > 0 && !(taus[i] < taus[i - 1])) {
      throw ConfigError("taus must be strictly descending");
    }
  }
}

}  // namespace detail

/// Encodes both sets to z_tau under their own labels for every tau and
/// measures the MMD between the encoded sets. tau = 1 short-circuits to
/// the raw samples, so that point equals mmd_rbf(a, b) exactly.
/// `bootstrap_resamples` > 0 adds a bootstrap standard error per point.
inline OverlapCurve overlap_curve(const VectorFieldModel& model, const SampleSet& a,
                                  DomainLabel label_a, const SampleSet& b, DomainLabel label_b,
                                  const std::vector<float>& taus, const BridgeConfig& cfg,
                                  int bootstrap_resamples = 0) {
  detail::require_descending_taus(taus);
  a.validate();
  b.validate();
  if (a.items.size() < 50 || b.items.size() < 50) {
    throw ContractError("overlap_curve: need at least 50 samples per domain, got " +
                        std::to_string(a.items.size()) + " and " + std::to_string(b.items.size()));
  }
  model.validate_label(label_a, /*allow_null=*/false);
  model.validate_label(label_b, /*allow_null=*/false);

  const Tensor raw_a = a.matrix();
  const Tensor raw_b = b.matrix();

  OverlapCurve curve;
  curve.taus = taus;
  curve.samples_per_domain = static_cast<int>(std::min(a.items.size(), b.items.size()));
  for (const float tau : taus) {
    Tensor za, zb;
    if (tau == 1.0f) {
      za = raw_a;
      zb = raw_b;
    } else {
      BridgeConfig point_cfg = cfg;
      point_cfg.tau = tau;
      za = encode(model, raw_a, label_a, point_cfg);
      zb = encode(model, raw_b, label_b, point_cfg);
    }
    const SampleSet sa = SampleSet::from_matrix(za, a.domain);
    const SampleSet sb = SampleSet::from_matrix(zb, b.domain);
    const std::vector<float> bw = median_heuristic_bandwidths(sa, sb);
    curve.mmd_values.push_back(mmd_rbf(sa, sb, bw));
    if (bootstrap_resamples > 0) {
      Rng rng(Rng::derive(0xd1a60511u, static_cast<uint64_t>(curve.mmd_values.size())));
      curve.bootstrap_se.push_back(mmd_bootstrap_se(sa, sb, bw, bootstrap_resamples, rng));
    }
  }
  curve.validate();
  return curve;
}

/// CSV rendering: tau,mmd[,bootstrap_se] with a header row.
inline std::string overlap_csv(const OverlapCurve& curve) {
  curve.validate();
  const bool with_se = !curve.bootstrap_se.empty();
  std::string out = with_se ? "tau,mmd,bootstrap_se\n" : "tau,mmd\n";
  char buf[96];
  for (size_t i = 0; i < curve.taus.size(); ++i) {
    if (with_se) {
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n",
                    static_cast<double>(curve.taus[i]), curve.mmd_values[i],
                    curve.bootstrap_se[i]);
    } else {
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", static_cast<double>(curve.taus[i]),
                    curve.mmd_values[i]);
    }
    out += buf;
  }
  return out;
}

/// Two-component PCA scatter of both latent sets, exported as CSV
/// (x,y,set) for external plotting. Figure aid only; nothing asserts on
/// the embedding.
inline std::string pca_scatter_csv(const Tensor& za, const Tensor& zb) {
  za.require_2d();
  zb.require_2d();
  if (za.cols() != zb.cols()) throw DimensionError("pca_scatter: sample widths differ");
  const int n = za.rows() + zb.rows();
  const int d = za.cols();

  Eigen::MatrixXd pooled(n, d);
  for (int i = 0; i < za.rows(); ++i) {
    for (int j = 0; j < d; ++j) pooled(i, j) = za.at(i, j);
  }
  for (int i = 0; i < zb.rows(); ++i) {
    for (int j = 0; j < d; ++j) pooled(za.rows() + i, j) = zb.at(i, j);
  }
  const Eigen::RowVectorXd mean = pooled.colwise().mean();
  pooled.rowwise() -= mean;
  const Eigen::MatrixXd cov = pooled.transpose() * pooled / std::max(n - 1, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("pca_scatter: eigendecomposition failed");
  // top-2 components; eigenvalues ascend, take the last columns
  Eigen::MatrixXd basis(d, 2);
  basis.col(0) = es.eigenvectors().col(d - 1);
  basis.col(1) = d >= 2 ? es.eigenvectors().col(d - 2) : es.eigenvectors().col(d - 1);
  const Eigen::MatrixXd proj = pooled * basis;

  std::string out = "x,y,set\n";
  char buf[96];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%c\n", proj(i, 0), proj(i, 1),
                  i < za.rows() ? 'a' : 'b');
    out += buf;
  }
  return out;
}

}  // namespace msbridge
