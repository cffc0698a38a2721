#include "msbridge/diagnostics.hpp"

#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "helpers.hpp"
#include "msbridge/domains.hpp"
#include "msbridge/flow.hpp"

namespace msbridge {
namespace {

SampleSet gaussian_blob(int n, float cx, float cy, uint64_t seed, const std::string& name) {
  Rng rng(seed);
  SampleSet s;
  s.domain = name;
  for (int i = 0; i < n; ++i) {
    Tensor t = Tensor::zeros({1, 2});
    t.data[0] = cx + 0.3f * rng.normal();
    t.data[1] = cy + 0.3f * rng.normal();
    s.items.push_back(std::move(t));
  }
  return s;
}

TEST(OverlapCurve, RejectsBadTauGrids) {
  const VectorFieldModel model(2, 2, {4}, 0);
  const SampleSet a = gaussian_blob(60, -1.0f, 0.0f, 1, "a");
  const SampleSet b = gaussian_blob(60, 1.0f, 0.0f, 2, "b");
  const BridgeConfig cfg;
  EXPECT_THROW(overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{1}, {}, cfg), ConfigError);
  EXPECT_THROW(overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{1}, {0.3f, 0.6f}, cfg),
               ConfigError);
  EXPECT_THROW(overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{1}, {0.5f, 0.5f}, cfg),
               ConfigError);
  EXPECT_THROW(overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{1}, {1.2f, 0.5f}, cfg),
               ConfigError);
  EXPECT_THROW(overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{1}, {0.5f, -0.1f}, cfg),
               ConfigError);
}

TEST(OverlapCurve, RequiresFiftySamplesPerDomain) {
  const VectorFieldModel model(2, 2, {4}, 0);
  const SampleSet a = gaussian_blob(49, -1.0f, 0.0f, 1, "a");
  const SampleSet b = gaussian_blob(60, 1.0f, 0.0f, 2, "b");
  EXPECT_THROW(overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{1}, {1.0f}, BridgeConfig{}),
               ContractError);
}

TEST(OverlapCurve, RejectsNullAndOutOfRangeLabels) {
  const VectorFieldModel model(2, 2, {4}, 0);
  const SampleSet a = gaussian_blob(60, -1.0f, 0.0f, 1, "a");
  const SampleSet b = gaussian_blob(60, 1.0f, 0.0f, 2, "b");
  EXPECT_THROW(
      overlap_curve(model, a, model.null_label(), b, DomainLabel{1}, {1.0f}, BridgeConfig{}),
      LabelError);
  EXPECT_THROW(overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{7}, {1.0f}, BridgeConfig{}),
               LabelError);
}

// tau = 1 takes the identity-encode path, so the curve point must equal the
// direct MMD between the raw sets, bit for bit.
TEST(OverlapCurve, TauOneEqualsDirectMmd) {
  VectorFieldModel model(2, 2, {8}, 3);
  testing::perturb_model(model, 11, 0.3f);
  const SampleSet a = gaussian_blob(64, -1.0f, 0.5f, 21, "a");
  const SampleSet b = gaussian_blob(64, 1.0f, -0.5f, 22, "b");
  const OverlapCurve curve =
      overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{1}, {1.0f}, BridgeConfig{});
  ASSERT_EQ(curve.mmd_values.size(), 1u);
  EXPECT_EQ(curve.mmd_values[0], mmd_rbf(a, b));
  EXPECT_EQ(curve.samples_per_domain, 64);
}

// A freshly initialized model has a zero-valued output head, so encoding is
// the identity at every tau and the curve is exactly constant.
TEST(OverlapCurve, UntrainedModelGivesConstantCurve) {
  const VectorFieldModel model(2, 2, {16, 16}, 9);
  const SampleSet a = gaussian_blob(60, -2.0f, 0.0f, 31, "a");
  const SampleSet b = gaussian_blob(60, 2.0f, 0.0f, 32, "b");
  const OverlapCurve curve = overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{1},
                                           {1.0f, 0.6f, 0.3f}, BridgeConfig{});
  ASSERT_EQ(curve.mmd_values.size(), 3u);
  EXPECT_EQ(curve.mmd_values[0], curve.mmd_values[1]);
  EXPECT_EQ(curve.mmd_values[1], curve.mmd_values[2]);
}

TEST(OverlapCurve, BootstrapErrorsAreOptionalAndPositive) {
  VectorFieldModel model(2, 2, {8}, 3);
  const SampleSet a = gaussian_blob(60, -1.0f, 0.0f, 41, "a");
  const SampleSet b = gaussian_blob(60, 1.0f, 0.0f, 42, "b");
  const OverlapCurve plain =
      overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{1}, {1.0f, 0.5f}, BridgeConfig{});
  EXPECT_TRUE(plain.bootstrap_se.empty());
  const OverlapCurve with_se = overlap_curve(model, a, DomainLabel{0}, b, DomainLabel{1},
                                             {1.0f, 0.5f}, BridgeConfig{}, 30);
  ASSERT_EQ(with_se.bootstrap_se.size(), 2u);
  for (double se : with_se.bootstrap_se) EXPECT_GT(se, 0.0);
}

TEST(OverlapCurve, ValidateCatchesShapeMismatch) {
  OverlapCurve c;
  c.taus = {1.0f, 0.5f};
  c.mmd_values = {0.2};
  EXPECT_THROW(c.validate(), DimensionError);
  c.mmd_values = {0.2, 0.1};
  EXPECT_NO_THROW(c.validate());
  c.taus = {0.5f, 1.0f};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(OverlapCsv, RendersHeaderAndRows) {
  OverlapCurve c;
  c.taus = {1.0f, 0.5f};
  c.mmd_values = {0.25, 0.125};
  c.samples_per_domain = 60;
  const std::string csv = overlap_csv(c);
  EXPECT_EQ(csv, "tau,mmd\n1,0.25\n0.5,0.125\n");
  c.bootstrap_se = {0.5, 0.25};
  const std::string with_se = overlap_csv(c);
  EXPECT_EQ(with_se, "tau,mmd,bootstrap_se\n1,0.25,0.5\n0.5,0.125,0.25\n");
}

TEST(PcaScatter, EmitsOneRowPerSampleDeterministically) {
  Rng rng(50);
  const Tensor za = Tensor::randn({30, 5}, rng);
  const Tensor zb = Tensor::randn({20, 5}, rng);
  const std::string csv = pca_scatter_csv(za, zb);
  EXPECT_EQ(csv, pca_scatter_csv(za, zb));
  size_t lines = 0, a_rows = 0, b_rows = 0;
  for (size_t pos = 0; (pos = csv.find('\n', pos)) != std::string::npos; ++pos) ++lines;
  for (size_t pos = 0; (pos = csv.find(",a\n", pos)) != std::string::npos; ++pos) ++a_rows;
  for (size_t pos = 0; (pos = csv.find(",b\n", pos)) != std::string::npos; ++pos) ++b_rows;
  EXPECT_EQ(lines, 51u);  // header + 50 samples
  EXPECT_EQ(a_rows, 30u);
  EXPECT_EQ(b_rows, 20u);
  EXPECT_EQ(csv.rfind("x,y,set\n", 0), 0u);
}

// The Appendix-of-record claim, desk scale: training a two-style phantom
// bridge makes latent-domain separation shrink as tau decreases.
TEST(OverlapCurve, TrainedPhantomPairSeparationShrinksWithTau) {
  const int res = 12;
  std::vector<Pose> poses;
  for (int rx = -40; rx <= 40; rx += 10) {
    for (int rz = -40; rz <= 40; rz += 10) poses.push_back(Pose{rx, 0, rz});
  }

  SampleSet syn, real;
  syn.domain = "synthetic";
  real.domain = "real";
  PhantomImageDomain ds = {res, PhantomStyle::kSynthetic, Dose::kNormal, 404};
  PhantomImageDomain dr = {res, PhantomStyle::kReal, Dose::kNormal, 404};
  for (const Pose& p : poses) {
    Tensor s = gen_phantom(ds, p);
    Tensor r = gen_phantom(dr, p);
    s.shape = {1, res * res};
    r.shape = {1, res * res};
    syn.items.push_back(std::move(s));
    real.items.push_back(std::move(r));
  }

  VectorFieldModel model(res * res, 2, {128}, 2024);
  TrainConfig tc;
  tc.learning_rate = 2e-3f;
  tc.batch_size = 32;
  tc.epochs = 250;
  tc.warmup_steps = 50;
  tc.seed = 77;
  tc.log_interval = 1000000;
  train(model, {syn.matrix(), real.matrix()}, tc);

  BridgeConfig cfg;
  cfg.steps = 50;
  cfg.encode_guidance = BridgeConfig::EncodeGuidance::kConditional;
  const OverlapCurve curve = overlap_curve(model, syn, DomainLabel{0}, real, DomainLabel{1},
                                           {1.0f, 0.6f, 0.3f}, cfg);
  ASSERT_EQ(curve.mmd_values.size(), 3u);
  EXPECT_LT(curve.mmd_values[1], curve.mmd_values[0])
      << "mmd(0.6)=" << curve.mmd_values[1] << " vs mmd(1.0)=" << curve.mmd_values[0];
  EXPECT_LT(curve.mmd_values[2], curve.mmd_values[1])
      << "mmd(0.3)=" << curve.mmd_values[2] << " vs mmd(0.6)=" << curve.mmd_values[1];
}

}  // namespace
}  // namespace msbridge
