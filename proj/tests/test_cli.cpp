// Dataset plumbing units plus end-to-end drives of the command-line binary
// (located via the MSBRIDGE_CLI environment variable).

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "msbridge/checkpoint.hpp"
#include "msbridge/config.hpp"
#include "msbridge/corpus.hpp"
#include "msbridge/errors.hpp"
#include "msbridge/tensor.hpp"

namespace fs = std::filesystem;
using namespace msbridge;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  EXPECT_TRUE(in) << "cannot read " << p;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  ASSERT_TRUE(out) << "cannot write " << p;
  out << text;
}

class CorpusTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("msb_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(CorpusTest, RangeMappingRoundTripsAndClamps) {
  Tensor x = Tensor::zeros({1, 4});
  x.data = {0.0f, 0.25f, 0.5f, 1.0f};
  const Tensor m = to_model_range(x);
  EXPECT_FLOAT_EQ(m.at(0, 0), -1.0f);
  EXPECT_FLOAT_EQ(m.at(0, 1), -0.5f);
  EXPECT_FLOAT_EQ(m.at(0, 3), 1.0f);
  const Tensor back = to_pixel_range(m);
  for (int j = 0; j < 4; ++j) EXPECT_FLOAT_EQ(back.at(0, j), x.at(0, j));

  Tensor wild = Tensor::zeros({1, 2});
  wild.data = {-3.0f, 3.0f};
  const Tensor clamped = to_pixel_range(wild);
  EXPECT_FLOAT_EQ(clamped.at(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(clamped.at(0, 1), 1.0f);
}

TEST_F(CorpusTest, SplitCsvRoundTrips) {
  const fs::path p = dir_ / "split.csv";
  write_split_csv(p, {{"rx+00_ry+00_rz+00", "train"}, {"rx+00_ry+00_rz+10", "test"}});
  const auto m = read_split_csv(p);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at("rx+00_ry+00_rz+00"), "train");
  EXPECT_EQ(m.at("rx+00_ry+00_rz+10"), "test");
}

TEST_F(CorpusTest, SplitCsvRejectsBadRows) {
  const fs::path p = dir_ / "split.csv";
  write_file(p, "pose,split\na,train\n");
  EXPECT_THROW(read_split_csv(p), ParseError);
  write_file(p, "pose_id,split\na,validation\n");
  try {
    read_split_csv(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  write_file(p, "pose_id,split\na,train\na,test\n");
  EXPECT_THROW(read_split_csv(p), ParseError);
  write_file(p, "pose_id,split\n");
  EXPECT_THROW(read_split_csv(p), ParseError);
  EXPECT_THROW(read_split_csv(dir_ / "absent.csv"), IoError);
}

TEST_F(CorpusTest, PointsCsvRoundTripsWithOptionalHeader) {
  const fs::path p = dir_ / "pts.csv";
  Tensor pts = Tensor::zeros({3, 2});
  pts.data = {0.5f, -1.25f, 3.0f, 0.0f, -0.0625f, 9.5f};
  write_points_csv(p, pts);
  const Tensor back = read_points_csv(p);
  ASSERT_EQ(back.shape, pts.shape);
  for (size_t i = 0; i < pts.data.size(); ++i) EXPECT_FLOAT_EQ(back.data[i], pts.data[i]);

  write_file(p, "1.5,2.5\n# note\n3.5,4.5\n");
  const Tensor raw = read_points_csv(p);
  ASSERT_EQ(raw.rows(), 2);
  EXPECT_FLOAT_EQ(raw.at(1, 0), 3.5f);
}

TEST_F(CorpusTest, PointsCsvRejectsMalformedRows) {
  const fs::path p = dir_ / "pts.csv";
  write_file(p, "x,y\n1.0,oops\n");
  try {
    read_points_csv(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  write_file(p, "x,y\n");
  EXPECT_THROW(read_points_csv(p), ParseError);
  write_file(p, "1.0\n");
  EXPECT_THROW(read_points_csv(p), ParseError);
}

TEST_F(CorpusTest, ScanCorpusOrdersAndValidatesNames) {
  for (const char* leaf : {"b/normal", "a/low", "a/normal"}) {
    fs::create_directories(dir_ / leaf);
  }
  const Tensor img = Tensor::full({2, 2}, 0.5f);
  save_pgm(img, dir_ / "a/low/p_1.pgm");
  save_pgm(img, dir_ / "a/low/p_0.pgm");
  save_pgm(img, dir_ / "a/normal/p_0.pgm");
  save_pgm(img, dir_ / "b/normal/q_2.pgm");
  write_file(dir_ / "a/low/notes.txt", "ignored");

  const auto files = scan_corpus(dir_);
  ASSERT_EQ(files.size(), 4u);
  EXPECT_EQ(files[0].domain, "a");
  EXPECT_EQ(files[0].dose, "low");
  EXPECT_EQ(files[0].pose_id, "p");
  EXPECT_EQ(files[0].shot, 0);
  EXPECT_EQ(files[1].shot, 1);
  EXPECT_EQ(files[2].dose, "normal");
  EXPECT_EQ(files[3].domain, "b");
  EXPECT_EQ(corpus_domains(files), (std::vector<std::string>{"a", "b"}));

  save_pgm(img, dir_ / "b/normal/noshot.pgm");
  EXPECT_THROW(scan_corpus(dir_), ParseError);
  EXPECT_THROW(scan_corpus(dir_ / "missing"), IoError);
}

TEST_F(CorpusTest, LoadImageSetRejectsMixedShapes) {
  save_pgm(Tensor::full({2, 2}, 0.5f), dir_ / "a.pgm");
  save_pgm(Tensor::full({3, 2}, 0.5f), dir_ / "b.pgm");
  EXPECT_THROW(load_image_set({dir_ / "a.pgm", dir_ / "b.pgm"}), DimensionError);
  EXPECT_THROW(load_image_dir(dir_ / "missing"), IoError);
}

// ---------------------------------------------------------------------------
// Binary-driven tests

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

class CliTest : public CorpusTest {
 protected:
  CliResult run(const std::string& args) {
    const char* bin = std::getenv("MSBRIDGE_CLI");
    EXPECT_NE(bin, nullptr) << "MSBRIDGE_CLI must point at the binary";
    const fs::path out = dir_ / "_stdout.txt";
    const fs::path err = dir_ / "_stderr.txt";
    const std::string cmd = std::string("\"") + bin + "\" " + args + " >" + out.string() +
                            " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
  }

  std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

  /// Tiny two-generator toy checkpoint; epochs picked by the caller.
  void train_toy(const fs::path& ckpt, int epochs, uint64_t seed = 9) {
    write_file(dir_ / "toy.cfg", "batch_size=16\ntoy_samples=64\nepochs=" +
                                     std::to_string(epochs) + "\nseed=" + std::to_string(seed) +
                                     "\n");
    const CliResult r = run("train --config " + q(dir_ / "toy.cfg") +
                            " --toy two_moons,two_rings --out " + q(ckpt));
    ASSERT_EQ(r.code, 0) << r.err;
  }

  /// Tiny phantom corpus: 20 poses, 1 shot, normal dose, 8x8.
  void make_corpus(const fs::path& root, int res = 8) {
    const CliResult r = run("make-data --kind phantoms --out " + q(root) + " --res " +
                            std::to_string(res) + " --poses first:20 --shots 1 --doses normal");
    ASSERT_EQ(r.code, 0) << r.err;
  }
};

TEST_F(CliTest, NoSubcommandFailsAndHelpSucceeds) {
  EXPECT_EQ(run("").code, 2);
  const CliResult help = run("--help");
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("translate"), std::string::npos);
}

TEST_F(CliTest, ZeroEpochTrainingStillEmitsArtifacts) {
  const fs::path ckpt = dir_ / "toy.ckpt";
  train_toy(ckpt, 0);
  const VectorFieldModel m = load_checkpoint(ckpt);
  EXPECT_EQ(m.data_dim(), 2);
  EXPECT_EQ(m.num_domains(), 2);
  EXPECT_EQ(read_file(fs::path(ckpt.string() + ".domains.txt")), "two_moons\ntwo_rings\n");
  EXPECT_EQ(read_file(fs::path(ckpt.string() + ".loss.csv")), "step,loss\n");
  const RunConfig echoed = parse_config(read_file(fs::path(ckpt.string() + ".config.txt")));
  EXPECT_EQ(echoed.train.epochs, 0);
  EXPECT_EQ(echoed.model.num_domains, 2);
  EXPECT_EQ(echoed.data.toy, (std::vector<std::string>{"two_moons", "two_rings"}));
}

TEST_F(CliTest, SeededTrainingIsByteReproducible) {
  train_toy(dir_ / "a.ckpt", 2, 42);
  train_toy(dir_ / "b.ckpt", 2, 42);
  train_toy(dir_ / "c.ckpt", 2, 43);
  EXPECT_EQ(read_file(dir_ / "a.ckpt.loss.csv"), read_file(dir_ / "b.ckpt.loss.csv"));
  EXPECT_EQ(read_file(dir_ / "a.ckpt"), read_file(dir_ / "b.ckpt"));
  EXPECT_NE(read_file(dir_ / "a.ckpt.loss.csv"), read_file(dir_ / "c.ckpt.loss.csv"));
}

TEST_F(CliTest, MakeDataWritesManifestAndMatchingStyleTrees) {
  const fs::path root = dir_ / "corpus";
  make_corpus(root);
  const auto split = read_split_csv(root / "split.csv");
  EXPECT_EQ(split.size(), 20u);
  int test_count = 0;
  for (const auto& [pose, side] : split) {
    (void)pose;
    test_count += side == "test" ? 1 : 0;
  }
  EXPECT_EQ(test_count, 3);  // 15% of 20

  auto names = [](const fs::path& d) {
    std::vector<std::string> out;
    for (const auto& p : list_pgms(d)) out.push_back(p.filename().string());
    return out;
  };
  const auto syn = names(root / "synthetic/normal");
  EXPECT_EQ(syn.size(), 20u);
  EXPECT_EQ(syn, names(root / "real/normal"));

  const std::string manifest = read_file(root / "split.csv");
  make_corpus(dir_ / "corpus2");
  EXPECT_EQ(manifest, read_file(dir_ / "corpus2/split.csv"));
}

TEST_F(CliTest, TrainOnCorpusRespectsSplitManifest) {
  const fs::path root = dir_ / "corpus";
  make_corpus(root);
  write_file(dir_ / "ph.cfg", "batch_size=8\nepochs=0\n");
  const fs::path ckpt = dir_ / "ph.ckpt";
  const CliResult r = run("train --config " + q(dir_ / "ph.cfg") + " --data " + q(root) +
                          " --out " + q(ckpt));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(fs::path(ckpt.string() + ".domains.txt")), "real\nsynthetic\n");
  const VectorFieldModel m = load_checkpoint(ckpt);
  EXPECT_EQ(m.data_dim(), 64);

  // A manifest missing one of the poses on disk is an error.
  write_file(root / "split.csv", "pose_id,split\nrx-40_ry-40_rz-40,train\n");
  const CliResult bad = run("train --config " + q(dir_ / "ph.cfg") + " --data " + q(root) +
                            " --out " + q(dir_ / "ph2.ckpt"));
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.err.find("missing from the manifest"), std::string::npos) << bad.err;
}

TEST_F(CliTest, TranslatePreservesFileNames) {
  const fs::path root = dir_ / "corpus";
  make_corpus(root);
  write_file(dir_ / "ph.cfg", "batch_size=8\nepochs=2\nhidden=16\n");
  const fs::path ckpt = dir_ / "ph.ckpt";
  ASSERT_EQ(run("train --config " + q(dir_ / "ph.cfg") + " --data " + q(root) + " --out " +
                q(ckpt))
                .code,
            0);
  const CliResult r = run("translate --ckpt " + q(ckpt) +
                          " --source-domain synthetic --target-domain real --in " +
                          q(root / "synthetic/normal") + " --out " + q(dir_ / "tr") +
                          " --steps 4 --emit-latents");
  ASSERT_EQ(r.code, 0) << r.err;
  auto in_names = list_pgms(root / "synthetic/normal");
  auto out_names = list_pgms(dir_ / "tr");
  ASSERT_EQ(in_names.size(), out_names.size());
  for (size_t i = 0; i < in_names.size(); ++i) {
    EXPECT_EQ(in_names[i].filename(), out_names[i].filename());
  }
  const std::string latents = read_file(dir_ / "tr/latents.csv");
  EXPECT_NE(latents.find(in_names[0].filename().string() + ","), std::string::npos);
}

TEST_F(CliTest, EvaluateIdentityMethodScoresPerfectly) {
  const fs::path root = dir_ / "corpus";
  make_corpus(root);
  const CliResult r = run("evaluate --real " + q(root / "real/normal") + " --source " +
                          q(root / "synthetic/normal") + " --gen self=" +
                          (root / "real/normal").string() + " --out " + q(dir_ / "report.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string doc = read_file(dir_ / "report.txt");
  EXPECT_NE(doc.find("method.self.rank_average=1\n"), std::string::npos) << doc;
  EXPECT_NE(doc.find("best.method=self\n"), std::string::npos);

  auto value_of = [&](const std::string& key) {
    const size_t at = doc.find(key + "=");
    EXPECT_NE(at, std::string::npos) << key;
    return std::stod(doc.substr(at + key.size() + 1));
  };
  EXPECT_NEAR(value_of("method.self.rfid"), 0.0, 1e-3);
  // The unbiased estimator dips slightly below zero on identical sets.
  EXPECT_LT(value_of("method.self.mmd"), 1e-9);
  EXPECT_GT(value_of("method.self.mmd"), -1.0);
  EXPECT_DOUBLE_EQ(value_of("method.self.coverage"), 1.0);

  const std::string csv = read_file(dir_ / "report.txt.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "method,rfid,mmd,coverage,ssim,source_l2,rank_realism,rank_structure,rank_average");
}

TEST_F(CliTest, EvaluateRanksTwoMethods) {
  const fs::path root = dir_ / "corpus";
  make_corpus(root);
  const CliResult r = run("evaluate --real " + q(root / "real/normal") + " --source " +
                          q(root / "synthetic/normal") + " --gen self=" +
                          (root / "real/normal").string() + " --gen copy=" +
                          (root / "synthetic/normal").string() + " --out " +
                          q(dir_ / "report.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string doc = read_file(dir_ / "report.txt");
  // The untouched real set wins realism; the source copy wins structure.
  EXPECT_NE(doc.find("method.self.rank_realism=1\n"), std::string::npos) << doc;
  EXPECT_NE(doc.find("method.copy.rank_structure=1\n"), std::string::npos) << doc;
}

TEST_F(CliTest, AblateSingleCellGridTrendsPassTrivially) {
  const fs::path root = dir_ / "corpus";
  make_corpus(root);
  write_file(dir_ / "ph.cfg", "batch_size=8\nepochs=1\nhidden=16\n");
  const fs::path ckpt = dir_ / "ph.ckpt";
  ASSERT_EQ(run("train --config " + q(dir_ / "ph.cfg") + " --data " + q(root) + " --out " +
                q(ckpt))
                .code,
            0);
  const CliResult r = run("ablate --ckpt " + q(ckpt) +
                          " --source-domain synthetic --target-domain real --in " +
                          q(root / "synthetic/normal") + " --real " + q(root / "real/normal") +
                          " --taus 0.5 --cfg-weights 7.5 --steps 3 --out " +
                          q(dir_ / "grid.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_file(dir_ / "grid.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "guidance,rfid@tau=0.5,ssim@tau=0.5,source_l2@tau=0.5");
  EXPECT_NE(csv.find("\n7.5,"), std::string::npos);
  EXPECT_NE(csv.find("nondecreasing=pass"), std::string::npos);
  EXPECT_NE(csv.find("nonincreasing=pass"), std::string::npos);
}

TEST_F(CliTest, DiagnoseWritesCurveAndRejectsAscendingTaus) {
  const fs::path ckpt = dir_ / "toy.ckpt";
  train_toy(ckpt, 0);
  const std::string mk = "make-data --kind points --out " + q(dir_ / "pts") +
                         " --samples 60 --seed 5";
  ASSERT_EQ(run(mk).code, 0);
  const std::string base = "diagnose --ckpt " + q(ckpt) +
                           " --domain-a two_moons --domain-b two_rings --in-a " +
                           q(dir_ / "pts/two_moons/points.csv") + " --in-b " +
                           q(dir_ / "pts/two_rings/points.csv") + " --steps 4 --out " +
                           q(dir_ / "overlap.csv");
  const CliResult ok = run(base);
  ASSERT_EQ(ok.code, 0) << ok.err;
  const std::string csv = read_file(dir_ / "overlap.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "tau,mmd");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);  // header + default three depths

  const CliResult bad = run(base + " --taus 0.3,0.6,1.0");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("descending"), std::string::npos) << bad.err;
}

TEST_F(CliTest, GenerateWritesSquareImages) {
  const fs::path root = dir_ / "corpus";
  make_corpus(root);
  write_file(dir_ / "ph.cfg", "batch_size=8\nepochs=0\nhidden=16\n");
  const fs::path ckpt = dir_ / "ph.ckpt";
  ASSERT_EQ(run("train --config " + q(dir_ / "ph.cfg") + " --data " + q(root) + " --out " +
                q(ckpt))
                .code,
            0);
  const CliResult r = run("generate --ckpt " + q(ckpt) +
                          " --domain real --count 3 --steps 3 --out " + q(dir_ / "gen"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto files = list_pgms(dir_ / "gen");
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[0].filename().string(), "gen_0000.pgm");
  const Tensor img = load_pgm(files[0]);
  EXPECT_EQ(img.rows(), 8);
  EXPECT_EQ(img.cols(), 8);
}

TEST_F(CliTest, ErrorPathsUseTheDocumentedExitCodes) {
  const fs::path ckpt = dir_ / "toy.ckpt";
  train_toy(ckpt, 0);

  const CliResult unknown = run("generate --ckpt " + q(ckpt) + " --domain nope --out " +
                                q(dir_ / "g.csv"));
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("unknown domain"), std::string::npos) << unknown.err;

  fs::create_directories(dir_ / "empty");
  const CliResult empty = run("translate --ckpt " + q(ckpt) +
                              " --source-domain two_moons --target-domain two_rings --in " +
                              q(dir_ / "empty") + " --out " + q(dir_ / "t"));
  EXPECT_EQ(empty.code, 3);

  const CliResult missing = run("train --data " + q(dir_ / "no_such_root") + " --out " +
                                q(dir_ / "x.ckpt"));
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.err.find("no_such_root"), std::string::npos) << missing.err;

  write_file(dir_ / "bad.cfg", "learning_rate=0.001\nlabel_dropout=1.5\n");
  const CliResult badcfg = run("train --config " + q(dir_ / "bad.cfg") +
                               " --toy two_moons,two_rings --out " + q(dir_ / "y.ckpt"));
  EXPECT_EQ(badcfg.code, 2);
  EXPECT_NE(badcfg.err.find("line 2"), std::string::npos) << badcfg.err;

  std::string bytes = read_file(ckpt);
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
  write_file(dir_ / "corrupt.ckpt", bytes);
  const CliResult corrupt = run("generate --ckpt " + q(dir_ / "corrupt.ckpt") +
                                " --domain 0 --out " + q(dir_ / "z.csv"));
  EXPECT_EQ(corrupt.code, 3);

  const CliResult both = run("train --toy two_moons,two_rings --data " + q(dir_) + " --out " +
                             q(dir_ / "w.ckpt"));
  EXPECT_EQ(both.code, 2);
}

}  // namespace
