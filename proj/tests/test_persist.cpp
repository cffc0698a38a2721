#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "msbridge/checkpoint.hpp"
#include "msbridge/config.hpp"

namespace msbridge {
namespace {

// ---------------------------------------------------------------------------
// CRC-32

TEST(Crc32, MatchesCheckVector) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32(reinterpret_cast<const unsigned char*>(s.data()), s.size()), 0xCBF43926u);
}

TEST(Crc32, EmptyInputIsZero) { EXPECT_EQ(crc32(nullptr, 0), 0u); }

TEST(Crc32, SingleBitChangesChecksum) {
  std::vector<unsigned char> a{1, 2, 3, 4};
  std::vector<unsigned char> b = a;
  b[2] ^= 0x10;
  EXPECT_NE(crc32(a), crc32(b));
}

// ---------------------------------------------------------------------------
// Checkpoints

VectorFieldModel scrambled_model() {
  VectorFieldModel m(3, 2, {8, 6}, 77);
  testing::perturb_model(m, 1234, 0.5f);
  m.ema_update();  // shadow moves off its init copy
  testing::perturb_model(m, 99, 0.1f);
  return m;
}

void expect_models_identical(const VectorFieldModel& a, const VectorFieldModel& b) {
  EXPECT_EQ(a.data_dim(), b.data_dim());
  EXPECT_EQ(a.num_domains(), b.num_domains());
  EXPECT_EQ(a.time_dim(), b.time_dim());
  EXPECT_EQ(a.domain_dim(), b.domain_dim());
  EXPECT_EQ(a.ema_rate(), b.ema_rate());
  EXPECT_EQ(a.time_base(), b.time_base());
  EXPECT_EQ(a.hidden_widths(), b.hidden_widths());
  ASSERT_EQ(a.layers().size(), b.layers().size());
  for (size_t i = 0; i < a.layers().size(); ++i) {
    EXPECT_EQ(a.layers()[i].w.data, b.layers()[i].w.data) << "layer " << i;
    EXPECT_EQ(a.layers()[i].b.data, b.layers()[i].b.data) << "layer " << i;
    EXPECT_EQ(a.ema_layers()[i].w.data, b.ema_layers()[i].w.data) << "ema layer " << i;
    EXPECT_EQ(a.ema_layers()[i].b.data, b.ema_layers()[i].b.data) << "ema layer " << i;
  }
  EXPECT_EQ(a.embedding().data, b.embedding().data);
  EXPECT_EQ(a.ema_embedding().data, b.ema_embedding().data);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const VectorFieldModel m = scrambled_model();
  const VectorFieldModel back = decode_checkpoint(encode_checkpoint(m));
  expect_models_identical(m, back);
}

TEST(Checkpoint, EncodingIsDeterministic) {
  const VectorFieldModel m = scrambled_model();
  EXPECT_EQ(encode_checkpoint(m), encode_checkpoint(m));
}

TEST(Checkpoint, LoadedModelComputesIdenticalOutputs) {
  const VectorFieldModel m = scrambled_model();
  const VectorFieldModel back = decode_checkpoint(encode_checkpoint(m));
  Rng rng(5);
  const Tensor x = Tensor::randn({4, 3}, rng);
  for (bool use_ema : {false, true}) {
    const Tensor a = m.forward(x, 0.37f, DomainLabel{1}, use_ema);
    const Tensor b = back.forward(x, 0.37f, DomainLabel{1}, use_ema);
    EXPECT_EQ(a.data, b.data);
  }
}

TEST(Checkpoint, FlippedPayloadByteIsChecksumError) {
  std::vector<unsigned char> bytes = encode_checkpoint(scrambled_model());
  bytes[bytes.size() / 2] ^= 0x01;
  try {
    decode_checkpoint(bytes);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::strstr(e.what(), "checksum"), nullptr) << e.what();
    EXPECT_NE(std::strstr(e.what(), "byte"), nullptr) << e.what();
  }
}

TEST(Checkpoint, TruncationIsLengthErrorNotPartialLoad) {
  const std::vector<unsigned char> full = encode_checkpoint(scrambled_model());
  for (size_t keep : {full.size() - 1, full.size() - 9, full.size() / 2, size_t{20}}) {
    std::vector<unsigned char> cut(full.begin(), full.begin() + static_cast<long>(keep));
    EXPECT_THROW(decode_checkpoint(cut), ParseError) << "kept " << keep;
  }
}

TEST(Checkpoint, TruncationNamesTheMissingPiece) {
  const std::vector<unsigned char> full = encode_checkpoint(scrambled_model());
  std::vector<unsigned char> cut(full.begin(), full.begin() + 30);
  try {
    decode_checkpoint(cut);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::strstr(e.what(), "truncated"), nullptr) << e.what();
  }
}

TEST(Checkpoint, BadMagicIsSchemaError) {
  std::vector<unsigned char> bytes = encode_checkpoint(scrambled_model());
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), SchemaError);
}

TEST(Checkpoint, UnknownVersionIsSchemaError) {
  std::vector<unsigned char> bytes = encode_checkpoint(scrambled_model());
  bytes[8] = 2;  // version field, little-endian
  // keep the checksum honest so only the version differs
  const uint32_t crc = crc32(bytes.data(), bytes.size() - 4);
  for (int i = 0; i < 4; ++i) {
    bytes[bytes.size() - 4 + static_cast<size_t>(i)] =
        static_cast<unsigned char>((crc >> (8 * i)) & 0xff);
  }
  try {
    decode_checkpoint(bytes);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::strstr(e.what(), "version"), nullptr) << e.what();
  }
}

TEST(Checkpoint, TopologyCountMismatchIsSchemaError) {
  std::vector<unsigned char> bytes = encode_checkpoint(scrambled_model());
  // num_domains lives right after magic(8) + version(4) + data_dim(4)
  bytes[16] += 1;
  const uint32_t crc = crc32(bytes.data(), bytes.size() - 4);
  for (int i = 0; i < 4; ++i) {
    bytes[bytes.size() - 4 + static_cast<size_t>(i)] =
        static_cast<unsigned char>((crc >> (8 * i)) & 0xff);
  }
  try {
    decode_checkpoint(bytes);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::strstr(e.what(), "topology"), nullptr) << e.what();
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const std::filesystem::path path =
      std::filesystem::path(::testing::TempDir()) / "msbridge_ckpt_test.bin";
  const VectorFieldModel m = scrambled_model();
  save_checkpoint(m, path);
  const VectorFieldModel back = load_checkpoint(path);
  expect_models_identical(m, back);
  std::filesystem::remove(path);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/model.ckpt"), IoError);
}

// ---------------------------------------------------------------------------
// Config text

TEST(Config, EmptyTextGivesDefaults) {
  const RunConfig cfg = parse_config("");
  EXPECT_EQ(cfg, RunConfig{});
  EXPECT_FLOAT_EQ(cfg.train.learning_rate, 1e-4f);
  EXPECT_EQ(cfg.train.batch_size, 128);
  EXPECT_EQ(cfg.train.epochs, 1000);
  EXPECT_EQ(cfg.train.warmup_steps, 100);
  EXPECT_FLOAT_EQ(cfg.train.label_dropout, 0.2f);
  EXPECT_FLOAT_EQ(cfg.train.ema_rate, 0.999f);
  EXPECT_FLOAT_EQ(cfg.bridge.tau, 0.45f);
  EXPECT_EQ(cfg.bridge.steps, 50);
  EXPECT_FLOAT_EQ(cfg.bridge.guidance_weight, 8.5f);
  EXPECT_TRUE(cfg.bridge.use_ema);
}

TEST(Config, TauLineParses) {
  const RunConfig cfg = parse_config("tau=0.45\n");
  EXPECT_FLOAT_EQ(cfg.bridge.tau, 0.45f);
}

TEST(Config, DefaultsDumpIsAFixedPoint) {
  const RunConfig defaults = parse_config("");
  const std::string dumped = dump_config(defaults);
  EXPECT_EQ(parse_config(dumped), defaults);
  EXPECT_EQ(dump_config(parse_config(dumped)), dumped);
}

TEST(Config, NonTrivialConfigRoundTrips) {
  RunConfig cfg;
  cfg.train.learning_rate = 0.000123456f;
  cfg.train.batch_size = 7;
  cfg.train.epochs = 0;
  cfg.train.warmup_steps = 3;
  cfg.train.label_dropout = 1.0f;
  cfg.train.ema_rate = 0.5f;
  cfg.train.seed = 18446744073709551615ull;
  cfg.train.log_interval = 17;
  cfg.train.checkpoint_every = 250;
  cfg.bridge.tau = 1.0f;
  cfg.bridge.steps = 1;
  cfg.bridge.guidance_weight = 0.0f;
  cfg.bridge.use_ema = false;
  cfg.bridge.encode_guidance = BridgeConfig::EncodeGuidance::kConditional;
  cfg.model.hidden = {8, 16, 32};
  cfg.model.time_embed_dim = 4;
  cfg.model.domain_embed_dim = 3;
  cfg.model.num_domains = 5;
  cfg.data.data_root = "/tmp/some/corpus";
  cfg.data.toy = {"two_moons", "two_rings"};
  cfg.data.toy_samples = 333;
  cfg.data.toy_noise = 0.0f;
  cfg.data.test_fraction = 0.25f;
  EXPECT_EQ(parse_config(dump_config(cfg)), cfg);
}

TEST(Config, EmptyHiddenListRoundTrips) {
  RunConfig cfg;
  cfg.model.hidden = {};
  const RunConfig back = parse_config(dump_config(cfg));
  EXPECT_TRUE(back.model.hidden.empty());
  EXPECT_EQ(back, cfg);
}

TEST(Config, CommentsAndWhitespaceTolerated) {
  const RunConfig cfg = parse_config(
      "# full-line comment\n"
      "  tau = 0.3   # trailing comment\n"
      "\n"
      "\tbatch_size =  4\n");
  EXPECT_FLOAT_EQ(cfg.bridge.tau, 0.3f);
  EXPECT_EQ(cfg.train.batch_size, 4);
}

TEST(Config, LabelDropoutRangeErrorNamesLine) {
  try {
    parse_config("seed=1\nlabel_dropout=1.5\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::strstr(e.what(), "line 2"), nullptr) << e.what();
    EXPECT_NE(std::strstr(e.what(), "label_dropout"), nullptr) << e.what();
  }
}

TEST(Config, UnknownKeyNamesLine) {
  try {
    parse_config("seed=3\n\n# note\nwhatever=1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::strstr(e.what(), "line 4"), nullptr) << e.what();
    EXPECT_NE(std::strstr(e.what(), "whatever"), nullptr) << e.what();
  }
}

TEST(Config, DuplicateKeyRejected) {
  try {
    parse_config("tau=0.3\ntau=0.4\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::strstr(e.what(), "line 2"), nullptr) << e.what();
    EXPECT_NE(std::strstr(e.what(), "duplicate"), nullptr) << e.what();
  }
}

TEST(Config, TypeErrorsNameKeyAndLine) {
  EXPECT_THROW(parse_config("steps=fifty\n"), ConfigError);
  EXPECT_THROW(parse_config("use_ema=maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("encode_guidance=sometimes\n"), ConfigError);
  EXPECT_THROW(parse_config("learning_rate=\n"), ConfigError);
  EXPECT_THROW(parse_config("seed=-1\n"), ConfigError);
  try {
    parse_config("steps=fifty\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::strstr(e.what(), "line 1"), nullptr) << e.what();
    EXPECT_NE(std::strstr(e.what(), "steps"), nullptr) << e.what();
  }
}

TEST(Config, RangeViolationsRejected) {
  EXPECT_THROW(parse_config("tau=0\n"), ConfigError);
  EXPECT_THROW(parse_config("tau=1.5\n"), ConfigError);
  EXPECT_THROW(parse_config("ema_rate=1\n"), ConfigError);
  EXPECT_THROW(parse_config("ema_rate=0\n"), ConfigError);
  EXPECT_THROW(parse_config("batch_size=0\n"), ConfigError);
  EXPECT_THROW(parse_config("steps=0\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs=-1\n"), ConfigError);
  EXPECT_THROW(parse_config("guidance_weight=-1\n"), ConfigError);
  EXPECT_THROW(parse_config("test_fraction=1\n"), ConfigError);
  EXPECT_THROW(parse_config("time_embed_dim=5\n"), ConfigError);
  EXPECT_THROW(parse_config("hidden=8,0\n"), ConfigError);
  EXPECT_THROW(parse_config("toy_samples=1\n"), ConfigError);
}

TEST(Config, MissingEqualsIsError) {
  try {
    parse_config("tau 0.45\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::strstr(e.what(), "key=value"), nullptr) << e.what();
  }
}

TEST(Config, HiddenListParsesWithSpaces) {
  const RunConfig cfg = parse_config("hidden=64, 32 ,16\n");
  EXPECT_EQ(cfg.model.hidden, (std::vector<int>{64, 32, 16}));
}

TEST(Config, MaxSeedParses) {
  const RunConfig cfg = parse_config("seed=18446744073709551615\n");
  EXPECT_EQ(cfg.train.seed, 18446744073709551615ull);
}

}  // namespace
}  // namespace msbridge
