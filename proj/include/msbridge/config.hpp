#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <string>
#include <vector>

#include "msbridge/bridge.hpp"
#include "msbridge/errors.hpp"
#include "msbridge/flow.hpp"

namespace msbridge {

/// Model topology as expressed in configuration text.
struct ModelSpec {
  std::vector<int> hidden = {256, 256};
  int time_embed_dim = 64;
  int domain_embed_dim = 16;
  int num_domains = 2;

  bool operator==(const ModelSpec& o) const {
    return hidden == o.hidden && time_embed_dim == o.time_embed_dim &&
           domain_embed_dim == o.domain_embed_dim && num_domains == o.num_domains;
  }
};

/// Dataset selection: either an on-disk image corpus or a named pair of
/// procedural 2D generators.
struct DataSpec {
  std::string data_root;
  std::vector<std::string> toy;  // generator names, usually two
  int toy_samples = 2048;
  float toy_noise = 0.05f;
  float test_fraction = 0.15f;

  bool operator==(const DataSpec& o) const {
    return data_root == o.data_root && toy == o.toy && toy_samples == o.toy_samples &&
           toy_noise == o.toy_noise && test_fraction == o.test_fraction;
  }
};

/// Full run configuration: training, sampling, topology and data.
struct RunConfig {
  TrainConfig train;
  BridgeConfig bridge;
  ModelSpec model;
  DataSpec data;

  bool operator==(const RunConfig& o) const {
    return train.learning_rate == o.train.learning_rate &&
           train.batch_size == o.train.batch_size && train.epochs == o.train.epochs &&
           train.warmup_steps == o.train.warmup_steps &&
           train.label_dropout == o.train.label_dropout && train.ema_rate == o.train.ema_rate &&
           train.seed == o.train.seed && train.log_interval == o.train.log_interval &&
           train.checkpoint_every == o.train.checkpoint_every && bridge.tau == o.bridge.tau &&
           bridge.steps == o.bridge.steps && bridge.guidance_weight == o.bridge.guidance_weight &&
           bridge.use_ema == o.bridge.use_ema &&
           bridge.encode_guidance == o.bridge.encode_guidance && model == o.model &&
           data == o.data;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

[[noreturn]] inline void cfg_fail(int line, const std::string& msg) {
  throw ConfigError("line " + std::to_string(line) + ": " + msg);
}

inline float parse_float(const std::string& key, const std::string& v, int line) {
  if (v.empty()) cfg_fail(line, "key '" + key + "' expects a number, got empty value");
  char* end = nullptr;
  const float f = std::strtof(v.c_str(), &end);
  if (end != v.c_str() + v.size()) {
    cfg_fail(line, "key '" + key + "' expects a number, got '" + v + "'");
  }
  return f;
}

inline int64_t parse_int(const std::string& key, const std::string& v, int line) {
  if (v.empty()) cfg_fail(line, "key '" + key + "' expects an integer, got empty value");
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size()) {
    cfg_fail(line, "key '" + key + "' expects an integer, got '" + v + "'");
  }
  return i;
}

inline uint64_t parse_u64(const std::string& key, const std::string& v, int line) {
  if (v.empty() || v[0] == '-') {
    cfg_fail(line, "key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  char* end = nullptr;
  const unsigned long long i = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size()) {
    cfg_fail(line, "key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return i;
}

inline bool parse_bool(const std::string& key, const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  cfg_fail(line, "key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= v.size()) {
    const size_t comma = v.find(',', start);
    const std::string piece = trim(comma == std::string::npos ? v.substr(start)
                                                              : v.substr(start, comma - start));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string fmt_float(float f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(f));
  return buf;
}

}  // namespace detail

/// Parses '#'-commented key=value text into a validated RunConfig.
/// Missing keys keep their defaults; unknown or duplicate keys and
/// out-of-range values are rejected with the offending line number.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  int line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t nl = text.find('\n', start);
    std::string line = nl == std::string::npos ? text.substr(start) : text.substr(start, nl - start);
    ++line_no;
    start = nl == std::string::npos ? text.size() + 1 : nl + 1;

    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const size_t eq = line.find('=');
    if (eq == std::string::npos) detail::cfg_fail(line_no, "expected key=value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) detail::cfg_fail(line_no, "empty key");
    if (!seen.insert(key).second) detail::cfg_fail(line_no, "duplicate key '" + key + "'");

    if (key == "learning_rate") {
      cfg.train.learning_rate = detail::parse_float(key, value, line_no);
      if (!(cfg.train.learning_rate > 0.0f)) detail::cfg_fail(line_no, "learning_rate must be > 0");
    } else if (key == "batch_size") {
      cfg.train.batch_size = static_cast<int>(detail::parse_int(key, value, line_no));
      if (cfg.train.batch_size < 1) detail::cfg_fail(line_no, "batch_size must be >= 1");
    } else if (key == "epochs") {
      cfg.train.epochs = static_cast<int>(detail::parse_int(key, value, line_no));
      if (cfg.train.epochs < 0) detail::cfg_fail(line_no, "epochs must be >= 0");
    } else if (key == "warmup_steps") {
      cfg.train.warmup_steps = static_cast<int>(detail::parse_int(key, value, line_no));
      if (cfg.train.warmup_steps < 0) detail::cfg_fail(line_no, "warmup_steps must be >= 0");
    } else if (key == "label_dropout") {
      cfg.train.label_dropout = detail::parse_float(key, value, line_no);
      if (!(cfg.train.label_dropout >= 0.0f && cfg.train.label_dropout <= 1.0f)) {
        detail::cfg_fail(line_no, "label_dropout=" + value + " outside [0,1]");
      }
    } else if (key == "ema_rate") {
      cfg.train.ema_rate = detail::parse_float(key, value, line_no);
      if (!(cfg.train.ema_rate > 0.0f && cfg.train.ema_rate < 1.0f)) {
        detail::cfg_fail(line_no, "ema_rate=" + value + " outside (0,1)");
      }
    } else if (key == "seed") {
      cfg.train.seed = detail::parse_u64(key, value, line_no);
    } else if (key == "log_interval") {
      cfg.train.log_interval = static_cast<int>(detail::parse_int(key, value, line_no));
      if (cfg.train.log_interval < 1) detail::cfg_fail(line_no, "log_interval must be >= 1");
    } else if (key == "checkpoint_every") {
      cfg.train.checkpoint_every = static_cast<int>(detail::parse_int(key, value, line_no));
      if (cfg.train.checkpoint_every < 0) {
        detail::cfg_fail(line_no, "checkpoint_every must be >= 0");
      }
    } else if (key == "tau") {
      cfg.bridge.tau = detail::parse_float(key, value, line_no);
      if (!(cfg.bridge.tau > 0.0f && cfg.bridge.tau <= 1.0f)) {
        detail::cfg_fail(line_no, "tau=" + value + " outside (0,1]");
      }
    } else if (key == "steps") {
      cfg.bridge.steps = static_cast<int>(detail::parse_int(key, value, line_no));
      if (cfg.bridge.steps < 1) detail::cfg_fail(line_no, "steps must be >= 1");
    } else if (key == "guidance_weight") {
      cfg.bridge.guidance_weight = detail::parse_float(key, value, line_no);
      if (!(cfg.bridge.guidance_weight >= 0.0f)) {
        detail::cfg_fail(line_no, "guidance_weight must be >= 0");
      }
    } else if (key == "use_ema") {
      cfg.bridge.use_ema = detail::parse_bool(key, value, line_no);
    } else if (key == "encode_guidance") {
      if (value == "guided") {
        cfg.bridge.encode_guidance = BridgeConfig::EncodeGuidance::kGuided;
      } else if (value == "conditional") {
        cfg.bridge.encode_guidance = BridgeConfig::EncodeGuidance::kConditional;
      } else {
        detail::cfg_fail(line_no, "encode_guidance expects guided|conditional, got '" + value + "'");
      }
    } else if (key == "hidden") {
      cfg.model.hidden.clear();
      for (const std::string& piece : detail::split_list(value)) {
        const int w = static_cast<int>(detail::parse_int(key, piece, line_no));
        if (w < 1) detail::cfg_fail(line_no, "hidden widths must be >= 1");
        cfg.model.hidden.push_back(w);
      }
    } else if (key == "time_embed_dim") {
      cfg.model.time_embed_dim = static_cast<int>(detail::parse_int(key, value, line_no));
      if (cfg.model.time_embed_dim < 2 || cfg.model.time_embed_dim % 2 != 0) {
        detail::cfg_fail(line_no, "time_embed_dim must be even and >= 2");
      }
    } else if (key == "domain_embed_dim") {
      cfg.model.domain_embed_dim = static_cast<int>(detail::parse_int(key, value, line_no));
      if (cfg.model.domain_embed_dim < 1) {
        detail::cfg_fail(line_no, "domain_embed_dim must be >= 1");
      }
    } else if (key == "num_domains") {
      cfg.model.num_domains = static_cast<int>(detail::parse_int(key, value, line_no));
      if (cfg.model.num_domains < 1) detail::cfg_fail(line_no, "num_domains must be >= 1");
    } else if (key == "data_root") {
      cfg.data.data_root = value;
    } else if (key == "toy") {
      cfg.data.toy = detail::split_list(value);
    } else if (key == "toy_samples") {
      cfg.data.toy_samples = static_cast<int>(detail::parse_int(key, value, line_no));
      if (cfg.data.toy_samples < 2) detail::cfg_fail(line_no, "toy_samples must be >= 2");
    } else if (key == "toy_noise") {
      cfg.data.toy_noise = detail::parse_float(key, value, line_no);
      if (!(cfg.data.toy_noise >= 0.0f)) detail::cfg_fail(line_no, "toy_noise must be >= 0");
    } else if (key == "test_fraction") {
      cfg.data.test_fraction = detail::parse_float(key, value, line_no);
      if (!(cfg.data.test_fraction > 0.0f && cfg.data.test_fraction < 1.0f)) {
        detail::cfg_fail(line_no, "test_fraction=" + value + " outside (0,1)");
      }
    } else {
      detail::cfg_fail(line_no, "unknown key '" + key + "'");
    }
  }
  return cfg;
}

/// Normalized dump: every key, canonical order, 9-significant-digit
/// floats. parse_config(dump_config(c)) reproduces c exactly.
inline std::string dump_config(const RunConfig& cfg) {
  std::string out;
  auto kv = [&out](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  auto join = [](const auto& items, auto&& to_str) {
    std::string s;
    for (size_t i = 0; i < items.size(); ++i) {
      if (i) s += ",";
      s += to_str(items[i]);
    }
    return s;
  };

  kv("learning_rate", detail::fmt_float(cfg.train.learning_rate));
  kv("batch_size", std::to_string(cfg.train.batch_size));
  kv("epochs", std::to_string(cfg.train.epochs));
  kv("warmup_steps", std::to_string(cfg.train.warmup_steps));
  kv("label_dropout", detail::fmt_float(cfg.train.label_dropout));
  kv("ema_rate", detail::fmt_float(cfg.train.ema_rate));
  kv("seed", std::to_string(cfg.train.seed));
  kv("log_interval", std::to_string(cfg.train.log_interval));
  kv("checkpoint_every", std::to_string(cfg.train.checkpoint_every));
  kv("tau", detail::fmt_float(cfg.bridge.tau));
  kv("steps", std::to_string(cfg.bridge.steps));
  kv("guidance_weight", detail::fmt_float(cfg.bridge.guidance_weight));
  kv("use_ema", cfg.bridge.use_ema ? "true" : "false");
  kv("encode_guidance",
     cfg.bridge.encode_guidance == BridgeConfig::EncodeGuidance::kGuided ? "guided"
                                                                         : "conditional");
  kv("hidden", join(cfg.model.hidden, [](int w) { return std::to_string(w); }));
  kv("time_embed_dim", std::to_string(cfg.model.time_embed_dim));
  kv("domain_embed_dim", std::to_string(cfg.model.domain_embed_dim));
  kv("num_domains", std::to_string(cfg.model.num_domains));
  kv("data_root", cfg.data.data_root);
  kv("toy", join(cfg.data.toy, [](const std::string& s) { return s; }));
  kv("toy_samples", std::to_string(cfg.data.toy_samples));
  kv("toy_noise", detail::fmt_float(cfg.data.toy_noise));
  kv("test_fraction", detail::fmt_float(cfg.data.test_fraction));
  return out;
}

}  // namespace msbridge
