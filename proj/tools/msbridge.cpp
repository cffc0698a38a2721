// Command-line front end: train, generate, translate, evaluate, ablate,
// diagnose, make-data. Exit codes: 0 success, 2 usage/config/label errors,
// 3 file-format/IO/shape errors, 4 numeric or training failures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msbridge/bridge.hpp"
#include "msbridge/checkpoint.hpp"
#include "msbridge/config.hpp"
#include "msbridge/corpus.hpp"
#include "msbridge/diagnostics.hpp"
#include "msbridge/domains.hpp"
#include "msbridge/errors.hpp"
#include "msbridge/flow.hpp"
#include "msbridge/metrics.hpp"
#include "msbridge/pgm.hpp"

namespace {

using namespace msbridge;
namespace fs = std::filesystem;

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t b = item.find_first_not_of(" \t");
    size_t e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

/// Comma list of numbers, keeping the user's spelling for column headers.
std::vector<std::pair<std::string, float>> parse_float_list(const std::string& s,
                                                            const char* what) {
  std::vector<std::pair<std::string, float>> out;
  for (const std::string& token : split_commas(s)) {
    try {
      size_t used = 0;
      const float v = std::stof(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      out.emplace_back(token, v);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": bad number '" + token + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

BridgeConfig::EncodeGuidance parse_encode_guidance(const std::string& s) {
  if (s == "guided") return BridgeConfig::EncodeGuidance::kGuided;
  if (s == "conditional") return BridgeConfig::EncodeGuidance::kConditional;
  throw ConfigError("encode guidance '" + s + "' is not 'guided' or 'conditional'");
}

// ---------------------------------------------------------------------------
// Checkpoint + domain-name sidecar

struct LoadedModel {
  VectorFieldModel model;
  std::vector<std::string> domains;  // empty when no sidecar file exists
};

LoadedModel load_model(const std::string& ckpt) {
  LoadedModel lm{load_checkpoint(ckpt), {}};
  std::ifstream side(ckpt + ".domains.txt", std::ios::binary);
  if (side) {
    std::string line;
    while (std::getline(side, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lm.domains.push_back(line);
    }
    if (static_cast<int>(lm.domains.size()) != lm.model.num_domains()) {
      throw SchemaError("domain list " + ckpt + ".domains.txt has " +
                        std::to_string(lm.domains.size()) + " names but the checkpoint has " +
                        std::to_string(lm.model.num_domains()) + " domains");
    }
  }
  return lm;
}

DomainLabel resolve_domain(const LoadedModel& lm, const std::string& name) {
  for (size_t i = 0; i < lm.domains.size(); ++i) {
    if (lm.domains[i] == name) return DomainLabel{static_cast<int>(i)};
  }
  const bool numeric =
      !name.empty() && name.find_first_not_of("0123456789") == std::string::npos;
  if (numeric) {
    const int id = std::stoi(name);
    if (id >= 0 && id < lm.model.num_domains()) return DomainLabel{id};
    throw ConfigError("domain index " + name + " out of range [0, " +
                      std::to_string(lm.model.num_domains()) + ")");
  }
  std::string known;
  for (const std::string& d : lm.domains) known += (known.empty() ? "" : ", ") + d;
  throw ConfigError("unknown domain '" + name + "'" +
                    (lm.domains.empty() ? " (no domain list beside the checkpoint; use an index)"
                                        : "; known: " + known));
}

// ---------------------------------------------------------------------------
// Inputs: a directory of images, a single image, or a point CSV

struct InputData {
  Tensor model_space;  // n x data_dim, already in model range
  bool is_images = false;
  int height = 0;
  int width = 0;
  std::vector<std::string> names;
};

InputData load_input(const fs::path& in, int expect_dim) {
  InputData data;
  std::error_code ec;
  if (fs::is_directory(in, ec)) {
    ImageSet set = load_image_dir(in);
    data.model_space = to_model_range(set.flat);
    data.is_images = true;
    data.height = set.height;
    data.width = set.width;
    data.names = std::move(set.names);
  } else if (in.extension() == ".pgm") {
    ImageSet set = load_image_set({in});
    data.model_space = to_model_range(set.flat);
    data.is_images = true;
    data.height = set.height;
    data.width = set.width;
    data.names = std::move(set.names);
  } else if (in.extension() == ".csv") {
    data.model_space = read_points_csv(in);
  } else {
    throw IoError("input " + in.string() + " is not a directory, .pgm, or .csv");
  }
  if (data.model_space.cols() != expect_dim) {
    throw DimensionError("input " + in.string() + " has dimension " +
                         std::to_string(data.model_space.cols()) + " but the model expects " +
                         std::to_string(expect_dim));
  }
  return data;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string config, data, toy, out, loss_csv;
  int epochs = -1;       // -1: keep the config value
  long long seed = -1;   // -1: keep the config value
};

void cmd_train(const TrainOpts& o) {
  if (!o.data.empty() && !o.toy.empty()) {
    throw ConfigError("give only one of --data and --toy");
  }
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.data.empty()) {
    cfg.data.data_root = o.data;
    cfg.data.toy.clear();
  }
  if (!o.toy.empty()) {
    cfg.data.toy = split_commas(o.toy);
    cfg.data.data_root.clear();
  }
  if (o.epochs >= 0) cfg.train.epochs = o.epochs;
  if (o.seed >= 0) cfg.train.seed = static_cast<uint64_t>(o.seed);
  cfg.bridge.validate();

  const bool use_toy = !cfg.data.toy.empty();
  if (use_toy == !cfg.data.data_root.empty()) {
    throw ConfigError("train needs exactly one data source: --data/--toy or the config keys");
  }

  std::vector<std::string> names;
  std::vector<Tensor> datasets;
  if (use_toy) {
    names = cfg.data.toy;
    for (size_t k = 0; k < names.size(); ++k) {
      PointCloudDomain dom{names[k], cfg.data.toy_noise, cfg.data.toy_samples,
                           Rng::derive(cfg.train.seed, 1000 + k)};
      datasets.push_back(gen_points(dom).matrix());
    }
  } else {
    std::vector<CorpusFile> files = scan_corpus(cfg.data.data_root);
    if (files.empty()) throw IoError("no corpus images under " + cfg.data.data_root);
    const fs::path manifest = fs::path(cfg.data.data_root) / "split.csv";
    if (fs::exists(manifest)) {
      const auto split = read_split_csv(manifest);
      std::vector<CorpusFile> kept;
      for (const CorpusFile& f : files) {
        auto it = split.find(f.pose_id);
        if (it == split.end()) {
          throw ParseError(manifest.string() + ": pose '" + f.pose_id + "' (from " +
                           f.path.string() + ") is missing from the manifest");
        }
        if (it->second == "train") kept.push_back(f);
      }
      files = std::move(kept);
      if (files.empty()) throw IoError("split manifest leaves no training images");
    }
    names = corpus_domains(files);
    for (const std::string& domain : names) {
      std::vector<fs::path> paths;
      for (const CorpusFile& f : files) {
        if (f.domain == domain) paths.push_back(f.path);
      }
      ImageSet set = load_image_set(paths);
      datasets.push_back(to_model_range(set.flat));
    }
    for (size_t k = 1; k < datasets.size(); ++k) {
      if (datasets[k].cols() != datasets[0].cols()) {
        throw DimensionError("domain " + names[k] + " images have dimension " +
                             std::to_string(datasets[k].cols()) + " but " + names[0] + " has " +
                             std::to_string(datasets[0].cols()));
      }
    }
  }

  cfg.model.num_domains = static_cast<int>(names.size());
  const int data_dim = datasets[0].cols();
  VectorFieldModel model(data_dim, cfg.model.num_domains, cfg.model.hidden, cfg.train.seed,
                         cfg.model.time_embed_dim, cfg.model.domain_embed_dim,
                         cfg.train.ema_rate);

  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const TrainResult result = train(model, datasets, cfg.train,
                                   [&](int64_t, const VectorFieldModel& m) {
                                     save_checkpoint(m, out);
                                   });
  save_checkpoint(model, out);

  std::string sidecar;
  for (const std::string& n : names) sidecar += n + "\n";
  write_text(o.out + ".domains.txt", sidecar);

  std::string loss = "step,loss\n";
  for (const auto& [step, value] : result.loss_curve) {
    loss += std::to_string(step) + "," + fmt9(value) + "\n";
  }
  write_text(o.loss_csv.empty() ? o.out + ".loss.csv" : o.loss_csv, loss);
  write_text(o.out + ".config.txt", dump_config(cfg));

  std::printf("trained %d domains for %lld steps\n", cfg.model.num_domains,
              static_cast<long long>(result.total_steps));
  if (!result.loss_curve.empty()) {
    std::printf("final loss: %s\n", fmt9(result.loss_curve.back().second).c_str());
  }
  std::printf("checkpoint: %s\n", o.out.c_str());
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOpts {
  std::string ckpt, domain, out;
  int count = 16;
  long long seed = 0;
  int steps = 50;
  float weight = 8.5f;
  bool live = false;
};

void cmd_generate(const GenerateOpts& o) {
  const LoadedModel lm = load_model(o.ckpt);
  const DomainLabel target = resolve_domain(lm, o.domain);
  BridgeConfig cfg;
  cfg.steps = o.steps;
  cfg.guidance_weight = o.weight;
  cfg.use_ema = !o.live;
  Rng rng(Rng::derive(static_cast<uint64_t>(o.seed), 0x67656eull));
  const Tensor x = sample_prior(lm.model, target, o.count, cfg, rng);

  const int d = lm.model.data_dim();
  if (d == 2) {
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    write_points_csv(o.out, x);
    std::printf("wrote %d points to %s\n", o.count, o.out.c_str());
    return;
  }
  int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
  if (side * side != d) {
    throw ContractError("data dimension " + std::to_string(d) + " is not a square image");
  }
  fs::create_directories(o.out);
  for (int i = 0; i < x.rows(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "gen_%04d.pgm", i);
    save_pgm(to_pixel_range(row_to_image(x, i, side, side)), fs::path(o.out) / name);
  }
  std::printf("wrote %d images to %s\n", o.count, o.out.c_str());
}

// ---------------------------------------------------------------------------
// translate

struct TranslateOpts {
  std::string ckpt, source, target, in, out;
  float tau = 0.45f;
  int steps = 50;
  float weight = 8.5f;
  bool live = false;
  std::string encode_guidance = "guided";
  bool emit_latents = false;
};

void cmd_translate(const TranslateOpts& o) {
  const LoadedModel lm = load_model(o.ckpt);
  const DomainLabel src = resolve_domain(lm, o.source);
  const DomainLabel tgt = resolve_domain(lm, o.target);
  BridgeConfig cfg;
  cfg.tau = o.tau;
  cfg.steps = o.steps;
  cfg.guidance_weight = o.weight;
  cfg.use_ema = !o.live;
  cfg.encode_guidance = parse_encode_guidance(o.encode_guidance);
  cfg.validate();

  const InputData in = load_input(o.in, lm.model.data_dim());
  const TranslationResult tr = translate(lm.model, in.model_space, src, tgt, cfg);

  if (in.is_images) {
    fs::create_directories(o.out);
    for (int i = 0; i < tr.x_hat.rows(); ++i) {
      save_pgm(to_pixel_range(row_to_image(tr.x_hat, i, in.height, in.width)),
               fs::path(o.out) / in.names[i]);
    }
    if (o.emit_latents) {
      std::string csv;
      for (int i = 0; i < tr.z_tau.rows(); ++i) {
        csv += in.names[i];
        for (int j = 0; j < tr.z_tau.cols(); ++j) csv += "," + fmt9(tr.z_tau.at(i, j));
        csv += "\n";
      }
      write_text((fs::path(o.out) / "latents.csv").string(), csv);
    }
  } else {
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    write_points_csv(o.out, tr.x_hat);
    if (o.emit_latents) write_points_csv(o.out + ".latent.csv", tr.z_tau);
  }
  std::printf("translated %d samples: %s -> %s\n", in.model_space.rows(), o.source.c_str(),
              o.target.c_str());
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
  std::string real, source, out;
  std::vector<std::string> gen;
  int knn = 5;
};

struct PairedSets {
  SampleSet gen, source;  // rows paired by file name
};

PairedSets pair_by_name(const ImageSet& gen, const ImageSet& source, const std::string& method) {
  std::map<std::string, int> source_rows;
  for (size_t i = 0; i < source.names.size(); ++i) {
    source_rows[source.names[i]] = static_cast<int>(i);
  }
  Tensor s = Tensor::zeros(gen.flat.shape);
  for (size_t i = 0; i < gen.names.size(); ++i) {
    auto it = source_rows.find(gen.names[i]);
    if (it == source_rows.end()) {
      throw IoError("method " + method + ": no source image named " + gen.names[i]);
    }
    const auto begin =
        source.flat.data.begin() + static_cast<int64_t>(it->second) * source.flat.cols();
    std::copy(begin, begin + source.flat.cols(),
              s.data.begin() + static_cast<int64_t>(i) * gen.flat.cols());
  }
  return {SampleSet::from_matrix(gen.flat, method), SampleSet::from_matrix(s, "source")};
}

MethodScores score_method(const std::string& method, const ImageSet& gen, const ImageSet& real,
                          const ImageSet& source, int knn) {
  if (gen.height != real.height || gen.width != real.width) {
    throw DimensionError("method " + method + ": generated images are " +
                         std::to_string(gen.height) + "x" + std::to_string(gen.width) +
                         " but real images are " + std::to_string(real.height) + "x" +
                         std::to_string(real.width));
  }
  if (gen.height != source.height || gen.width != source.width) {
    throw DimensionError("method " + method + ": generated and source image sizes differ");
  }
  const PairedSets paired = pair_by_name(gen, source, method);
  const Tensor paired_source = paired.source.matrix();
  double ssim_sum = 0.0;
  for (int i = 0; i < gen.flat.rows(); ++i) {
    ssim_sum += ssim(row_to_image(gen.flat, i, gen.height, gen.width),
                     row_to_image(paired_source, i, gen.height, gen.width));
  }
  const SampleSet real_set = SampleSet::from_matrix(real.flat, "real");
  MethodScores scores;
  scores["rfid"] = frechet_gaussian(paired.gen, real_set);
  scores["mmd"] = mmd_rbf(paired.gen, real_set);
  scores["coverage"] = coverage(paired.gen, real_set, knn);
  scores["ssim"] = ssim_sum / gen.flat.rows();
  scores["source_l2"] = mean_relative_l2(paired.gen, paired.source);
  return scores;
}

void cmd_evaluate(const EvaluateOpts& o) {
  const ImageSet real = load_image_dir(o.real);
  const ImageSet source = load_image_dir(o.source);

  std::map<std::string, MethodScores> inputs;
  for (const std::string& spec : o.gen) {
    const size_t eq = spec.find('=');
    const std::string dir = eq == std::string::npos ? spec : spec.substr(eq + 1);
    std::string name = eq == std::string::npos
                           ? fs::path(dir).filename().string()
                           : spec.substr(0, eq);
    if (name.empty()) name = dir;
    if (inputs.count(name)) throw ConfigError("duplicate method name '" + name + "'");
    inputs[name] = score_method(name, load_image_dir(dir), real, source, o.knn);
  }
  if (inputs.empty()) throw ConfigError("evaluate needs at least one --gen set");

  MetricsReport report;
  if (inputs.size() >= 2) {
    report = rank_methods(inputs);
  } else {
    const auto& [name, scores] = *inputs.begin();
    MethodReport r;
    r.rfid = scores.at("rfid");
    r.mmd = scores.at("mmd");
    r.coverage = scores.at("coverage");
    r.ssim = scores.at("ssim");
    r.source_l2 = scores.at("source_l2");
    r.realism_rank = r.structure_rank = r.average_rank = 1.0;
    report.methods[name] = r;
  }

  std::string doc;
  std::string best;
  double best_rank = 0.0;
  for (const auto& [name, r] : report.methods) {
    doc += "method." + name + ".rfid=" + fmt9(r.rfid) + "\n";
    doc += "method." + name + ".mmd=" + fmt9(r.mmd) + "\n";
    doc += "method." + name + ".coverage=" + fmt9(r.coverage) + "\n";
    doc += "method." + name + ".ssim=" + fmt9(r.ssim) + "\n";
    doc += "method." + name + ".source_l2=" + fmt9(r.source_l2) + "\n";
    doc += "method." + name + ".rank_realism=" + fmt9(r.realism_rank) + "\n";
    doc += "method." + name + ".rank_structure=" + fmt9(r.structure_rank) + "\n";
    doc += "method." + name + ".rank_average=" + fmt9(r.average_rank) + "\n";
    if (best.empty() || r.average_rank < best_rank) {
      best = name;
      best_rank = r.average_rank;
    }
  }
  doc += "best.method=" + best + "\n";

  std::string csv = "method,rfid,mmd,coverage,ssim,source_l2,rank_realism,rank_structure,rank_average\n";
  for (const auto& [name, r] : report.methods) {
    csv += name + "," + fmt9(r.rfid) + "," + fmt9(r.mmd) + "," + fmt9(r.coverage) + "," +
           fmt9(r.ssim) + "," + fmt9(r.source_l2) + "," + fmt9(r.realism_rank) + "," +
           fmt9(r.structure_rank) + "," + fmt9(r.average_rank) + "\n";
  }

  write_text(o.out, doc);
  write_text(o.out + ".csv", csv);
  std::fputs(doc.c_str(), stdout);
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOpts {
  std::string ckpt, source, target, in, real, out;
  std::string taus = "0.3,0.4,0.5,0.6";
  std::string weights = "6.5,7.5,8.5,9.5";
  int steps = 50;
  bool live = false;
  std::string encode_guidance = "guided";
};

void cmd_ablate(const AblateOpts& o) {
  const LoadedModel lm = load_model(o.ckpt);
  const DomainLabel src = resolve_domain(lm, o.source);
  const DomainLabel tgt = resolve_domain(lm, o.target);

  auto taus = parse_float_list(o.taus, "taus");
  auto weights = parse_float_list(o.weights, "cfg-weights");
  auto by_value = [](const auto& a, const auto& b) { return a.second < b.second; };
  std::sort(taus.begin(), taus.end(), by_value);
  std::sort(weights.begin(), weights.end(), by_value);
  for (size_t i = 1; i < taus.size(); ++i) {
    if (taus[i].second == taus[i - 1].second) throw ConfigError("duplicate tau " + taus[i].first);
  }
  for (size_t i = 1; i < weights.size(); ++i) {
    if (weights[i].second == weights[i - 1].second) {
      throw ConfigError("duplicate guidance weight " + weights[i].first);
    }
  }

  const InputData in = load_input(o.in, lm.model.data_dim());
  if (!in.is_images) throw ContractError("ablation needs image inputs for the structure metrics");
  const ImageSet real = load_image_dir(o.real);
  if (real.height != in.height || real.width != in.width) {
    throw DimensionError("real images are " + std::to_string(real.height) + "x" +
                         std::to_string(real.width) + " but inputs are " +
                         std::to_string(in.height) + "x" + std::to_string(in.width));
  }
  const SampleSet real_set = SampleSet::from_matrix(real.flat, "real");
  const Tensor source_pixels = to_pixel_range(in.model_space);
  const SampleSet source_set = SampleSet::from_matrix(source_pixels, "source");

  const size_t nt = taus.size(), nw = weights.size();
  std::vector<double> rfid_cell(nw * nt), ssim_cell(nw * nt), l2_cell(nw * nt);
  for (size_t wi = 0; wi < nw; ++wi) {
    for (size_t ti = 0; ti < nt; ++ti) {
      BridgeConfig cfg;
      cfg.tau = taus[ti].second;
      cfg.steps = o.steps;
      cfg.guidance_weight = weights[wi].second;
      cfg.use_ema = !o.live;
      cfg.encode_guidance = parse_encode_guidance(o.encode_guidance);
      cfg.validate();
      const TranslationResult tr = translate(lm.model, in.model_space, src, tgt, cfg);
      const Tensor pixels = to_pixel_range(tr.x_hat);
      const SampleSet gen_set = SampleSet::from_matrix(pixels, "gen");
      double ssim_sum = 0.0;
      for (int i = 0; i < pixels.rows(); ++i) {
        ssim_sum += ssim(row_to_image(pixels, i, in.height, in.width),
                         row_to_image(source_pixels, i, in.height, in.width));
      }
      const size_t cell = wi * nt + ti;
      rfid_cell[cell] = frechet_gaussian(gen_set, real_set);
      ssim_cell[cell] = ssim_sum / pixels.rows();
      l2_cell[cell] = mean_relative_l2(gen_set, source_set);
    }
  }

  std::string csv = "guidance";
  for (const auto& [token, value] : taus) {
    (void)value;
    csv += ",rfid@tau=" + token + ",ssim@tau=" + token + ",source_l2@tau=" + token;
  }
  csv += "\n";
  for (size_t wi = 0; wi < nw; ++wi) {
    csv += weights[wi].first;
    for (size_t ti = 0; ti < nt; ++ti) {
      const size_t cell = wi * nt + ti;
      csv += "," + fmt9(rfid_cell[cell]) + "," + fmt9(ssim_cell[cell]) + "," + fmt9(l2_cell[cell]);
    }
    csv += "\n";
  }

  std::vector<double> ssim_by_tau(nt, 0.0), rfid_by_weight(nw, 0.0);
  for (size_t wi = 0; wi < nw; ++wi) {
    for (size_t ti = 0; ti < nt; ++ti) {
      ssim_by_tau[ti] += ssim_cell[wi * nt + ti] / static_cast<double>(nw);
      rfid_by_weight[wi] += rfid_cell[wi * nt + ti] / static_cast<double>(nt);
    }
  }
  bool ssim_up = true;
  for (size_t ti = 1; ti < nt; ++ti) ssim_up = ssim_up && ssim_by_tau[ti] >= ssim_by_tau[ti - 1];
  bool rfid_down = true;
  for (size_t wi = 1; wi < nw; ++wi) {
    rfid_down = rfid_down && rfid_by_weight[wi] <= rfid_by_weight[wi - 1];
  }
  csv += "# trend,mean_ssim_by_tau";
  for (double v : ssim_by_tau) csv += "," + fmt9(v);
  csv += std::string(",nondecreasing=") + (ssim_up ? "pass" : "fail") + "\n";
  csv += "# trend,mean_rfid_by_guidance";
  for (double v : rfid_by_weight) csv += "," + fmt9(v);
  csv += std::string(",nonincreasing=") + (rfid_down ? "pass" : "fail") + "\n";

  write_text(o.out, csv);
  std::fputs(csv.c_str(), stdout);
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseOpts {
  std::string ckpt, domain_a, domain_b, in_a, in_b, out, scatter;
  std::string taus = "1.0,0.6,0.3";
  int bootstrap = 0;
  int steps = 50;
  float weight = 8.5f;
  bool live = false;
  std::string encode_guidance = "conditional";
};

void cmd_diagnose(const DiagnoseOpts& o) {
  const LoadedModel lm = load_model(o.ckpt);
  const DomainLabel la = resolve_domain(lm, o.domain_a);
  const DomainLabel lb = resolve_domain(lm, o.domain_b);
  const InputData a = load_input(o.in_a, lm.model.data_dim());
  const InputData b = load_input(o.in_b, lm.model.data_dim());
  const SampleSet sa = SampleSet::from_matrix(a.model_space, o.domain_a);
  const SampleSet sb = SampleSet::from_matrix(b.model_space, o.domain_b);

  std::vector<float> taus;
  for (const auto& [token, value] : parse_float_list(o.taus, "taus")) {
    (void)token;
    taus.push_back(value);
  }

  BridgeConfig cfg;
  cfg.steps = o.steps;
  cfg.guidance_weight = o.weight;
  cfg.use_ema = !o.live;
  cfg.encode_guidance = parse_encode_guidance(o.encode_guidance);

  const OverlapCurve curve = overlap_curve(lm.model, sa, la, sb, lb, taus, cfg, o.bootstrap);
  const std::string csv = overlap_csv(curve);
  write_text(o.out, csv);
  std::fputs(csv.c_str(), stdout);

  if (!o.scatter.empty()) {
    const float tau = taus.back();
    Tensor za = a.model_space;
    Tensor zb = b.model_space;
    if (tau != 1.0f) {
      BridgeConfig point = cfg;
      point.tau = tau;
      point.validate();
      za = encode(lm.model, a.model_space, la, point);
      zb = encode(lm.model, b.model_space, lb, point);
    }
    write_text(o.scatter, pca_scatter_csv(za, zb));
  }
}

// ---------------------------------------------------------------------------
// make-data

struct MakeDataOpts {
  std::string kind, out;
  int res = 32;
  std::string poses = "rxrz";
  int shots = 2;
  std::string doses = "low,normal,high";
  float test_fraction = 0.15f;
  long long seed = 0;
  std::string generators = "two_moons,two_rings";
  int samples = 2048;
  float noise = 0.05f;
};

std::vector<Pose> select_poses(const std::string& spec) {
  if (spec == "rz") return rz_sweep();
  if (spec == "grid") return pose_grid();
  if (spec == "rxrz") {
    std::vector<Pose> out;
    for (const Pose& p : pose_grid()) {
      if (p.ry == 0) out.push_back(p);
    }
    return out;
  }
  if (spec.rfind("first:", 0) == 0) {
    const std::string tail = spec.substr(6);
    int n = 0;
    try {
      size_t used = 0;
      n = std::stoi(tail, &used);
      if (used != tail.size()) throw std::invalid_argument(tail);
    } catch (const std::exception&) {
      throw ConfigError("poses 'first:<n>' needs a number, got '" + tail + "'");
    }
    std::vector<Pose> grid = pose_grid();
    if (n < 1 || n > static_cast<int>(grid.size())) {
      throw ConfigError("poses 'first:" + tail + "' out of range [1, " +
                        std::to_string(grid.size()) + "]");
    }
    grid.resize(n);
    return grid;
  }
  throw ConfigError("unknown pose set '" + spec + "' (rz, rxrz, grid, first:<n>)");
}

void cmd_make_data(const MakeDataOpts& o) {
  const fs::path root(o.out);
  if (o.kind == "points") {
    const std::vector<std::string> gens = split_commas(o.generators);
    if (gens.empty()) throw ConfigError("no point generators given");
    for (size_t k = 0; k < gens.size(); ++k) {
      PointCloudDomain dom{gens[k], o.noise, o.samples,
                           Rng::derive(static_cast<uint64_t>(o.seed), 1000 + k)};
      const SampleSet set = gen_points(dom);
      fs::create_directories(root / gens[k]);
      write_points_csv(root / gens[k] / "points.csv", set.matrix());
      std::printf("wrote %d points to %s\n", o.samples,
                  (root / gens[k] / "points.csv").string().c_str());
    }
    return;
  }
  if (o.kind != "phantoms") {
    throw ConfigError("unknown kind '" + o.kind + "' (points, phantoms)");
  }

  const std::vector<Pose> poses = select_poses(o.poses);
  if (o.shots < 1) throw ConfigError("shots must be positive");
  std::vector<Dose> doses;
  for (const std::string& name : split_commas(o.doses)) doses.push_back(dose_from_name(name));
  if (doses.empty()) throw ConfigError("no doses given");

  const PoseSplit split = split_poses(poses, SplitSpec{o.test_fraction},
                                      static_cast<uint64_t>(o.seed));
  std::set<int> test_keys;
  for (const Pose& p : split.test) test_keys.insert(p.grid_key());
  std::vector<std::pair<std::string, std::string>> rows;
  std::set<int> seen;
  for (const Pose& p : poses) {
    if (!seen.insert(p.grid_key()).second) continue;
    rows.emplace_back(p.id(), test_keys.count(p.grid_key()) ? "test" : "train");
  }
  fs::create_directories(root);
  write_split_csv(root / "split.csv", rows);

  int written = 0;
  for (const PhantomStyle style : {PhantomStyle::kSynthetic, PhantomStyle::kReal}) {
    const std::string style_name = style == PhantomStyle::kSynthetic ? "synthetic" : "real";
    for (const Dose dose : doses) {
      const fs::path dir = root / style_name / dose_name(dose);
      fs::create_directories(dir);
      PhantomImageDomain dom{o.res, style, dose, static_cast<uint64_t>(o.seed)};
      for (const Pose& p : poses) {
        for (int shot = 0; shot < o.shots; ++shot) {
          char name[64];
          std::snprintf(name, sizeof(name), "%s_%d.pgm", p.id().c_str(), shot);
          save_pgm(gen_phantom(dom, p, shot), dir / name);
          ++written;
        }
      }
    }
  }
  std::printf("wrote %d images under %s (%zu train / %zu test poses)\n", written,
              o.out.c_str(), split.train.size(), split.test.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-conditional flow bridge: training, translation, evaluation"};
  app.require_subcommand(1);

  TrainOpts train_o;
  CLI::App* t = app.add_subcommand("train", "fit the shared conditional vector field");
  t->add_option("--config", train_o.config, "key=value config file");
  t->add_option("--data", train_o.data, "corpus root: <root>/<domain>/<dose>/*.pgm");
  t->add_option("--toy", train_o.toy, "comma list of point generators");
  t->add_option("--out", train_o.out, "checkpoint path")->required();
  t->add_option("--loss-csv", train_o.loss_csv, "loss curve path (default <out>.loss.csv)");
  t->add_option("--epochs", train_o.epochs, "override the config epoch count");
  t->add_option("--seed", train_o.seed, "override the config seed");
  t->callback([&] { cmd_train(train_o); });

  GenerateOpts gen_o;
  CLI::App* g = app.add_subcommand("generate", "sample the prior and integrate to data");
  g->add_option("--ckpt", gen_o.ckpt, "checkpoint path")->required();
  g->add_option("--domain", gen_o.domain, "target domain name or index")->required();
  g->add_option("--count", gen_o.count, "number of samples");
  g->add_option("--seed", gen_o.seed, "prior sampling seed");
  g->add_option("--steps", gen_o.steps, "integrator steps");
  g->add_option("--cfg-weight", gen_o.weight, "guidance weight");
  g->add_flag("--live", gen_o.live, "use live weights instead of the EMA");
  g->add_option("--out", gen_o.out, "output CSV (points) or directory (images)")->required();
  g->callback([&] { cmd_generate(gen_o); });

  TranslateOpts tr_o;
  CLI::App* tr = app.add_subcommand("translate", "bridge samples from one domain to another");
  tr->add_option("--ckpt", tr_o.ckpt, "checkpoint path")->required();
  tr->add_option("--source-domain", tr_o.source, "source domain name or index")->required();
  tr->add_option("--target-domain", tr_o.target, "target domain name or index")->required();
  tr->add_option("--in", tr_o.in, "input directory, .pgm, or .csv")->required();
  tr->add_option("--out", tr_o.out, "output directory (images) or CSV path (points)")->required();
  tr->add_option("--tau", tr_o.tau, "bridge depth in (0, 1]");
  tr->add_option("--steps", tr_o.steps, "integrator steps");
  tr->add_option("--cfg-weight", tr_o.weight, "guidance weight");
  tr->add_flag("--live", tr_o.live, "use live weights instead of the EMA");
  tr->add_option("--encode-guidance", tr_o.encode_guidance, "guided | conditional");
  tr->add_flag("--emit-latents", tr_o.emit_latents, "also write the bridge latents");
  tr->callback([&] { cmd_translate(tr_o); });

  EvaluateOpts ev_o;
  CLI::App* ev = app.add_subcommand("evaluate", "score translation sets against real data");
  ev->add_option("--real", ev_o.real, "directory of real target-domain images")->required();
  ev->add_option("--source", ev_o.source, "directory of source images (paired by name)")
      ->required();
  ev->add_option("--gen", ev_o.gen, "method set as name=dir (repeatable)")->required();
  ev->add_option("--knn", ev_o.knn, "coverage neighborhood size");
  ev->add_option("--out", ev_o.out, "report path (CSV sibling written at <out>.csv)")->required();
  ev->callback([&] { cmd_evaluate(ev_o); });

  AblateOpts ab_o;
  CLI::App* ab = app.add_subcommand("ablate", "sweep bridge depth and guidance weight");
  ab->add_option("--ckpt", ab_o.ckpt, "checkpoint path")->required();
  ab->add_option("--source-domain", ab_o.source, "source domain")->required();
  ab->add_option("--target-domain", ab_o.target, "target domain")->required();
  ab->add_option("--in", ab_o.in, "source image directory")->required();
  ab->add_option("--real", ab_o.real, "real target-domain image directory")->required();
  ab->add_option("--taus", ab_o.taus, "comma list of bridge depths");
  ab->add_option("--cfg-weights", ab_o.weights, "comma list of guidance weights");
  ab->add_option("--steps", ab_o.steps, "integrator steps");
  ab->add_flag("--live", ab_o.live, "use live weights instead of the EMA");
  ab->add_option("--encode-guidance", ab_o.encode_guidance, "guided | conditional");
  ab->add_option("--out", ab_o.out, "grid CSV path")->required();
  ab->callback([&] { cmd_ablate(ab_o); });

  DiagnoseOpts di_o;
  CLI::App* di = app.add_subcommand("diagnose", "latent overlap across bridge depths");
  di->add_option("--ckpt", di_o.ckpt, "checkpoint path")->required();
  di->add_option("--domain-a", di_o.domain_a, "first domain")->required();
  di->add_option("--domain-b", di_o.domain_b, "second domain")->required();
  di->add_option("--in-a", di_o.in_a, "first domain samples (dir or .csv)")->required();
  di->add_option("--in-b", di_o.in_b, "second domain samples (dir or .csv)")->required();
  di->add_option("--taus", di_o.taus, "descending bridge depths, 1.0 first");
  di->add_option("--bootstrap", di_o.bootstrap, "bootstrap resamples for standard errors");
  di->add_option("--steps", di_o.steps, "integrator steps");
  di->add_option("--cfg-weight", di_o.weight, "guidance weight (guided encoding only)");
  di->add_flag("--live", di_o.live, "use live weights instead of the EMA");
  di->add_option("--encode-guidance", di_o.encode_guidance, "guided | conditional");
  di->add_option("--out", di_o.out, "overlap CSV path")->required();
  di->add_option("--scatter", di_o.scatter, "optional PCA scatter CSV at the deepest tau");
  di->callback([&] { cmd_diagnose(di_o); });

  MakeDataOpts md_o;
  CLI::App* md = app.add_subcommand("make-data", "write a synthetic corpus to disk");
  md->add_option("--kind", md_o.kind, "points | phantoms")->required();
  md->add_option("--out", md_o.out, "corpus root")->required();
  md->add_option("--res", md_o.res, "phantom resolution");
  md->add_option("--poses", md_o.poses, "rz | rxrz | grid | first:<n>");
  md->add_option("--shots", md_o.shots, "noise realizations per pose");
  md->add_option("--doses", md_o.doses, "comma list of low, normal, high");
  md->add_option("--test-fraction", md_o.test_fraction, "held-out pose fraction");
  md->add_option("--seed", md_o.seed, "corpus seed");
  md->add_option("--generators", md_o.generators, "comma list of point generators");
  md->add_option("--samples", md_o.samples, "points per generator");
  md->add_option("--noise", md_o.noise, "point jitter sigma");
  md->callback([&] { cmd_make_data(md_o); });

  auto fail = [](int code, const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return code;
  };
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    return fail(2, e);
  } catch (const LabelError& e) {
    return fail(2, e);
  } catch (const ContractError& e) {
    return fail(2, e);
  } catch (const ParseError& e) {
    return fail(3, e);
  } catch (const SchemaError& e) {
    return fail(3, e);
  } catch (const IoError& e) {
    return fail(3, e);
  } catch (const DimensionError& e) {
    return fail(3, e);
  } catch (const NumericError& e) {
    return fail(4, e);
  } catch (const TrainingError& e) {
    return fail(4, e);
  } catch (const Error& e) {
    return fail(4, e);
  } catch (const std::exception& e) {
    return fail(4, e);
  }
  return 0;
}
