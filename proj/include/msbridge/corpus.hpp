#pragma once

// On-disk dataset plumbing: image sets as rows of flattened pixels, the
// two-level corpus layout <root>/<domain>/<dose>/<pose-id>_<shot>.pgm, the
// pose split manifest, and two-column point CSVs.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "msbridge/errors.hpp"
#include "msbridge/pgm.hpp"
#include "msbridge/tensor.hpp"

namespace msbridge {

/// Pixel range [0, 1] -> model range [-1, 1].
inline Tensor to_model_range(Tensor x) {
  for (float& v : x.data) v = 2.0f * v - 1.0f;
  return x;
}

/// Model range -> pixel range, clamped to [0, 1].
inline Tensor to_pixel_range(Tensor x) {
  for (float& v : x.data) v = std::min(1.0f, std::max(0.0f, 0.5f * (v + 1.0f)));
  return x;
}

/// A directory of same-sized grayscale images flattened row-major into a
/// samples x (height*width) matrix, values in [0, 1].
struct ImageSet {
  Tensor flat;
  int height = 0;
  int width = 0;
  std::vector<std::string> names;  // file names, sorted; rows follow this order
};

/// Sorted list of the .pgm files directly inside `dir`.
inline std::vector<std::filesystem::path> list_pgms(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw IoError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Loads explicit image files into one matrix. All images must share a
/// single shape.
inline ImageSet load_image_set(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw IoError("image set is empty");
  ImageSet set;
  for (size_t i = 0; i < paths.size(); ++i) {
    const Tensor img = load_pgm(paths[i]);
    if (i == 0) {
      set.height = img.rows();
      set.width = img.cols();
      set.flat = Tensor::zeros({static_cast<int>(paths.size()), set.height * set.width});
    } else if (img.rows() != set.height || img.cols() != set.width) {
      throw DimensionError("image " + paths[i].string() + " is " + std::to_string(img.rows()) +
                           "x" + std::to_string(img.cols()) + ", expected " +
                           std::to_string(set.height) + "x" + std::to_string(set.width));
    }
    std::copy(img.data.begin(), img.data.end(),
              set.flat.data.begin() + static_cast<int64_t>(i) * set.height * set.width);
    set.names.push_back(paths[i].filename().string());
  }
  return set;
}

/// Loads every .pgm directly inside `dir`.
inline ImageSet load_image_dir(const std::filesystem::path& dir) {
  const auto paths = list_pgms(dir);
  if (paths.empty()) throw IoError("no .pgm files in " + dir.string());
  return load_image_set(paths);
}

/// Reshapes one flattened row back into an image tensor.
inline Tensor row_to_image(const Tensor& flat, int row, int height, int width) {
  flat.require_2d();
  if (flat.cols() != height * width) {
    throw DimensionError("row of width " + std::to_string(flat.cols()) + " is not " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  Tensor img = Tensor::zeros({height, width});
  const auto begin = flat.data.begin() + static_cast<int64_t>(row) * flat.cols();
  std::copy(begin, begin + flat.cols(), img.data.begin());
  return img;
}

// ---------------------------------------------------------------------------
// Corpus layout

/// One image file inside a corpus tree.
struct CorpusFile {
  std::string domain;
  std::string dose;
  std::string pose_id;
  int shot = 0;
  std::filesystem::path path;
};

namespace detail {

/// Splits "<pose-id>_<shot>" at the last underscore.
inline void parse_corpus_stem(const std::filesystem::path& p, std::string* pose_id, int* shot) {
  const std::string stem = p.stem().string();
  const size_t cut = stem.rfind('_');
  if (cut == std::string::npos || cut == 0 || cut + 1 == stem.size()) {
    throw ParseError("corpus file " + p.string() + ": name is not <pose-id>_<shot>.pgm");
  }
  const std::string tail = stem.substr(cut + 1);
  for (char c : tail) {
    if (c < '0' || c > '9') {
      throw ParseError("corpus file " + p.string() + ": shot suffix '" + tail +
                       "' is not a number");
    }
  }
  *pose_id = stem.substr(0, cut);
  *shot = std::stoi(tail);
}

}  // namespace detail

/// Walks <root>/<domain>/<dose>/<pose-id>_<shot>.pgm and returns every
/// image file sorted by (domain, dose, pose id, shot). Non-.pgm files are
/// ignored; a .pgm whose name does not fit the pattern is an error.
inline std::vector<CorpusFile> scan_corpus(const std::filesystem::path& root) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    throw IoError("data root is not a directory: " + root.string());
  }
  std::vector<CorpusFile> out;
  std::vector<std::filesystem::path> domains;
  for (const auto& d : std::filesystem::directory_iterator(root)) {
    if (d.is_directory()) domains.push_back(d.path());
  }
  std::sort(domains.begin(), domains.end());
  for (const auto& domain : domains) {
    std::vector<std::filesystem::path> doses;
    for (const auto& d : std::filesystem::directory_iterator(domain)) {
      if (d.is_directory()) doses.push_back(d.path());
    }
    std::sort(doses.begin(), doses.end());
    for (const auto& dose : doses) {
      for (const auto& file : list_pgms(dose)) {
        CorpusFile cf;
        cf.domain = domain.filename().string();
        cf.dose = dose.filename().string();
        detail::parse_corpus_stem(file, &cf.pose_id, &cf.shot);
        cf.path = file;
        out.push_back(cf);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const CorpusFile& a, const CorpusFile& b) {
    return std::tie(a.domain, a.dose, a.pose_id, a.shot) <
           std::tie(b.domain, b.dose, b.pose_id, b.shot);
  });
  return out;
}

/// Sorted unique domain names in a scanned corpus.
inline std::vector<std::string> corpus_domains(const std::vector<CorpusFile>& files) {
  std::set<std::string> names;
  for (const CorpusFile& f : files) names.insert(f.domain);
  return {names.begin(), names.end()};
}

// ---------------------------------------------------------------------------
// Split manifest: "pose_id,split" rows with split in {train, test}

inline void write_split_csv(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "pose_id,split\n";
  for (const auto& [pose_id, split] : rows) out << pose_id << "," << split << "\n";
  if (!out) throw IoError("short write to " + path.string());
}

/// Returns pose id -> "train" | "test".
inline std::map<std::string, std::string> read_split_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "pose_id,split") {
        throw ParseError(path.string() + " line 1: expected header 'pose_id,split'");
      }
      continue;
    }
    const size_t comma = line.find(',');
    if (comma == std::string::npos || comma == 0) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) +
                       ": expected 'pose_id,split'");
    }
    const std::string pose_id = line.substr(0, comma);
    const std::string split = line.substr(comma + 1);
    if (split != "train" && split != "test") {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": split '" + split +
                       "' is not 'train' or 'test'");
    }
    if (!out.emplace(pose_id, split).second) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": duplicate pose '" +
                       pose_id + "'");
    }
  }
  if (out.empty()) throw ParseError(path.string() + ": no pose rows");
  return out;
}

// ---------------------------------------------------------------------------
// Point CSVs: an optional "x,y" header, then one "x,y" row per sample

inline void write_points_csv(const std::filesystem::path& path, const Tensor& points) {
  points.require_2d();
  if (points.cols() != 2) {
    throw DimensionError("points matrix has " + std::to_string(points.cols()) + " columns, not 2");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "x,y\n";
  char buf[64];
  for (int i = 0; i < points.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", static_cast<double>(points.at(i, 0)),
                  static_cast<double>(points.at(i, 1)));
    out << buf;
  }
  if (!out) throw IoError("short write to " + path.string());
}

inline Tensor read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<float> values;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line_no == 1 && line == "x,y") continue;
    const size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) +
                       ": expected 'x,y' row");
    }
    for (const std::string& field : {line.substr(0, comma), line.substr(comma + 1)}) {
      try {
        size_t used = 0;
        const float v = std::stof(field, &used);
        while (used < field.size() && (field[used] == ' ' || field[used] == '\t')) ++used;
        if (used != field.size()) throw std::invalid_argument(field);
        values.push_back(v);
      } catch (const std::exception&) {
        throw ParseError(path.string() + " line " + std::to_string(line_no) + ": bad number '" +
                         field + "'");
      }
    }
  }
  if (values.empty()) throw ParseError(path.string() + ": no point rows");
  Tensor out = Tensor::zeros({static_cast<int>(values.size()) / 2, 2});
  out.data = values;
  return out;
}

}  // namespace msbridge
