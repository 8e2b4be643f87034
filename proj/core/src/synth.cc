// Copyright 2026 The Condenser Forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cforge/synth.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "cforge/error.h"
#include "cforge/parallel.h"
#include "cforge/random.h"
#include "json.hpp"

namespace cforge {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr std::uint64_t kBaseStream = 1;
constexpr std::uint64_t kDefectStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kKindStream = 4;

constexpr int kManifestVersion = 1;

double Uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Squared distance from (px,py) to segment (ax,ay)-(bx,by).
double SegmentDist2(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return dx * dx + dy * dy;
}

void AddBlob(std::vector<double>& img, int h, int w, double cx, double cy, double sigma,
             double amplitude) {
  const int r = static_cast<int>(std::ceil(4 * sigma));
  for (int y = std::max(0, static_cast<int>(cy) - r); y <= std::min(h - 1, static_cast<int>(cy) + r); ++y)
    for (int x = std::max(0, static_cast<int>(cx) - r); x <= std::min(w - 1, static_cast<int>(cx) + r); ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      img[y * w + x] += amplitude * std::exp(-d2 / (2 * sigma * sigma));
    }
}

void AddScratch(std::vector<double>& img, int h, int w, Rng& rng, double amplitude) {
  const int segments = std::uniform_int_distribution<int>(3, 4)(rng);
  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(Uniform(rng, 0.2 * w, 0.8 * w), Uniform(rng, 0.2 * h, 0.8 * h));
  double angle = Uniform(rng, 0, 2 * std::numbers::pi);
  for (int s = 0; s < segments; ++s) {
    const double len = Uniform(rng, 10.0, 20.0) * w / 64.0;
    angle += Uniform(rng, -0.7, 0.7);
    pts.emplace_back(pts.back().first + len * std::cos(angle),
                     pts.back().second + len * std::sin(angle));
  }
  const double width = Uniform(rng, 1.2, 1.8);
  const double sign = Uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double d2 = 1e30;
      for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        d2 = std::min(d2, SegmentDist2(x, y, pts[i].first, pts[i].second, pts[i + 1].first,
                                       pts[i + 1].second));
      }
      if (d2 < 36.0) img[y * w + x] += sign * amplitude * std::exp(-d2 / (2 * width * width));
    }
}

void AddDefect(std::vector<double>& img, int h, int w, DefectKind kind, Rng& rng,
               const GenConfig& cfg) {
  const double amplitude = Uniform(rng, cfg.amplitude_min, cfg.amplitude_max);
  const double scale = w / 64.0;
  const double cx = Uniform(rng, 0.15 * w, 0.85 * w);
  const double cy = Uniform(rng, 0.15 * h, 0.85 * h);
  switch (kind) {
    case DefectKind::kScratch:
      AddScratch(img, h, w, rng, amplitude);
      break;
    case DefectKind::kBrightSpot:
      AddBlob(img, h, w, cx, cy, Uniform(rng, 3.5, 6.5) * scale, amplitude);
      break;
    case DefectKind::kDarkSpot:
      AddBlob(img, h, w, cx, cy, Uniform(rng, 3.5, 6.5) * scale, -amplitude);
      break;
    case DefectKind::kImpurity: {
      const int grains = std::uniform_int_distribution<int>(6, 10)(rng);
      for (int g = 0; g < grains; ++g) {
        const double r = Uniform(rng, 0, 5.0 * scale);
        const double t = Uniform(rng, 0, 2 * std::numbers::pi);
        AddBlob(img, h, w, cx + r * std::cos(t), cy + r * std::sin(t),
                Uniform(rng, 1.0, 1.6) * scale, -amplitude * Uniform(rng, 0.7, 1.0));
      }
      break;
    }
  }
}

std::vector<DefectKind> DrawKinds(std::uint64_t seed) {
  Rng rng = MakeRng(seed, kKindStream);
  std::vector<DefectKind> all = {DefectKind::kScratch, DefectKind::kBrightSpot,
                                 DefectKind::kDarkSpot, DefectKind::kImpurity};
  const int n = Uniform(rng, 0, 1) < 0.7 ? 1 : 2;
  std::shuffle(all.begin(), all.end(), rng);
  std::vector<DefectKind> kinds(all.begin(), all.begin() + n);
  std::sort(kinds.begin(), kinds.end());
  return kinds;
}

Json ConfigToJson(const GenConfig& c) {
  return Json{{"count", c.count},
              {"defect_fraction", c.defect_fraction},
              {"height", c.height},
              {"width", c.width},
              {"pitch_min", c.pitch_min},
              {"pitch_max", c.pitch_max},
              {"gradient_min", c.gradient_min},
              {"gradient_max", c.gradient_max},
              {"noise_sigma", c.noise_sigma},
              {"amplitude_min", c.amplitude_min},
              {"amplitude_max", c.amplitude_max},
              {"seed", c.seed}};
}

GenConfig ConfigFromJson(const Json& j) {
  GenConfig c;
  c.count = j.at("count").get<std::int64_t>();
  c.defect_fraction = j.at("defect_fraction").get<double>();
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.pitch_min = j.at("pitch_min").get<double>();
  c.pitch_max = j.at("pitch_max").get<double>();
  c.gradient_min = j.at("gradient_min").get<double>();
  c.gradient_max = j.at("gradient_max").get<double>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.amplitude_min = j.at("amplitude_min").get<double>();
  c.amplitude_max = j.at("amplitude_max").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void WriteBytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

}  // namespace

std::string_view DefectKindName(DefectKind kind) {
  switch (kind) {
    case DefectKind::kScratch:
      return "scratch";
    case DefectKind::kBrightSpot:
      return "bright_spot";
    case DefectKind::kDarkSpot:
      return "dark_spot";
    case DefectKind::kImpurity:
      return "impurity";
  }
  return "unknown";
}

std::optional<DefectKind> DefectKindFromName(std::string_view name) {
  for (DefectKind k : {DefectKind::kScratch, DefectKind::kBrightSpot, DefectKind::kDarkSpot,
                       DefectKind::kImpurity}) {
    if (DefectKindName(k) == name) return k;
  }
  return std::nullopt;
}

void GenConfig::Validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (count < 2) fail("count must be >= 2");
  if (!(defect_fraction >= 0.0 && defect_fraction <= 1.0)) fail("defect_fraction must be in [0,1]");
  if (height < 8 || width < 8) fail("image size must be at least 8x8");
  if (!(pitch_min > 1.0 && pitch_min <= pitch_max)) fail("invalid dot pitch range");
  if (!(gradient_min >= 0.0 && gradient_min <= gradient_max)) fail("invalid gradient range");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(amplitude_min > 0.0 && amplitude_min <= amplitude_max)) fail("invalid amplitude range");
}

PlateSample RenderPlate(std::uint64_t seed, const GenConfig& cfg,
                        const std::vector<DefectKind>& defects) {
  const int h = cfg.height, w = cfg.width;
  std::vector<double> img(static_cast<std::size_t>(h) * w);

  Rng base = MakeRng(seed, kBaseStream);
  const double background = Uniform(base, 80.0, 130.0);
  const double pitch = Uniform(base, cfg.pitch_min, cfg.pitch_max);
  const double phase_x = Uniform(base, 0.0, pitch);
  const double phase_y = Uniform(base, 0.0, pitch);
  const bool staggered = Uniform(base, 0.0, 1.0) < 0.5;
  const double dot_amp = Uniform(base, 8.0, 16.0);
  const double dot_sigma = Uniform(base, 0.8, 1.4);
  const double grad = Uniform(base, cfg.gradient_min, cfg.gradient_max);
  const double theta = Uniform(base, 0.0, 2 * std::numbers::pi);
  for (int y = 0; y < h; ++y) {
    const double ry = y - phase_y;
    const double row = std::floor(ry / pitch + 0.5);
    const double dy = ry - row * pitch;
    const double shift = staggered && static_cast<long>(row) % 2 != 0 ? pitch / 2 : 0.0;
    for (int x = 0; x < w; ++x) {
      const double rx = x - phase_x - shift;
      const double dx = rx - std::floor(rx / pitch + 0.5) * pitch;
      const double ramp = grad * ((x / double(w) - 0.5) * std::cos(theta) +
                                  (y / double(h) - 0.5) * std::sin(theta));
      img[y * w + x] = background + ramp +
                       dot_amp * std::exp(-(dx * dx + dy * dy) / (2 * dot_sigma * dot_sigma));
    }
  }

  Rng defect_rng = MakeRng(seed, kDefectStream);
  for (DefectKind kind : defects) AddDefect(img, h, w, kind, defect_rng, cfg);

  Rng noise = MakeRng(seed, kNoiseStream);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PlateSample s;
  s.height = h;
  s.width = w;
  s.seed = seed;
  s.defects = defects;
  std::sort(s.defects.begin(), s.defects.end());
  s.defective = !defects.empty();
  s.pixels.resize(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = img[i] + cfg.noise_sigma * gauss(noise);
    s.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return s;
}

Dataset GenerateDataset(const GenConfig& cfg) {
  cfg.Validate();
  const std::int64_t n_defective =
      std::llround(static_cast<double>(cfg.count) * cfg.defect_fraction);
  std::vector<std::int64_t> order(static_cast<std::size_t>(cfg.count));
  for (std::int64_t i = 0; i < cfg.count; ++i) order[i] = i;
  Rng pick = MakeRng(cfg.seed, HashName("defective"));
  std::shuffle(order.begin(), order.end(), pick);
  std::vector<bool> defective(order.size(), false);
  for (std::int64_t i = 0; i < n_defective; ++i) defective[order[i]] = true;

  Dataset ds;
  ds.config = cfg;
  ds.samples.resize(order.size());
  ParallelFor(order.size(), ConfiguredThreads(), [&](std::size_t i) {
    const std::uint64_t seed = DeriveSeed(cfg.seed, i);
    ds.samples[i] = RenderPlate(seed, cfg, defective[i] ? DrawKinds(seed)
                                                        : std::vector<DefectKind>{});
  });
  return ds;
}

DatasetSplit SplitDataset(const std::vector<PlateSample>& samples, double train_fraction,
                          std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train_fraction must be in (0,1)");
  }
  std::vector<bool> to_train(samples.size(), false);
  for (bool label : {false, true}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].defective == label) idx.push_back(i);
    }
    const auto n_train =
        static_cast<std::size_t>(std::floor(static_cast<double>(idx.size()) * train_fraction));
    if (n_train < 1 || n_train >= idx.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("class '") + (label ? "defective" : "non_defective") + "' has " +
                      std::to_string(idx.size()) +
                      " samples; cannot place at least one on each side of the split");
    }
    Rng rng = MakeRng(seed, HashName(label ? "split.defective" : "split.non_defective"));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < n_train; ++i) to_train[idx[i]] = true;
  }
  DatasetSplit split;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (to_train[i] ? split.train : split.test).push_back(samples[i]);
  }
  return split;
}

std::string SampleFileName(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "plate_%05zu.pgm", index);
  return buf;
}

std::string EncodePgm(const PlateSample& s) {
  std::string out = "P5\n" + std::to_string(s.width) + " " + std::to_string(s.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(s.pixels.data()), s.pixels.size());
  return out;
}

PlateSample DecodePgm(const std::string& bytes, const std::string& name) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& m) {
    throw Error(ErrorCode::kFormat, name + ": malformed PGM: " + m);
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos == start || pos - start > 6) fail("expected a header integer");
    return std::stoi(bytes.substr(start, pos - start));
  };
  if (bytes.compare(0, 2, "P5") != 0) fail("missing P5 magic");
  pos = 2;
  PlateSample s;
  s.width = read_int();
  s.height = read_int();
  const int maxval = read_int();
  if (maxval != 255) fail("maxval must be 255, got " + std::to_string(maxval));
  if (s.width < 1 || s.height < 1) fail("non-positive size");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    fail("missing whitespace after header");
  }
  ++pos;
  const std::size_t n = static_cast<std::size_t>(s.width) * s.height;
  if (bytes.size() - pos != n) {
    fail("expected " + std::to_string(n) + " pixel bytes, found " +
         std::to_string(bytes.size() - pos));
  }
  s.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return s;
}

void WriteDataset(const Dataset& dataset, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create directory '" + dir + "': " + ec.message());
  Json samples = Json::array();
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const PlateSample& s = dataset.samples[i];
    const std::string file = SampleFileName(i);
    WriteBytes(fs::path(dir) / file, EncodePgm(s));
    Json kinds = Json::array();
    for (DefectKind k : s.defects) kinds.push_back(DefectKindName(k));
    samples.push_back(Json{{"file", file},
                           {"label", s.defective ? "defective" : "non_defective"},
                           {"seed", s.seed},
                           {"defects", kinds}});
  }
  Json manifest{{"version", kManifestVersion},
                {"gen_config", ConfigToJson(dataset.config)},
                {"samples", samples}};
  WriteBytes(fs::path(dir) / "manifest.json", manifest.dump(2) + "\n");
}

Dataset ReadDataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  Json manifest;
  try {
    manifest = Json::parse(ReadBytes(manifest_path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kFormat, manifest_path.string() + ": " + e.what());
  }
  Dataset ds;
  try {
    if (manifest.at("version").get<int>() != kManifestVersion) {
      throw Error(ErrorCode::kFormat, manifest_path.string() + ": unsupported manifest version");
    }
    ds.config = ConfigFromJson(manifest.at("gen_config"));
    const Json& samples = manifest.at("samples");
    std::size_t pgm_files = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".pgm") ++pgm_files;
    }
    if (pgm_files != samples.size()) {
      throw Error(ErrorCode::kFormat, manifest_path.string() + ": manifest lists " +
                                          std::to_string(samples.size()) + " samples but " +
                                          std::to_string(pgm_files) +
                                          " PGM files are present");
    }
    for (const Json& rec : samples) {
      const std::string file = rec.at("file").get<std::string>();
      PlateSample s = DecodePgm(ReadBytes(fs::path(dir) / file), file);
      const std::string label = rec.at("label").get<std::string>();
      if (label != "defective" && label != "non_defective") {
        throw Error(ErrorCode::kFormat, file + ": unknown label '" + label + "'");
      }
      s.defective = label == "defective";
      s.seed = rec.at("seed").get<std::uint64_t>();
      for (const Json& k : rec.at("defects")) {
        auto kind = DefectKindFromName(k.get<std::string>());
        if (!kind) throw Error(ErrorCode::kFormat, file + ": unknown defect kind");
        s.defects.push_back(*kind);
      }
      if (s.defective == s.defects.empty()) {
        throw Error(ErrorCode::kFormat, file + ": label disagrees with defect list");
      }
      ds.samples.push_back(std::move(s));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kFormat, manifest_path.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace cforge
