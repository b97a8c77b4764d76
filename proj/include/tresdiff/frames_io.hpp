#pragma once

// 8-bit grayscale image files (binary PGM, "P5") and frame directories.
//
// A frame directory holds *.pgm images read in lexicographic filename order
// plus timestamps.txt with one decimal seconds value per line. Pixel values are
// mapped to [0,1] by dividing by 255.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tresdiff/common.hpp"
#include "tresdiff/events.hpp"
#include "tresdiff/simulator.hpp"

namespace tresdiff {

namespace fs = std::filesystem;

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void write_pgm(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) row[x] = static_cast<char>(to_u8(img.at(y, x)));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

inline Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open image " + path.string());
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  if (next_token() != "P5") throw ParseError(path.string() + ": not a binary PGM (P5) file");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": malformed PGM header");
  }
  if (w < 1 || h < 1 || maxval != 255) throw ParseError(path.string() + ": only 8-bit PGM images are supported");
  Image img(h, w);
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw ParseError(path.string() + ": truncated pixel data");
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0;
  return img;
}

inline std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.pgm", index);
  return buf;
}

inline void write_timestamps(const fs::path& path, const std::vector<double>& ts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (double t : ts) out << detail::format_double(t) << '\n';
}

inline std::vector<double> read_timestamps(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  std::vector<double> ts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = detail::trim(line);
    if (s.empty()) continue;
    double t;
    if (!detail::parse_number(s, t)) throw ParseError("malformed timestamp in " + path.string(), lineno);
    ts.push_back(t);
  }
  return ts;
}

inline void write_frame_directory(const fs::path& dir, const FrameSequence& seq) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) write_pgm(dir / frame_filename(i), seq.frames[i]);
  write_timestamps(dir / "timestamps.txt", seq.timestamps);
}

inline FrameSequence read_frame_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingArtifactError("frame directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  FrameSequence seq;
  seq.timestamps = read_timestamps(dir / "timestamps.txt");
  for (const auto& f : files) seq.frames.push_back(read_pgm(f));
  if (seq.frames.empty()) throw MissingArtifactError("no .pgm frames in " + dir.string());
  seq.geometry = SensorGeometry{seq.frames.front().width, seq.frames.front().height};
  seq.validate();
  return seq;
}

}  // namespace tresdiff
