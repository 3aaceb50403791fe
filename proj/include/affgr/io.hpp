#pragma once

// Binary and text file formats. All multi-byte integers and floats are
// little-endian.
//
//   mask   : 8-bit PGM (P5, nonzero = foreground) or
//            "AGM1" | u32 width | u32 height | width*height bytes
//   depth  : "AGD1" | u32 width | u32 height | width*height f32 (meters)
//   matrix : "AGX1" | u32 rows  | u32 cols   | rows*cols f64, row-major
//   cloud  : "AGP1" | u64 count | count * (f32 x, f32 y, f32 z)
//            or JSON Lines, one [x, y, z] array per line
//   camera : JSON {fx, fy, cx, cy, rotation: 9 numbers row-major, translation: 3}

#include <affgr/error.hpp>
#include <affgr/graspgeom.hpp>
#include <affgr/mask.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace affgr::io {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

namespace detail {

class Reader {
 public:
  Reader(std::string_view data, std::string name) : data_(data), name_(std::move(name)) {}

  template <typename T>
  T read() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    std::array<char, sizeof(T)> raw{};
    std::memcpy(raw.data(), data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, raw.data(), sizeof(T));
    return v;
  }

  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void expect_end() const {
    if (pos_ != data_.size()) fail("trailing bytes after payload");
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::Format, name_ + ": " + why);
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated file");
  }

  std::string_view data_;
  std::string name_;
  std::size_t pos_ = 0;
};

template <typename T>
void put(std::string& out, T v) {
  std::array<char, sizeof(T)> raw{};
  std::memcpy(raw.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.append(raw.data(), raw.size());
}

inline std::uint64_t checked_area(std::uint32_t w, std::uint32_t h, const Reader& r) {
  if (w == 0 || h == 0) r.fail("zero dimension");
  if (w > (1U << 20) || h > (1U << 20)) r.fail("dimension too large");
  return static_cast<std::uint64_t>(w) * h;
}

inline AffordanceMask parse_pgm(std::string_view data, const std::string& name) {
  std::size_t pos = 2;
  auto fail = [&](const std::string& why) { throw Error(ErrorCode::Format, name + ": " + why); };
  auto next_int = [&]() -> long {
    while (pos < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
      else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else break;
    }
    const std::size_t start = pos;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos || pos - start > 9) fail("bad PGM header");
    return std::stol(std::string(data.substr(start, pos - start)));
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || w > (1L << 20) || h > (1L << 20)) fail("bad PGM dimensions");
  if (maxval <= 0 || maxval > 255) fail("only 8-bit PGM is supported");
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos]))) fail("bad PGM header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (data.size() - pos != n) fail("PGM payload has wrong size");
  AffordanceMask m(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < n; ++i) m.bits[i] = data[pos + i] != 0 ? 1 : 0;
  return m;
}

}  // namespace detail

inline AffordanceMask parse_mask(std::string_view data, const std::string& name = "mask") {
  if (data.substr(0, 2) == "P5") return detail::parse_pgm(data, name);
  detail::Reader r(data, name);
  if (data.size() < 4 || r.bytes(4) != "AGM1") r.fail("not a PGM (P5) or AGM1 mask");
  const auto w = r.read<std::uint32_t>();
  const auto h = r.read<std::uint32_t>();
  const auto n = detail::checked_area(w, h, r);
  const auto payload = r.bytes(n);
  r.expect_end();
  AffordanceMask m(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < n; ++i) m.bits[i] = payload[i] != 0 ? 1 : 0;
  return m;
}

inline AffordanceMask read_mask(const fs::path& path) {
  return parse_mask(read_file(path), path.string());
}

inline std::string encode_mask_pgm(const AffordanceMask& m) {
  std::string out = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n255\n";
  for (auto b : m.bits) out.push_back(b ? static_cast<char>(255) : '\0');
  return out;
}

inline std::string encode_mask_agm(const AffordanceMask& m) {
  std::string out = "AGM1";
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.width));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.height));
  for (auto b : m.bits) out.push_back(b ? '\1' : '\0');
  return out;
}

/// Extension picks the encoding: ".pgm" writes PGM, anything else AGM1.
inline void write_mask(const fs::path& path, const AffordanceMask& m) {
  write_file(path, path.extension() == ".pgm" ? encode_mask_pgm(m) : encode_mask_agm(m));
}

inline DepthFrame parse_depth(std::string_view data, const std::string& name = "depth") {
  detail::Reader r(data, name);
  if (data.size() < 4 || r.bytes(4) != "AGD1") r.fail("missing AGD1 magic");
  const auto w = r.read<std::uint32_t>();
  const auto h = r.read<std::uint32_t>();
  const auto n = detail::checked_area(w, h, r);
  DepthFrame d{static_cast<int>(w), static_cast<int>(h), {}};
  d.depths.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) d.depths.push_back(r.read<float>());
  r.expect_end();
  return d;
}

inline DepthFrame read_depth(const fs::path& path) {
  return parse_depth(read_file(path), path.string());
}

inline std::string encode_depth(const DepthFrame& d) {
  std::string out = "AGD1";
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d.width));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d.height));
  for (double v : d.depths) detail::put<float>(out, static_cast<float>(v));
  return out;
}

inline void write_depth(const fs::path& path, const DepthFrame& d) { write_file(path, encode_depth(d)); }

inline Eigen::MatrixXd parse_matrix(std::string_view data, const std::string& name = "matrix") {
  detail::Reader r(data, name);
  if (data.size() < 4 || r.bytes(4) != "AGX1") r.fail("missing AGX1 magic");
  const auto rows = r.read<std::uint32_t>();
  const auto cols = r.read<std::uint32_t>();
  detail::checked_area(rows, cols, r);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.read<double>();
  r.expect_end();
  return m;
}

inline Eigen::MatrixXd read_matrix(const fs::path& path) {
  return parse_matrix(read_file(path), path.string());
}

inline std::string encode_matrix(const Eigen::MatrixXd& m) {
  std::string out = "AGX1";
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) detail::put<double>(out, m(i, j));
  return out;
}

inline void write_matrix(const fs::path& path, const Eigen::MatrixXd& m) {
  write_file(path, encode_matrix(m));
}

inline std::vector<Vec3> parse_cloud(std::string_view data, const std::string& name = "cloud") {
  std::vector<Vec3> pts;
  if (data.substr(0, 4) == "AGP1") {
    detail::Reader r(data, name);
    r.bytes(4);
    const auto n = r.read<std::uint64_t>();
    if (n > (data.size() - 12) / 12) r.fail("point count exceeds payload");
    pts.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      const float x = r.read<float>(), y = r.read<float>(), z = r.read<float>();
      pts.emplace_back(x, y, z);
    }
    r.expect_end();
    return pts;
  }
  std::istringstream in{std::string(data)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected [x, y, z]");
      pts.emplace_back(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::Format, name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pts;
}

inline std::vector<Vec3> read_cloud(const fs::path& path) {
  return parse_cloud(read_file(path), path.string());
}

inline std::string encode_cloud_agp(const std::vector<Vec3>& pts) {
  std::string out = "AGP1";
  detail::put<std::uint64_t>(out, pts.size());
  for (const auto& p : pts) {
    detail::put<float>(out, static_cast<float>(p.x()));
    detail::put<float>(out, static_cast<float>(p.y()));
    detail::put<float>(out, static_cast<float>(p.z()));
  }
  return out;
}

inline std::string encode_cloud_jsonl(const std::vector<Vec3>& pts) {
  std::string out;
  for (const auto& p : pts) out += nlohmann::json::array({p.x(), p.y(), p.z()}).dump() + "\n";
  return out;
}

/// ".jsonl" writes JSON Lines, anything else AGP1.
inline void write_cloud(const fs::path& path, const std::vector<Vec3>& pts) {
  write_file(path, path.extension() == ".jsonl" ? encode_cloud_jsonl(pts) : encode_cloud_agp(pts));
}

inline CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    if (j.contains("rotation")) {
      const auto& r = j.at("rotation");
      if (!r.is_array() || r.size() != 9) throw Error(ErrorCode::Format, "rotation needs 9 numbers");
      for (int i = 0; i < 9; ++i) cam.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)].get<double>();
    }
    if (j.contains("translation")) {
      const auto& t = j.at("translation");
      if (!t.is_array() || t.size() != 3) throw Error(ErrorCode::Format, "translation needs 3 numbers");
      for (int i = 0; i < 3; ++i) cam.translation[i] = t[static_cast<std::size_t>(i)].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("camera: ") + e.what());
  }
  cam.validate();
  return cam;
}

inline nlohmann::json camera_to_json(const CameraModel& cam) {
  nlohmann::json r = nlohmann::json::array(), t = nlohmann::json::array();
  for (int i = 0; i < 9; ++i) r.push_back(cam.rotation(i / 3, i % 3));
  for (int i = 0; i < 3; ++i) t.push_back(cam.translation[i]);
  return {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}, {"rotation", r}, {"translation", t}};
}

inline CameraModel read_camera(const fs::path& path) {
  try {
    return camera_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, path.string() + ": " + e.what());
  }
}

}  // namespace affgr::io
