#include "shadowscope/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "shadowscope/error.hpp"

namespace shadowscope {

namespace {

constexpr std::size_t kRecordBytes = 16;

float load_le_float(const std::byte* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | std::to_integer<std::uint32_t>(p[i]);
  return std::bit_cast<float>(bits);
}

void store_le_float(float v, std::byte* p) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) {
    p[i] = static_cast<std::byte>(bits & 0xffu);
    bits >>= 8;
  }
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::optional<double> to_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string_view strip_comment(std::string_view line) {
  if (auto pos = line.find('#'); pos != std::string_view::npos) line = line.substr(0, pos);
  return line;
}

using Vec3 = std::array<double, 3>;

Vec3 mul(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Mat3 inverse(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  double scale = 0.0;
  for (const auto& row : m)
    for (double v : row) scale = std::max(scale, std::abs(v));
  if (!std::isfinite(det) || std::abs(det) <= 1e-12 * scale * scale * scale) {
    throw InvalidInputError("calibration transform is not invertible");
  }
  Mat3 inv{};
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

BoundingBox3D parse_native_line(const std::vector<std::string>& tok, std::size_t line_no) {
  if (tok.size() != 8) {
    throw MalformedInputError("label line needs 8 fields, got " + std::to_string(tok.size()),
                              line_no);
  }
  std::array<double, 7> v{};
  for (std::size_t i = 0; i < 7; ++i) {
    auto d = to_double(tok[i + 1]);
    if (!d) throw MalformedInputError("bad number '" + tok[i + 1] + "'", line_no);
    v[i] = *d;
  }
  BoundingBox3D box;
  box.label = parse_object_class(tok[0]);
  box.center_x = v[0];
  box.center_y = v[1];
  box.z_bottom = v[2];
  box.z_top = v[2] + v[3];
  box.length = v[4];
  box.width = v[5];
  box.yaw = normalize_angle(v[6]);
  if (v[3] <= 0.0 || box.length <= 0.0 || box.width <= 0.0) {
    throw MalformedInputError("box dimensions must be positive", line_no);
  }
  return box;
}

std::optional<BoundingBox3D> parse_kitti_line(const std::vector<std::string>& tok,
                                              std::size_t line_no,
                                              const Mat3& cam_to_velo_linear,
                                              const KittiCalibration& calib) {
  if (tok.size() != 15 && tok.size() != 16) {
    throw MalformedInputError("KITTI label line needs 15 or 16 fields", line_no);
  }
  if (tok[0] == "DontCare") return std::nullopt;
  std::array<double, 14> v{};
  for (std::size_t i = 0; i < 14; ++i) {
    auto d = to_double(tok[i + 1]);
    if (!d) throw MalformedInputError("bad number '" + tok[i + 1] + "'", line_no);
    v[i] = *d;
  }
  const double h = v[7], w = v[8], l = v[9];
  const Vec3 bottom_cam{v[10], v[11], v[12]};
  const double ry = v[13];
  if (h <= 0.0 || w <= 0.0 || l <= 0.0) {
    throw MalformedInputError("box dimensions must be positive", line_no);
  }
  // x_velo = M^-1 x_cam - rotation^-1 translation, with M = rect * rotation.
  const Mat3 rot_inv = inverse(calib.rotation);
  const Vec3 t_velo = mul(rot_inv, calib.translation);
  auto to_velo = [&](const Vec3& p) {
    const Vec3 q = mul(cam_to_velo_linear, p);
    return Vec3{q[0] - t_velo[0], q[1] - t_velo[1], q[2] - t_velo[2]};
  };
  const Vec3 bottom = to_velo(bottom_cam);
  const Vec3 top = to_velo({bottom_cam[0], bottom_cam[1] - h, bottom_cam[2]});
  const Vec3 heading = mul(cam_to_velo_linear, Vec3{std::cos(ry), 0.0, -std::sin(ry)});

  BoundingBox3D box;
  box.label = parse_object_class(tok[0]);
  box.center_x = bottom[0];
  box.center_y = bottom[1];
  box.z_bottom = bottom[2];
  box.z_top = top[2];
  box.length = l;
  box.width = w;
  box.yaw = normalize_angle(std::atan2(heading[1], heading[0]));
  if (box.z_top <= box.z_bottom) {
    throw MalformedInputError("calibration maps the box upside down", line_no);
  }
  return box;
}

}  // namespace

PointCloud parse_velodyne_bin(std::span<const std::byte> bytes) {
  if (bytes.size() % kRecordBytes != 0) {
    throw MalformedInputError("velodyne byte length " + std::to_string(bytes.size()) +
                              " is not a multiple of 16");
  }
  PointCloud cloud;
  cloud.reserve(bytes.size() / kRecordBytes);
  for (std::size_t i = 0; i * kRecordBytes < bytes.size(); ++i) {
    const std::byte* rec = bytes.data() + i * kRecordBytes;
    Point3 p{load_le_float(rec), load_le_float(rec + 4), load_le_float(rec + 8),
             load_le_float(rec + 12)};
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
        !std::isfinite(p.reflectance)) {
      throw MalformedInputError("non-finite float in velodyne record", i);
    }
    if (p.reflectance < 0.0 || p.reflectance > 1.0) {
      throw MalformedInputError("reflectance outside [0, 1] in velodyne record", i);
    }
    cloud.push_back(p);
  }
  return cloud;
}

std::vector<std::byte> serialize_velodyne_bin(const PointCloud& cloud) {
  std::vector<std::byte> out(cloud.size() * kRecordBytes);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    std::byte* rec = out.data() + i * kRecordBytes;
    const auto& p = cloud[i];
    store_le_float(static_cast<float>(p.x), rec);
    store_le_float(static_cast<float>(p.y), rec + 4);
    store_le_float(static_cast<float>(p.z), rec + 8);
    store_le_float(static_cast<float>(p.reflectance), rec + 12);
  }
  return out;
}

KittiCalibration parse_kitti_calib(std::string_view text) {
  std::map<std::string, std::vector<double>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = line.substr(0, colon);
    std::vector<double> values;
    for (const auto& tok : split_ws(std::string_view(line).substr(colon + 1))) {
      auto d = to_double(tok);
      if (!d) throw MalformedInputError("bad number in calib entry " + key, line_no);
      values.push_back(*d);
    }
    entries[key] = std::move(values);
  }
  auto find = [&](std::initializer_list<const char*> keys,
                  std::size_t count) -> const std::vector<double>* {
    for (const char* k : keys) {
      auto it = entries.find(k);
      if (it == entries.end()) continue;
      if (it->second.size() != count) {
        throw MalformedInputError(std::string("calib entry ") + k + " has wrong length");
      }
      return &it->second;
    }
    return nullptr;
  };
  KittiCalibration calib;
  if (const auto* r = find({"R0_rect", "R_rect"}, 9)) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) calib.rect[i][j] = (*r)[3 * i + j];
  }
  const auto* tr = find({"Tr_velo_to_cam", "Tr_velo_cam"}, 12);
  if (!tr) throw MalformedInputError("calib document lacks Tr_velo_to_cam");
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) calib.rotation[i][j] = (*tr)[4 * i + j];
    calib.translation[i] = (*tr)[4 * i + 3];
  }
  return calib;
}

std::vector<BoundingBox3D> parse_labels(std::string_view text, LabelFrame frame,
                                        const std::optional<KittiCalibration>& calib) {
  Mat3 cam_to_velo{};
  if (frame == LabelFrame::kKittiCamera) {
    if (!calib) throw InvalidInputError("KITTI camera-frame labels need a calibration");
    cam_to_velo = inverse(mul(calib->rect, calib->rotation));
  }
  std::vector<BoundingBox3D> boxes;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    const auto tok = split_ws(strip_comment(line));
    if (tok.empty()) continue;
    if (frame == LabelFrame::kLidar) {
      boxes.push_back(parse_native_line(tok, line_no));
    } else if (auto box = parse_kitti_line(tok, line_no, cam_to_velo, *calib)) {
      boxes.push_back(*box);
    }
  }
  return boxes;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_labels(const std::vector<BoundingBox3D>& boxes) {
  std::string out;
  for (const auto& b : boxes) {
    out += to_string(b.label);
    for (double v : {b.center_x, b.center_y, b.z_bottom, b.height(), b.length, b.width, b.yaw}) {
      out += ' ';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidInputError("write failed for " + path.string());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInputError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw InvalidInputError("write failed for " + path.string());
}

}  // namespace shadowscope
