#include "aid_dti/volume.hpp"

#include "aid_dti/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace aid_dti {

namespace {

constexpr const char* kDtypeTag = "f32le";

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

} // namespace

Volume3D::Volume3D(Dims dims, std::vector<std::string> channel_names,
                   std::array<double, 3> voxel_size)
    : dims_(dims), voxel_size_(voxel_size), channel_names_(std::move(channel_names)),
      data_(dims.size(), 0.0f) {
  if (channel_names_.empty())
    for (std::size_t c = 0; c < dims_.c; ++c) channel_names_.push_back("c" + std::to_string(c));
  if (channel_names_.size() != dims_.c)
    throw ValidationError("volume: " + std::to_string(channel_names_.size()) +
                          " channel names for " + std::to_string(dims_.c) + " channels");
}

std::size_t Volume3D::channel(const std::string& name) const {
  auto it = std::find(channel_names_.begin(), channel_names_.end(), name);
  if (it == channel_names_.end()) throw ValidationError("volume has no channel '" + name + "'");
  return static_cast<std::size_t>(it - channel_names_.begin());
}

bool Volume3D::has_channel(const std::string& name) const {
  return std::find(channel_names_.begin(), channel_names_.end(), name) != channel_names_.end();
}

void Volume3D::check_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (!std::isfinite(data_[i]))
      throw ValidationError("volume sample " + std::to_string(i) + " is not finite");
}

std::vector<double> Volume3D::slice(std::size_t z, std::size_t c) const {
  if (z >= dims_.z || c >= dims_.c) throw ValidationError("slice index out of range");
  std::vector<double> out(dims_.x * dims_.y);
  for (std::size_t y = 0; y < dims_.y; ++y)
    for (std::size_t x = 0; x < dims_.x; ++x) out[y * dims_.x + x] = at(x, y, z, c);
  return out;
}

void save_volume(const Volume3D& v, const std::string& path_stem) {
  v.check_finite();
  const Dims& d = v.dims();

  nlohmann::json hdr;
  hdr["dims"] = {d.x, d.y, d.z, d.c};
  hdr["voxel_size"] = v.voxel_size();
  hdr["dtype"] = kDtypeTag;
  hdr["channel_names"] = v.channel_names();
  if (!v.attributes().empty()) hdr["attributes"] = v.attributes();

  std::ofstream h(path_stem + ".hdr.json", std::ios::binary | std::ios::trunc);
  if (!h) throw IoError("cannot write " + path_stem + ".hdr.json");
  h << hdr.dump(2) << '\n';
  if (!h) throw IoError("write failed: " + path_stem + ".hdr.json");

  std::vector<std::uint32_t> payload(d.size());
  auto src = v.data();
  for (std::size_t i = 0; i < payload.size(); ++i)
    payload[i] = to_little_endian(std::bit_cast<std::uint32_t>(src[i]));

  std::ofstream r(path_stem + ".raw", std::ios::binary | std::ios::trunc);
  if (!r) throw IoError("cannot write " + path_stem + ".raw");
  r.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(std::uint32_t)));
  if (!r) throw IoError("write failed: " + path_stem + ".raw");
}

Volume3D load_volume(const std::string& path_stem) {
  const std::string hdr_path = path_stem + ".hdr.json";
  const std::string raw_path = path_stem + ".raw";

  std::ifstream h(hdr_path);
  if (!h) throw IoError("cannot open " + hdr_path);
  nlohmann::json hdr;
  try {
    h >> hdr;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(hdr_path + ": " + e.what());
  }

  Dims d;
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
  std::vector<std::string> names;
  std::map<std::string, std::string> attrs;
  try {
    if (hdr.at("dtype").get<std::string>() != kDtypeTag)
      throw FormatError(hdr_path + ": unknown dtype '" + hdr.at("dtype").get<std::string>() + "'");
    auto dims = hdr.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 4) throw FormatError(hdr_path + ": dims must have 4 entries");
    d = {dims[0], dims[1], dims[2], dims[3]};
    voxel_size = hdr.at("voxel_size").get<std::array<double, 3>>();
    names = hdr.at("channel_names").get<std::vector<std::string>>();
    if (hdr.contains("attributes")) attrs = hdr.at("attributes").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(hdr_path + ": " + e.what());
  }
  if (names.size() != d.c) throw FormatError(hdr_path + ": channel_names/dims mismatch");

  std::error_code ec;
  const auto bytes = std::filesystem::file_size(raw_path, ec);
  if (ec) throw IoError("cannot stat " + raw_path);
  const std::uintmax_t expected = static_cast<std::uintmax_t>(d.size()) * sizeof(float);
  if (bytes != expected)
    throw FormatError(raw_path + ": " + std::to_string(bytes) + " bytes, header implies " +
                      std::to_string(expected));

  std::vector<std::uint32_t> payload(d.size());
  std::ifstream r(raw_path, std::ios::binary);
  if (!r) throw IoError("cannot open " + raw_path);
  r.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(expected));
  if (!r) throw FormatError(raw_path + ": short read");

  Volume3D v(d, std::move(names), voxel_size);
  auto dst = v.data();
  for (std::size_t i = 0; i < payload.size(); ++i)
    dst[i] = std::bit_cast<float>(to_little_endian(payload[i]));
  v.attributes() = std::move(attrs);
  v.check_finite();
  return v;
}

} // namespace aid_dti
