#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace aid_dti {

struct Dims {
  std::size_t x = 0, y = 0, z = 0, c = 0;

  std::size_t voxels() const { return x * y * z; }
  std::size_t size() const { return x * y * z * c; }
  bool operator==(const Dims&) const = default;
};

/// Multi-channel 3D image stored as f32, x fastest and channel last:
/// index(x,y,z,c) = ((z*Y + y)*X + x)*C + c.
///
/// Values are kept in single precision so that a save/load cycle is exact;
/// callers widen to double for computation.
class Volume3D {
public:
  Volume3D() = default;
  Volume3D(Dims dims, std::vector<std::string> channel_names,
           std::array<double, 3> voxel_size = {1.0, 1.0, 1.0});

  const Dims& dims() const { return dims_; }
  const std::array<double, 3>& voxel_size() const { return voxel_size_; }
  const std::vector<std::string>& channel_names() const { return channel_names_; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z, std::size_t c) const {
    return ((z * dims_.y + y) * dims_.x + x) * dims_.c + c;
  }

  float at(std::size_t x, std::size_t y, std::size_t z, std::size_t c) const {
    return data_[index(x, y, z, c)];
  }
  float& at(std::size_t x, std::size_t y, std::size_t z, std::size_t c) {
    return data_[index(x, y, z, c)];
  }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  /// Position of a named channel; throws ValidationError if absent.
  std::size_t channel(const std::string& name) const;
  bool has_channel(const std::string& name) const;

  /// Free-form key/value annotations written into the header.
  std::map<std::string, std::string>& attributes() { return attributes_; }
  const std::map<std::string, std::string>& attributes() const { return attributes_; }

  /// Throws ValidationError when any sample is NaN/Inf.
  void check_finite() const;

  /// Copies one channel of one z-slice into a row-major (y, x) buffer.
  std::vector<double> slice(std::size_t z, std::size_t c) const;

private:
  Dims dims_;
  std::array<double, 3> voxel_size_{1.0, 1.0, 1.0};
  std::vector<std::string> channel_names_;
  std::map<std::string, std::string> attributes_;
  std::vector<float> data_;
};

/// Writes `<stem>.hdr.json` and `<stem>.raw` (little-endian f32).
void save_volume(const Volume3D& v, const std::string& path_stem);

/// Reads a pair written by save_volume.
Volume3D load_volume(const std::string& path_stem);

} // namespace aid_dti
