#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace aid_dti {

struct GradientEntry {
  double b = 0.0;            // s/mm^2
  Eigen::Vector3d direction; // unit length when b > 0
};

/// b-values and diffusion-encoding directions, one entry per acquired volume.
class GradientTable {
public:
  GradientTable() = default;
  /// Validates the invariants; directions with b > 0 are renormalised.
  explicit GradientTable(std::vector<GradientEntry> entries);

  const std::vector<GradientEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const GradientEntry& operator[](std::size_t i) const { return entries_[i]; }

  std::vector<std::size_t> b0_indices() const;
  std::vector<std::size_t> dwi_indices() const;

  /// One b=0 volume plus six directions at b=1000 s/mm^2.
  bool is_six_direction_protocol() const;

  /// Space-separated bvals line and the three bvecs rows.
  std::string bvals_text() const;
  std::string bvecs_text() const;

private:
  std::vector<GradientEntry> entries_;
};

/// The dual-gradient scheme {(1,±1,0), (1,0,±1), (0,1,±1)}/sqrt(2) at b=1000,
/// preceded by a single b=0 entry.
GradientTable canonical_six_direction_table(double b_value = 1000.0);

/// FSL-style files: one line of N b-values; three lines (x, y, z) of N components.
GradientTable load_gradient_table(const std::string& bvals_path, const std::string& bvecs_path);
GradientTable parse_gradient_table(const std::string& bvals_text, const std::string& bvecs_text);
void save_gradient_table(const GradientTable& g, const std::string& bvals_path,
                         const std::string& bvecs_path);

} // namespace aid_dti
