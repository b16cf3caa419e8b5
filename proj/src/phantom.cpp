#include "aid_dti/phantom.hpp"

#include "aid_dti/error.hpp"
#include "aid_dti/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace aid_dti {

namespace {

struct Segment {
  Eigen::Vector3d a, b;
};

Eigen::Vector3d catmull_rom(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, const Eigen::Vector3d& p2,
                            const Eigen::Vector3d& p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

// Dense polyline approximation of the spline through the control points.
std::vector<Segment> bundle_polyline(const BundleSpec& b) {
  const auto& p = b.control_points;
  std::vector<Eigen::Vector3d> pts;
  if (p.size() == 2) {
    pts = {p[0], p[1]};
  } else {
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      const Eigen::Vector3d& p0 = p[i == 0 ? 0 : i - 1];
      const Eigen::Vector3d& p3 = p[std::min(i + 2, p.size() - 1)];
      const int steps = std::max(4, static_cast<int>(std::ceil(4.0 * (p[i + 1] - p[i]).norm())));
      for (int s = 0; s < steps; ++s)
        pts.push_back(catmull_rom(p0, p[i], p[i + 1], p3, static_cast<double>(s) / steps));
    }
    pts.push_back(p.back());
  }
  std::vector<Segment> segs;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    if ((pts[i + 1] - pts[i]).norm() > 0.0) segs.push_back({pts[i], pts[i + 1]});
  return segs;
}

std::vector<double> parse_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("phantom config: bad number '" + item + "' for key '" + key + "'");
    }
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <std::size_t N>
std::array<double, N> fixed_list(const std::string& v, const std::string& key) {
  auto xs = parse_list(v, key);
  if (xs.size() != N) throw ValidationError("phantom config: '" + key + "' needs " + std::to_string(N) + " values");
  std::array<double, N> out{};
  std::copy(xs.begin(), xs.end(), out.begin());
  return out;
}

double scalar(const std::string& v, const std::string& key) { return fixed_list<1>(v, key)[0]; }

} // namespace

void PhantomConfig::validate() const {
  if (dims[0] < 16 || dims[1] < 16 || dims[2] < 4)
    throw ValidationError("phantom dims must be at least 16x16x4");
  if (!(background_md > 0.0) || !(axial > 0.0) || !(radial > 0.0))
    throw ValidationError("phantom diffusivities must be positive");
  if (!(axial > radial)) throw ValidationError("phantom axial diffusivity must exceed radial");
  if (!(s0 >= 0.0)) throw ValidationError("phantom s0 must be >= 0");
  if (!(background_jitter >= 0.0 && background_jitter < 1.0))
    throw ValidationError("phantom background_jitter must lie in [0, 1)");
  for (double a : mask_semi_axes)
    if (!(a > 0.0)) throw ValidationError("phantom mask semi-axes must be positive");
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const auto& b = bundles[i];
    if (b.control_points.size() < 2) throw ValidationError("bundle " + std::to_string(i) + " needs >= 2 points");
    if (!(b.radius > 0.0)) throw ValidationError("bundle " + std::to_string(i) + " radius must be positive");
    auto inside = [&](const Eigen::Vector3d& p) {
      for (int a = 0; a < 3; ++a)
        if (!(p[a] >= 0.0 && p[a] <= static_cast<double>(dims[a] - 1))) return false;
      return true;
    };
    for (const auto& s : bundle_polyline(b))
      if (!inside(s.a) || !inside(s.b))
        throw ValidationError("bundle " + std::to_string(i) + " path leaves the volume");
  }
}

PhantomConfig default_phantom_config() {
  PhantomConfig cfg;
  cfg.bundles = {
      {{{10, 42, 6}, {20, 24, 7}, {32, 18, 8}, {44, 24, 9}, {54, 42, 10}}, 3.5},
      {{{30, 6, 3}, {33, 24, 6}, {34, 40, 9}, {31, 58, 12}}, 3.0},
      {{{8, 52, 2}, {24, 50, 6}, {40, 48, 10}, {56, 46, 14}}, 2.5},
  };
  return cfg;
}

PhantomConfig parse_phantom_config(const std::string& text) {
  PhantomConfig cfg = default_phantom_config();
  bool bundles_seen = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("phantom config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "dims") {
      auto d = fixed_list<3>(val, key);
      for (int a = 0; a < 3; ++a) {
        if (d[a] < 1 || d[a] != std::floor(d[a])) throw ValidationError("phantom config: dims must be positive integers");
        cfg.dims[a] = static_cast<std::size_t>(d[a]);
      }
    } else if (key == "voxel_size") {
      cfg.voxel_size = fixed_list<3>(val, key);
    } else if (key == "background_md") {
      cfg.background_md = scalar(val, key);
    } else if (key == "background_jitter") {
      cfg.background_jitter = scalar(val, key);
    } else if (key == "axial") {
      cfg.axial = scalar(val, key);
    } else if (key == "radial") {
      cfg.radial = scalar(val, key);
    } else if (key == "s0") {
      cfg.s0 = scalar(val, key);
    } else if (key == "mask_semi_axes") {
      cfg.mask_semi_axes = fixed_list<3>(val, key);
    } else if (key == "seed") {
      std::size_t used = 0;
      try {
        cfg.seed = std::stoull(val, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != val.size()) throw ValidationError("phantom config: bad seed '" + val + "'");
    } else if (key == "bundles") {
      if (val != "none") throw ValidationError("phantom config: 'bundles' only accepts 'none'");
      cfg.bundles.clear();
      bundles_seen = true;
    } else if (key == "bundle") {
      if (!bundles_seen) {
        cfg.bundles.clear();
        bundles_seen = true;
      }
      BundleSpec b;
      std::istringstream parts(val);
      std::string part;
      bool first = true;
      while (std::getline(parts, part, ';')) {
        part = trim(part);
        if (part.empty()) continue;
        if (first) {
          b.radius = scalar(part, key);
          first = false;
        } else {
          auto p = fixed_list<3>(part, key);
          b.control_points.emplace_back(p[0], p[1], p[2]);
        }
      }
      cfg.bundles.push_back(std::move(b));
    } else {
      throw ValidationError("phantom config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

PhantomConfig load_phantom_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open phantom config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_phantom_config(ss.str());
}

std::string format_phantom_config(const PhantomConfig& cfg) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "dims = " << cfg.dims[0] << "," << cfg.dims[1] << "," << cfg.dims[2] << "\n";
  out << "voxel_size = " << cfg.voxel_size[0] << "," << cfg.voxel_size[1] << "," << cfg.voxel_size[2] << "\n";
  out << "background_md = " << cfg.background_md << "\n";
  out << "background_jitter = " << cfg.background_jitter << "\n";
  out << "axial = " << cfg.axial << "\n";
  out << "radial = " << cfg.radial << "\n";
  out << "s0 = " << cfg.s0 << "\n";
  out << "mask_semi_axes = " << cfg.mask_semi_axes[0] << "," << cfg.mask_semi_axes[1] << ","
      << cfg.mask_semi_axes[2] << "\n";
  out << "seed = " << cfg.seed << "\n";
  if (cfg.bundles.empty()) out << "bundles = none\n";
  for (const auto& b : cfg.bundles) {
    out << "bundle = " << b.radius;
    for (const auto& p : b.control_points) out << "; " << p.x() << "," << p.y() << "," << p.z();
    out << "\n";
  }
  return out.str();
}

TensorField generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  const auto [nx, ny, nz] = cfg.dims;
  TensorField f(nx, ny, nz);
  f.voxel_size = cfg.voxel_size;

  std::vector<std::vector<Segment>> paths;
  for (const auto& b : cfg.bundles) paths.push_back(bundle_polyline(b));

  const Eigen::Vector3d center((nx - 1) / 2.0, (ny - 1) / 2.0, (nz - 1) / 2.0);
  const Eigen::Vector3d semi(cfg.mask_semi_axes[0] * nx, cfg.mask_semi_axes[1] * ny, cfg.mask_semi_axes[2] * nz);
  const auto n = static_cast<std::int64_t>(f.voxels());

#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < n; ++v) {
    const auto i = static_cast<std::size_t>(v);
    const std::size_t x = i % nx, y = (i / nx) % ny, z = i / (nx * ny);
    const Eigen::Vector3d p(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z));
    if (((p - center).array() / semi.array()).square().sum() > 1.0) {
      f.tensors[i] = {};
      f.s0[i] = 0.0;
      continue;
    }
    f.s0[i] = cfg.s0;

    Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
    int hits = 0;
    for (std::size_t b = 0; b < paths.size(); ++b) {
      double best = std::numeric_limits<double>::infinity();
      Eigen::Vector3d tangent = Eigen::Vector3d::UnitX();
      for (const auto& s : paths[b]) {
        const Eigen::Vector3d d = s.b - s.a;
        const double t = std::clamp((p - s.a).dot(d) / d.squaredNorm(), 0.0, 1.0);
        const double dist = (s.a + t * d - p).norm();
        if (dist < best) {
          best = dist;
          tangent = d.normalized();
        }
      }
      if (best <= cfg.bundles[b].radius) {
        sum += cfg.radial * Eigen::Matrix3d::Identity() + (cfg.axial - cfg.radial) * tangent * tangent.transpose();
        ++hits;
      }
    }
    if (hits > 0) {
      f.tensors[i] = TensorComponents::from_matrix(sum / hits);
    } else {
      CounterRng rng(cfg.seed, i);
      const double u = std::ldexp(static_cast<double>(rng() >> 11), -53); // [0, 1)
      const double md = cfg.background_md * (1.0 + cfg.background_jitter * (2.0 * u - 1.0));
      f.tensors[i] = TensorComponents::from_matrix(md * Eigen::Matrix3d::Identity());
    }
  }
  return f;
}

std::vector<std::uint8_t> tissue_mask(const TensorField& field) {
  std::vector<std::uint8_t> m(field.voxels());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = field.s0[i] > 0.0 ? 1 : 0;
  return m;
}

} // namespace aid_dti
