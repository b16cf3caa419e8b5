#include "aid_dti/gradient_table.hpp"

#include "aid_dti/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace aid_dti {

namespace {

std::vector<double> parse_numbers(const std::string& line, const char* what) {
  std::istringstream in(line);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw FormatError(std::string(what) + ": '" + tok + "' is not a number");
    }
  }
  return out;
}

std::vector<std::string> non_empty_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  return lines;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

GradientTable::GradientTable(std::vector<GradientEntry> entries) : entries_(std::move(entries)) {
  bool has_b0 = false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& e = entries_[i];
    if (!std::isfinite(e.b) || e.b < 0.0 || !e.direction.allFinite())
      throw ValidationError("gradient entry " + std::to_string(i) + " is not a valid (b, g) pair");
    if (e.b == 0.0) {
      has_b0 = true;
      continue;
    }
    const double n = e.direction.norm();
    if (n == 0.0)
      throw ValidationError("gradient entry " + std::to_string(i) + " has b > 0 and a zero direction");
    e.direction /= n;
  }
  if (!has_b0) throw ValidationError("gradient table has no b=0 entry");
}

std::vector<std::size_t> GradientTable::b0_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].b == 0.0) out.push_back(i);
  return out;
}

std::vector<std::size_t> GradientTable::dwi_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].b > 0.0) out.push_back(i);
  return out;
}

bool GradientTable::is_six_direction_protocol() const {
  if (entries_.size() != 7 || b0_indices().size() != 1) return false;
  for (auto i : dwi_indices())
    if (entries_[i].b != 1000.0) return false;
  return true;
}

std::string GradientTable::bvals_text() const {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t i = 0; i < entries_.size(); ++i) out << (i ? " " : "") << entries_[i].b;
  out << '\n';
  return out.str();
}

std::string GradientTable::bvecs_text() const {
  std::ostringstream out;
  out << std::setprecision(17);
  for (int axis = 0; axis < 3; ++axis) {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      out << (i ? " " : "") << entries_[i].direction[axis];
    out << '\n';
  }
  return out.str();
}

GradientTable canonical_six_direction_table(double b_value) {
  const double s = 1.0 / std::sqrt(2.0);
  std::vector<GradientEntry> e;
  e.push_back({0.0, Eigen::Vector3d::Zero()});
  const double dirs[6][3] = {{1, 1, 0}, {1, -1, 0}, {1, 0, 1}, {1, 0, -1}, {0, 1, 1}, {0, 1, -1}};
  for (const auto& d : dirs) e.push_back({b_value, Eigen::Vector3d(d[0] * s, d[1] * s, d[2] * s)});
  return GradientTable(std::move(e));
}

GradientTable parse_gradient_table(const std::string& bvals_text, const std::string& bvecs_text) {
  auto bval_lines = non_empty_lines(bvals_text);
  std::vector<double> bvals;
  for (const auto& l : bval_lines) {
    auto v = parse_numbers(l, "bvals");
    bvals.insert(bvals.end(), v.begin(), v.end());
  }

  auto vec_lines = non_empty_lines(bvecs_text);
  if (vec_lines.size() != 3)
    throw FormatError("bvecs: expected 3 rows, found " + std::to_string(vec_lines.size()));
  std::vector<double> rows[3];
  for (int a = 0; a < 3; ++a) rows[a] = parse_numbers(vec_lines[a], "bvecs");
  for (int a = 0; a < 3; ++a)
    if (rows[a].size() != bvals.size())
      throw FormatError("bvecs row " + std::to_string(a) + " has " + std::to_string(rows[a].size()) +
                        " columns, bvals has " + std::to_string(bvals.size()));

  std::vector<GradientEntry> entries;
  for (std::size_t i = 0; i < bvals.size(); ++i)
    entries.push_back({bvals[i], Eigen::Vector3d(rows[0][i], rows[1][i], rows[2][i])});
  return GradientTable(std::move(entries));
}

GradientTable load_gradient_table(const std::string& bvals_path, const std::string& bvecs_path) {
  return parse_gradient_table(slurp(bvals_path), slurp(bvecs_path));
}

void save_gradient_table(const GradientTable& g, const std::string& bvals_path,
                         const std::string& bvecs_path) {
  std::ofstream a(bvals_path), b(bvecs_path);
  if (!a || !b) throw IoError("cannot write gradient table files");
  a << g.bvals_text();
  b << g.bvecs_text();
}

} // namespace aid_dti
