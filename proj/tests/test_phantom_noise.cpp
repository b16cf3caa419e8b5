#include "aid_dti/dataset.hpp"
#include "aid_dti/dti.hpp"
#include "aid_dti/error.hpp"
#include "aid_dti/gradient_table.hpp"
#include "aid_dti/noise.hpp"
#include "aid_dti/phantom.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

using namespace aid_dti;

namespace {

PhantomConfig small_config() {
  PhantomConfig c = default_phantom_config();
  c.dims = {24, 20, 6};
  c.bundles.clear();
  return c;
}

// Sample mean and standard error of f(M) over n Rician draws.
std::pair<double, double> rician_moment(double s, double sigma, std::uint64_t seed, int n, double (*f)(double)) {
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = f(rician_sample(s, sigma, seed, static_cast<std::uint64_t>(i)));
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double var = (sum2 - n * mean * mean) / (n - 1);
  return {mean, std::sqrt(var / n)};
}

} // namespace

TEST_SUITE("phantom") {
  TEST_CASE("no bundles: FA is zero inside the mask, S0 follows the mask") {
    const TensorField f = generate_phantom(small_config());
    const Volume3D m = compute_metrics(f);
    const auto mask = tissue_mask(f);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < f.voxels(); ++i) {
      if (mask[i]) {
        ++inside;
        CHECK(f.s0[i] == 1.0);
        CHECK(m.data()[i * 3] < 1e-12);
        CHECK(m.data()[i * 3 + 1] > 0.0f);
      } else {
        CHECK(f.s0[i] == 0.0);
        CHECK(f.tensors[i].matrix().isZero(0.0));
      }
    }
    CHECK(inside > f.voxels() / 4);
    CHECK(inside < f.voxels());
  }

  TEST_CASE("straight bundle along x carries the configured tensor") {
    PhantomConfig c = small_config();
    c.bundles.push_back({{{2.0, 10.0, 3.0}, {21.0, 10.0, 3.0}}, 2.0});
    const TensorField f = generate_phantom(c);
    const DtiMetrics expect = metrics_from_eigenvalues({1.7e-3, 0.3e-3, 0.3e-3});
    const DtiMetrics got = tensor_metrics(f.tensors[f.index(12, 10, 3)].matrix());
    CHECK(std::abs(got.fa - expect.fa) < 1e-9);
    CHECK(std::abs(got.fa - 0.799) < 1e-3);
    CHECK(std::abs(got.ad - 1.7e-3) < 1e-12);
    const EigenSystem e = eig_symmetric3(f.tensors[f.index(12, 10, 3)].matrix());
    CHECK(std::abs(std::abs(e.vectors(0, 0)) - 1.0) < 1e-9);
  }

  TEST_CASE("crossing bundles average to a lower FA") {
    PhantomConfig c = small_config();
    c.bundles.push_back({{{2.0, 10.0, 3.0}, {21.0, 10.0, 3.0}}, 2.0});
    c.bundles.push_back({{{12.0, 2.0, 3.0}, {12.0, 17.0, 3.0}}, 2.0});
    const TensorField f = generate_phantom(c);
    const double fa_cross = tensor_metrics(f.tensors[f.index(12, 10, 3)].matrix()).fa;
    const double fa_single = tensor_metrics(f.tensors[f.index(5, 10, 3)].matrix()).fa;
    CHECK(fa_cross < fa_single - 0.3);
  }

  TEST_CASE("determinism and seed dependence") {
    const PhantomConfig c = default_phantom_config();
    const TensorField a = generate_phantom(c), b = generate_phantom(c);
    CHECK(std::memcmp(a.tensors.data(), b.tensors.data(), a.tensors.size() * sizeof(TensorComponents)) == 0);
    PhantomConfig c2 = c;
    c2.seed = 43;
    const TensorField d = generate_phantom(c2);
    CHECK(std::memcmp(a.tensors.data(), d.tensors.data(), a.tensors.size() * sizeof(TensorComponents)) != 0);
  }

  TEST_CASE("phantom tensors are PSD and S0 is non-negative") {
    const TensorField f = generate_phantom(default_phantom_config());
    for (std::size_t i = 0; i < f.voxels(); i += 7) {
      CHECK(eig_symmetric3(f.tensors[i].matrix()).values(2) >= -1e-18);
      CHECK(f.s0[i] >= 0.0);
    }
  }

  TEST_CASE("config validation") {
    PhantomConfig c = small_config();
    c.bundles.push_back({{{2.0, 10.0, 3.0}, {40.0, 10.0, 3.0}}, 2.0});
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK_THROWS_AS(generate_phantom(c), ValidationError);
    PhantomConfig d = small_config();
    d.dims = {8, 16, 4};
    CHECK_THROWS_AS(d.validate(), ValidationError);
    PhantomConfig e = small_config();
    e.axial = 0.2e-3;
    CHECK_THROWS_AS(e.validate(), ValidationError);
  }

  TEST_CASE("config text roundtrip and errors") {
    const PhantomConfig c = default_phantom_config();
    const PhantomConfig p = parse_phantom_config(format_phantom_config(c));
    CHECK(p.dims == c.dims);
    CHECK(p.seed == c.seed);
    REQUIRE(p.bundles.size() == c.bundles.size());
    CHECK(p.bundles[1].radius == c.bundles[1].radius);
    CHECK(p.bundles[2].control_points[1] == c.bundles[2].control_points[1]);

    const PhantomConfig q = parse_phantom_config("# comment\ndims = 16,16,4\nbundles = none\nseed = 9\n");
    CHECK(q.dims == std::array<std::size_t, 3>{16, 16, 4});
    CHECK(q.bundles.empty());
    CHECK(q.seed == 9);
    CHECK_THROWS_AS(parse_phantom_config("colour = red\n"), ValidationError);
    CHECK_THROWS_AS(parse_phantom_config("dims = 16,16\n"), ValidationError);
    CHECK_THROWS_AS(parse_phantom_config("axial = fast\n"), ValidationError);
    CHECK_THROWS_AS(parse_phantom_config("just text\n"), ValidationError);
  }
}

TEST_SUITE("noise") {
  TEST_CASE("sigma = 0 returns |S|") {
    CHECK(rician_sample(0.7, 0.0, 1, 5) == 0.7);
    CHECK(rician_sample(-0.3, 0.0, 1, 5) == 0.3);
    Volume3D v({3, 2, 1, 2}, {"a", "b"});
    for (std::size_t i = 0; i < v.data().size(); ++i) v.data()[i] = 0.1f * static_cast<float>(i);
    const Volume3D w = add_rician(v, {0.0, 3});
    CHECK(std::memcmp(v.data().data(), w.data().data(), v.data().size() * 4) == 0);
    CHECK_THROWS_AS(add_rician(v, {-1.0, 3}), ValidationError);
  }

  TEST_CASE("Rayleigh mean at S = 0") {
    const double sigma = 0.04;
    const auto [mean, se] = rician_moment(0.0, sigma, 17, 100000, [](double m) { return m; });
    CHECK(std::abs(mean - sigma * std::sqrt(std::numbers::pi / 2.0)) < 3.0 * se);
  }

  TEST_CASE("second moment S^2 + 2 sigma^2 (Monte-Carlo oracle)") {
    const double sigma = 0.04;
    for (double s : {0.0, 0.3, 1.0}) {
      const auto [mean, se] = rician_moment(s, sigma, 99, 100000, [](double m) { return m * m; });
      CHECK(std::abs(mean - (s * s + 2 * sigma * sigma)) < 3.0 * se);
    }
  }

  TEST_CASE("outputs are non-negative and neighbouring samples uncorrelated") {
    const double sigma = 0.5;
    const int n = 20000;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
      const double a = rician_sample(0.0, sigma, 5, 2 * static_cast<std::uint64_t>(i));
      const double b = rician_sample(0.0, sigma, 5, 2 * static_cast<std::uint64_t>(i) + 1);
      CHECK(a >= 0.0);
      sx += a;
      sy += b;
      sxx += a * a;
      syy += b * b;
      sxy += a * b;
    }
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double corr = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
    CHECK(std::abs(corr) < 0.05);
  }

  TEST_CASE("noise depends on seed and index only; serial equals parallel") {
    Volume3D v({17, 9, 5, 3}, {"a", "b", "c"});
    for (auto& x : v.data()) x = 0.5f;
    const Volume3D a = add_rician(v, {0.04, 11}, Exec::serial);
    const Volume3D b = add_rician(v, {0.04, 11}, Exec::parallel);
    CHECK(std::memcmp(a.data().data(), b.data().data(), a.data().size() * 4) == 0);
    CHECK(a.data()[100] == static_cast<float>(rician_sample(0.5f, 0.04, 11, 100)));
    const Volume3D c = add_rician(v, {0.04, 12});
    CHECK(std::memcmp(a.data().data(), c.data().data(), a.data().size() * 4) != 0);
  }
}

TEST_SUITE("dataset") {
  TEST_CASE("noise-free dataset: refitting inputs reproduces the targets") {
    PhantomConfig c = small_config();
    c.bundles.push_back({{{2.0, 10.0, 3.0}, {21.0, 9.0, 2.0}}, 2.5});
    const TensorField f = generate_phantom(c);
    const GradientTable g = canonical_six_direction_table();
    const Dataset ds = make_dataset(f, g, {0.0, 1});
    const Volume3D truth = unscale_targets(ds.targets, ds.target_scale);
    const Volume3D refit = compute_metrics(fit_tensor_ols(ds.inputs, g));
    const auto mask = tissue_mask(f);
    double worst = 0.0;
    for (std::size_t i = 0; i < f.voxels(); ++i) {
      if (!mask[i]) continue;
      for (std::size_t ch = 0; ch < 3; ++ch)
        worst = std::max(worst, std::abs(static_cast<double>(truth.data()[i * 3 + ch]) - refit.data()[i * 3 + ch]));
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("normalisation and target scaling") {
    PhantomConfig c = small_config();
    c.bundles.push_back({{{2.0, 10.0, 3.0}, {21.0, 10.0, 3.0}}, 2.5});
    const TensorField f = generate_phantom(c);
    const Dataset ds = make_dataset(f, canonical_six_direction_table(), {0.04, 3});
    const auto mask = tissue_mask(f);
    float tmax[3] = {0, 0, 0};
    for (std::size_t i = 0; i < f.voxels(); ++i) {
      if (mask[i]) CHECK(ds.inputs.data()[i * 7] == 1.0f);
      for (std::size_t ch = 0; ch < 7; ++ch) {
        CHECK(ds.inputs.data()[i * 7 + ch] >= 0.0f);
        CHECK(ds.inputs.data()[i * 7 + ch] <= 2.0f);
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const float t = ds.targets.data()[i * 3 + ch];
        CHECK(t >= 0.0f);
        CHECK(t <= 1.0f);
        tmax[ch] = std::max(tmax[ch], t);
      }
    }
    CHECK(ds.target_scale[0] == 1.0);
    CHECK(tmax[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(tmax[2] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(ds.targets.channel_names() == std::vector<std::string>{"FA", "MD", "AD"});
  }

  TEST_CASE("splits, determinism and persistence") {
    const TensorField f = generate_phantom(default_phantom_config());
    const GradientTable g = canonical_six_direction_table();
    const Dataset a = make_dataset(f, g, {0.04, 7});
    CHECK(a.train == SliceRange{0, 10});
    CHECK(a.val == SliceRange{10, 13});
    CHECK(a.test == SliceRange{13, 16});
    const Dataset b = make_dataset(f, g, {0.04, 7});
    CHECK(std::memcmp(a.inputs.data().data(), b.inputs.data().data(), a.inputs.data().size() * 4) == 0);

    const auto dir = testutil::scratch_dir("dataset");
    save_dataset(a, (dir / "ds").string());
    const Dataset c = load_dataset((dir / "ds").string());
    CHECK(c.val == a.val);
    CHECK(c.target_scale == a.target_scale);
    CHECK(c.sigma == a.sigma);
    CHECK(std::memcmp(a.targets.data().data(), c.targets.data().data(), a.targets.data().size() * 4) == 0);
    CHECK_THROWS_AS(load_dataset((dir / "nope").string()), IoError);
  }

  TEST_CASE("dataset preconditions") {
    const TensorField f = generate_phantom(small_config());
    const GradientTable g = canonical_six_direction_table();
    DatasetOptions bad;
    bad.split = {0.5, 0.3, 0.3};
    CHECK_THROWS_AS(make_dataset(f, g, {0.0, 1}, bad), ValidationError);
    const GradientTable two = parse_gradient_table("0 1000", "0 1\n0 0\n0 0");
    CHECK_THROWS_AS(make_dataset(f, two, {0.0, 1}), ValidationError);
    CHECK(parse_split("val") == Split::val);
    CHECK_THROWS_AS(parse_split("holdout"), ValidationError);
  }

  TEST_CASE("patch helpers") {
    Volume3D v({10, 8, 2, 2}, {"a", "b"});
    for (std::size_t i = 0; i < v.data().size(); ++i) v.data()[i] = static_cast<float>(i);
    const auto p = extract_patch(v, {3, 2, 1}, 4);
    REQUIRE(p.size() == 4 * 4 * 2);
    CHECK(p[(1 * 4 + 2) * 2 + 1] == v.at(5, 3, 1, 1));
    Volume3D w({10, 8, 2, 2}, {"a", "b"});
    write_patch(w, {3, 2, 1}, 4, p);
    CHECK(w.at(6, 5, 1, 0) == v.at(6, 5, 1, 0));
    CHECK(w.at(2, 5, 1, 0) == 0.0f);

    const auto s = strided_origins(v.dims(), {0, 2}, 4, 3);
    // x origins 0,3,6 ; y origins 0,3,4 (last pulled back to the border)
    CHECK(s.size() == 2 * 3 * 3);
    CHECK(s.back().x == 6);
    CHECK(s.back().y == 4);
    const auto t = tile_origins(v.dims(), {1, 2}, 4);
    CHECK(t.size() == 2 * 2);
  }
}
