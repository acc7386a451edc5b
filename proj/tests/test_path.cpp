#include "camtraj/path.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace camtraj;
using camtraj::testing::keyframe;
using camtraj::testing::nearestRepresentative;

namespace {

constexpr double kPi = std::numbers::pi;
double deg(double d) { return d * kPi / 180.0; }

std::vector<Keyframe> curvedKeyframes() {
  return {keyframe(0, 0, 2, 0.0, 0.0), keyframe(6, 2, 3, deg(40), deg(-10)), keyframe(9, 9, 2.5, deg(120), deg(-25)),
          keyframe(4, 14, 4, deg(200), deg(-5)), keyframe(-2, 12, 3, deg(260), deg(5))};
}

}  // namespace

TEST_CASE("unwrap picks the closest representative") {
  std::vector<Keyframe> kfs{keyframe(0, 0, 0, deg(170)), keyframe(1, 0, 0, deg(-170))};
  kfs = unwrapAngles(kfs);
  CHECK(kfs[0].yaw == doctest::Approx(deg(170)));
  CHECK(kfs[1].yaw == doctest::Approx(deg(190)));

  std::vector<Keyframe> flat{keyframe(0, 0, 0), keyframe(1, 0, 0), keyframe(2, 0, 0)};
  for (const auto& k : unwrapAngles(flat)) CHECK(k.yaw == 0.0);
}

TEST_CASE("unwrap agrees with brute force and only adds whole turns") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ang(-3.0 * kPi, 3.0 * kPi);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Keyframe> kfs;
    for (int k = 0; k < 8; ++k) kfs.push_back(keyframe(k, 0, 0, ang(rng), ang(rng)));
    const auto out = unwrapAngles(kfs);
    CHECK(out[0].yaw == kfs[0].yaw);
    CHECK(out[0].pitch == kfs[0].pitch);
    for (std::size_t k = 1; k < out.size(); ++k) {
      CHECK(std::abs(out[k].yaw - out[k - 1].yaw) <= kPi + 1e-12);
      CHECK(std::abs(out[k].pitch - out[k - 1].pitch) <= kPi + 1e-12);
      CHECK(out[k].yaw == doctest::Approx(nearestRepresentative(kfs[k].yaw, out[k - 1].yaw)).epsilon(1e-12));
      const double turns = (out[k].yaw - kfs[k].yaw) / (2.0 * kPi);
      CHECK(std::abs(turns - std::round(turns)) <= 1e-12);
      const double pturns = (out[k].pitch - kfs[k].pitch) / (2.0 * kPi);
      CHECK(std::abs(pturns - std::round(pturns)) <= 1e-12);
    }
  }
}

TEST_CASE("chord-length knots") {
  const std::vector<Keyframe> kfs{keyframe(0, 0, 0), keyframe(3, 4, 0)};
  const ReferencePath path = ReferencePath::build(kfs);
  CHECK(path.length() == doctest::Approx(5.0));
  REQUIRE(path.knots().size() == 2);
  CHECK(path.knots()[0] == 0.0);
  CHECK(path.knots()[1] == doctest::Approx(5.0));

  const auto curved = curvedKeyframes();
  const ReferencePath p2 = ReferencePath::build(curved);
  double total = 0.0;
  for (std::size_t k = 1; k < curved.size(); ++k) {
    const double chord = (curved[k].position - curved[k - 1].position).norm();
    CHECK(p2.knots()[k] - p2.knots()[k - 1] == doctest::Approx(chord));
    total += chord;
  }
  CHECK(p2.length() == doctest::Approx(total));
}

TEST_CASE("coincident keyframes get the minimum knot spacing") {
  const std::vector<Keyframe> kfs{keyframe(1, 2, 3, 0.0, 0.0), keyframe(1, 2, 3, 0.0, deg(-30))};
  const ReferencePath path = ReferencePath::build(kfs);
  CHECK(path.length() == doctest::Approx(kMinKnotSpacing));
  const PathPoint mid = path.eval(0.5 * path.length());
  CHECK(mid.degenerate);
  CHECK(mid.value.head<3>().isApprox(Eigen::Vector3d(1, 2, 3)));
  CHECK(mid.value[4] == doctest::Approx(deg(-15)));
}

TEST_CASE("build rejects bad input") {
  CHECK_THROWS_AS(ReferencePath::build(std::vector<Keyframe>{keyframe(0, 0, 0)}), KeyframeError);
  std::vector<Keyframe> kfs{keyframe(0, 0, 0), keyframe(1, 0, 0)};
  kfs[1].position.x() = std::nan("");
  try {
    ReferencePath::build(kfs);
    FAIL("expected KeyframeError");
  } catch (const KeyframeError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("interpolation at every knot") {
  const auto kfs = unwrapAngles(curvedKeyframes());
  const ReferencePath path = ReferencePath::build(kfs);
  for (std::size_t k = 0; k < kfs.size(); ++k) {
    const PathVec v = path.eval(path.knots()[k]).value;
    CHECK((v - kfs[k].pose()).cwiseAbs().maxCoeff() <= 1e-9);
  }
  CHECK((path.eval(0.0).value - kfs[0].pose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((path.eval(-3.0).value - kfs[0].pose()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("interpolation on random keyframe sets") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> pos(-20.0, 20.0), ang(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Keyframe> kfs;
    const int n = 2 + trial % 7;
    for (int k = 0; k < n; ++k) kfs.push_back(keyframe(pos(rng), pos(rng), pos(rng), ang(rng), ang(rng)));
    const ReferencePath path = ReferencePath::build(kfs);
    for (int k = 0; k < n; ++k) {
      CHECK((path.eval(path.knots()[k]).value - kfs[k].pose()).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("monotone data never overshoots") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> step(0.0, 3.0), gap(0.1, 4.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x{0.0}, y{step(rng)};
    for (int k = 1; k < 8; ++k) {
      x.push_back(x.back() + gap(rng));
      // Mix flat and steep steps; flat steps are the classic overshoot trap.
      y.push_back(y.back() + (k % 3 == 0 ? 0.0 : step(rng) * step(rng)));
    }
    const Pchip p(x, y);
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
      double prev = y[k];
      for (int s = 0; s <= 1000; ++s) {
        const double v = p.value(x[k] + (x[k + 1] - x[k]) * s / 1000.0);
        CHECK(v >= y[k] - 1e-12);
        CHECK(v <= y[k + 1] + 1e-12);
        CHECK(v >= prev - 1e-12);
        prev = v;
      }
    }
  }
}

TEST_CASE("monotone path coordinate has no overshoot") {
  const std::vector<Keyframe> kfs{keyframe(0, 0, 0), keyframe(1, 3, 0), keyframe(5, 3.2, 0), keyframe(5.5, 9, 0)};
  const ReferencePath path = ReferencePath::build(kfs);
  for (int s = 0; s <= 1000; ++s) {
    const double x = path.eval(path.length() * s / 1000.0).value[0];
    CHECK(x >= -1e-12);
    CHECK(x <= 5.5 + 1e-12);
  }
}

TEST_CASE("straight line evaluation") {
  const std::vector<Keyframe> kfs{keyframe(0, 0, 0, 0.0, 0.0), keyframe(4, 4, 2, 1.0, -0.5)};
  const ReferencePath path = ReferencePath::build(kfs);
  const PathPoint mid = path.eval(0.5 * path.length());
  CHECK(mid.value.head<3>().isApprox(Eigen::Vector3d(2, 2, 1)));
  CHECK_FALSE(mid.degenerate);
  CHECK(mid.tangent.isApprox(Eigen::Vector3d(4, 4, 2).normalized()));
  CHECK(mid.tangent.norm() == doctest::Approx(1.0));
  CHECK(mid.value[3] == doctest::Approx(0.5));
  const PathPoint start = path.eval(0.0);
  CHECK((start.value - kfs[0].pose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("derivatives match central differences") {
  const ReferencePath path = ReferencePath::build(unwrapAngles(curvedKeyframes()));
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> th(1e-3, path.length() - 1e-3);
  const double h = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    const double t = th(rng);
    const PathPoint p = path.eval(t);
    const PathVec fd = (path.eval(t + h).value - path.eval(t - h).value) / (2.0 * h);
    const PathVec fd2 = (path.eval(t + h).derivative - path.eval(t - h).derivative) / (2.0 * h);
    CHECK((p.derivative - fd).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
    CHECK((p.second_derivative - fd2).cwiseAbs().maxCoeff() <= 1e-4 * std::max(1.0, fd2.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("quadratic fit is exact inside its model class") {
  const std::vector<Keyframe> kfs{keyframe(0, 0, 0, 0.0, 0.0), keyframe(10, 0, 0, 2.0, -1.0)};
  const ReferencePath path = ReferencePath::build(kfs);
  const QuadraticLocalFit fit = fitQuadraticWindow(path, 4.0, 1.5);
  CHECK(fit.lo == doctest::Approx(2.5));
  CHECK(fit.hi == doctest::Approx(5.5));
  CHECK(fit.coeffs.col(2).cwiseAbs().maxCoeff() <= 1e-9);
  for (double t : {2.5, 3.3, 4.0, 5.5}) CHECK((fit.value(t) - path.eval(t).value).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((fit.derivative(4.0) - path.eval(4.0).derivative).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("fit window is clipped at the path ends") {
  const ReferencePath path = ReferencePath::build(curvedKeyframes());
  const QuadraticLocalFit lo = fitQuadraticWindow(path, 0.2, 1.0);
  CHECK(lo.lo == 0.0);
  CHECK(lo.hi == doctest::Approx(1.2));
  const QuadraticLocalFit hi = fitQuadraticWindow(path, path.length() + 5.0, 1.0);
  CHECK(hi.center == doctest::Approx(path.length()));
  CHECK(hi.hi == doctest::Approx(path.length()));
  CHECK(hi.contains(path.length() - 0.5));
  CHECK_FALSE(hi.contains(path.length() - 1.5));
  CHECK_THROWS_AS(fitQuadraticWindow(path, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("fit is the least-squares optimum over its samples") {
  const ReferencePath path = ReferencePath::build(unwrapAngles(curvedKeyframes()));
  std::mt19937_64 rng(37);
  std::normal_distribution<double> nd;
  for (double center : {1.0, 5.5, 9.0, 14.0}) {
    const double hw = 2.0;
    const QuadraticLocalFit fit = fitQuadraticWindow(path, center, hw);
    auto sse = [&](const Eigen::Matrix<double, kPathDims, 3>& coeffs, int d) {
      double s = 0.0;
      for (int k = 0; k < kFitSamples; ++k) {
        const double t = fit.lo + (fit.hi - fit.lo) * k / (kFitSamples - 1);
        const double u = t - fit.center;
        const double r = coeffs(d, 0) + coeffs(d, 1) * u + coeffs(d, 2) * u * u - path.eval(t).value[d];
        s += r * r;
      }
      return s;
    };
    for (int d = 0; d < kPathDims; ++d) {
      const double best = sse(fit.coeffs, d);
      for (int trial = 0; trial < 20; ++trial) {
        Eigen::Matrix<double, kPathDims, 3> c = fit.coeffs;
        c.row(d) += 1e-3 * Eigen::RowVector3d(nd(rng), nd(rng), nd(rng));
        CHECK(best <= sse(c, d) + 1e-12);
      }
      // Best constant: the sample mean.
      double mean = 0.0;
      for (int k = 0; k < kFitSamples; ++k) mean += path.eval(fit.lo + (fit.hi - fit.lo) * k / (kFitSamples - 1)).value[d];
      mean /= kFitSamples;
      Eigen::Matrix<double, kPathDims, 3> flat = Eigen::Matrix<double, kPathDims, 3>::Zero();
      flat(d, 0) = mean;
      CHECK(best <= sse(flat, d) + 1e-12);
      const double truth = path.eval(fit.center).value[d];
      CHECK(std::abs(fit.value(fit.center)[d] - truth) <= std::abs(mean - truth) + 1e-12);
    }
  }
}

TEST_CASE("fit converges to the spline as the window shrinks") {
  const ReferencePath path = ReferencePath::build(unwrapAngles(curvedKeyframes()));
  for (double center : {3.0, 8.0, 15.0}) {
    double last_value = 1e9, last_slope = 1e9;
    const PathPoint truth = path.eval(center);
    for (double hw : {1.0, 0.1, 0.01}) {
      const QuadraticLocalFit fit = fitQuadraticWindow(path, center, hw);
      const double ev = (fit.value(center) - truth.value).cwiseAbs().maxCoeff();
      const double es = (fit.derivative(center) - truth.derivative).cwiseAbs().maxCoeff();
      CHECK((ev < last_value || ev <= 1e-12));
      CHECK((es < last_slope || es <= 1e-12));
      last_value = ev;
      last_slope = es;
    }
    CHECK(last_value <= 1e-6);
    CHECK(last_slope <= 1e-3);
  }
}

TEST_CASE("timing overlay") {
  std::vector<Keyframe> kfs{keyframe(0, 0, 0), keyframe(10, 0, 0)};
  kfs[0].time = 0.0;
  kfs[1].time = 10.0;
  const ReferencePath path = ReferencePath::build(kfs);
  const TimingOverlay t = TimingOverlay::build(kfs, path);
  CHECK(std::abs(t.value(5.0) - 5.0) <= 1e-9);
  CHECK(t.value(0.0) == 0.0);
  CHECK(t.value(10.0) == 10.0);
}

TEST_CASE("timing overlay stays monotone through uneven tags") {
  std::vector<Keyframe> kfs{keyframe(0, 0, 0), keyframe(2, 0, 0), keyframe(3, 0, 0), keyframe(12, 0, 0),
                            keyframe(13, 0, 0)};
  kfs[1].time = 1.0;
  kfs[2].time = 6.0;
  kfs[3].time = 6.5;
  const ReferencePath path = ReferencePath::build(kfs);
  const TimingOverlay t = TimingOverlay::build(kfs, path);
  CHECK(t.value(2.0) == 1.0);
  CHECK(t.value(3.0) == 6.0);
  double prev = t.value(0.0);
  for (int s = 1; s <= 1000; ++s) {
    const double v = t.value(path.length() * s / 1000.0);
    CHECK(v >= prev);
    prev = v;
  }
  // Untagged ends continue with the end slopes.
  CHECK(t.value(0.0) == doctest::Approx(1.0 - 2.0 * 5.0));
  CHECK(t.value(13.0) == doctest::Approx(6.5 + 0.5 / 9.0));
  CHECK(t.derivative(13.0) == doctest::Approx(0.5 / 9.0));
}

TEST_CASE("timing overlay rejects bad tags") {
  std::vector<Keyframe> kfs{keyframe(0, 0, 0), keyframe(2, 0, 0), keyframe(3, 0, 0)};
  kfs[0].time = 0.0;
  kfs[1].time = 4.0;
  kfs[2].time = 3.0;
  const ReferencePath path = ReferencePath::build(std::vector<Keyframe>{kfs[0], kfs[1]});
  try {
    validateKeyframes(kfs);
    FAIL("expected KeyframeError");
  } catch (const KeyframeError& e) {
    CHECK(e.index() == 2);
  }
  std::vector<Keyframe> one{keyframe(0, 0, 0), keyframe(2, 0, 0)};
  one[0].time = 1.0;
  CHECK_THROWS_AS(TimingOverlay::build(one, path), KeyframeError);
  CHECK_THROWS_AS(TimingOverlay::fromPairs({0.0, 1.0}, {2.0, 2.0}), KeyframeError);
}

TEST_CASE("velocity overlay") {
  std::vector<Keyframe> kfs{keyframe(0, 0, 0), keyframe(5, 0, 0), keyframe(20, 0, 0)};
  for (auto& k : kfs) k.speed = 2.0;
  const ReferencePath path = ReferencePath::build(kfs);
  const VelocityOverlay v = VelocityOverlay::build(kfs, path);
  for (int s = 0; s <= 100; ++s) CHECK(v.value(20.0 * s / 100.0) == doctest::Approx(2.0));

  std::vector<Keyframe> partial = kfs;
  partial[0].speed.reset();
  partial[1].speed = 0.0;
  partial[2].speed = 4.0;
  const VelocityOverlay w = VelocityOverlay::build(partial, path);
  CHECK(w.value(0.0) == 0.0);  // constant before the first tag
  for (int s = 0; s <= 1000; ++s) CHECK(w.value(20.0 * s / 1000.0) >= 0.0);

  std::vector<Keyframe> single = kfs;
  single[0].speed.reset();
  single[2].speed.reset();
  single[1].speed = 3.0;
  CHECK(VelocityOverlay::build(single, path).value(17.0) == 3.0);

  single[1].speed.reset();
  CHECK_THROWS_AS(VelocityOverlay::build(single, path), KeyframeError);
  CHECK_THROWS_AS(VelocityOverlay::fromPairs({0.0, 1.0}, {1.0, -1.0}), KeyframeError);
}
