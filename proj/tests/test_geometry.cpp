#include <catch2/catch_amalgamated.hpp>

#include "heflow/calculus.hpp"
#include "heflow/io.hpp"
#include "heflow/bundle.hpp"

#include <filesystem>
#include <random>

using namespace heflow;

namespace {

TwistedMatrixField fourier_mode(const TorusGeometry& g, int k, int l) {
  TwistedMatrixField f = TwistedMatrixField::scalar(g);
  const int n = g.grid_n();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      f(x, y, 0, 0) = std::exp(cplx(0.0, 2.0 * M_PI * (double(k) * x + double(l) * y) / n));
  return f;
}

}  // namespace

TEST_CASE("integrate: constants, mean-zero modes, |sin|^2") {
  TorusGeometry g(cplx(0.0, 2.0), 1.0, 32);  // V = 2
  TwistedMatrixField one = TwistedMatrixField::scalar(g);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) one(x, y, 0, 0) = 1.0;
  REQUIRE(std::abs(integrate(one).real() - 2.0) <= 1e-12 * 2.0);

  TorusGeometry gi(cplx(0.0, 1.0), 1.0, 32);  // V = 1
  TwistedMatrixField f = TwistedMatrixField::scalar(gi);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) f(x, y, 0, 0) = std::cos(2.0 * M_PI * x / 32.0);
  REQUIRE(std::abs(integrate(f)) < 1e-13);

  // |sin(2 pi x)|^2 integrates to V/2 = 0.5
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      double s = std::sin(2.0 * M_PI * x / 32.0);
      f(x, y, 0, 0) = s * s;
    }
  REQUIRE(integrate(f).real() == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("integrate rejects non-finite values with location") {
  TorusGeometry g(cplx(0.0, 1.0), 1.0, 16);
  TwistedMatrixField f = TwistedMatrixField::scalar(g);
  f(3, 5, 0, 0) = cplx(INFINITY, 0.0);
  REQUIRE_THROWS_WITH(integrate(f), Catch::Matchers::ContainsSubstring("(3,5)"));
}

TEST_CASE("quadrature exactness on resolved Fourier modes") {
  TorusGeometry g(cplx(0.3, 1.1), 2.0, 16);
  for (int k = -7; k <= 7; k += 3)
    for (int l = -7; l <= 7; l += 2) {
      TwistedMatrixField f = fourier_mode(g, (k + 16) % 16, (l + 16) % 16);
      cplx v = integrate(f);
      if (k == 0 && l == 0)
        REQUIRE(std::abs(v - g.volume()) <= 1e-12 * g.volume());
      else
        REQUIRE(std::abs(v) <= 1e-12 * g.volume());
    }
}

TEST_CASE("dbar: constants and Fourier modes") {
  TorusGeometry g(cplx(0.0, 1.0), 1.0, 32);
  TwistedMatrixField c = TwistedMatrixField::scalar(g);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) c(x, y, 0, 0) = cplx(1.3, -0.4);
  REQUIRE(dbar(c).max_abs() < 1e-14);

  // dbar e^{2 pi i (kx + ly)} = pi (tau k - l)/Im(tau) e = pi i (k + i l) e at tau = i
  for (int k : {1, 2}) {
    for (int l : {0, 1, -2}) {
      TwistedMatrixField f = fourier_mode(g, k, (l + 32) % 32);
      TwistedMatrixField d = dbar(f);
      const cplx expect = M_PI * cplx(0.0, 1.0) * (cplx(double(k), 0) + cplx(0, 1) * double(l));
      double err = 0.0;
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          err = std::max(err, std::abs(d(x, y, 0, 0) - expect * f(x, y, 0, 0)));
      const double om = 2.0 * M_PI * std::max(std::abs(k), std::abs(l)) / 32.0;
      REQUIRE(err <= 2.0 * std::abs(expect) * std::pow(om, 4) / 30.0 + 1e-12);
    }
  }
}

TEST_CASE("dbar annihilates the twisted theta profile at 4th order") {
  // holomorphic section of L_m: residual is pure stencil truncation, ratio ~ 16x
  for (int m : {1, 2}) {
    std::vector<double> res;
    for (int n : {16, 32, 64}) {
      TorusGeometry g(cplx(0.2, 1.0), 1.0, n);
      std::vector<int> tw = {0, m, -m, 0};
      TwistedMatrixField f(g, 2, FormType::F00, tw);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          f(x, y, 0, 1) = twisted_profile_value(g, m, 0, x, y);
          f(x, y, 1, 0) = 0.0;
        }
      res.push_back(dbar(f).max_abs() / f.max_abs());
    }
    REQUIRE(res[0] / res[1] > 10.0);   // nominal 16
    REQUIRE(res[1] / res[2] > 10.0);
    REQUIRE(res[2] < 1e-3);
  }
}

TEST_CASE("twist consistency: seam wrap with multiplier is exact") {
  const int n = 16;
  TorusGeometry g(cplx(0.1, 0.9), 1.0, n);
  std::vector<int> tw = {0, 2, -2, 0};
  TwistedMatrixField f(g, 2, FormType::F00, tw);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      f(x, y, 0, 1) = cplx(u(rng), u(rng));
      f(x, y, 1, 0) = cplx(u(rng), u(rng));
    }
  // value at (x, y + n) must equal mu_m(z) * value at (x, y), bit-exactly as
  // computed through the accessor
  for (int y : {0, 1, n - 2, n - 1})
    for (int x = 0; x < n; x += 3) {
      cplx up = f.value_wrapped(x, y + n, 0, 1);
      cplx expect = g.multiplier(2, g.z_at(x, y)) * f(x, y, 0, 1);
      REQUIRE(up == expect);
      cplx down = f.value_wrapped(x, y - n, 1, 0);
      cplx expect2 = f(x, y, 1, 0) / g.multiplier(-2, cplx(g.xcoord(x), 0.0) + g.tau() * (double(y - n) / n));
      REQUIRE(down == expect2);
    }
}

TEST_CASE("laplacian: constants, eigenfunction, zero integral") {
  TorusGeometry g(cplx(0.0, 1.0), 1.0, 32);
  TwistedMatrixField c = TwistedMatrixField::scalar(g);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) c(x, y, 0, 0) = 2.5;
  REQUIRE(laplacian(c).max_abs() < 1e-12);

  TwistedMatrixField f = TwistedMatrixField::scalar(g);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) f(x, y, 0, 0) = std::cos(2.0 * M_PI * x / 32.0);
  TwistedMatrixField lf = laplacian(f);
  double err = 0.0;
  const double kappa = g.laplace_symbol(1, 0);  // ~ -4 pi^2
  REQUIRE(kappa == Catch::Approx(-4.0 * M_PI * M_PI).epsilon(2e-4));
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      err = std::max(err, std::abs(lf(x, y, 0, 0).real() + 4.0 * M_PI * M_PI * f(x, y, 0, 0).real()));
  REQUIRE(err < 4.0 * M_PI * M_PI * 2e-4);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TwistedMatrixField r = TwistedMatrixField::scalar(g);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) r(x, y, 0, 0) = u(rng);
  REQUIRE(std::abs(integrate(laplacian(r))) < 1e-10 * r.max_abs());
}

TEST_CASE("lambda_contract normalization") {
  TorusGeometry g(cplx(0.0, 1.5), 2.0, 16);
  // F = w * Id: coefficient i c / 2 -> Lambda F = 1
  TwistedMatrixField F(g, 1, FormType::F11, {0});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) F(x, y, 0, 0) = cplx(0.0, g.area_scale() / 2.0);
  TwistedMatrixField l = lambda_contract(F);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) REQUIRE(std::abs(l(x, y, 0, 0) - 1.0) < 1e-14);

  // eta = e^{2 pi i x} -> -2i eta / c
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      F(x, y, 0, 0) = std::exp(cplx(0.0, 2.0 * M_PI * x / 16.0));
  l = lambda_contract(F);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      cplx expect = cplx(0.0, -2.0 / g.area_scale()) * F(x, y, 0, 0);
      REQUIRE(std::abs(l(x, y, 0, 0) - expect) < 1e-14);
    }
  REQUIRE_THROWS(lambda_contract(l));  // wrong form type
}

TEST_CASE("poisson_solve: zero, mode inversion, round trip, mean rejection") {
  TorusGeometry g(cplx(0.0, 1.0), 1.0, 64);
  TwistedMatrixField zero = TwistedMatrixField::scalar(g);
  REQUIRE(poisson_solve(zero).max_abs() == 0.0);

  TwistedMatrixField f = TwistedMatrixField::scalar(g);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) f(x, y, 0, 0) = std::cos(2.0 * M_PI * x / 64.0);
  TwistedMatrixField sol = poisson_solve(f);
  double err = 0.0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      err = std::max(err, std::abs(sol(x, y, 0, 0).real() +
                                   f(x, y, 0, 0).real() / (4.0 * M_PI * M_PI)));
  REQUIRE(err < 1e-5);  // discrete symbol vs 4 pi^2 at n = 64

  // round trip on random mean-zero data (band-limited to dodge null modes)
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<cplx> coef(size_t(64) * 64, cplx(0, 0));
  for (int l = 0; l < 64; ++l)
    for (int k = 0; k < 64; ++k) {
      int ks = k > 32 ? k - 64 : k, ls = l > 32 ? l - 64 : l;
      if ((ks == 0 && ls == 0) || std::abs(ks) > 14 || std::abs(ls) > 14) continue;
      coef[size_t(l) * 64 + k] = cplx(u(rng), u(rng));
    }
  TwistedMatrixField gfield = idft2(g, coef);
  TwistedMatrixField fsol = poisson_solve(gfield);
  TwistedMatrixField back = laplacian(fsol);
  back -= gfield;
  REQUIRE(back.max_abs() < 1e-10 * gfield.max_abs());
  REQUIRE(std::abs(integrate(fsol)) < 1e-10 * fsol.max_abs());

  TwistedMatrixField bad = TwistedMatrixField::scalar(g);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) bad(x, y, 0, 0) = 1.0 + 0.1 * std::cos(2.0 * M_PI * x / 64.0);
  REQUIRE_THROWS_WITH(poisson_solve(bad), Catch::Matchers::ContainsSubstring("mean"));
}

TEST_CASE("integration by parts: twisted pairing at truncation order") {
  std::vector<double> res;
  for (int n : {32, 64}) {
    TorusGeometry g(cplx(0.0, 1.0), 1.0, n);
    std::vector<int> tw = {0, 1, -1, 0};
    TwistedMatrixField f(g, 2, FormType::F00, tw), h(g, 2, FormType::F00, tw);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        cplx t1 = twisted_profile_value(g, 1, 0, x, y);
        cplx t2 = twisted_profile_value(g, -1, 0, x, y);
        cplx per = std::exp(cplx(0.0, 2.0 * M_PI * (x + 2.0 * y) / n));
        f(x, y, 0, 1) = t1 * per;
        f(x, y, 1, 0) = t2;
        f(x, y, 0, 0) = per;
        f(x, y, 1, 1) = std::conj(per);
        h(x, y, 0, 1) = t1;
        h(x, y, 1, 0) = t2 * std::conj(per);
        h(x, y, 0, 0) = 1.0;
        h(x, y, 1, 1) = per * per;
      }
    TwistedMatrixField t1 = trace_field(pointwise_mul(dbar(f), h, FormType::F01));
    TwistedMatrixField t2 = trace_field(pointwise_mul(f, dbar(h), FormType::F01));
    t1.require_compatible(t2);
    cplx total(0, 0);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) total += t1(x, y, 0, 0) + t2(x, y, 0, 0);
    res.push_back(std::abs(total) * g.cell_weight());
  }
  REQUIRE(res[0] / std::max(res[1], 1e-300) > 10.0);  // ~ 4th order decay
  REQUIRE(res[1] < 1e-3);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const int n = 16;
  TorusGeometry g(cplx(0.25, 1.25), 1.7, n);
  std::vector<int> tw = {0, 3, -3, 0};
  TwistedMatrixField f(g, 2, FormType::F10, tw);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) f(x, y, i, j) = cplx(u(rng), u(rng));
  auto tmp = std::filesystem::temp_directory_path() / "heflow_ckpt_test.hef";
  write_field(tmp.string(), f);
  TorusGeometry g2(cplx(0, 1), 1, 8);
  TwistedMatrixField f2 = read_field(tmp.string(), g2);
  REQUIRE(g2 == g);
  REQUIRE(f2.rank() == 2);
  REQUIRE(f2.form() == FormType::F10);
  REQUIRE(f2.twist() == tw);
  REQUIRE(std::memcmp(f.data(), f2.data(), f.values() * sizeof(cplx)) == 0);
  std::filesystem::remove(tmp);
}

TEST_CASE("field constructor validates twist matrices") {
  TorusGeometry g(cplx(0.0, 1.0), 1.0, 16);
  REQUIRE_THROWS(TwistedMatrixField(g, 2, FormType::F00, {1, 0, 0, -1}));
  REQUIRE_THROWS(TwistedMatrixField(g, 2, FormType::F00, {0, 1, 1, 0}));
  REQUIRE_NOTHROW(TwistedMatrixField(g, 2, FormType::F00, {0, 1, -1, 0}));
  REQUIRE_THROWS(TorusGeometry(cplx(0.0, -1.0), 1.0, 16));
  REQUIRE_THROWS(TorusGeometry(cplx(0.0, 1.0), 1.0, 15));
}

TEST_CASE("pointwise product adds twists consistently (composition)") {
  const int n = 16;
  TorusGeometry g(cplx(0.0, 1.0), 1.0, n);
  std::vector<int> tw = {0, 2, -2, 0};
  TwistedMatrixField f(g, 2, FormType::F00, tw), h(g, 2, FormType::F00, tw);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto fill = [&](TwistedMatrixField& w) {
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        w(x, y, 0, 0) = cplx(u(rng), u(rng));
        w(x, y, 1, 1) = cplx(u(rng), u(rng));
        w(x, y, 0, 1) = twisted_profile_value(g, 2, 0, x, y) * u(rng);
        w(x, y, 1, 0) = twisted_profile_value(g, -2, 0, x, y) * u(rng);
      }
  };
  fill(f);
  fill(h);
  TwistedMatrixField p = pointwise_mul(f, h, FormType::F00);
  // the product respects the same seam relation entrywise
  for (int x = 0; x < n; x += 5)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        cplx lhs = p.value_wrapped(x, n, i, j);
        cplx rhs = g.multiplier(p.twist(i, j), g.z_at(x, 0)) * p(x, 0, i, j);
        REQUIRE(std::abs(lhs - rhs) < 1e-12 * (1.0 + std::abs(rhs)));
      }
}
