#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "kdeashmm/errors.hpp"
#include "kdeashmm/kernel_math.hpp"
#include "kdeashmm/log.hpp"
#include "kdeashmm/rng.hpp"

using namespace kdeas;

namespace {

// capture warnings for the duration of one scope
struct WarnCapture {
  std::vector<std::string> messages;
  WarnCapture() {
    set_log_sink([this](LogLevel level, const std::string& msg) {
      if (level == LogLevel::kWarn) messages.push_back(msg);
    });
  }
  ~WarnCapture() { set_log_sink(nullptr); }
};

}  // namespace

TEST_CASE("gaussian kernel closed form") {
  CHECK(gaussian_kernel(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-14));
  CHECK(gaussian_kernel(1.0) == doctest::Approx(0.24197072451914337).epsilon(1e-14));
  CHECK(gaussian_kernel(-1.0) == gaussian_kernel(1.0));
  CHECK_THROWS_AS(gaussian_kernel(std::numeric_limits<double>::quiet_NaN()),
                  std::domain_error);
  CHECK_THROWS_AS(gaussian_kernel(std::numeric_limits<double>::infinity()),
                  std::domain_error);
}

TEST_CASE("log gaussian kernel") {
  CHECK(log_gaussian_kernel(0.0) == doctest::Approx(-0.9189385332046727).epsilon(1e-14));
  CHECK(log_gaussian_kernel(2.0) == doctest::Approx(-2.9189385332046727).epsilon(1e-14));
  CHECK(std::exp(log_gaussian_kernel(1.3)) ==
        doctest::Approx(gaussian_kernel(1.3)).epsilon(1e-14));
  CHECK_THROWS_AS(log_gaussian_kernel(std::numeric_limits<double>::quiet_NaN()),
                  std::domain_error);
}

TEST_CASE("kernel integrates to one") {
  // plain Riemann sum on [-10, 10] with step 1e-3
  const double step = 1e-3;
  double acc = 0.0;
  for (double u = -10.0; u < 10.0; u += step) acc += gaussian_kernel(u + step / 2) * step;
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("silverman rule of thumb") {
  CHECK(silverman_bandwidth(1.0, 350).value ==
        doctest::Approx(0.32822687540279855).epsilon(1e-13));
  // homogeneous of degree 1 in the std
  CHECK(silverman_bandwidth(2.0, 350).value ==
        doctest::Approx(2.0 * silverman_bandwidth(1.0, 350).value).epsilon(1e-14));
  CHECK_THROWS_AS(silverman_bandwidth(1.0, 1), InvariantError);

  WarnCapture capture;
  const Bandwidth floor = silverman_bandwidth(0.0, 100);
  CHECK(floor.value == doctest::Approx(1e-8));
  CHECK(capture.messages.size() == 1);
}

TEST_CASE("silverman monotone in std, decreasing in n") {
  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const double s1 = 0.1 + 3.0 * rng.uniform();
    const double s2 = s1 + 0.1 + rng.uniform();
    const std::size_t n1 = 2 + static_cast<std::size_t>(rng.uniform_int(0, 500));
    const std::size_t n2 = n1 + 1 + static_cast<std::size_t>(rng.uniform_int(0, 500));
    CHECK(silverman_bandwidth(s2, n1).value > silverman_bandwidth(s1, n1).value);
    CHECK(silverman_bandwidth(s1, n2).value < silverman_bandwidth(s1, n1).value);
  }
}

TEST_CASE("log_sum_exp") {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> probs{std::log(0.3), std::log(0.7)};
  CHECK(log_sum_exp(probs) == doctest::Approx(0.0).epsilon(1e-14));

  std::vector<double> tiny{-1000.0, -1000.0};
  CHECK(log_sum_exp(tiny) == doctest::Approx(-1000.0 + std::log(2.0)).epsilon(1e-14));

  std::vector<double> absorbing{-inf, 0.0};
  CHECK(log_sum_exp(absorbing) == doctest::Approx(0.0));

  std::vector<double> single{-3.25};
  CHECK(log_sum_exp(single) == -3.25);

  std::vector<double> all_inf{-inf, -inf};
  CHECK(log_sum_exp(all_inf) == -inf);

  CHECK_THROWS_AS(log_sum_exp(std::vector<double>{}), InvariantError);
}

TEST_CASE("log_sum_exp bounds property") {
  Rng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_int(0, 19));
    std::vector<double> v(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (double& x : v) mx = std::max(mx, x = rng.uniform(-50.0, 50.0));
    const double lse = log_sum_exp(v);
    CHECK(lse >= mx - 1e-12);
    CHECK(lse <= mx + std::log(static_cast<double>(n)) + 1e-12);
  }
}
