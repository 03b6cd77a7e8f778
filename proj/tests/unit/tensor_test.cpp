#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "vpr/gradcheck.hpp"
#include "vpr/tensor.hpp"
#include "vpr_test_support.hpp"

using namespace vpr;
using vpr::testing::uniform_values;

namespace {

std::vector<double> values(const Tensor& t) { return t.to_vector(); }

}  // namespace

TEST_CASE("conv2d of ones over a 3x3 window sums to 9") {
  const auto input = Tensor::full({1, 1, 3, 3}, 1.0);
  const auto kernel = Tensor::full({1, 1, 3, 3}, 1.0);
  const auto out = conv2d(input, kernel, Tensor{}, 0);
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.item() == 9.0);
}

TEST_CASE("conv2d matches a hand-expanded convolution with padding and bias") {
  std::mt19937_64 gen(3);
  const std::size_t n = 2, cin = 2, cout = 3, h = 4, w = 5, k = 3, pad = 1;
  const auto x = uniform_values(n * cin * h * w, gen);
  const auto kw = uniform_values(cout * cin * k * k, gen);
  const auto b = uniform_values(cout, gen);
  const auto out = conv2d(Tensor({n, cin, h, w}, x), Tensor({cout, cin, k, k}, kw), Tensor({cout}, b), pad);
  REQUIRE(out.shape() == Shape{n, cout, h, w});

  const auto got = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          double acc = b[o];
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t dy = 0; dy < k; ++dy) {
              for (std::size_t dx = 0; dx < k; ++dx) {
                const long sy = static_cast<long>(y + dy) - static_cast<long>(pad);
                const long sx = static_cast<long>(xx + dx) - static_cast<long>(pad);
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                acc += x[((i * cin + c) * h + sy) * w + sx] * kw[((o * cin + c) * k + dy) * k + dx];
              }
            }
          }
          CHECK(got[((i * cout + o) * h + y) * w + xx] == doctest::Approx(acc).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("relu, maxpool and elementwise forward values") {
  CHECK(values(relu(Tensor::row({-1.0, 0.0, 2.0}))) == std::vector<double>{0.0, 0.0, 2.0});
  CHECK(maxpool2x2(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})).item() == 4.0);

  const auto a = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto b = Tensor::row({1, 2, 4});
  CHECK(values(a + b) == std::vector<double>{2, 4, 7, 5, 7, 10});
  CHECK(values(a - b) == std::vector<double>{0, 0, -1, 3, 3, 2});
  CHECK(values(a * b) == std::vector<double>{1, 4, 12, 4, 10, 24});
  CHECK(values(sum_over_axis(a, 0)) == std::vector<double>{5, 7, 9});
  CHECK(values(mean_over_axis(a, 1)) == std::vector<double>{2, 5});
  CHECK(values(matmul(a, Tensor({3, 1}, {1, 0, -1}))) == std::vector<double>{-2, -2});
  CHECK(values(slice_cols(a, 1, 3)) == std::vector<double>{2, 3, 5, 6});
  const std::size_t idx[] = {1, 1, 0};
  CHECK(values(select_rows(a, idx)) == std::vector<double>{4, 5, 6, 4, 5, 6, 1, 2, 3});
  CHECK(values(clamp(Tensor::row({-20, 0.5, 20}), -10, 10)) == std::vector<double>{-10, 0.5, 10});
}

TEST_CASE("maxpool ties route to the first element in row-major order") {
  auto x = Tensor({1, 1, 2, 2}, {5, 5, 5, 5}, true);
  backward(sum(maxpool2x2(x)));
  CHECK(values(Tensor({4}, {x.grad().begin(), x.grad().end()})) == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("shape mismatches are rejected with both shapes in the message") {
  const auto a = Tensor::zeros({2, 3});
  const auto b = Tensor::zeros({2, 2});
  try {
    (void)matmul(a, b);
    FAIL("matmul accepted incompatible shapes");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[2, 2]") != std::string::npos);
  }
  CHECK_THROWS_AS((void)add(a, b), std::invalid_argument);
}

TEST_CASE("backward of sum of squares and of exp") {
  auto x = Tensor::row({1, 2, 3}, true);
  backward(sum(square(x)));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, 4, 6});

  auto y = Tensor::row({0.0}, true);
  backward(sum(exp(y)));
  CHECK(y.grad()[0] == 1.0);
}

TEST_CASE("gradients accumulate across fan-out and across calls") {
  auto x = Tensor::row({3.0}, true);
  backward(sum(x * x + x));
  CHECK(x.grad()[0] == 7.0);
  backward(sum(x));
  CHECK(x.grad()[0] == 8.0);
  x.zero_grad();
  backward(sum(scale(x, 2.0)));
  CHECK(x.grad()[0] == 2.0);
}

TEST_CASE("backward rejects a non-scalar output") {
  auto x = Tensor::row({1, 2}, true);
  CHECK_THROWS_AS(backward(x * x), std::invalid_argument);
}

TEST_CASE("tape lists inputs before the operations that consume them") {
  auto a = Tensor::row({1, 2}, true);
  auto b = Tensor::row({3, 4}, true);
  const auto c = a * b;
  const auto out = sum(c + a);
  const auto tape = ComputationTape::record(out);
  std::vector<const void*> seen;
  for (const auto& e : tape.entries()) {
    for (const void* in : e.inputs) CHECK(std::find(seen.begin(), seen.end(), in) != seen.end());
    CHECK(std::find(seen.begin(), seen.end(), e.output) == seen.end());
    seen.push_back(e.output);
  }
  CHECK(tape.entries().back().output == out.id());
}

TEST_CASE("grad_check of sum is exact and conv2d passes on a 1x2x4x4 input") {
  std::mt19937_64 gen(11);
  // Dyadic point and step: every perturbed sum is exact, so is the difference.
  const auto dyadic = Tensor({2, 3}, {0.5, -0.25, 1.0, 0.75, -1.0, 0.125});
  CHECK(grad_check([](const Tensor& x) { return sum(x); }, dyadic, std::ldexp(1.0, -17)) <= 1e-12);
  // Elsewhere the error is the rounding of f divided by the step.
  const auto point = Tensor({2, 3}, uniform_values(6, gen));
  CHECK(grad_check([](const Tensor& x) { return sum(x); }, point, 1e-5) <= 1e-10);
  auto x = point.clone(true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  const auto kernel = Tensor({3, 2, 3, 3}, uniform_values(54, gen));
  const auto input = Tensor({1, 2, 4, 4}, uniform_values(32, gen));
  const double err = grad_check([&](const Tensor& x) { return sum(square(conv2d(x, kernel, Tensor{}, 1))); }, input, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("grad_check rejects a non-scalar function") {
  const auto point = Tensor::row({1, 2});
  CHECK_THROWS(grad_check([](const Tensor& x) { return x; }, point, 1e-5));
}

TEST_CASE("finite-difference suite passes for every op and both losses") {
  const auto results = run_gradcheck_suite(7);
  CHECK(results.size() >= 15);
  for (const auto& r : results) {
    INFO(r.name, " error ", r.max_rel_error);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("detach and clone give independent storage") {
  auto x = Tensor::row({1, 2}, true);
  auto d = x.detach();
  auto c = x.clone(true);
  x.mutable_data()[0] = 5.0;
  CHECK(d.data()[0] == 1.0);
  CHECK(c.data()[0] == 1.0);
  CHECK_FALSE(d.requires_grad());
  CHECK(c.requires_grad());
  CHECK(c.is_leaf());
}
